#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "hot/attention.hpp"
#include "hot/rotary.hpp"
#include "hot/tensor.hpp"

namespace hot::ad {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const DenseTensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Adjoint corruptions used to self-test the gradient checker.
enum class Fault { kNone, kSoftmaxAdjoint, kLayerNormAdjoint };

class TapeConsumedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Reverse-mode tape. Ops are recorded in execution order; backward() visits
/// them once each in reverse and may only run once per tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const DenseTensor& grad_out)>;

  Var leaf(DenseTensor value);
  Var constant(DenseTensor value);
  Var record(DenseTensor value, const std::vector<Var>& inputs, Backward backward);

  const DenseTensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Adjoint of v after backward(); zeros if nothing flowed into it.
  DenseTensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  void accumulate(Var v, const DenseTensor& g);
  void backward(Var loss);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  void set_fault(Fault f) { fault_ = f; }
  Fault fault() const { return fault_; }

 private:
  struct Node {
    DenseTensor value;
    DenseTensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
  Fault fault_ = Fault::kNone;
};

Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var scale(Var a, double c);
/// Sum of all entries, shape {1}.
Var sum(Var a);
/// sum(a * r) for a constant r of the same shape.
Var dot_constant(Var a, const DenseTensor& r);
Var reshape(Var a, const Shape& s);
/// Result mode m is input mode perm[m].
Var permute(Var a, const std::vector<std::size_t>& perm);
Var transpose(Var m);
Var matmul(Var a, Var b);
/// a b^T.
Var matmul_nt(Var a, Var b);
Var mode_product(Var t, Var a, std::size_t mode);
Var project_last(Var x, Var w);
Var add_bias_last(Var x, Var b);
Var affine_last(Var x, Var w, Var b);
Var pool_except(Var t, std::size_t mode, Pooling pooling);
Var softmax_rows(Var m);
/// Random-feature map of every row; omega and the shift are constants.
Var feature_map(Var x, const FeatureMap& fm, const std::vector<double>& shift = {});
/// 1 / max(z, floor) elementwise; floored entries get zero adjoint.
Var floor_reciprocal(Var z, double floor, KernelDiagnostics* diag = nullptr);
Var scale_mode(Var t, Var w, std::size_t mode);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var gelu(Var x);
Var rotary(Var t, const RotaryConfig& cfg);
Var patchify(Var x, const std::vector<std::size_t>& patch);
/// t[index] along the leading mode.
Var select(Var t, std::size_t index);
/// Stacks equal-shaped values along a new leading mode.
Var stack(const std::vector<Var>& parts);
Var mse(Var pred, const DenseTensor& target);
/// Mean cross-entropy of B x C logits against integer labels.
Var cross_entropy(Var logits, const std::vector<std::size_t>& labels);

}  // namespace hot::ad
