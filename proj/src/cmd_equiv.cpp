#include <map>
#include <random>

#include "cmd_util.hpp"
#include "hot/oracles.hpp"
#include "hot/tensor.hpp"

namespace hot {

namespace {

using cmd::json;

const std::vector<std::vector<std::size_t>> kDefaultShapes = {
    {5}, {8}, {16}, {3, 4}, {4, 5}, {2, 3}, {8, 8}, {2, 3, 4}, {4, 4, 4}, {2, 2, 2, 2}, {2, 4, 2, 4}};
const std::vector<std::vector<std::size_t>> kDefaultIdentityShapes = {{2, 3, 4, 5}, {3, 3, 3, 3}, {4, 2, 5, 3}};

DenseTensor gaussian(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseTensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

double max_row_sum_error(const DenseTensor& m) {
  double e = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j);
    e = std::max(e, std::abs(s - 1.0));
  }
  return e;
}

}  // namespace

CommandReport run_equiv(const json& j, const RunOptions& opt) {
  const std::string where = "equiv";
  cmd::check_keys(j,
                  {"shapes", "identity_shapes", "model_dim", "heads", "features", "oracle_cap", "tolerance",
                   "reduction_tolerance", "row_sum_tolerance", "fault"},
                  where);
  const auto seeds = cmd::seed_list(j, opt, 3, where);
  const auto shapes = get_or(j, "shapes", kDefaultShapes, where);
  const auto id_shapes = get_or(j, "identity_shapes", kDefaultIdentityShapes, where);
  const auto model_dim = get_or<std::size_t>(j, "model_dim", 8, where);
  const auto heads = get_or<std::size_t>(j, "heads", 2, where);
  const auto features = get_or<std::size_t>(j, "features", 64, where);
  const auto cap = opt.cap.value_or(get_or<std::size_t>(j, "oracle_cap", kDefaultOracleCap, where));
  const double tol = get_or(j, "tolerance", 1e-10, where);
  const double red_tol = get_or(j, "reduction_tolerance", 1e-12, where);
  const double row_tol = get_or(j, "row_sum_tolerance", 1e-12, where);
  const auto fault = get_or<std::string>(j, "fault", "none", where);
  if (fault != "none" && fault != "score_scale") throw ConfigError(where + ".fault: 'none' or 'score_scale'");
  if (model_dim == 0 || heads == 0 || model_dim % heads != 0)
    throw ConfigError(where + ": model_dim must be a positive multiple of heads");
  if (features == 0) throw ConfigError(where + ".features: must be >= 1");
  for (const auto& s : shapes) {
    std::size_t tokens = 1;
    for (std::size_t d : s) tokens *= d;
    if (s.empty() || tokens == 0) throw ConfigError(where + ".shapes: empty shape");
    if (tokens > cap)
      throw ConfigError(where + ".shapes: " + cmd::shape_str(s) + " has " + std::to_string(tokens) +
                        " tokens, above the oracle cap " + std::to_string(cap));
  }
  for (const auto& s : id_shapes)
    if (s.size() < 2) throw ConfigError(where + ".identity_shapes: need at least two modes");

  const auto start = std::chrono::steady_clock::now();
  CommandReport report;
  report.command = "equiv";
  CsvWriter csv({"check", "variant", "shape", "seed", "max_abs_error", "tolerance", "pass"});
  struct Worst {
    double error = 0.0;
    bool pass = true;
  };
  std::map<std::string, Worst> worst;
  auto record = [&](const std::string& check, const std::string& variant, const std::string& shape,
                    std::uint64_t seed, double err, double bound) {
    const bool pass = err <= bound;
    csv.field(check).field(variant).field(shape).field(seed).field(err).field(bound).field(pass);
    csv.end_row();
    auto& w = worst[check];
    w.error = std::max(w.error, err);
    w.pass = w.pass && pass;
  };

  const double scale = default_score_scale(model_dim / heads);
  AttentionOptions tested;
  tested.oracle_cap = cap;
  if (fault == "score_scale") tested.score_scale = 2.0 * scale;

  for (const auto& dims : shapes) {
    const std::string shape = cmd::shape_str(dims);
    std::vector<std::size_t> full = dims;
    full.push_back(model_dim);
    for (std::uint64_t seed : seeds) {
      std::mt19937_64 rng(seed);
      const AttentionWeights w = AttentionWeights::glorot(model_dim, heads, rng);
      const DenseTensor x = gaussian(Shape(full), rng);
      const FeatureMap fm({features, seed, model_dim / heads});
      const DenseTensor soft = naive_softmax_attention(x, w, scale);
      const DenseTensor kern = naive_kernel_attention(x, w, fm, scale);
      auto run = [&](AttentionVariant v) { return attention_forward(v, x, w, &fm, tested); };
      if (dims.size() == 1) {
        // Every variant collapses to standard sequence attention.
        for (AttentionVariant v : kAllVariants) {
          const bool linear = v == AttentionVariant::kFullLinear || v == AttentionVariant::kFactoredLinear;
          record("k1-reduction", to_string(v), shape, seed, max_abs_diff(run(v), linear ? kern : soft), red_tol);
        }
        record("k1-reduction", "standard-softmax", shape, seed,
               max_abs_diff(standard_attention(x, w, tested), soft), red_tol);
        record("k1-reduction", "standard-linear", shape, seed,
               max_abs_diff(standard_attention_linear(x, w, fm, tested), kern), red_tol);
      } else {
        record("factored-vs-kronecker", "factored-softmax", shape, seed,
               max_abs_diff(run(AttentionVariant::kFactoredSoftmax), kron_softmax_attention(x, w, scale)), tol);
        record("factored-vs-kronecker", "factored-linear", shape, seed,
               max_abs_diff(run(AttentionVariant::kFactoredLinear), kron_kernel_attention(x, w, fm, scale)), tol);
        record("full-vs-flattened", "full-softmax", shape, seed, max_abs_diff(run(AttentionVariant::kFullSoftmax), soft),
               tol);
        record("full-vs-flattened", "full-linear", shape, seed, max_abs_diff(run(AttentionVariant::kFullLinear), kern),
               tol);
      }
      double soft_rows = 0.0, kern_rows = 0.0;
      for (const auto& f : factorized_softmax_factors(x, w, tested))
        for (const auto& m : f.factors()) soft_rows = std::max(soft_rows, max_row_sum_error(m));
      for (const auto& hw : w.heads()) {
        const DenseTensor q = project_last(x, hw.query), k = project_last(x, hw.key);
        for (std::size_t i = 0; i < dims.size(); ++i)
          kern_rows = std::max(kern_rows, max_row_sum_error(kernel_attention_matrix(
                                              pool_except(q, i), pool_except(k, i), fm, tested)));
      }
      record("row-stochastic", "factored-softmax", shape, seed, soft_rows, row_tol);
      record("row-stochastic", "factored-linear", shape, seed, kern_rows, row_tol);
    }
  }
  for (const auto& dims : id_shapes) {
    for (std::uint64_t seed : seeds) {
      std::mt19937_64 rng(seed);
      const DenseTensor t = gaussian(Shape(dims), rng);
      std::vector<DenseTensor> factors;
      for (std::size_t i = 0; i + 1 < dims.size(); ++i) factors.push_back(gaussian(Shape{dims[i], dims[i]}, rng));
      record("matricization-identity", "-", cmd::shape_str(dims), seed, matricization_identity_error(t, factors), tol);
    }
  }
  cmd::emit(report, opt, "equiv.csv", csv);
  for (const auto& [check, w] : worst) {
    report.check(check, w.pass, "max |error| " + format_double(w.error));
    report.results[check] = {{"max_abs_error", w.error}, {"pass", w.pass}};
  }
  report.results["rows"] = csv.rows();
  report.results["fault"] = fault;
  report.timing["runtime_s"] = cmd::seconds_since(start);
  return report;
}

}  // namespace hot
