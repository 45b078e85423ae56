#include "cmd_util.hpp"
#include "hot/training.hpp"

namespace hot {

namespace {

ad::Fault parse_fault(const std::string& s) {
  if (s == "none") return ad::Fault::kNone;
  if (s == "softmax_adjoint") return ad::Fault::kSoftmaxAdjoint;
  if (s == "layernorm_adjoint") return ad::Fault::kLayerNormAdjoint;
  throw ConfigError("gradcheck.fault: 'none', 'softmax_adjoint' or 'layernorm_adjoint', got '" + s + "'");
}

}  // namespace

CommandReport run_gradcheck(const cmd::json& j, const RunOptions& opt) {
  const std::string where = "gradcheck";
  cmd::check_keys(j,
                  {"dims", "model_dim", "heads", "features", "ffn_dim", "variants", "samples", "eps", "floor",
                   "tolerance", "quadratic_tolerance", "fault", "self_test"},
                  where);
  const auto seeds = cmd::seed_list(j, opt, 5, where);
  GradSuiteShape shape;
  shape.dims = get_or(j, "dims", shape.dims, where);
  shape.model_dim = get_or(j, "model_dim", shape.model_dim, where);
  shape.heads = get_or(j, "heads", shape.heads, where);
  shape.features = get_or(j, "features", shape.features, where);
  shape.ffn_dim = get_or(j, "ffn_dim", shape.ffn_dim, where);
  const auto variants = cmd::variant_list(j, "variants", where);
  GradCheckOptions base;
  base.samples = get_or(j, "samples", base.samples, where);
  base.eps = get_or(j, "eps", base.eps, where);
  base.floor = get_or(j, "floor", base.floor, where);
  base.fault = parse_fault(get_or<std::string>(j, "fault", "none", where));
  const double tol = get_or(j, "tolerance", 1e-5, where);
  const double quad_tol = get_or(j, "quadratic_tolerance", 1e-9, where);
  const bool self_test = get_or(j, "self_test", true, where);
  if (shape.dims.empty() || shape.model_dim == 0 || shape.heads == 0 || shape.model_dim % shape.heads != 0 ||
      shape.features == 0 || shape.ffn_dim == 0)
    throw ConfigError(where + ": need dims, heads dividing model_dim, features and ffn_dim >= 1");
  if (!(base.eps > 0.0) || !(base.floor > 0.0) || base.samples == 0)
    throw ConfigError(where + ": eps, floor and samples must be positive");

  const auto start = std::chrono::steady_clock::now();
  CommandReport report;
  report.command = "gradcheck";
  CsvWriter csv({"op", "variant", "seed", "max_rel_error", "max_abs_error", "coords", "worst", "tolerance", "pass"});
  auto row = [&](const std::string& op, const std::string& variant, std::uint64_t seed, const GradCheckResult& r,
                 double bound) {
    const bool pass = r.max_rel_error <= bound;
    csv.field(op).field(variant).field(seed).field(r.max_rel_error).field(r.max_abs_error).field(r.coords);
    csv.field(r.worst).field(bound).field(pass);
    csv.end_row();
    return pass;
  };
  for (const char* op : {"attention", "block"}) {
    for (AttentionVariant v : variants) {
      bool all = true;
      double worst = 0.0;
      for (std::uint64_t seed : seeds) {
        GradCheckOptions o = base;
        o.seed = seed;
        const GradCheckResult r =
            op == std::string("attention") ? attention_gradcheck(v, shape, o) : block_gradcheck(v, shape, o);
        all = row(op, to_string(v), seed, r, tol) && all;
        worst = std::max(worst, r.max_rel_error);
      }
      const std::string name = std::string(op) + "/" + to_string(v);
      report.check(name, all, "max rel error " + format_double(worst) + " over " + std::to_string(seeds.size()) +
                                  " seeds");
      report.results[name] = worst;
    }
  }
  {
    bool all = true;
    double worst = 0.0;
    for (std::uint64_t seed : seeds) {
      GradCheckOptions o = base;
      o.seed = seed;
      const GradCheckResult r = quadratic_gradcheck(16, o);
      all = row("quadratic", "-", seed, r, quad_tol) && all;
      worst = std::max(worst, r.max_rel_error);
    }
    report.check("quadratic", all, "max rel error " + format_double(worst));
    report.results["quadratic"] = worst;
  }
  if (self_test) {
    // The checker must notice deliberately corrupted adjoints.
    GradCheckOptions o = base;
    o.seed = seeds.front();
    o.fault = ad::Fault::kSoftmaxAdjoint;
    const double soft = attention_gradcheck(AttentionVariant::kFactoredSoftmax, shape, o).max_rel_error;
    o.fault = ad::Fault::kLayerNormAdjoint;
    const double ln = block_gradcheck(AttentionVariant::kFactoredSoftmax, shape, o).max_rel_error;
    report.check("self-test/injected-faults-detected", soft > 1e-2 && ln > 1e-2,
                 "softmax fault " + format_double(soft) + ", layer-norm fault " + format_double(ln));
    report.results["self_test"] = {{"softmax_adjoint", soft}, {"layernorm_adjoint", ln}};
  }
  cmd::emit(report, opt, "gradcheck.csv", csv);
  report.timing["runtime_s"] = cmd::seconds_since(start);
  return report;
}

}  // namespace hot
