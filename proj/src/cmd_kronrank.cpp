#include <random>

#include "cmd_util.hpp"
#include "hot/kron.hpp"
#include "hot/linalg.hpp"
#include "hot/oracles.hpp"

namespace hot {

namespace {

DenseTensor row_stochastic(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  DenseTensor s(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (s(i, j) = u(rng));
    for (std::size_t j = 0; j < n; ++j) s(i, j) /= z;
  }
  return s;
}

// Softmax attention matrix over all tokens of a random input, first head.
DenseTensor attention_matrix(const std::vector<std::size_t>& dims, std::size_t model_dim, std::mt19937_64& rng) {
  const AttentionWeights w = AttentionWeights::glorot(model_dim, 1, rng);
  std::size_t tokens = 1;
  for (std::size_t d : dims) tokens *= d;
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseTensor x(Shape{tokens, model_dim});
  for (double& v : x.values()) v = normal(rng);
  const DenseTensor q = linalg::matmul(x, w.head(0).query), k = linalg::matmul(x, w.head(0).key);
  return explicit_softmax_matrix(q, k, default_score_scale(model_dim));
}

}  // namespace

CommandReport run_kronrank(const cmd::json& j, const RunOptions& opt) {
  const std::string where = "kronrank";
  cmd::check_keys(j,
                  {"dims", "max_rank", "sources", "model_dim", "exact_tolerance", "planted_tolerance",
                   "monotone_slack", "als_max_sweeps", "als_tolerance"},
                  where);
  const auto seeds = cmd::seed_list(j, opt, 3, where);
  const auto dims_list = get_or(j, "dims", std::vector<std::vector<std::size_t>>{{3, 3}, {2, 3}, {2, 2, 2}}, where);
  const auto max_rank = get_or<std::size_t>(j, "max_rank", 0, where);
  const auto sources = get_or(j, "sources", std::vector<std::string>{"random", "attention", "planted"}, where);
  const auto model_dim = get_or<std::size_t>(j, "model_dim", 4, where);
  const double exact_tol = get_or(j, "exact_tolerance", 1e-8, where);
  const double planted_tol = get_or(j, "planted_tolerance", 1e-10, where);
  const double slack = get_or(j, "monotone_slack", 1e-10, where);
  AlsOptions als;
  als.max_sweeps = get_or(j, "als_max_sweeps", 500, where);
  als.tolerance = get_or(j, "als_tolerance", 1e-13, where);
  for (const auto& s : sources)
    if (s != "random" && s != "attention" && s != "planted")
      throw ConfigError(where + ".sources: unknown source '" + s + "'");
  for (const auto& d : dims_list)
    if (d.size() < 2 || std::find(d.begin(), d.end(), 0u) != d.end())
      throw ConfigError(where + ".dims: need at least two non-zero modes");
  if (model_dim == 0) throw ConfigError(where + ".model_dim: must be >= 1");

  const auto start = std::chrono::steady_clock::now();
  CommandReport report;
  report.command = "kronrank";
  CsvWriter csv({"source", "dims", "seed", "rank", "relative_error", "sweeps", "converged"});
  for (const auto& source : sources) {
    for (const auto& dims : dims_list) {
      const std::string shape = cmd::shape_str(dims);
      const std::size_t bound = kron_rank_bound(dims);
      std::size_t n = 1;
      for (std::size_t d : dims) n *= d;
      bool exact = true, monotone = true, planted = true;
      double worst_exact = 0.0, worst_rise = 0.0, worst_planted = 0.0;
      for (std::uint64_t seed : seeds) {
        std::mt19937_64 rng(seed);
        if (source == "planted") {
          DenseTensor s = DenseTensor::identity(1);
          for (std::size_t d : dims) s = kron(s, row_stochastic(d, rng));
          const KronDecomposition dec = kron_decompose(s, dims, 1, seed, als);
          csv.field(source).field(shape).field(seed).field(1).field(dec.relative_error).field(dec.sweeps);
          csv.field(dec.converged).end_row();
          worst_planted = std::max(worst_planted, dec.relative_error);
          planted = planted && dec.relative_error <= planted_tol;
          continue;
        }
        const DenseTensor s = source == "random" ? row_stochastic(n, rng) : attention_matrix(dims, model_dim, rng);
        const auto curve = kron_rank_curve(s, dims, max_rank ? std::min(max_rank, bound) : bound, seed, als);
        for (std::size_t r = 0; r < curve.size(); ++r) {
          csv.field(source).field(shape).field(seed).field(r + 1).field(curve[r].relative_error);
          csv.field(curve[r].sweeps).field(curve[r].converged).end_row();
          if (r > 0) {
            const double rise = curve[r].relative_error - curve[r - 1].relative_error;
            worst_rise = std::max(worst_rise, rise);
            monotone = monotone && rise <= slack;
          }
        }
        if (curve.size() == bound) {
          worst_exact = std::max(worst_exact, curve.back().relative_error);
          exact = exact && curve.back().relative_error <= exact_tol;
        }
      }
      const std::string key = source + "/" + shape;
      if (source == "planted") {
        report.check(key + "/rank-1-recovery", planted, "max rel error " + format_double(worst_planted));
        report.results[key] = {{"rank1_error", worst_planted}};
        continue;
      }
      report.check(key + "/monotone", monotone, "largest rise " + format_double(worst_rise));
      if (!max_rank || max_rank >= bound)
        report.check(key + "/exact-at-R=" + std::to_string(bound), exact,
                     "max rel error " + format_double(worst_exact));
      report.results[key] = {{"bound", bound}, {"error_at_bound", worst_exact}, {"largest_rise", worst_rise}};
    }
  }
  cmd::emit(report, opt, "kronrank.csv", csv);
  report.timing["runtime_s"] = cmd::seconds_since(start);
  return report;
}

}  // namespace hot
