#include "ps3/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ps3 {
namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor<double>>& params) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p, false));
  return fn(tape, vars).value().item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor<double>>& params, const GradCheckOptions& options) {
  GradCheckReport report;
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape(true);
    std::vector<Var<double>> vars;
    for (const auto& p : params) vars.push_back(tape.leaf(p, true));
    Var<double> out = fn(tape, vars);
    if (!std::isfinite(out.value().item())) {
      report.finite = false;
      report.max_rel_error = inf;
      report.worst = "non-finite function value";
      return report;
    }
    tape.backward(out);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const Tensor<double>* g = tape.grad_of(vars[i]);
      analytic.push_back(g ? *g : Tensor<double>(params[i].shape, 0.0));
    }
  }

  std::mt19937_64 rng(options.seed);
  const double eps = options.epsilon;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = params[pi];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = p[c];
      p[c] = saved + eps;
      const double fp = evaluate(fn, params);
      p[c] = saved - eps;
      const double fm = evaluate(fn, params);
      p[c] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double an = analytic[pi][c];
      ++report.coordinates;
      std::string label = pi < options.names.size() ? options.names[pi] : "param" + std::to_string(pi);
      if (!std::isfinite(numeric) || !std::isfinite(an)) {
        report.finite = false;
        report.max_rel_error = inf;
        report.worst = label + "[" + std::to_string(c) + "] non-finite";
        return report;
      }
      const double denom = std::max({std::abs(an), std::abs(numeric), 1e-8});
      const double rel = std::abs(an - numeric) / denom;
      if (report.worst.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        std::ostringstream os;
        os << label << "[" << c << "] analytic=" << an << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

}  // namespace ps3
