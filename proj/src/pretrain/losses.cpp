#include "ps3/pretrain/losses.hpp"

#include <algorithm>

#include "ps3/core/errors.hpp"

namespace ps3 {

ScoreMap ground_truth_score_map(const Box& box, std::size_t width, std::size_t height,
                                const std::vector<GridSpec>& grids) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  if (!(box.x0 >= 0 && box.y0 >= 0 && box.x1 <= W && box.y1 <= H && box.x0 < box.x1 && box.y0 < box.y1))
    throw ArgumentError("ground_truth_score_map: box outside the image");
  ScoreMap s;
  s.grids = grids;
  s.provenance = Provenance::kGroundTruth;
  for (const GridSpec& g : grids) {
    const auto inside = cells_in_box(box, width, height, g);
    std::vector<double> scores(inside.begin(), inside.end());
    s.degenerate.push_back(std::none_of(inside.begin(), inside.end(), [](bool b) { return b; }));
    s.scores.push_back(std::move(scores));
  }
  return s;
}

ScoreMap bottom_up_gt(const std::vector<Region>& regions, std::size_t width, std::size_t height,
                      const std::vector<GridSpec>& grids) {
  ScoreMap out;
  out.grids = grids;
  out.provenance = Provenance::kGroundTruth;
  for (const GridSpec& g : grids) out.scores.emplace_back(g.cells(), 0.0);
  for (const Region& r : regions) {
    const ScoreMap one = ground_truth_score_map(r.box, width, height, grids);
    for (std::size_t s = 0; s < grids.size(); ++s)
      for (std::size_t i = 0; i < one.scores[s].size(); ++i)
        out.scores[s][i] = std::max(out.scores[s][i], one.scores[s][i]);
  }
  for (const auto& sc : out.scores) out.degenerate.push_back(std::none_of(sc.begin(), sc.end(), [](double v) { return v > 0; }));
  return out;
}

template <typename T>
Var<T> sigmoid_contrastive_loss(Var<T> x, Var<T> y, Var<T> t_prime, Var<T> bias) {
  if (x.value().rank() != 2 || y.value().rank() != 2 || x.shape() != y.shape())
    throw DimensionError("sigmoid_contrastive_loss: embeddings " + shape_string(x.shape()) + " vs " +
                         shape_string(y.shape()));
  const std::size_t n = x.shape()[0];
  if (n == 0) throw ArgumentError("sigmoid_contrastive_loss: empty batch");
  if (t_prime.size() != 1 || bias.size() != 1) throw DimensionError("sigmoid_contrastive_loss: t' and b must be scalars");
  Tensor<T> z({n, n}, T(-1));
  for (std::size_t i = 0; i < n; ++i) z[i * n + i] = T(1);
  Var<T> logits = shift_by(scale_by(matmul(x, transpose(y)), exp(t_prime)), bias);
  Var<T> ll = log_sigmoid(mul(logits, x.tape->constant(std::move(z))));
  return scale(sum(ll), T(-1) / static_cast<T>(n));
}

template <typename T>
SelectionLossTerms<T> selection_loss(const std::vector<Var<T>>& predicted, const ScoreMap& gt) {
  if (predicted.size() != gt.num_scales() || predicted.empty())
    throw DimensionError("selection_loss: prediction has " + std::to_string(predicted.size()) + " scales, target " +
                         std::to_string(gt.num_scales()));
  Tape<T>& tape = *predicted[0].tape;
  SelectionLossTerms<T> out;
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    const GridSpec& g = gt.grids[s];
    const Var<T>& pred = predicted[s];
    if (pred.size() != g.cells() || gt.scores[s].size() != g.cells())
      throw DimensionError("selection_loss: scale " + std::to_string(s) + " grid mismatch");
    const Shape shape = pred.shape();
    Tensor<T> gv(shape), gn(shape);
    T gsum = 0;
    for (std::size_t i = 0; i < g.cells(); ++i) {
      gv[i] = static_cast<T>(gt.scores[s][i]);
      gn[i] = T(1) - gv[i];
      gsum += gv[i];
    }
    Var<T> p = clamp(add_scalar(scale(pred, T(0.5)), T(0.5)), lo, hi);
    Var<T> q = add_scalar(scale(p, T(-1)), T(1));
    Var<T> gvar = tape.constant(std::move(gv));
    Var<T> bce = scale(mean(add(mul(gvar, log(p)), mul(tape.constant(std::move(gn)), log(q)))), T(-1));
    Var<T> num = add_scalar(scale(sum(mul(p, gvar)), T(2)), T(1));
    Var<T> den = add_scalar(sum(p), gsum + T(1));
    Var<T> dice = add_scalar(scale(div(num, den), T(-1)), T(1));
    out.bce = s == 0 ? bce : add(out.bce, bce);
    out.dice = s == 0 ? dice : add(out.dice, dice);
  }
  const T inv = T(1) / static_cast<T>(predicted.size());
  out.bce = scale(out.bce, inv);
  out.dice = scale(out.dice, inv);
  return out;
}

template Var<float> sigmoid_contrastive_loss(Var<float>, Var<float>, Var<float>, Var<float>);
template Var<double> sigmoid_contrastive_loss(Var<double>, Var<double>, Var<double>, Var<double>);
template SelectionLossTerms<float> selection_loss(const std::vector<Var<float>>&, const ScoreMap&);
template SelectionLossTerms<double> selection_loss(const std::vector<Var<double>>&, const ScoreMap&);

}  // namespace ps3
