#include "ps3/pretrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ps3/core/errors.hpp"

namespace ps3 {

namespace fs = std::filesystem;

std::vector<LoadedSample> load_batch(const Dataset& dataset, const TrainBatch& batch, const EncoderConfig& cfg) {
  std::vector<LoadedSample> out;
  out.reserve(batch.samples.size());
  for (const BatchSample& s : batch.samples) {
    LoadedSample ls;
    ls.sample = s;
    ls.record = &dataset.records.at(s.record);
    ls.pyramid = build_pyramid(dataset.load_image(s.record), cfg);
    out.push_back(std::move(ls));
  }
  return out;
}

std::vector<std::size_t> local_k(const TrainConfig& cfg, const std::vector<GridSpec>& grids) {
  if (cfg.designs.multi_scale) return allocate_k(static_cast<std::int64_t>(cfg.select_k), grids);
  std::vector<std::size_t> k(grids.size(), 0);
  k.back() = std::min(cfg.select_k, grids.back().cells());
  return k;
}

namespace {

template <typename T>
struct LocalParts {
  LocalForward<T> fwd;
  ScoreMap gt;
};

template <typename T>
LocalParts<T> local_parts(const Bound<T>& m, const LoadedSample& sample, const TrainConfig& cfg) {
  const DatasetRecord& rec = *sample.record;
  const Region& region = rec.regions.at(sample.sample.region);
  const ImagePyramid& pyr = sample.pyramid;
  const auto& grids = pyr.grids;

  LocalParts<T> out;
  LocalForward<T>& f = out.fwd;
  LowResOutput<T> low = encode_low_res(m, pyr);
  Var<T> aux = aux_highres_encode(m, pyr);
  f.text_embedding = text_encode(m, region.caption);
  f.top_down = selection_score(m, low.tokens, aux, f.text_embedding, grids);
  f.bottom_up = selection_score(m, low.tokens, aux, bottom_up_prompt(m), grids);
  out.gt = ground_truth_score_map(region.box, rec.width, rec.height, grids);

  const ScoreMap predicted = cfg.designs.gt_selection ? ScoreMap{} : f.top_down.to_score_map();
  const ScoreMap& drive = cfg.designs.gt_selection ? out.gt : predicted;
  f.selection = select_patches(drive, local_k(cfg, grids), cfg.encoder.per_round_cap);

  HighResOptions options;
  options.use_kv_cache = cfg.designs.kv_cache;
  options.use_scale_pe = cfg.designs.scale_pe;
  Var<T> feats = encode_high_res(m, pyr, f.selection, low.cache, options);

  for (std::size_t s = 0; s < f.selection.num_scales(); ++s)
    for (std::size_t idx : f.selection.indices[s])
      f.pooled.push_back(!cfg.designs.inbox_pool || out.gt.scores[s][idx] > 0.5);
  if (std::none_of(f.pooled.begin(), f.pooled.end(), [](bool b) { return b; })) f.pooled.assign(f.pooled.size(), true);
  f.image_embedding = l2_normalize(attention_pool(m, feats, f.pooled));
  return out;
}

template <typename T>
Var<T> global_embedding(const Bound<T>& m, const LoadedSample& sample) {
  LowResOutput<T> low = encode_low_res(m, sample.pyramid);
  return l2_normalize(attention_pool(m, low.tokens, std::vector<bool>(low.tokens.shape()[0], true)));
}

std::vector<Region> local_regions(const DatasetRecord& rec) {
  std::vector<Region> out;
  for (const Region& r : rec.regions)
    if (r.kind == RegionKind::kLocal) out.push_back(r);
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

template <typename T>
LocalForward<T> local_forward(const Bound<T>& m, const LoadedSample& sample, const TrainConfig& cfg) {
  return local_parts(m, sample, cfg).fwd;
}

template <typename T>
LossTerms<T> training_loss(const Bound<T>& m, const std::vector<LoadedSample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) throw ArgumentError("training_loss: empty batch");
  Tape<T>& tape = m.tape();
  Var<T> images, texts, bce, dice;
  std::size_t n_local = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LoadedSample& s = samples[i];
    const Region& region = s.record->regions.at(s.sample.region);
    if (region.caption.empty()) throw DataError("training sample without a caption");
    Var<T> img, txt;
    if (s.sample.kind == RegionKind::kGlobal) {
      img = global_embedding(m, s);
      txt = text_encode(m, region.caption);
    } else {
      LocalParts<T> parts = local_parts(m, s, cfg);
      img = parts.fwd.image_embedding;
      txt = parts.fwd.text_embedding;
      const ScoreMap bu_gt = bottom_up_gt(local_regions(*s.record), s.record->width, s.record->height, s.pyramid.grids);
      const auto td = selection_loss(parts.fwd.top_down.maps, parts.gt);
      const auto bu = selection_loss(parts.fwd.bottom_up.maps, bu_gt);
      Var<T> b = add(td.bce, bu.bce), d = add(td.dice, bu.dice);
      bce = n_local == 0 ? b : add(bce, b);
      dice = n_local == 0 ? d : add(dice, d);
      ++n_local;
    }
    images = i == 0 ? img : concat_rows(images, img);
    texts = i == 0 ? txt : concat_rows(texts, txt);
  }
  LossTerms<T> out;
  out.contrastive = sigmoid_contrastive_loss(images, texts, m("loss.t_prime"), m("loss.bias"));
  if (n_local == 0) {
    out.bce = tape.constant(Tensor<T>::scalar(0));
    out.dice = tape.constant(Tensor<T>::scalar(0));
  } else {
    out.bce = scale(bce, T(1) / static_cast<T>(n_local));
    out.dice = scale(dice, T(1) / static_cast<T>(n_local));
  }
  out.total = add(add(scale(out.contrastive, static_cast<T>(cfg.contrastive_weight)),
                      scale(out.bce, static_cast<T>(cfg.ce_weight))),
                  scale(out.dice, static_cast<T>(cfg.dice_weight)));
  return out;
}

AdamW::AdamW(const ParameterSet<float>& params) {
  for (const auto& t : params.tensors()) {
    m.emplace_back(t.shape, 0.f);
    v.emplace_back(t.shape, 0.f);
  }
}

void AdamW::step(ParameterSet<float>& params, const std::vector<Tensor<float>>& grads, const TrainConfig& cfg,
                 double lr) {
  if (grads.size() != params.size()) throw DimensionError("adamw: gradient count does not match parameters");
  ++steps;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(steps));
  const double c2 = 1 - std::pow(b2, static_cast<double>(steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = params.tensors()[i];
    const double decay = params.names()[i].rfind("loss.", 0) == 0 ? 0.0 : cfg.weight_decay;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      const double mj = b1 * m[i][j] + (1 - b1) * g;
      const double vj = b2 * v[i][j] + (1 - b2) * g * g;
      m[i][j] = static_cast<float>(mj);
      v[i][j] = static_cast<float>(vj);
      const double update = (mj / c1) / (std::sqrt(vj / c2) + 1e-8) + decay * p[j];
      p[j] = static_cast<float>(p[j] - lr * update);
    }
  }
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0) return cfg.learning_rate;
  return cfg.learning_rate * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
}

StepMetrics pretrain_step(Ps3Model<float>& model, AdamW& opt, const std::vector<LoadedSample>& samples,
                          const TrainConfig& cfg, std::size_t step) {
  Tape<float> tape;
  Bound<float> bound(model, tape, true);
  LossTerms<float> terms = training_loss(bound, samples, cfg);
  StepMetrics met;
  met.loss = terms.total.value()[0];
  met.contrastive = terms.contrastive.value()[0];
  met.bce = terms.bce.value()[0];
  met.dice = terms.dice.value()[0];
  if (!std::isfinite(met.loss) || !std::isfinite(met.contrastive) || !std::isfinite(met.bce) || !std::isfinite(met.dice)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << ": total=" << met.loss << " contrastive=" << met.contrastive
        << " bce=" << met.bce << " dice=" << met.dice << " t'=" << model.params["loss.t_prime"][0]
        << " b=" << model.params["loss.bias"][0];
    throw NumericError(msg.str());
  }
  tape.backward(terms.total);
  std::vector<Tensor<float>> grads;
  for (const Var<float>& leaf : bound.leaves()) {
    const Tensor<float>* g = tape.grad_of(leaf);
    grads.push_back(g ? *g : Tensor<float>(leaf.shape(), 0.f));
    for (float x : grads.back().values)
      if (!std::isfinite(x)) throw NumericError("non-finite gradient at step " + std::to_string(step));
  }
  met.lr = learning_rate_at(cfg, step);
  opt.step(model.params, grads, cfg, met.lr);
  met.temperature = std::exp(static_cast<double>(model.params["loss.t_prime"][0]));
  met.bias = model.params["loss.bias"][0];
  return met;
}

EvalMetrics evaluate(const Ps3Model<float>& model, const Dataset& dataset, const std::vector<std::size_t>& records,
                     const TrainConfig& cfg) {
  EvalMetrics e;
  std::vector<std::vector<float>> imgs, txts;
  double iou_sum = 0, recall_sum = 0;
  std::size_t recall_n = 0;
  for (std::size_t r : records) {
    const auto locals = captioned_regions(dataset.records.at(r), RegionKind::kLocal);
    if (locals.empty()) continue;
    LoadedSample s;
    s.sample = {r, locals.front(), RegionKind::kLocal};
    s.record = &dataset.records[r];
    s.pyramid = build_pyramid(dataset.load_image(r), cfg.encoder);
    Tape<float> tape(false);
    Bound<float> bound(model, tape, false);
    LocalParts<float> parts = local_parts(bound, s, cfg);
    const ScoreMap td = parts.fwd.top_down.to_score_map();
    const auto& grids = s.pyramid.grids;

    std::vector<std::size_t> k_in(grids.size(), 0);
    std::size_t total_cells = 0, in_box = 0;
    for (std::size_t g = 0; g < grids.size(); ++g) {
      for (double v : parts.gt.scores[g]) k_in[g] += v > 0.5;
      total_cells += grids[g].cells();
      in_box += k_in[g];
    }
    auto hits = [&](const SelectionSet& sel) {
      std::size_t h = 0;
      for (std::size_t g = 0; g < grids.size(); ++g)
        for (std::size_t idx : sel.indices[g]) h += parts.gt.scores[g][idx] > 0.5;
      return h;
    };
    if (in_box > 0) {
      const std::size_t inter = hits(select_patches(td, k_in, total_cells));
      iou_sum += static_cast<double>(inter) / static_cast<double>(2 * in_box - inter);
      recall_sum += static_cast<double>(hits(select_patches(td, local_k(cfg, grids), cfg.encoder.per_round_cap))) /
                    static_cast<double>(in_box);
      ++recall_n;
    }
    imgs.push_back(parts.fwd.image_embedding.value().values);
    txts.push_back(parts.fwd.text_embedding.value().values);
  }
  e.regions = imgs.size();
  if (recall_n > 0) {
    e.iou = iou_sum / static_cast<double>(recall_n);
    e.recall = recall_sum / static_cast<double>(recall_n);
  }
  constexpr std::size_t kGroup = 8;
  std::size_t correct = 0, asked = 0;
  for (std::size_t g0 = 0; g0 + kGroup <= imgs.size(); g0 += kGroup) {
    for (std::size_t j = g0; j < g0 + kGroup; ++j) {
      std::size_t best = g0;
      double best_sim = -1e300;
      for (std::size_t i = g0; i < g0 + kGroup; ++i) {
        double sim = 0;
        for (std::size_t d = 0; d < imgs[i].size(); ++d) sim += static_cast<double>(imgs[i][d]) * txts[j][d];
        if (sim > best_sim) best_sim = sim, best = i;
      }
      correct += best == j;
      ++asked;
    }
  }
  if (asked > 0) e.retrieval = static_cast<double>(correct) / static_cast<double>(asked);
  return e;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_records(std::size_t n, const TrainConfig& cfg) {
  if (cfg.eval_records >= n)
    throw ConfigError("eval_records: " + std::to_string(cfg.eval_records) + " held-out records leave none of " +
                      std::to_string(n) + " for training");
  std::vector<std::size_t> train, held;
  for (std::size_t i = 0; i < n; ++i) (i < n - cfg.eval_records ? train : held).push_back(i);
  return {train, held};
}

Ps3Model<float> initial_model(const TrainConfig& cfg) {
  Ps3Model<float> model(cfg.encoder);
  model.params["loss.t_prime"][0] = static_cast<float>(cfg.t_prime_init);
  model.params["loss.bias"][0] = static_cast<float>(cfg.bias_init);
  return model;
}

namespace {

const char* kCsvHeader = "step,loss,contrastive,bce,dice,lr,temperature,bias,iou,recall,retrieval";

Checkpoint training_checkpoint(const Ps3Model<float>& model, const AdamW& opt, std::size_t step) {
  std::vector<std::pair<std::string, Tensor<float>>> extra;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    extra.emplace_back("opt.m." + model.params.names()[i], opt.m[i]);
    extra.emplace_back("opt.v." + model.params.names()[i], opt.v[i]);
  }
  extra.emplace_back("train.step", Tensor<float>({1}, {static_cast<float>(step)}));
  return make_checkpoint(model, std::move(extra));
}

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu.ps3", step);
  return buf;
}

std::string eval_columns(const EvalMetrics& e) { return fmt(e.iou) + "," + fmt(e.recall) + "," + fmt(e.retrieval); }

}  // namespace

TrainResult train_loop(const Dataset& dataset, const TrainConfig& cfg, const fs::path& out, bool resume,
                       std::ostream* log, std::optional<std::size_t> stop_after) {
  cfg.validate();
  fs::create_directories(out);
  {
    std::ofstream f(out / "train_config.json", std::ios::binary | std::ios::trunc);
    f << nlohmann::json(cfg).dump(2) << '\n';
  }
  const auto [train, held] = split_records(dataset.size(), cfg);
  const BatchBuilder builder(dataset, train);
  const std::size_t total = cfg.total_steps();

  Ps3Model<float> model = initial_model(cfg);
  AdamW opt(model.params);
  std::size_t start = 0;
  TrainResult result;
  const fs::path csv_path = out / "metrics.csv";
  const fs::path latest = out / "latest.ps3";

  if (resume && fs::exists(latest)) {
    const Checkpoint ck = read_checkpoint(latest);
    if (nlohmann::json(ck.config) != nlohmann::json(cfg.encoder))
      throw ConfigError("resume: checkpoint encoder config differs from the training config");
    model = model_from_checkpoint(ck);
    opt = AdamW(model.params);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      const Tensor<float>* m = ck.find("opt.m." + model.params.names()[i]);
      const Tensor<float>* v = ck.find("opt.v." + model.params.names()[i]);
      if (!m || !v) throw DataError("resume: checkpoint lacks optimizer state for " + model.params.names()[i]);
      opt.m[i] = *m;
      opt.v[i] = *v;
    }
    const Tensor<float>* st = ck.find("train.step");
    if (!st) throw DataError("resume: checkpoint lacks train.step");
    start = static_cast<std::size_t>((*st)[0]);
    opt.steps = start;
    // Keep the header and rows up to the checkpointed step.
    std::ifstream in(csv_path);
    std::string kept, line;
    for (std::size_t n = 0; std::getline(in, line); ++n) {
      if (n == 0 || std::stoull(line.substr(0, line.find(','))) <= start) kept += line + "\n";
    }
    in.close();
    std::ofstream(csv_path, std::ios::binary | std::ios::trunc) << kept;
    if (log) *log << "resuming at step " << start << "\n";
  } else {
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    result.initial = held.empty() ? EvalMetrics{} : evaluate(model, dataset, held, cfg);
    csv << kCsvHeader << "\n0,,,,,,,," << (held.empty() ? ",," : eval_columns(result.initial)) << "\n";
    const Checkpoint ck = training_checkpoint(model, opt, 0);
    write_checkpoint(out / checkpoint_name(0), ck);
    write_checkpoint(latest, ck);
    if (log)
      *log << "step 0: iou " << result.initial.iou << " recall " << result.initial.recall << " retrieval "
           << result.initial.retrieval << "\n";
  }

  std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
  const std::size_t end = stop_after ? std::min(total, start + *stop_after) : total;
  for (std::size_t step = start + 1; step <= end; ++step) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(step)};
    std::mt19937_64 rng(seq);
    const TrainBatch batch = builder.build(cfg, rng);
    const auto samples = load_batch(dataset, batch, cfg.encoder);
    const StepMetrics met = pretrain_step(model, opt, samples, cfg, step);
    std::string row = std::to_string(step) + "," + fmt(met.loss) + "," + fmt(met.contrastive) + "," + fmt(met.bce) +
                      "," + fmt(met.dice) + "," + fmt(met.lr) + "," + fmt(met.temperature) + "," + fmt(met.bias) + ",";
    if (!held.empty() && (step % cfg.eval_every == 0 || step == total)) {
      result.final_metrics = evaluate(model, dataset, held, cfg);
      row += eval_columns(result.final_metrics);
      if (log)
        *log << "step " << step << ": loss " << met.loss << " iou " << result.final_metrics.iou << " recall "
             << result.final_metrics.recall << " retrieval " << result.final_metrics.retrieval << "\n";
    } else {
      row += ",,";
      if (log && step % 50 == 0) *log << "step " << step << ": loss " << met.loss << "\n";
    }
    csv << row << "\n";
    csv.flush();
    if (step % cfg.checkpoint_every == 0 || step == total) {
      const Checkpoint ck = training_checkpoint(model, opt, step);
      result.checkpoint = out / checkpoint_name(step);
      write_checkpoint(result.checkpoint, ck);
      write_checkpoint(latest, ck);
    }
  }
  result.steps = end;
  return result;
}

template LocalForward<float> local_forward(const Bound<float>&, const LoadedSample&, const TrainConfig&);
template LocalForward<double> local_forward(const Bound<double>&, const LoadedSample&, const TrainConfig&);
template LossTerms<float> training_loss(const Bound<float>&, const std::vector<LoadedSample>&, const TrainConfig&);
template LossTerms<double> training_loss(const Bound<double>&, const std::vector<LoadedSample>&, const TrainConfig&);

}  // namespace ps3
