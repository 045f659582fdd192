#pragma once

// Two-phase semi-supervised training, the supervised baseline, IOU-based
// evaluation and the labelled-ratio sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/dataset.hpp"
#include "graspkit/grasp_net.hpp"
#include "graspkit/nn/optim.hpp"
#include "graspkit/vqvae.hpp"

namespace graspkit {

struct TrainConfig {
  double ratio = 1.0;
  std::uint64_t seed = 42;
  PhaseConfig phase1{60, 8, 2e-3, 0};
  PhaseConfig phase2{60, 8, 1e-3, 0};
  double beta = 0.25;
  double smooth_sigma = 2.0;
  double iou_threshold = 0.25;
  double angle_threshold = kPi / 6;
  double test_fraction = 1.0 / 6.0;  // sweep only

  void validate() const {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw config_error("ratio must lie in (0, 1]");
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw config_error("iou_threshold must lie in (0, 1)");
    if (!(angle_threshold > 0.0 && angle_threshold <= kPi / 2))
      throw config_error("angle_threshold must lie in (0, pi/2]");
    if (smooth_sigma < 0.0) throw config_error("smooth_sigma must be >= 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw config_error("test_fraction must lie in (0, 1)");
    check_beta(beta);
    for (const auto* p : {&phase1, &phase2})
      if (p->epochs < 0 || p->batch < 1 || !(p->lr > 0.0) || p->max_steps < 0)
        throw config_error("phase epochs/batch/lr/max_steps out of range");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"ratio", c.ratio},
          {"seed", c.seed},
          {"phase1", to_json(c.phase1)},
          {"phase2", to_json(c.phase2)},
          {"beta", c.beta},
          {"smooth_sigma", c.smooth_sigma},
          {"iou_threshold", c.iou_threshold},
          {"angle_threshold", c.angle_threshold},
          {"test_fraction", c.test_fraction}};
}

// Missing keys keep the values of `d`; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig d = {}) {
  static const std::vector<std::string> known = {"ratio",         "seed",          "phase1",
                                                 "phase2",        "beta",          "smooth_sigma",
                                                 "iou_threshold", "angle_threshold", "test_fraction"};
  if (!j.is_object()) throw config_error("training config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw config_error("training config: unknown key '" + k + "'");
  try {
    d.ratio = j.value("ratio", d.ratio);
    d.seed = j.value("seed", d.seed);
    if (j.contains("phase1")) d.phase1 = phase_config_from_json(j.at("phase1"), d.phase1);
    if (j.contains("phase2")) d.phase2 = phase_config_from_json(j.at("phase2"), d.phase2);
    d.beta = j.value("beta", d.beta);
    d.smooth_sigma = j.value("smooth_sigma", d.smooth_sigma);
    d.iou_threshold = j.value("iou_threshold", d.iou_threshold);
    d.angle_threshold = j.value("angle_threshold", d.angle_threshold);
    d.test_fraction = j.value("test_fraction", d.test_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("training config: ") + e.what());
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Loss: mse(Q) + mse(cos 2phi) + mse(sin 2phi) + mse(W / 150).

inline double grasp_loss(const GraspMaps& pred, const TargetMaps& target) {
  pred.validate();
  target.validate();
  if (pred.quality.shape() != target.quality.shape())
    throw config_error("grasp_loss: prediction " + shape_string(pred.quality.shape()) + " vs target " +
                       shape_string(target.quality.shape()));
  auto mse = [](const Tensor<float>& a, const Tensor<float>& b, double scale) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = (double(a[i]) - double(b[i])) / scale;
      s += d * d;
    }
    return s / double(a.size());
  };
  return mse(pred.quality, target.quality, 1.0) + mse(pred.cos2, target.cos2, 1.0) +
         mse(pred.sin2, target.sin2, 1.0) + mse(pred.width, target.width, kWidthScale);
}

// Same loss on packed {N, 4, H, W} tensors, averaged per map over batch and
// pixels. Writes dL/dy into `grad`.
inline double packed_grasp_loss(const Tensor<float>& y, const Tensor<float>& t, Tensor<float>* grad) {
  if (y.shape() != t.shape())
    throw config_error("grasp loss: prediction " + shape_string(y.shape()) + " vs target " + shape_string(t.shape()));
  const double per_map = double(y.dim(0) * y.dim(2) * y.dim(3));
  if (grad) *grad = Tensor<float>(y.shape());
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = double(y[i]) - double(t[i]);
    s += d * d;
    if (grad) (*grad)[i] = float(2.0 * d / per_map);
  }
  return s / per_map;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct SceneRecord {
  std::string id;
  GraspPose2D grasp{0, 0, 0, 1};
  bool no_grasp = false;
  double best_iou = 0;
  int matched = -1;  // index into positive_rects, -1 if none passed
  bool success = false;
};

struct EvalResult {
  std::size_t n_scenes = 0;
  std::size_t n_success = 0;
  std::size_t excluded = 0;  // scenes without positive rectangles
  double accuracy = 0;       // percent
  std::vector<SceneRecord> records;
};

inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& s : r.records)
    recs.push_back({{"id", s.id},
                    {"grasp", to_json(s.grasp)},
                    {"no_grasp", s.no_grasp},
                    {"best_iou", s.best_iou},
                    {"matched", s.matched},
                    {"success", s.success}});
  return {{"n_scenes", r.n_scenes}, {"n_success", r.n_success}, {"excluded", r.excluded},
          {"accuracy", r.accuracy}, {"records", recs}};
}

// Scores one detection against the ground truth: success iff some positive
// rectangle has IOU above the threshold and an angle error below the other.
inline SceneRecord score_detection(const Scene& scene, const GraspDetection& det, double iou_threshold,
                                   double angle_threshold) {
  SceneRecord rec;
  rec.id = scene.id;
  rec.grasp = det.grasp;
  rec.no_grasp = det.no_grasp;
  const GraspRect pr = rect_from_grasp(det.grasp);
  for (std::size_t k = 0; k < scene.positive_rects.size(); ++k) {
    const auto& gt = scene.positive_rects[k];
    const double v = iou(pr, gt);
    const bool ok = v > iou_threshold && angle_diff(det.grasp.angle(), gt.angle()) < angle_threshold;
    if (ok && (!rec.success || v > rec.best_iou)) {
      rec.success = true;
      rec.matched = int(k);
      rec.best_iou = v;
    } else if (!rec.success && v > rec.best_iou) {
      rec.best_iou = v;
    }
  }
  return rec;
}

inline void finish_eval(EvalResult& r) {
  r.n_success = std::size_t(std::count_if(r.records.begin(), r.records.end(), [](auto& s) { return s.success; }));
  r.n_scenes = r.records.size();
  r.accuracy = r.n_scenes ? 100.0 * double(r.n_success) / double(r.n_scenes) : 0.0;
}

inline EvalResult evaluate(GraspModel& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                           std::size_t batch = 8) {
  EvalResult r;
  std::vector<const Scene*> kept;
  for (const auto& s : scenes) {
    if (s.positive_rects.empty()) ++r.excluded;
    else kept.push_back(&s);
  }
  for (std::size_t i = 0; i < kept.size(); i += batch) {
    std::vector<const Tensor<float>*> imgs;
    for (std::size_t k = i; k < std::min(kept.size(), i + batch); ++k) imgs.push_back(&kept[k]->image);
    const Tensor<float> y = model.forward(stack<float>(std::span<const Tensor<float>* const>(imgs)));
    for (std::size_t n = 0; n < imgs.size(); ++n) {
      const auto det = grasp_from_maps(maps_from_output(y, n), cfg.smooth_sigma);
      r.records.push_back(score_detection(*kept[i + n], det, cfg.iou_threshold, cfg.angle_threshold));
    }
  }
  finish_eval(r);
  return r;
}

// ---------------------------------------------------------------------------
// Supervised grasp-map training shared by phase two and the baseline.

struct EpochLoss {
  int epoch = 0;
  long steps = 0;
  double loss = 0;
};

inline nlohmann::json to_json(const EpochLoss& e) {
  return {{"epoch", e.epoch}, {"steps", e.steps}, {"loss", e.loss}};
}

inline std::vector<Tensor<float>> packed_targets(const std::vector<Scene>& scenes) {
  std::vector<Tensor<float>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    const TargetMaps t = rasterize_targets(s, s.height(), s.width());
    out.push_back(pack_targets({&t}).reshaped({kMapChannels, s.height(), s.width()}));
  }
  return out;
}

// Generic loop: `forward(batch_idx)` returns the network output for the
// batch and `backward(grad)` propagates it.
template <class Forward, class Backward>
std::vector<EpochLoss> fit_maps(const std::vector<Tensor<float>>& targets, const PhaseConfig& phase,
                                const std::vector<nn::Parameter<float>*>& params, std::mt19937_64& rng,
                                Forward&& forward, Backward&& backward,
                                const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  std::vector<EpochLoss> log;
  if (targets.empty()) throw config_error("grasp training: no labelled scenes");
  nn::Adam<float> opt(params, phase.lr);
  long steps = 0;
  for (int e = 0; e < phase.epochs; ++e) {
    if (phase.max_steps && steps >= phase.max_steps) break;
    double acc = 0;
    std::size_t seen = 0;
    for (const auto& b : epoch_batches(targets.size(), phase.batch, rng)) {
      if (phase.max_steps && steps >= phase.max_steps) break;
      const Tensor<float> t = gather_batch(targets, b);
      opt.zero_grad();
      const Tensor<float> y = forward(b);
      Tensor<float> g;
      const double l = packed_grasp_loss(y, t, &g);
      if (!std::isfinite(l))
        throw numeric_error("grasp training: loss diverged (NaN/Inf) at epoch " + std::to_string(e) + ", step " +
                            std::to_string(steps));
      backward(g);
      opt.step();
      ++steps;
      acc += l * double(b.size());
      seen += b.size();
    }
    if (!seen) break;
    log.push_back({e, steps, acc / double(seen)});
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

struct Checksums {
  std::string encoder_assembled, encoder_after;
  std::string codebook_assembled, codebook_after;
};

inline nlohmann::json to_json(const Checksums& c) {
  return {{"encoder_assembled", c.encoder_assembled},
          {"encoder_after", c.encoder_after},
          {"codebook_assembled", c.codebook_assembled},
          {"codebook_after", c.codebook_after}};
}

struct Phase2Result {
  std::vector<EpochLoss> log;
  Checksums checksums;
};

// Trains decoder and head on the labelled scenes. Encoder and codebook stay
// frozen, so their quantized latents are computed once.
inline Phase2Result train_phase2(AssembledModel& model, const std::vector<Scene>& labelled, const PhaseConfig& phase,
                                 std::mt19937_64& rng, const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  Phase2Result r;
  r.checksums.encoder_assembled = model.encoder_checksum();
  r.checksums.codebook_assembled = model.codebook_checksum();
  std::vector<Tensor<float>> latents;
  latents.reserve(labelled.size());
  for (const auto& s : labelled) {
    Tensor<float> z = model.latents(s.image);
    Shape sh = z.shape();
    sh.erase(sh.begin());
    latents.push_back(z.reshaped(sh));
  }
  const auto targets = packed_targets(labelled);
  r.log = fit_maps(
      targets, phase, model.trainable_params(), rng,
      [&](const std::vector<std::size_t>& b) { return model.forward_latent(gather_batch(latents, b)); },
      [&](const Tensor<float>& g) { model.backward(g); }, on_epoch);
  r.checksums.encoder_after = model.encoder_checksum();
  r.checksums.codebook_after = model.codebook_checksum();
  if (r.checksums.encoder_after != r.checksums.encoder_assembled ||
      r.checksums.codebook_after != r.checksums.codebook_assembled)
    throw integrity_error("phase 2 modified frozen encoder/codebook weights (checksum " +
                          r.checksums.encoder_assembled + " -> " + r.checksums.encoder_after + ")");
  return r;
}

// Logging hook: phase name ("phase1", "phase2", "baseline") and a JSON line.
using ProgressFn = std::function<void(const std::string&, const nlohmann::json&)>;

struct TwoPhaseResult {
  AssembledModel model;
  nn::WeightArchive vqvae;
  std::vector<VQEpochLog> phase1;
  Phase2Result phase2;
  std::vector<std::string> labelled_ids;
  nlohmann::json report() const {
    nlohmann::json p1 = nlohmann::json::array(), p2 = nlohmann::json::array();
    for (const auto& e : phase1) p1.push_back(to_json(e));
    for (const auto& e : phase2.log) p2.push_back(to_json(e));
    return {{"phase1", p1}, {"phase2", p2}, {"checksums", to_json(phase2.checksums)}, {"labelled", labelled_ids}};
  }
};

inline VQConfig vq_config_for(const NetworkConfig& head, const TrainConfig& cfg) {
  VQConfig vq = head.vq.value_or(VQConfig{});
  vq.in_channels = 3;
  vq.beta = cfg.beta;
  vq.validate();
  return vq;
}

// Phase one only: VQ-VAE on every image.
inline VQTrainResult run_phase1(const std::vector<Scene>& scenes, const VQConfig& vq, const PhaseConfig& phase,
                                std::mt19937_64& rng, const ProgressFn& progress = {}) {
  std::vector<Image> images;
  images.reserve(scenes.size());
  for (const auto& s : scenes) images.push_back(s.image);
  return train_vqvae(images, vq, phase, rng, [&](const VQEpochLog& e) {
    if (progress) progress("phase1", to_json(e));
  });
}

// Phase two from a phase-one archive.
inline TwoPhaseResult run_phase2(const nn::WeightArchive& vqvae, const std::vector<Scene>& labelled,
                                 const NetworkConfig& head, const PhaseConfig& phase, std::mt19937_64& rng,
                                 const ProgressFn& progress = {}) {
  TwoPhaseResult r{AssembledModel::assemble(vqvae, head, rng), vqvae, {}, {}, {}};
  for (const auto& s : labelled) r.labelled_ids.push_back(s.id);
  r.phase2 = train_phase2(r.model, labelled, phase, rng, [&](const EpochLoss& e) {
    if (progress) progress("phase2", to_json(e));
  });
  return r;
}

// Splits by cfg.ratio, trains phase one on all images and phase two on the
// labelled part.
inline TwoPhaseResult train_two_phase(const std::vector<Scene>& scenes, const TrainConfig& cfg,
                                      const NetworkConfig& head = reference_rggcnn2(),
                                      const ProgressFn& progress = {}) {
  cfg.validate();
  auto [labelled, unlabelled] = split_by_ratio(scenes, {cfg.ratio, cfg.seed});
  std::mt19937_64 rng(cfg.seed);
  auto p1 = run_phase1(scenes, vq_config_for(head, cfg), cfg.phase1, rng, progress);
  auto r = run_phase2(p1.model.to_archive(), labelled, head, cfg.phase2, rng, progress);
  r.phase1 = std::move(p1.log);
  return r;
}

struct BaselineResult {
  DirectGraspModel model;
  std::vector<EpochLoss> log;
  std::vector<std::string> labelled_ids;
};

// Bare GGCNN2 on the labelled fraction; no representation phase.
inline BaselineResult train_supervised_baseline(const std::vector<Scene>& scenes, const TrainConfig& cfg,
                                                const NetworkConfig& net = reference_ggcnn2(),
                                                const ProgressFn& progress = {}) {
  cfg.validate();
  auto [labelled, unlabelled] = split_by_ratio(scenes, {cfg.ratio, cfg.seed});
  std::mt19937_64 rng(cfg.seed);
  BaselineResult r{DirectGraspModel(net, rng), {}, {}};
  for (const auto& s : labelled) r.labelled_ids.push_back(s.id);
  std::vector<Tensor<float>> images;
  for (const auto& s : labelled) images.push_back(s.image);
  r.log = fit_maps(
      packed_targets(labelled), cfg.phase2, r.model.parameters(), rng,
      [&](const std::vector<std::size_t>& b) { return r.model.forward(gather_batch(images, b)); },
      [&](const Tensor<float>& g) { r.model.backward(g); },
      [&](const EpochLoss& e) {
        if (progress) progress("baseline", to_json(e));
      });
  return r;
}

// ---------------------------------------------------------------------------
// Ratio sweep.

struct SweepRow {
  double ratio = 0;
  std::size_t labelled = 0;
  std::uint64_t seed = 0;
  EvalResult eval;
  std::vector<EpochLoss> log;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::optional<SweepRow> control;  // ratio 1.0 on the same pool and test split
  std::vector<std::string> test_ids;
  std::vector<VQEpochLog> phase1;
  std::vector<std::string> warnings;

  std::string csv() const {
    std::ostringstream out;
    out << "ratio,accuracy\n";
    out.precision(10);
    for (const auto& r : rows) out << r.ratio << ',' << r.eval.accuracy << '\n';
    return out.str();
  }

  nlohmann::json report() const {
    auto row = [](const SweepRow& r) {
      nlohmann::json losses = nlohmann::json::array();
      for (const auto& e : r.log) losses.push_back(to_json(e));
      return nlohmann::json{{"ratio", r.ratio}, {"labelled", r.labelled},     {"seed", r.seed},
                            {"accuracy", r.eval.accuracy}, {"eval", to_json(r.eval)}, {"phase2", losses}};
    };
    nlohmann::json rs = nlohmann::json::array(), p1 = nlohmann::json::array();
    for (const auto& r : rows) rs.push_back(row(r));
    for (const auto& e : phase1) p1.push_back(to_json(e));
    nlohmann::json j{{"rows", rs}, {"test_ids", test_ids}, {"phase1", p1}, {"warnings", warnings}};
    if (control) j["control"] = row(*control);
    return j;
  }
};

// Sorted unique ratios; duplicates are reported.
inline std::vector<double> dedupe_ratios(const std::vector<double>& ratios, std::vector<std::string>* warnings) {
  std::vector<double> out;
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw config_error("sweep: ratio " + std::to_string(r) + " outside (0, 1]");
    if (std::any_of(out.begin(), out.end(), [&](double o) { return std::abs(o - r) < 1e-12; })) {
      if (warnings) warnings->push_back("duplicate ratio " + std::to_string(r) + " ignored");
      continue;
    }
    out.push_back(r);
  }
  if (out.empty()) throw config_error("sweep: no ratios");
  return out;
}

// Held-out test split drawn once from the seed, before any ratio split.
inline std::pair<std::vector<Scene>, std::vector<Scene>> test_split(const std::vector<Scene>& scenes, double fraction,
                                                                    std::uint64_t seed) {
  const std::size_t n_test = std::max<std::size_t>(1, std::size_t(std::floor(fraction * double(scenes.size()))));
  if (n_test >= scenes.size()) throw config_error("sweep: too few scenes for a test split");
  std::vector<std::size_t> idx(scenes.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5eed'7e57ULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Scene> test, pool;
  for (std::size_t k = 0; k < idx.size(); ++k) (k < n_test ? test : pool).push_back(scenes[idx[k]]);
  return {std::move(test), std::move(pool)};
}

// One phase-one model on the pool images, shared by every ratio (they all
// see the same image set); phase two per ratio with seed + ratio index.
// `workers` > 1 runs ratios concurrently.
inline SweepTable ratio_sweep(const std::vector<Scene>& scenes, const std::vector<double>& ratios,
                              const TrainConfig& base, const NetworkConfig& head = reference_rggcnn2(),
                              bool with_control = true, unsigned workers = 1, const ProgressFn& progress = {}) {
  base.validate();
  SweepTable table;
  const auto rs = dedupe_ratios(ratios, &table.warnings);
  auto [test, pool] = test_split(scenes, base.test_fraction, base.seed);
  for (const auto& s : test) table.test_ids.push_back(s.id);

  std::mt19937_64 rng(base.seed);
  auto p1 = run_phase1(pool, vq_config_for(head, base), base.phase1, rng, progress);
  table.phase1 = p1.log;
  const nn::WeightArchive vq = p1.model.to_archive();

  auto run = [&](double ratio, std::uint64_t seed) {
    SweepRow row;
    row.ratio = ratio;
    row.seed = seed;
    auto [labelled, unlabelled] = split_by_ratio(pool, {ratio, seed});
    row.labelled = labelled.size();
    std::mt19937_64 r(seed);
    auto res = run_phase2(vq, labelled, head, base.phase2, r, [&](const std::string& ph, const nlohmann::json& j) {
      if (progress && workers <= 1) {
        nlohmann::json k = j;
        k["ratio"] = ratio;
        progress(ph, k);
      }
    });
    row.log = res.phase2.log;
    row.eval = evaluate(res.model, test, base);
    return row;
  };

  std::vector<std::pair<double, std::uint64_t>> jobs;
  for (std::size_t i = 0; i < rs.size(); ++i) jobs.emplace_back(rs[i], base.seed + i);
  if (with_control) jobs.emplace_back(1.0, base.seed + rs.size());
  std::vector<SweepRow> done(jobs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) done[i] = run(jobs[i].first, jobs[i].second);
  } else {
    for (std::size_t i = 0; i < jobs.size(); i += workers) {
      std::vector<std::future<SweepRow>> fs;
      for (std::size_t k = i; k < std::min(jobs.size(), i + workers); ++k)
        fs.push_back(std::async(std::launch::async, run, jobs[k].first, jobs[k].second));
      for (std::size_t k = 0; k < fs.size(); ++k) done[i + k] = fs[k].get();
    }
  }
  for (std::size_t i = 0; i < rs.size(); ++i) table.rows.push_back(done[i]);
  if (with_control) table.control = done.back();
  return table;
}

}  // namespace graspkit
