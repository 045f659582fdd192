#include <gtest/gtest.h>

#include <set>

#include "graspkit/training.hpp"

using namespace graspkit;

namespace {

// Small head with a small VQ-VAE so full pipelines run in seconds.
const char* kTinyHead = R"([network]
name = tiny
input_channels = 3
probe_size = 64
[vqvae]
codebook_size = 16
embedding_dim = 8
hidden = 8
res_hidden = 4
residual_blocks = 1
[conv]
filters = 8
kernel = 5
padding = 2
[conv]
filters = 8
kernel = 3
padding = 1
[heads]
kernel = 1
)";

TrainConfig quick_config() {
  TrainConfig c;
  c.phase1 = {2, 8, 2e-3, 0};
  c.phase2 = {2, 8, 1e-3, 0};
  return c;
}

// Returns a fixed output for every image in a batch.
class FixedModel final : public GraspModel {
 public:
  explicit FixedModel(Tensor<float> per_image) : out_(std::move(per_image)) {}
  std::string kind() const override { return "fixed"; }
  Tensor<float> forward(const Tensor<float>& images) override {
    const std::size_t n = images.rank() == 4 ? images.dim(0) : 1;
    std::vector<const Tensor<float>*> v(n, &out_);
    return stack<float>(std::span<const Tensor<float>* const>(v));
  }
  std::vector<nn::Parameter<float>*> parameters() override { return {}; }
  nn::WeightArchive to_archive() override { return {}; }

 private:
  Tensor<float> out_;
};

// Network output that puts a single sharp peak at (row, col).
Tensor<float> peak_output(std::size_t h, std::size_t w, std::size_t row, std::size_t col, double angle, double width) {
  Tensor<float> y({4, h, w});
  y(0, row, col) = 1.0f;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      y(1, i, j) = float(std::cos(2 * angle));
      y(2, i, j) = float(std::sin(2 * angle));
      y(3, i, j) = float(width / 150.0);
    }
  return y;
}

Scene scene_with(const GraspPose2D& g, std::string id = "s") {
  Scene s;
  s.image = Image({3, 64, 64}, 0.2f);
  s.positive_rects.push_back(rect_from_grasp(g));
  s.id = std::move(id);
  return s;
}

}  // namespace

TEST(GraspLoss, MatchesDirectSum) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> d(0, 1);
  GraspMaps p(6, 5), t(6, 5);
  for (auto* m : {&p.quality, &p.cos2, &p.sin2, &t.quality, &t.cos2, &t.sin2})
    for (auto& v : m->values()) v = d(rng);
  for (auto* m : {&p.width, &t.width})
    for (auto& v : m->values()) v = 150 * d(rng);
  double ref = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    ref += std::pow(double(p.quality[i]) - t.quality[i], 2) / 30;
    ref += std::pow(double(p.cos2[i]) - t.cos2[i], 2) / 30;
    ref += std::pow(double(p.sin2[i]) - t.sin2[i], 2) / 30;
    ref += std::pow((double(p.width[i]) - t.width[i]) / 150, 2) / 30;
  }
  EXPECT_NEAR(grasp_loss(p, t), ref, 1e-12);
  EXPECT_EQ(grasp_loss(t, t), 0.0);
  EXPECT_GT(grasp_loss(p, t), 0.0);
  EXPECT_THROW(grasp_loss(p, GraspMaps(5, 5)), config_error);
}

TEST(GraspLoss, PackedAgreesAndGradient) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> d(0, 1);
  Tensor<float> y({2, 4, 3, 3}), t({2, 4, 3, 3});
  for (auto& v : y.values()) v = d(rng);
  for (auto& v : t.values()) v = d(rng);
  Tensor<float> g;
  const double l = packed_grasp_loss(y, t, &g);
  double sum = 0;
  for (std::size_t n = 0; n < 2; ++n) {
    GraspMaps pm(3, 3), tm(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        pm.quality(i, j) = y(n, 0, i, j), tm.quality(i, j) = t(n, 0, i, j);
        pm.cos2(i, j) = y(n, 1, i, j), tm.cos2(i, j) = t(n, 1, i, j);
        pm.sin2(i, j) = y(n, 2, i, j), tm.sin2(i, j) = t(n, 2, i, j);
        pm.width(i, j) = 150 * y(n, 3, i, j), tm.width(i, j) = 150 * t(n, 3, i, j);
      }
    sum += grasp_loss(pm, tm);
  }
  EXPECT_NEAR(l, sum / 2, 1e-6);
  const float h = 1e-3f;
  for (std::size_t i = 0; i < y.size(); i += 5) {
    auto yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    EXPECT_NEAR(g[i], (packed_grasp_loss(yp, t, nullptr) - packed_grasp_loss(ym, t, nullptr)) / (2 * h), 1e-4);
  }
}

TEST(Evaluate, PerfectAndMissedDetections) {
  const GraspPose2D g(30, 20, 0.3, 20, 10);
  const std::vector<Scene> scenes = {scene_with(g, "a"), scene_with(g, "b")};
  TrainConfig cfg;
  cfg.smooth_sigma = 0;
  FixedModel hit(peak_output(64, 64, 20, 30, 0.3, 20));
  const auto r = evaluate(hit, scenes, cfg);
  EXPECT_EQ(r.n_scenes, 2u);
  EXPECT_EQ(r.n_success, 2u);
  EXPECT_DOUBLE_EQ(r.accuracy, 100.0);
  EXPECT_EQ(r.records[0].matched, 0);
  EXPECT_NEAR(r.records[0].best_iou, 1.0, 1e-6);

  FixedModel far(peak_output(64, 64, 55, 5, 0.3, 20));
  EXPECT_DOUBLE_EQ(evaluate(far, scenes, cfg).accuracy, 0.0);

  // Right place, angle off by 40 degrees.
  FixedModel turned(peak_output(64, 64, 20, 30, 0.3 + 40 * kPi / 180, 20));
  const auto t = evaluate(turned, scenes, cfg);
  EXPECT_EQ(t.n_success, 0u);
  EXPECT_GT(t.records[0].best_iou, 0.25);
}

TEST(Evaluate, ThresholdBoundariesAndExclusion) {
  const GraspPose2D g(32, 32, 0.0, 20, 10);
  std::vector<Scene> scenes = {scene_with(g, "a")};
  Scene empty;
  empty.image = Image({3, 64, 64});
  empty.id = "empty";
  scenes.push_back(empty);
  TrainConfig cfg;
  cfg.smooth_sigma = 0;
  // Angle error just under 30 degrees passes, just over fails.
  FixedModel under(peak_output(64, 64, 32, 32, 29.5 * kPi / 180, 20));
  FixedModel over(peak_output(64, 64, 32, 32, 30.5 * kPi / 180, 20));
  const auto u = evaluate(under, scenes, cfg);
  EXPECT_EQ(u.n_success, 1u);
  EXPECT_EQ(u.n_scenes, 1u);
  EXPECT_EQ(u.excluded, 1u);
  EXPECT_EQ(evaluate(over, scenes, cfg).n_success, 0u);
  // Angle pi away is the same grasp.
  FixedModel flipped(peak_output(64, 64, 32, 32, kPi, 20));
  EXPECT_EQ(evaluate(flipped, scenes, cfg).n_success, 1u);
}

TEST(Evaluate, AllZeroQualityIsScoredAtCenter) {
  const std::vector<Scene> scenes = {scene_with(GraspPose2D(32, 32, 0.0, 20, 10))};
  Tensor<float> y({4, 64, 64});
  for (std::size_t i = 0; i < 64 * 64; ++i) {
    y[64 * 64 + i] = 1.0f;
    y[3 * 64 * 64 + i] = 20.0f / 150;
  }
  FixedModel zero(y);
  const auto r = evaluate(zero, scenes, TrainConfig{});
  EXPECT_TRUE(r.records[0].no_grasp);
  EXPECT_TRUE(r.records[0].success);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.ratio = 0.3;
  c.phase2.epochs = 7;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.ratio, 0.3);
  EXPECT_EQ(back.phase2.epochs, 7);
  EXPECT_EQ(back.phase1.epochs, c.phase1.epochs);
  EXPECT_THROW(train_config_from_json({{"ratio", 0.0}}), config_error);
  EXPECT_THROW(train_config_from_json({{"iou_threshold", 1.0}}), config_error);
  EXPECT_THROW(train_config_from_json({{"angle_threshold", 2.0}}), config_error);
  EXPECT_THROW(train_config_from_json({{"bogus", 1}}), config_error);
  EXPECT_THROW(train_config_from_json({{"ratio", "x"}}), config_error);
}

TEST(TwoPhase, ZeroPhase2EpochsEqualsFreshAssembly) {
  const auto scenes = synth_dataset(8, 3);
  const auto head = parse_network_config(kTinyHead);
  auto cfg = quick_config();
  cfg.phase2.epochs = 0;
  auto r = train_two_phase(scenes, cfg, head);
  EXPECT_TRUE(r.phase2.log.empty());
  // Rebuild the same assembly by replaying the rng draws.
  std::mt19937_64 rng(cfg.seed);
  auto p1 = run_phase1(scenes, vq_config_for(head, cfg), cfg.phase1, rng);
  auto fresh = AssembledModel::assemble(p1.model.to_archive(), head, rng);
  const auto a = evaluate(r.model, scenes, cfg), b = evaluate(fresh, scenes, cfg);
  EXPECT_EQ(a.n_success, b.n_success);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].grasp.u(), b.records[i].grasp.u());
    EXPECT_EQ(a.records[i].best_iou, b.records[i].best_iou);
  }
}

TEST(TwoPhase, FreezeAndDeterminism) {
  const auto scenes = synth_dataset(8, 4);
  const auto head = parse_network_config(kTinyHead);
  auto cfg = quick_config();
  cfg.ratio = 0.5;
  auto a = train_two_phase(scenes, cfg, head);
  auto b = train_two_phase(scenes, cfg, head);
  EXPECT_EQ(a.phase2.checksums.encoder_assembled, a.phase2.checksums.encoder_after);
  EXPECT_EQ(a.phase2.checksums.codebook_assembled, a.phase2.checksums.codebook_after);
  EXPECT_EQ(a.model.encoder_checksum(), a.phase2.checksums.encoder_assembled);
  EXPECT_EQ(a.labelled_ids.size(), 4u);
  EXPECT_EQ(a.labelled_ids, b.labelled_ids);
  ASSERT_EQ(a.phase2.log.size(), 2u);
  EXPECT_NEAR(a.phase2.log.back().loss, b.phase2.log.back().loss, 1e-6);
  EXPECT_EQ(nn::serialize_archive(a.model.to_archive()), nn::serialize_archive(b.model.to_archive()));
  // The phase-one encoder is what the assembly carries.
  for (auto* p : a.model.encoder_params()) EXPECT_TRUE(p->value == a.vqvae.at(p->name));
  const auto rep = a.report();
  EXPECT_EQ(rep["phase1"].size(), 2u);
  EXPECT_TRUE(rep.contains("checksums"));
}

TEST(TwoPhase, RatioLeavingNoLabelledSceneFails) {
  const auto scenes = synth_dataset(4, 4);
  auto cfg = quick_config();
  cfg.ratio = 0.1;
  EXPECT_THROW(train_two_phase(scenes, cfg, parse_network_config(kTinyHead)), config_error);
}

TEST(Baseline, ParamCountAndDeterminism) {
  const auto scenes = synth_dataset(4, 5);
  auto cfg = quick_config();
  cfg.phase2.epochs = 1;
  auto a = train_supervised_baseline(scenes, cfg);
  auto b = train_supervised_baseline(scenes, cfg);
  EXPECT_EQ(a.model.param_count(), 70548u);
  ASSERT_EQ(a.log.size(), 1u);
  EXPECT_NEAR(a.log[0].loss, b.log[0].loss, 1e-6);
  EXPECT_EQ(a.labelled_ids.size(), 4u);
}

TEST(Sweep, DedupeAndTestSplit) {
  std::vector<std::string> w;
  const auto r = dedupe_ratios({0.5, 0.1, 0.5, 0.3}, &w);
  EXPECT_EQ(r, (std::vector<double>{0.5, 0.1, 0.3}));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NE(w[0].find("duplicate"), std::string::npos);
  EXPECT_THROW(dedupe_ratios({0.0}, nullptr), config_error);
  EXPECT_THROW(dedupe_ratios({}, nullptr), config_error);

  const auto scenes = synth_dataset(30, 1);
  const auto [test, pool] = test_split(scenes, 1.0 / 6, 9);
  EXPECT_EQ(test.size(), 5u);
  EXPECT_EQ(pool.size(), 25u);
  std::set<std::string> ids;
  for (const auto& s : test) ids.insert(s.id);
  for (const auto& s : pool) EXPECT_FALSE(ids.count(s.id));
  EXPECT_EQ(test_split(scenes, 1.0 / 6, 9).first[0].id, test[0].id);
}

TEST(Sweep, TableStructure) {
  const auto scenes = synth_dataset(24, 6);
  auto cfg = quick_config();
  cfg.phase1.epochs = 1;
  cfg.phase2.epochs = 1;
  const auto head = parse_network_config(kTinyHead);
  const auto t = ratio_sweep(scenes, {0.5, 0.5, 0.3}, cfg, head);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.warnings.size(), 1u);
  ASSERT_TRUE(t.control.has_value());
  EXPECT_EQ(t.control->ratio, 1.0);
  EXPECT_EQ(t.test_ids.size(), 4u);
  for (const auto& r : t.rows) {
    EXPECT_GE(r.eval.accuracy, 0.0);
    EXPECT_LE(r.eval.accuracy, 100.0);
    EXPECT_EQ(r.eval.n_scenes, 4u);
  }
  EXPECT_EQ(t.rows[0].labelled, 10u);
  EXPECT_EQ(t.rows[1].labelled, 6u);
  const std::string csv = t.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "ratio,accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  // Same table whether ratios run one at a time or concurrently.
  const auto par = ratio_sweep(scenes, {0.5, 0.3}, cfg, head, true, 3);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(par.rows[i].eval.accuracy, t.rows[i].eval.accuracy);
  EXPECT_EQ(par.csv(), t.csv());
}

TEST(Sweep, SingleRatio) {
  const auto scenes = synth_dataset(12, 8);
  auto cfg = quick_config();
  cfg.phase1.epochs = 1;
  cfg.phase2.epochs = 1;
  const auto t = ratio_sweep(scenes, {0.5}, cfg, parse_network_config(kTinyHead), false);
  EXPECT_EQ(t.rows.size(), 1u);
  EXPECT_FALSE(t.control.has_value());
  EXPECT_GE(t.rows[0].eval.accuracy, 0.0);
  EXPECT_LE(t.rows[0].eval.accuracy, 100.0);
}
