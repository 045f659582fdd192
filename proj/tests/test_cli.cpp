#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "graspkit/graspkit.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace graspkit;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

// Small head so the CLI runs finish in seconds.
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

class Cli : public ::testing::Test {
 protected:
  static inline TempDir* dir = nullptr;

  static void SetUpTestSuite() {
    dir = new TempDir;
    write_text(*dir / "tiny.cfg", kTinyHead);
    write_text(*dir / "quick.json", R"({"phase1": {"epochs": 15}, "phase2": {"epochs": 40}})");
    ASSERT_EQ(run("synth-data --out " + p("data") + " --n 8 --seed 3").code, 0);
    ASSERT_EQ(run("synth-data --out " + p("data24") + " --n 24 --seed 4").code, 0);
  }
  static void TearDownTestSuite() {
    delete dir;
    dir = nullptr;
  }

  static std::string p(const std::string& name) { return (*dir / name).string(); }

  static Outcome run(const std::string& args) {
    static int k = 0;
    const std::string o = p("stdout" + std::to_string(k)), e = p("stderr" + std::to_string(k));
    ++k;
    const int s = std::system((std::string(GRASPKIT_CLI) + " " + args + " >" + o + " 2>" + e).c_str());
    return {WIFEXITED(s) ? WEXITSTATUS(s) : -1, read_text(o), read_text(e)};
  }

  static std::string train_flags() { return " --config " + p("quick.json") + " --network " + p("tiny.cfg"); }

  static nlohmann::json json_file(const std::string& path) { return nlohmann::json::parse(read_text(path)); }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  auto r = run("train --data " + p("data") + " --out " + p("u1") + " --ratio 0");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--ratio"), std::string::npos) << r.err;
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --out " + p("u2")).code, 2);
  r = run("train --data synth:0 --out " + p("u3"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
  EXPECT_EQ(run("train --data " + p("nowhere") + " --out " + p("u4")).code, 2);
  EXPECT_EQ(run("sweep --data synth --out " + p("u5") + " --ratios 0.5,1.5").code, 2);
  write_text(*dir / "bad.json", R"({"phase1": {"epochs": 1}, "colour": 3})");
  r = run("train --data " + p("data") + " --out " + p("u6") + " --config " + p("bad.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST_F(Cli, TrainWritesWeightsAndIsReproducible) {
  const std::string args = "train --data " + p("data") + " --ratio 0.5 --seed 42" + train_flags();
  const auto a = run(args + " --out " + p("ta"));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run(args + " --out " + p("tb"));
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"weights.gkw", "vqvae.gkw", "report.json", "manifest.json"})
    EXPECT_TRUE(fs::is_regular_file(*dir / "ta" / f)) << f;
  const auto ma = json_file(p("ta/manifest.json")), mb = json_file(p("tb/manifest.json"));
  EXPECT_EQ(ma["command"], "train");
  EXPECT_EQ(ma["exit_code"], 0);
  EXPECT_EQ(ma["seed"], 42);
  const std::string ha = ma["outputs"][p("ta/weights.gkw")], hb = mb["outputs"][p("tb/weights.gkw")];
  EXPECT_EQ(ha.size(), 40u);
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(ha, file_hash(*dir / "ta" / "weights.gkw"));
  const auto rep = json_file(p("ta/report.json"));
  EXPECT_EQ(rep["labelled"].size(), 4u);
  EXPECT_TRUE(rep["checksums"].is_object());

  const auto c = run("train --data " + p("data") + " --ratio 0.5 --seed 43" + train_flags() + " --out " + p("tc"));
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(json_file(p("tc/manifest.json"))["outputs"][p("tc/weights.gkw")], ha);
}

TEST_F(Cli, BaselineTrainAndEval) {
  auto r = run("train --baseline --data " + p("data") + " --network " + p("tiny.cfg") + " --config " +
               p("quick.json") + " --out " + p("base"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("eval --data " + p("data") + " --weights " + p("base/weights.gkw") + " --out " + p("base_eval"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = json_file(p("base_eval/eval.json"));
  EXPECT_EQ(ev["n_scenes"], 8);
  EXPECT_GE(ev["accuracy"].get<double>(), 0.0);
  EXPECT_LE(ev["accuracy"].get<double>(), 100.0);
}

TEST_F(Cli, SweepCsv) {
  auto r = run("sweep --data " + p("data24") + " --ratios 0.5" + train_flags() + " --out " + p("s1"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_text(p("s1/sweep.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "ratio,accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_TRUE(fs::is_regular_file(*dir / "s1" / "sweep.png"));

  r = run("sweep --data " + p("data24") + train_flags() + " --out " + p("s5") + " --no-control");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv5 = read_text(p("s5/sweep.csv"));
  EXPECT_EQ(std::count(csv5.begin(), csv5.end(), '\n'), 6);
  std::istringstream in(csv5);
  std::string line;
  std::getline(in, line);
  for (double want : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    std::getline(in, line);
    const auto comma = line.find(',');
    EXPECT_DOUBLE_EQ(std::stod(line.substr(0, comma)), want);
    const double acc = std::stod(line.substr(comma + 1));
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 100.0);
  }
}

TEST_F(Cli, PredictWritesGraspAndPanels) {
  ASSERT_EQ(run("train --data " + p("data") + train_flags() + " --out " + p("pm")).code, 0);
  const std::string img = p("data") + "/" + fs::directory_iterator(p("data"))->path().filename().string() + "/image.png";
  const auto model = load_grasp_model(nn::load_archive(p("pm/weights.gkw")));
  const auto maps = predict_maps(model.get(), load_png(img));
  for (const char* sigma : {"0", "2"}) {
    const std::string out = p(std::string("pred") + sigma);
    const auto r = run("predict --weights " + p("pm/weights.gkw") + " --image " + img + " --sigma " + sigma +
                       " --out " + out);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto g = json_file(out + "/grasp.json");
    const auto row = std::size_t(g["v"].get<double>()), col = std::size_t(g["u"].get<double>());
    EXPECT_FLOAT_EQ(g["quality"].get<float>(), maps.quality(row, col)) << sigma;
    const Image panels = load_png(out + "/panels.png");
    EXPECT_GT(panels.dim(2), 4 * panels.dim(1));
  }

  // 66 x 66 is cropped to 64 x 64 with a notice.
  Image big({3, 66, 66});
  const Image src = load_png(img);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 66; ++i)
      for (std::size_t j = 0; j < 66; ++j) big(c, i, j) = src(c, std::min<std::size_t>(i, 63), std::min<std::size_t>(j, 63));
  save_png(*dir / "big.png", big);
  const auto r = run("predict --weights " + p("pm/weights.gkw") + " --image " + p("big.png") + " --out " + p("predbig"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("center-cropped to 64x64"), std::string::npos) << r.err;
}

TEST_F(Cli, CalibrateRecoversNominalRig) {
  auto r = run("synth-data --out " + p("cal") + " --observations " + p("obs.csv") + " --seed 9");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_observations(p("obs.csv")).size(), 40u);
  r = run("calibrate --observations " + p("obs.csv") + " --out " + p("cal"));
  ASSERT_EQ(r.code, 0) << r.err;
  const Mat7 T = load_mapping(p("cal/mapping.json"));
  EXPECT_LT((T - nominal_rig()).cwiseAbs().maxCoeff(), 1e-9);

  std::string six;
  {
    std::istringstream in(read_text(p("obs.csv")));
    std::string line;
    for (int i = 0; i < 7 && std::getline(in, line); ++i) six += line + "\n";
  }
  write_text(*dir / "six.csv", six);
  r = run("calibrate --observations " + p("six.csv") + " --out " + p("cal6"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("rank"), std::string::npos) << r.err;
  EXPECT_EQ(json_file(p("cal6/manifest.json"))["exit_code"], 1);
}

TEST_F(Cli, ExecuteSimOnTrainedScene) {
  ASSERT_EQ(run("synth-data --out " + p("ex") + " --n 1 --seed 11").code, 0);
  ASSERT_EQ(run("train --data " + p("ex") + " --network " + p("tiny.cfg") + " --config " + p("quick.json") +
                " --out " + p("exw"))
                .code,
            0);
  ASSERT_EQ(run("synth-data --out " + p("exw") + " --observations " + p("ex_obs.csv")).code, 0);
  ASSERT_EQ(run("calibrate --observations " + p("ex_obs.csv") + " --out " + p("exw")).code, 0);
  std::string img;
  for (const auto& e : fs::directory_iterator(p("ex")))
    if (e.is_directory()) img = (e.path() / "image.png").string();
  const std::string before = read_text(img);
  const auto r = run("execute-sim --weights " + p("exw/weights.gkw") + " --image " + img + " --mapping " +
                     p("exw/mapping.json") + " --out " + p("exo"));
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const auto ex = json_file(p("exo/execution.json"));
  EXPECT_TRUE(ex["success"].get<bool>());
  EXPECT_EQ(ex["waypoints"].size(), 4u);
  std::istringstream log(read_text(p("exo/execution.jsonl")));
  std::string line;
  int n = 0;
  while (std::getline(log, line)) {
    EXPECT_TRUE(nlohmann::json::parse(line)["flags"].empty());
    ++n;
  }
  EXPECT_EQ(n, 1 + 3 * kInterpolationSteps);
  EXPECT_EQ(read_text(img), before);
}
