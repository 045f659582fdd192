// graspkit command-line driver.
//
//   graspkit synth-data  --out DIR [--n N] [--seed S] [--size PX] [--observations CSV]
//   graspkit train       --data D --out DIR [--ratio R] [--seed S] [--config F] [--baseline]
//   graspkit sweep       --data D --out DIR [--ratios 0.1,0.3,...] [--seed S] [--config F]
//   graspkit eval        --data D --weights W --out DIR [--sigma S]
//   graspkit predict     --weights W --image PNG --out DIR [--sigma S]
//   graspkit calibrate   --observations CSV --out DIR
//   graspkit execute-sim --weights W --image PNG --mapping JSON --out DIR
//
// --data is a dataset directory (Cornell layout or exported scenes) or
// "synth[:N]". Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "graspkit/graspkit.hpp"

namespace fs = std::filesystem;
using namespace graspkit;

namespace {

constexpr std::uint64_t kSynthDataSeed = 7;
constexpr std::size_t kSynthDefaultScenes = 64;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string data, out, config, weights, network;
  std::uint64_t seed = 42;
  double ratio = 1.0;
  std::vector<double> ratios{0.1, 0.3, 0.5, 0.7, 0.9};
  double sigma = 2.0;
  bool baseline = false;
  bool no_control = false;
  std::string image, mapping, observations, chain = "";
  std::size_t n = kSynthDefaultScenes, size = 64;
  double noise = 0.0;
  double depth = 0.5, depth_gpc = 0.15, height_gpc = 0.10;
  double fx = 615, fy = 615;
};

std::vector<Scene> load_data(const std::string& spec, RunManifest& m) {
  if (spec.rfind("synth", 0) == 0) {
    std::size_t n = kSynthDefaultScenes;
    if (spec.size() > 5) {
      if (spec[5] != ':') throw UsageError("--data: expected a directory or synth[:N], got '" + spec + "'");
      try {
        n = std::stoul(spec.substr(6));
      } catch (const std::exception&) {
        throw UsageError("--data: bad scene count in '" + spec + "'");
      }
      if (n == 0) throw UsageError("--data: scene count must be >= 1");
    }
    m.config["data"] = {{"synthetic", n}, {"data_seed", kSynthDataSeed}};
    return synth_dataset(n, kSynthDataSeed);
  }
  if (!fs::is_directory(spec)) throw UsageError("--data: not a directory: " + spec);
  m.config["data"] = spec;
  auto scenes = load_dataset_dir(spec);
  if (scenes.empty()) throw io_error("no scenes found in " + spec);
  return scenes;
}

bool given(const CLI::App& cmd, const std::string& flag) {
  const auto* o = cmd.get_option_no_throw(flag);
  return o && o->count() > 0;
}

// Defaults < config file < flags that were given.
TrainConfig effective_config(const CLI::App& cmd, const Common& a) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    try {
      cfg = train_config_from_json(nlohmann::json::parse(nn::read_file(a.config)));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("--config: " + a.config + ": " + e.what());
    } catch (const config_error& e) {
      throw UsageError(std::string("--config: ") + e.what());
    }
  }
  if (given(cmd, "--seed")) cfg.seed = a.seed;
  if (given(cmd, "--ratio")) cfg.ratio = a.ratio;
  if (given(cmd, "--sigma")) cfg.smooth_sigma = a.sigma;
  try {
    cfg.validate();
  } catch (const config_error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

NetworkConfig head_config(const Common& a, bool baseline) {
  if (!a.network.empty()) return load_network_config(a.network);
  return baseline ? reference_ggcnn2() : reference_rggcnn2();
}

void write_json(const fs::path& p, const nlohmann::json& j) { nn::write_file_atomic(p, j.dump(2) + "\n"); }

void progress_line(const std::string& phase, const nlohmann::json& j) {
  std::cerr << phase << ' ' << j.dump() << '\n';
}

// Crops to the largest centered region whose sides are multiples of 4.
Image fit_to_stride(const Image& img) {
  const std::size_t h = img.dim(1) / 4 * 4, w = img.dim(2) / 4 * 4;
  if (h == img.dim(1) && w == img.dim(2)) return img;
  if (!h || !w) throw config_error("image too small");
  std::cerr << "notice: image " << img.dim(1) << "x" << img.dim(2) << " center-cropped to " << h << "x" << w
            << " (sides must be multiples of 4)\n";
  return crop(img, (img.dim(1) - h) / 2, (img.dim(2) - w) / 2, h, w);
}

int cmd_synth(const Common& a, RunManifest& m) {
  const fs::path out = a.out;
  if (!a.observations.empty()) {
    std::mt19937_64 rng(a.seed);
    const auto cams = protocol_camera_poses(rng);
    const auto obs = synth_observations(nominal_rig(), cams, a.noise, &rng);
    nn::write_file_atomic(a.observations, observations_csv(obs));
    m.add_output(a.observations);
    std::cout << "wrote " << obs.size() << " observations to " << a.observations << '\n';
    return 0;
  }
  const auto scenes = synth_dataset(a.n, a.seed, a.size, a.size);
  export_scenes(scenes, out);
  m.config["n"] = a.n;
  m.config["size"] = a.size;
  std::cout << "wrote " << scenes.size() << " scenes to " << out << '\n';
  return 0;
}

int cmd_train(const CLI::App& cmd, const Common& a, RunManifest& m) {
  const TrainConfig cfg = effective_config(cmd, a);
  m.seed = cfg.seed;
  m.config["train"] = to_json(cfg);
  m.config["baseline"] = a.baseline;
  const auto scenes = load_data(a.data, m);
  const NetworkConfig net = head_config(a, a.baseline);
  m.config["network"] = net.name;
  const fs::path out = a.out;
  fs::create_directories(out);
  nlohmann::json report{{"config", to_json(cfg)}, {"network", net.name}};
  std::unique_ptr<GraspModel> model;
  std::vector<Scene> labelled;
  if (a.baseline) {
    auto r = train_supervised_baseline(scenes, cfg, net, progress_line);
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& e : r.log) losses.push_back(to_json(e));
    report["baseline"] = losses;
    report["labelled"] = r.labelled_ids;
    report["param_count"] = r.model.param_count();
    model = std::make_unique<DirectGraspModel>(std::move(r.model));
  } else {
    auto r = train_two_phase(scenes, cfg, net, progress_line);
    const nlohmann::json two = r.report();
    for (const auto& [k, v] : two.items()) report[k] = v;
    report["param_count"] = nn::trainable_count(r.model.trainable_params());
    nn::save_archive(out / "vqvae.gkw", r.vqvae);
    m.add_output(out / "vqvae.gkw");
    model = std::make_unique<AssembledModel>(std::move(r.model));
  }
  nn::save_archive(out / "weights.gkw", model->to_archive());
  m.add_output(out / "weights.gkw");
  {
    std::set<std::string> ids(report["labelled"].begin(), report["labelled"].end());
    std::vector<Scene> train_set;
    for (const auto& s : scenes)
      if (ids.count(s.id)) train_set.push_back(s);
    const auto ev = evaluate(*model, train_set, cfg);
    report["train_eval"] = to_json(ev);
    std::cout << "training-set accuracy " << ev.accuracy << "% (" << ev.n_success << "/" << ev.n_scenes << ")\n";
  }
  write_json(out / "report.json", report);
  m.add_output(out / "report.json");
  std::cout << "weights " << (out / "weights.gkw").string() << " " << m.outputs[(out / "weights.gkw").string()]
            << '\n';
  return 0;
}

unsigned worker_count() {
  if (const char* env = std::getenv("GRASPKIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return unsigned(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring GRASPKIT_THREADS='" << env << "'\n";
  }
  return 1;
}

int cmd_sweep(const CLI::App& cmd, const Common& a, RunManifest& m) {
  const TrainConfig cfg = effective_config(cmd, a);
  m.seed = cfg.seed;
  m.config["train"] = to_json(cfg);
  m.config["ratios"] = a.ratios;
  const auto scenes = load_data(a.data, m);
  const NetworkConfig net = head_config(a, false);
  const fs::path out = a.out;
  fs::create_directories(out);
  SweepTable t;
  try {
    dedupe_ratios(a.ratios, nullptr);
  } catch (const config_error& e) {
    throw UsageError(std::string("--ratios: ") + e.what());
  }
  t = ratio_sweep(scenes, a.ratios, cfg, net, !a.no_control, worker_count(), progress_line);
  for (const auto& w : t.warnings) std::cerr << "warning: " << w << '\n';
  nn::write_file_atomic(out / "sweep.csv", t.csv());
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : t.rows) pts.emplace_back(r.ratio, r.eval.accuracy);
  std::optional<double> control;
  if (t.control) control = t.control->eval.accuracy;
  plot_sweep(out / "sweep.png", pts, control);
  nlohmann::json report = t.report();
  report["config"] = to_json(cfg);
  write_json(out / "report.json", report);
  for (const char* f : {"sweep.csv", "sweep.png", "report.json"}) m.add_output(out / f);
  std::cout << t.csv();
  if (control) std::cout << "control ratio 1.0: " << *control << '\n';
  return 0;
}

std::unique_ptr<GraspModel> load_model(const Common& a, RunManifest& m) {
  if (a.weights.empty()) throw UsageError("--weights is required");
  if (!fs::is_regular_file(a.weights)) throw UsageError("--weights: no such file: " + a.weights);
  m.add_input(a.weights);
  return load_grasp_model(nn::load_archive(a.weights));
}

int cmd_eval(const CLI::App& cmd, const Common& a, RunManifest& m) {
  const TrainConfig cfg = effective_config(cmd, a);
  m.config["train"] = to_json(cfg);
  auto model = load_model(a, m);
  const auto scenes = load_data(a.data, m);
  const auto ev = evaluate(*model, scenes, cfg);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "eval.json", to_json(ev));
  m.add_output(fs::path(a.out) / "eval.json");
  std::cout << "accuracy " << ev.accuracy << "% (" << ev.n_success << "/" << ev.n_scenes << "), excluded "
            << ev.excluded << '\n';
  return 0;
}

struct Prediction {
  Image image;
  GraspMaps maps;
  GraspDetection det;
};

Prediction run_predict(const Common& a, RunManifest& m, double sigma) {
  auto model = load_model(a, m);
  if (a.image.empty()) throw UsageError("--image is required");
  if (!fs::is_regular_file(a.image)) throw UsageError("--image: no such file: " + a.image);
  m.add_input(a.image);
  Prediction p{fit_to_stride(load_png(a.image)), {}, {GraspPose2D(0, 0, 0, 1), 0, 0, false}};
  p.maps = predict_maps(model.get(), p.image);
  p.det = grasp_from_maps(p.maps, sigma);
  fs::create_directories(a.out);
  nlohmann::json g = to_json(p.det.grasp);
  g["no_grasp"] = p.det.no_grasp;
  g["rect"] = to_json(rect_from_grasp(p.det.grasp));
  write_json(fs::path(a.out) / "grasp.json", g);
  plot_map_panels(fs::path(a.out) / "panels.png", p.image, p.maps, p.det.grasp);
  for (const char* f : {"grasp.json", "panels.png"}) m.add_output(fs::path(a.out) / f);
  return p;
}

int cmd_predict(const CLI::App& cmd, const Common& a, RunManifest& m) {
  const double sigma = given(cmd, "--sigma") ? a.sigma : 2.0;
  if (sigma < 0) throw UsageError("--sigma must be >= 0");
  m.config["sigma"] = sigma;
  const auto p = run_predict(a, m, sigma);
  std::cout << to_json(p.det.grasp).dump() << '\n';
  return 0;
}

int cmd_calibrate(const Common& a, RunManifest& m) {
  if (!fs::is_regular_file(a.observations)) throw UsageError("--observations: no such file: " + a.observations);
  m.add_input(a.observations);
  const auto obs = read_observations(a.observations);
  const auto fit = fit_mapping(obs);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "mapping.json", mapping_to_json(fit.T));
  m.add_output(fs::path(a.out) / "mapping.json");
  m.config["observations"] = obs.size();
  if (fit.duplicates) std::cerr << "warning: " << fit.duplicates << " duplicate camera pose(s)\n";
  std::cout << "fitted 7x7 mapping from " << obs.size() << " observations, residual "
            << mapping_residual(fit.T, obs) << '\n';
  return 0;
}

int cmd_execute(const CLI::App& cmd, const Common& a, RunManifest& m) {
  const double sigma = given(cmd, "--sigma") ? a.sigma : 2.0;
  if (a.mapping.empty()) throw UsageError("--mapping is required");
  if (!fs::is_regular_file(a.mapping)) throw UsageError("--mapping: no such file: " + a.mapping);
  m.add_input(a.mapping);
  const Mat7 T = load_mapping(a.mapping);
  const KinematicChain chain = a.chain.empty() ? reference_arm7() : load_chain(a.chain);
  if (!a.chain.empty()) m.add_input(a.chain);
  const auto p = run_predict(a, m, sigma);
  Intrinsics k{a.fx, a.fy, double(p.image.dim(2)) / 2.0, double(p.image.dim(1)) / 2.0};
  const Pose7 cam = pose_from_grasp(p.det.grasp, a.depth, k);
  const Pose7 target = apply_mapping(T, cam);
  const TableGeom table;
  const ObjectGeom obj{a.depth_gpc, a.height_gpc};
  const Pose7 home = fk(chain, chain.home);
  const auto plan = plan_trajectory(target, obj, table, home);
  const auto log = simulate_execution(chain, plan, table);
  const fs::path out = a.out;
  {
    std::ostringstream s;
    write_log(s, log);
    nn::write_file_atomic(out / "execution.jsonl", s.str());
  }
  nlohmann::json wps = nlohmann::json::array();
  for (const auto& w : plan) wps.push_back({{"name", w.name}, {"pose", to_json(w.pose)}, {"event", w.event}});
  write_json(out / "execution.json", {{"success", log.success},
                                      {"aborted", log.aborted},
                                      {"message", log.message},
                                      {"flagged", log.flagged},
                                      {"camera_pose", to_json(cam)},
                                      {"robot_pose", to_json(target)},
                                      {"waypoints", wps}});
  for (const char* f : {"execution.jsonl", "execution.json"}) m.add_output(out / f);
  m.config["execution"] = {{"depth", a.depth}, {"depth_gpc", a.depth_gpc}, {"height_gpc", a.height_gpc},
                           {"fx", a.fx},       {"fy", a.fy},               {"sigma", sigma}};
  std::cout << "execution " << (log.success ? "succeeded" : "failed") << (log.message.empty() ? "" : ": ")
            << log.message << '\n';
  return log.success ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graspkit: semi-supervised grasp maps, calibration and simulated execution"};
  app.require_subcommand(1);
  Common a;
  auto positive_ratio = CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          const double r = std::stod(s);
          if (r > 0.0 && r <= 1.0) return {};
        } catch (const std::exception&) {
        }
        return "ratio must lie in (0, 1], got " + s;
      },
      "(0,1]");

  auto* synth = app.add_subcommand("synth-data", "write a synthetic dataset or observation file");
  synth->add_option("--out", a.out, "output directory")->required();
  synth->add_option("--n", a.n, "number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--seed", a.seed, "generator seed");
  synth->add_option("--size", a.size, "image side in pixels")->check(CLI::Range(64, 4096));
  synth->add_option("--observations", a.observations, "write a calibration CSV instead of scenes");
  synth->add_option("--noise", a.noise, "observation noise sigma")->check(CLI::NonNegativeNumber);

  auto add_train_flags = [&](CLI::App* c) {
    c->add_option("--data", a.data, "dataset directory or synth[:N]")->required();
    c->add_option("--out", a.out, "output directory")->required();
    c->add_option("--seed", a.seed, "run seed");
    c->add_option("--config", a.config, "training config (JSON)");
    c->add_option("--network", a.network, "network config file");
    c->add_option("--sigma", a.sigma, "Q smoothing sigma for evaluation")->check(CLI::NonNegativeNumber);
  };
  auto* train = app.add_subcommand("train", "two-phase training (or --baseline)");
  add_train_flags(train);
  train->add_option("--ratio", a.ratio, "labelled fraction")->check(positive_ratio);
  train->add_flag("--baseline", a.baseline, "supervised GGCNN2 only");

  auto* sweep = app.add_subcommand("sweep", "labelled-ratio sweep");
  add_train_flags(sweep);
  sweep->add_option("--ratios", a.ratios, "comma separated ratios")->delimiter(',')->check(positive_ratio);
  sweep->add_flag("--no-control", a.no_control, "skip the ratio 1.0 control run");

  auto* eval = app.add_subcommand("eval", "evaluate weights on a dataset");
  eval->add_option("--data", a.data, "dataset directory or synth[:N]")->required();
  eval->add_option("--weights", a.weights, "weight archive")->required();
  eval->add_option("--out", a.out, "output directory")->required();
  eval->add_option("--config", a.config, "training config (JSON) for thresholds");
  eval->add_option("--sigma", a.sigma, "Q smoothing sigma")->check(CLI::NonNegativeNumber);
  eval->add_option("--seed", a.seed, "unused; recorded");

  auto* predict = app.add_subcommand("predict", "grasp maps for one image");
  predict->add_option("--weights", a.weights, "weight archive")->required();
  predict->add_option("--image", a.image, "PNG image")->required();
  predict->add_option("--out", a.out, "output directory")->required();
  predict->add_option("--sigma", a.sigma, "Q smoothing sigma")->check(CLI::NonNegativeNumber);

  auto* calibrate = app.add_subcommand("calibrate", "fit the 7x7 camera-to-robot mapping");
  calibrate->add_option("--observations", a.observations, "observation CSV")->required();
  calibrate->add_option("--out", a.out, "output directory")->required();

  auto* exec = app.add_subcommand("execute-sim", "predict, map, plan and simulate one grasp");
  exec->add_option("--weights", a.weights, "weight archive")->required();
  exec->add_option("--image", a.image, "PNG image")->required();
  exec->add_option("--mapping", a.mapping, "mapping JSON")->required();
  exec->add_option("--out", a.out, "output directory")->required();
  exec->add_option("--chain", a.chain, "kinematic chain file (default: built-in arm7)");
  exec->add_option("--sigma", a.sigma, "Q smoothing sigma")->check(CLI::NonNegativeNumber);
  exec->add_option("--depth", a.depth, "camera depth at the grasp center (m)")->check(CLI::PositiveNumber);
  exec->add_option("--depth-gpc", a.depth_gpc, "depth of the grasp point below the transit plane (m)")
      ->check(CLI::NonNegativeNumber);
  exec->add_option("--height-gpc", a.height_gpc, "object height above the table (m)")->check(CLI::NonNegativeNumber);
  exec->add_option("--fx", a.fx, "focal length x (px)")->check(CLI::PositiveNumber);
  exec->add_option("--fy", a.fy, "focal length y (px)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  RunManifest m;
  Stopwatch clock;
  CLI::App* cmd = app.get_subcommands().front();
  m.command = cmd->get_name();
  m.seed = a.seed;
  int code = 1;
  try {
    if (cmd == synth) code = cmd_synth(a, m);
    else if (cmd == train) code = cmd_train(*cmd, a, m);
    else if (cmd == sweep) code = cmd_sweep(*cmd, a, m);
    else if (cmd == eval) code = cmd_eval(*cmd, a, m);
    else if (cmd == predict) code = cmd_predict(*cmd, a, m);
    else if (cmd == calibrate) code = cmd_calibrate(a, m);
    else code = cmd_execute(*cmd, a, m);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    code = 2;
    m.message = e.what();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 1;
    m.message = e.what();
  }
  m.exit_code = code;
  m.wall_clock_s = clock.seconds();
  if (!a.out.empty()) {
    try {
      m.write(fs::path(a.out) / "manifest.json");
    } catch (const std::exception& e) {
      std::cerr << "error: cannot write manifest: " << e.what() << '\n';
      if (!code) code = 1;
    }
  }
  return code;
}
