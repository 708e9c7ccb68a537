// nutnet: command-line front end. Every subcommand except `experiment`
// builds a one-stage experiment config from its flags and runs it, so the
// report written to --out has the same shape as a full experiment's.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nutnet/error.hpp"
#include "nutnet/evalkit.hpp"

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct Common {
  std::string config;
  std::string checkpoint;
  int block_size = 0;
  double k1 = 0;
  double k2 = 0;
  std::uint64_t seed = 1;
  bool deterministic = false;
  std::string out;
  std::string detector_url;
  int threads = 1;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool defense_flags) {
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--seed", c.seed, "Random seed");
  app->add_flag("--deterministic", c.deterministic, "Pin work partitioning so reruns are bit-identical");
  app->add_option("--out", c.out, "Output directory (report.json and artifacts)");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  app->add_flag("-q,--quiet", c.quiet, "No progress output");
  if (defense_flags) {
    app->add_option("--checkpoint", c.checkpoint, "Trained model checkpoint");
    app->add_option("--block-size", c.block_size, "Block size")->check(CLI::IsMember({13, 26, 52}));
    app->add_option("--k1", c.k1, "Block threshold kappa1")->check(CLI::PositiveNumber);
    app->add_option("--k2", c.k2, "Pixel threshold kappa2")->check(CLI::PositiveNumber);
    app->add_option("--detector-url", c.detector_url, "Detector bridge, http://host:port");
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw nutnet::InputError("cannot open config '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw nutnet::ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).string(); }

// Stage defaults from --config, then explicit flags on top.
Json base_stage(const std::string& type, const Common& c) {
  Json st = c.config.empty() ? Json::object() : read_json_file(c.config);
  st["type"] = type;
  if (!c.checkpoint.empty()) st["checkpoint"] = absolute(c.checkpoint);
  if (c.block_size) st["block_size"] = c.block_size;
  if (c.k1 > 0) st["k1"] = c.k1;
  if (c.k2 > 0) st["k2"] = c.k2;
  if (!c.detector_url.empty()) st["detector_url"] = c.detector_url;
  if (!c.out.empty()) st["out"] = absolute(c.out);
  return st;
}

int run(const Json& stage, const Common& c) {
  Json exp = {{"name", stage.value("type", std::string("run"))},
              {"seed", c.seed},
              {"deterministic", c.deterministic},
              {"threads", c.threads},
              {"stages", Json::array({stage})}};
  nutnet::eval::ExperimentOptions opts;
  opts.base_dir = fs::current_path().string();
  if (!c.out.empty()) opts.report_path = (fs::path(c.out) / "report.json").string();
  if (!c.quiet) opts.log = [](const std::string& m) { std::cerr << "[nutnet] " << m << "\n"; };
  const auto report = nutnet::eval::run_experiment(exp.dump(), opts);
  std::cout << report.json << "\n";
  for (const auto& f : report.failures) {
    std::cerr << "nutnet: stage " << f.stage << " failed: " << f.error << "\n";
  }
  for (const auto& f : report.failures)
    if (f.internal) return kExitInternal;
  return report.ok() ? kExitOk : kExitData;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NutNet patch defense: train, defend, locate, attack, eval, bench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nutnet::eval::kToolVersion));

  Common c;
  std::string images;
  std::string annotations;
  std::string detections;
  std::string ground_truth;
  std::string mode = "dual";
  std::string alphas;
  std::string image;
  int crops = 0;
  int crop_size = 416;
  int epochs = 0;
  int steps = 100;
  int n_seeds = 5;
  int repetitions = 20;
  int warmup = 10;
  bool synthetic = false;
  bool no_defense = false;
  std::vector<int> block_sizes;

  auto* train = app.add_subcommand("train", "Train the autoencoder on a photo directory");
  add_common(train, c, false);
  train->add_option("images", images, "Directory of training photos")->required()->check(CLI::ExistingDirectory);
  train->add_option("--checkpoint", c.checkpoint, "Where to write the checkpoint")->required();
  train->add_option("--block-size", c.block_size, "Block size")->check(CLI::IsMember({13, 26, 52}));
  train->add_option("--epochs", epochs, "Override the configured epoch count")->check(CLI::PositiveNumber);
  train->add_option("--crops", crops, "Random square crops per photo (0 = use photos as they are)");
  train->add_option("--crop-size", crop_size, "Crop side after resizing")->check(CLI::PositiveNumber);

  auto* defend = app.add_subcommand("defend", "Mask patches in an image or a directory of images");
  add_common(defend, c, true);
  defend->add_option("input", images, "Image file or directory")->required()->check(CLI::ExistingPath);
  defend->add_option("--mode", mode, "Mask used for filling")->check(CLI::IsMember({"dual", "m1", "m2"}));

  auto* locate = app.add_subcommand("locate", "Masks plus overlap ratios against ground-truth masks");
  add_common(locate, c, true);
  locate->add_option("input", images, "Image file or directory")->required()->check(CLI::ExistingPath);
  locate->add_option("--ground-truth", ground_truth, "Directory of <stem>_mask.png or <stem>.png masks");
  locate->add_flag("--synthetic", synthetic, "Paste one random noise patch per image and locate it");
  locate->add_option("--mode", mode, "Mask to score")->check(CLI::IsMember({"dual", "m1", "m2"}));

  auto* attack = app.add_subcommand("attack", "Adaptive attack against the defense (mock detector oracle)");
  add_common(attack, c, true);
  attack->add_option("image", image, "Frame to attack")->required()->check(CLI::ExistingFile);
  attack->add_option("--alphas", alphas, "Comma-separated distance weights");
  attack->add_option("--seeds", n_seeds, "Number of seeds per alpha")->check(CLI::PositiveNumber);
  attack->add_option("--steps", steps, "Optimization steps")->check(CLI::NonNegativeNumber);

  auto* eval = app.add_subcommand("eval", "AP@0.5 from a detections file or the detector bridge");
  add_common(eval, c, true);
  eval->add_option("--annotations", annotations, "Ground-truth box file")->required()->check(CLI::ExistingFile);
  eval->add_option("--detections", detections, "Detections box file")->check(CLI::ExistingFile);
  eval->add_option("--images", images, "Image directory (required with --detector-url)")->check(CLI::ExistingDirectory);
  eval->add_flag("--no-defense", no_defense, "Send raw images to the detector");

  auto* bench = app.add_subcommand("bench", "Per-frame defense latency");
  add_common(bench, c, true);
  bench->remove_option(bench->get_option("--block-size"));
  bench->add_option("--block-size", block_sizes, "Block sizes (repeatable)")->check(CLI::IsMember({13, 26, 52}));
  bench->add_option("--images", images, "Frames to time (default: synthetic 416x416)")->check(CLI::ExistingPath);
  bench->add_option("--repetitions", repetitions, "Timed passes over the frames")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "Untimed frames (at least 10)")->check(CLI::NonNegativeNumber);

  auto* experiment = app.add_subcommand("experiment", "Run a multi-stage experiment config");
  add_common(experiment, c, false);
  experiment->get_option("--config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      Json st = {{"type", "train"}, {"images", absolute(images)}, {"checkpoint", absolute(c.checkpoint)}};
      if (crops > 0) st["crops"] = {{"per_photo", crops}, {"size", crop_size}, {"seed", c.seed}};
      Json cfg = c.config.empty() ? Json::object() : read_json_file(c.config);
      if (c.block_size) cfg["block_size"] = c.block_size;
      if (epochs) cfg["epochs"] = epochs;
      if (!cfg.contains("seed")) cfg["seed"] = c.seed;
      st["config"] = cfg;
      return run(st, c);
    }
    if (*defend) {
      Json st = base_stage("defend", c);
      st["images"] = absolute(images);
      st["mode"] = mode;
      return run(st, c);
    }
    if (*locate) {
      if (ground_truth.empty() == !synthetic) {
        std::cerr << "nutnet locate: give exactly one of --ground-truth or --synthetic\n";
        return kExitUsage;
      }
      Json st = base_stage("locate", c);
      st["images"] = absolute(images);
      st["mode"] = mode;
      if (!ground_truth.empty()) {
        st["ground_truth"] = absolute(ground_truth);
      } else if (!st.contains("synthetic")) {
        st["synthetic"] = {{"seed", c.seed}};
      }
      return run(st, c);
    }
    if (*attack) {
      Json st = {{"type", "attack"}, {"image", absolute(image)}, {"steps", steps}};
      if (!c.config.empty()) st["patch"] = read_json_file(c.config);
      if (!c.checkpoint.empty()) st["checkpoint"] = absolute(c.checkpoint);
      if (!c.out.empty()) st["out"] = absolute(c.out);
      if (!alphas.empty()) {
        std::vector<double> a;
        for (const auto& s : split_list(alphas)) a.push_back(std::stod(s));
        st["alphas"] = a;
      }
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < n_seeds; ++i) seeds.push_back(c.seed + static_cast<std::uint64_t>(i));
      st["seeds"] = seeds;
      return run(st, c);
    }
    if (*eval) {
      if (detections.empty() == c.detector_url.empty()) {
        std::cerr << "nutnet eval: give exactly one of --detections or --detector-url\n";
        return kExitUsage;
      }
      Json st = base_stage("eval", c);
      st["annotations"] = absolute(annotations);
      if (!detections.empty()) st["detections"] = absolute(detections);
      if (!images.empty()) st["images"] = absolute(images);
      st["defend"] = !no_defense;
      return run(st, c);
    }
    if (*bench) {
      Json st = base_stage("bench", c);
      st.erase("out");
      if (!images.empty()) st["images"] = absolute(images);
      if (!block_sizes.empty()) st["block_sizes"] = block_sizes;
      st["repetitions"] = repetitions;
      st["warmup"] = warmup;
      st["threads"] = c.threads;
      return run(st, c);
    }
    if (*experiment) {
      const Json cfg = read_json_file(c.config);
      nutnet::eval::ExperimentOptions opts;
      opts.base_dir = fs::absolute(c.config).parent_path().string();
      if (!c.out.empty()) opts.report_path = (fs::path(c.out) / "report.json").string();
      if (!c.quiet) opts.log = [](const std::string& m) { std::cerr << "[nutnet] " << m << "\n"; };
      const auto report = nutnet::eval::run_experiment(cfg.dump(), opts);
      std::cout << report.json << "\n";
      for (const auto& f : report.failures) std::cerr << "nutnet: stage " << f.stage << " failed: " << f.error << "\n";
      for (const auto& f : report.failures)
        if (f.internal) return kExitInternal;
      return report.ok() ? kExitOk : kExitData;
    }
  } catch (const nutnet::Error& e) {
    std::cerr << "nutnet: " << e.what() << "\n";
    return e.category() == nutnet::Error::Category::kInternal ? kExitInternal : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "nutnet: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
