#include "nutnet/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "nutnet/bridge.hpp"
#include "nutnet/error.hpp"
#include "nutnet/image_io.hpp"
#include "nutnet/splitter.hpp"
#include "nutnet/stats.hpp"
#include "nutnet/training.hpp"

namespace nutnet::eval {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

double iou(const DetectionBox& a, const DetectionBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double ap_at_50(const BoxSet& detections, const BoxSet& ground_truth, int class_id) {
  std::map<std::string, std::vector<const DetectionBox*>> gt;
  std::size_t n_gt = 0;
  for (const auto& [name, boxes] : ground_truth) {
    for (const auto& b : boxes) {
      if (b.class_id != class_id) continue;
      gt[name].push_back(&b);
      ++n_gt;
    }
  }
  if (n_gt == 0) throw MetricError("AP is undefined for class " + std::to_string(class_id) + ": no ground truth");

  struct Det {
    double conf;
    const std::string* image;
    const DetectionBox* box;
  };
  std::vector<Det> dets;
  for (const auto& [name, boxes] : detections) {
    for (const auto& b : boxes) {
      if (b.class_id == class_id) dets.push_back({b.confidence, &name, &b});
    }
  }
  // std::map iteration already orders by image name and keeps input order.
  std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.conf > b.conf; });

  std::map<std::string, std::vector<bool>> used;
  for (const auto& [name, boxes] : gt) used[name].assign(boxes.size(), false);
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto it = gt.find(*dets[i].image);
    if (it != gt.end()) {
      auto& flags = used[it->first];
      int best = -1;
      double best_iou = kMatchIou;
      for (std::size_t g = 0; g < it->second.size(); ++g) {
        if (flags[g]) continue;
        const double v = iou(*dets[i].box, *it->second[g]);
        if (v >= best_iou && (best < 0 || v > best_iou)) {
          best = static_cast<int>(g);
          best_iou = v;
        }
      }
      if (best >= 0) {
        flags[best] = true;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  // Area under the precision envelope.
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    if (recall[i] <= prev_recall) continue;
    const double envelope = *std::max_element(precision.begin() + static_cast<std::ptrdiff_t>(i), precision.end());
    ap += (recall[i] - prev_recall) * envelope;
    prev_recall = recall[i];
  }
  return ap;
}

MapResult mean_ap(const BoxSet& detections, const BoxSet& ground_truth) {
  std::vector<int> classes;
  for (const auto& [name, boxes] : ground_truth)
    for (const auto& b : boxes) classes.push_back(b.class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) throw MetricError("mAP is undefined: the ground truth holds no boxes");
  MapResult out;
  double sum = 0;
  for (int c : classes) sum += out.per_class[c] = ap_at_50(detections, ground_truth, c);
  out.map = sum / static_cast<double>(classes.size());
  return out;
}

int ClassTable::id_for(const std::string& name) {
  const auto it = ids.find(name);
  if (it != ids.end()) return it->second;
  int next = 0;
  for (const auto& [k, v] : ids) next = std::max(next, v + 1);
  ids.emplace(name, next);
  return next;
}

BoxSet parse_boxes(const std::string& json_text, ClassTable& classes) {
  BoxSet out;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw InputError("box file must map image names to box lists");
    for (const auto& [image, list] : j.items()) {
      auto& boxes = out[image];
      for (const auto& b : list) {
        DetectionBox box;
        const auto& cls = b.at("class");
        box.class_id = cls.is_number_integer() ? cls.get<int>() : classes.id_for(cls.get<std::string>());
        if (b.contains("class_id")) box.class_id = b.at("class_id").get<int>();
        box.confidence = b.value("conf", 1.0);
        box.x1 = b.at("x1").get<double>();
        box.y1 = b.at("y1").get<double>();
        box.x2 = b.at("x2").get<double>();
        box.y2 = b.at("y2").get<double>();
        try {
          box.validate();
        } catch (const InputError& e) {
          throw InputError("image '" + image + "': " + e.what());
        }
        boxes.push_back(box);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed box file: ") + e.what());
  }
  return out;
}

namespace {

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write '" + tmp + "'");
    f << text;
    if (!f) throw InputError("failed writing '" + tmp + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace

Dataset Dataset::load(const std::string& directory, const std::string& annotation_path, ClassTable* classes) {
  Dataset d;
  d.root = directory;
  for (const auto& p : io::list_images(directory)) d.images.push_back(fs::path(p).filename().string());
  if (d.images.empty()) throw InputError("no PNG or PPM images in '" + directory + "'");
  if (!annotation_path.empty()) {
    ClassTable local;
    BoxSet boxes = parse_boxes(read_text(annotation_path), classes ? *classes : local);
    for (const auto& [name, list] : boxes) {
      if (!std::binary_search(d.images.begin(), d.images.end(), name)) {
        throw InputError("annotation references missing image '" + name + "'");
      }
      if (list.empty()) continue;
      const Image img = io::read_image((fs::path(directory) / name).string());
      for (const auto& b : list) {
        if (b.x1 < 0 || b.y1 < 0 || b.x2 > img.width || b.y2 > img.height) {
          throw InputError("annotation box outside image '" + name + "'");
        }
      }
    }
    d.annotations = std::move(boxes);
  }
  return d;
}

std::string Dataset::path(std::size_t i) const { return (fs::path(root) / images.at(i)).string(); }

Image random_crop(const Image& photo, int size, Rng& rng, double min_fraction) {
  if (photo.height < 2 || photo.width < 2) throw InputError("photo too small to crop");
  if (size < 1) throw ConfigError("crop size must be >= 1");
  const int shorter = std::min(photo.height, photo.width);
  const int side = std::clamp(static_cast<int>(shorter * rng.uniform(min_fraction, 1.0)), 2, shorter);
  const int y0 = rng.uniform_int(0, photo.height - side);
  const int x0 = rng.uniform_int(0, photo.width - side);
  const double step = static_cast<double>(side) / size;
  Image out(size, size);
  for (int y = 0; y < size; ++y) {
    const double fy = y0 + (y + 0.5) * step - 0.5;
    const int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, photo.height - 2);
    const double ty = std::clamp(fy - iy, 0.0, 1.0);
    for (int x = 0; x < size; ++x) {
      const double fx = x0 + (x + 0.5) * step - 0.5;
      const int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, photo.width - 2);
      const double tx = std::clamp(fx - ix, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - ty) * ((1 - tx) * photo.at(iy, ix, c) + tx * photo.at(iy, ix + 1, c)) +
                         ty * ((1 - tx) * photo.at(iy + 1, ix, c) + tx * photo.at(iy + 1, ix + 1, c));
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

std::vector<Image> crop_corpus(const std::string& directory, int per_photo, int size, std::uint64_t seed) {
  const auto paths = io::list_images(directory);
  if (paths.empty()) throw InputError("no photos in '" + directory + "'");
  std::vector<Image> out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Image photo = io::read_image(paths[i]);
    Rng rng(stats::mix_seed(seed, i));
    for (int k = 0; k < per_photo; ++k) out.push_back(random_crop(photo, size, rng));
  }
  return out;
}

LatencyStats summarize_latencies(std::vector<double> ms) {
  LatencyStats s;
  s.frames = static_cast<int>(ms.size());
  if (ms.empty()) return s;
  std::sort(ms.begin(), ms.end());
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  const std::size_t n = ms.size();
  s.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  s.p95_ms = ms[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1)];
  s.fps = s.mean_ms > 0 ? 1000.0 / s.mean_ms : 0.0;
  return s;
}

FpsReport bench_fps(const pipeline::DefenseConfig& cfg, const model::AEParams& params,
                    const std::vector<Image>& images, int repetitions, int warmup, const bridge::Client* detector) {
  if (images.empty()) throw InputError("bench_fps needs at least one image");
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  using Clock = std::chrono::steady_clock;
  FpsReport r;
  r.block_size = cfg.block_size;
  r.warmup = std::max(10, warmup);
  for (int i = 0; i < r.warmup; ++i) (void)pipeline::defend(images[i % images.size()], params, cfg);

  std::vector<double> ms;
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const Image& img : images) {
      const auto t0 = Clock::now();
      const auto res = pipeline::defend(img, params, cfg);
      ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
  }
  r.defense = summarize_latencies(std::move(ms));

  if (detector) {
    std::vector<double> e2e;
    for (int rep = 0; rep < repetitions; ++rep) {
      for (const Image& img : images) {
        const auto t0 = Clock::now();
        const auto res = pipeline::defend(img, params, cfg);
        (void)detector->detect(res.masked);
        e2e.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
      }
    }
    r.end_to_end = summarize_latencies(std::move(e2e));
  }
  return r;
}

// --- Experiment runner ---------------------------------------------------------

namespace {

Json latency_json(const LatencyStats& s) {
  return {{"frames", s.frames}, {"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"fps", s.fps}};
}

struct Context {
  const ExperimentOptions* options = nullptr;
  std::uint64_t seed = 1;
  bool deterministic = true;
  int threads = 1;
  std::optional<model::AEParams> trained;

  std::string resolve(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(options->base_dir) / p).string();
  }
  void log(const std::string& msg) const {
    if (options->log) options->log(msg);
  }
};

model::AEParams stage_params(const Json& st, const Context& ctx) {
  if (st.contains("checkpoint")) return model::load_checkpoint(ctx.resolve(st.at("checkpoint").get<std::string>())).params;
  if (ctx.trained) return *ctx.trained;
  throw ConfigError("stage needs a \"checkpoint\" or an earlier train stage");
}

struct NamedImages {
  std::vector<std::string> names;
  std::vector<Image> images;
};

// "images": a directory or one image file, optionally with
// "crops": {"per_photo", "size", "seed"} to sample square crops instead.
NamedImages stage_images(const Json& st, const Context& ctx) {
  NamedImages out;
  const std::string dir = ctx.resolve(st.at("images").get<std::string>());
  if (fs::is_regular_file(dir)) {
    out.names.push_back(fs::path(dir).filename().string());
    out.images.push_back(io::read_image(dir));
  } else if (st.contains("crops")) {
    const auto& c = st.at("crops");
    const int per = c.value("per_photo", 1);
    const int size = c.value("size", 416);
    const auto seed = c.value("seed", ctx.seed);
    out.images = crop_corpus(dir, per, size, seed);
    const auto paths = io::list_images(dir);
    for (const auto& p : paths)
      for (int k = 0; k < per; ++k) out.names.push_back(fs::path(p).stem().string() + "_" + std::to_string(k) + ".png");
  } else {
    for (const auto& p : io::list_images(dir)) {
      out.names.push_back(fs::path(p).filename().string());
      out.images.push_back(io::read_image(p));
    }
  }
  if (out.images.empty()) throw InputError("no images in '" + dir + "'");
  return out;
}

pipeline::DefenseConfig stage_defense(const Json& st, const Context& ctx, const model::AEParams& params) {
  pipeline::DefenseConfig cfg;
  cfg.block_size = st.value("block_size", params.block_size);
  cfg.check_params(params);
  cfg.thresholds.kappa1 = st.value("k1", dualmask::kDefaultKappa1);
  cfg.thresholds.kappa2 = st.value("k2", dualmask::kDefaultKappa2);
  cfg.fill = st.value("fill", dualmask::kDefaultFill);
  cfg.mode = dualmask::parse_mask_mode(st.value("mode", std::string("dual")));
  cfg.deterministic = ctx.deterministic;
  cfg.threads = st.value("threads", ctx.threads);
  cfg.validate();
  return cfg;
}

Json run_train(const Json& st, Context& ctx) {
  const NamedImages corpus = stage_images(st, ctx);
  train::TrainConfig cfg;
  train::NoiseOverlaySpec spec;
  cfg.seed = ctx.seed;
  spec.seed = ctx.seed;
  if (st.contains("config")) train::from_json(st.at("config").dump(), cfg, spec);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train::train(corpus.images, spec, cfg, [&](const train::EpochStats& e) {
    std::ostringstream os;
    os << "epoch " << e.epoch + 1 << "/" << cfg.epochs << " loss " << e.loss.total << " (clean " << e.loss.clean
       << ", mean " << e.loss.mean << ", variance " << e.loss.variance << ")";
    ctx.log(os.str());
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json out;
  out["images"] = corpus.images.size();
  out["block_size"] = result.params.block_size;
  out["parameter_count"] = result.params.parameter_count();
  out["config"] = Json::parse(train::to_json(cfg, spec));
  out["history"] = Json::parse(train::history_json(result.history));
  if (st.contains("checkpoint")) {
    const std::string path = ctx.resolve(st.at("checkpoint").get<std::string>());
    const model::Checkpoint ckpt{result.params, cfg.seed, train::to_json(cfg, spec)};
    model::save_checkpoint(ckpt, path);
    out["checkpoint"] = st.at("checkpoint");
  }
  out["timings"] = {{"train_seconds", secs}};
  ctx.trained = std::move(result.params);
  if (!result.history.converged) {
    out["warning"] = "separation AUROC below the convergence bar";
  }
  return out;
}

Json run_separation(const Json& st, Context& ctx) {
  const model::AEParams params = stage_params(st, ctx);
  const NamedImages set = stage_images(st, ctx);
  const int B = params.block_size;
  const int max_clean = st.value("max_clean_tiles", 5000);
  const int n_noise = st.value("noise_tiles", 1000);
  train::NoiseOverlaySpec spec;
  spec.pixel_scale = st.value("pixel_scale", spec.pixel_scale);

  std::vector<double> clean_err;
  for (const Image& img : set.images) {
    const auto grid = split::split(img, B);
    const auto recon = split::with_tiles(grid, model::reconstruct_blocks(params, grid.tiles));
    const auto errors = split::block_errors(grid, recon, split::ErrorMetric::kMeanAbsolute);
    for (int t = 0; t < grid.tile_count(); ++t) {
      if (grid.origins[t].valid_height == B && grid.origins[t].valid_width == B) clean_err.push_back(errors.errors[t]);
    }
  }
  if (static_cast<int>(clean_err.size()) > max_clean) {
    std::vector<double> thinned;
    for (int i = 0; i < max_clean; ++i) thinned.push_back(clean_err[static_cast<std::size_t>(i) * clean_err.size() / max_clean]);
    clean_err.swap(thinned);
  }

  Rng rng(stats::mix_seed(st.value("seed", ctx.seed), 0x5E9A));
  kernel::FeatureMap<float> noise(3, B, B, n_noise);
  for (int b = 0; b < n_noise; ++b) {
    const Image tile = train::noise_tile(B, spec, rng);
    for (int y = 0; y < B; ++y)
      for (int x = 0; x < B; ++x)
        for (int c = 0; c < 3; ++c) noise.at(c, y, x, b) = tile.at(y, x, c);
  }
  const auto out_noise = model::reconstruct_blocks(params, noise);
  std::vector<double> noise_err(n_noise, 0.0);
  std::vector<double> block_mean(n_noise, 0.0);
  std::vector<double> block_var(n_noise, 0.0);
  const std::size_t plane = noise.sample_size();
  for (int b = 0; b < n_noise; ++b) {
    std::vector<double> vals(plane);
    for (std::size_t e = 0; e < plane; ++e) {
      const double y = out_noise.data[e * n_noise + b];
      vals[e] = y;
      noise_err[b] += std::abs(y - noise.data[e * n_noise + b]);
    }
    noise_err[b] /= static_cast<double>(plane);
    const auto m = stats::moments(std::span<const double>(vals));
    block_mean[b] = m.mean;
    block_var[b] = m.variance;
  }
  const double mc = std::accumulate(clean_err.begin(), clean_err.end(), 0.0) / static_cast<double>(clean_err.size());
  const double mn = std::accumulate(noise_err.begin(), noise_err.end(), 0.0) / n_noise;
  Json out;
  out["clean_tiles"] = clean_err.size();
  out["noise_tiles"] = n_noise;
  out["auroc"] = stats::auroc(clean_err, noise_err);
  out["mean_clean_error"] = mc;
  out["mean_noise_error"] = mn;
  out["error_ratio"] = mc > 0 ? mn / mc : 0.0;
  out["noise_output_mean"] = std::accumulate(block_mean.begin(), block_mean.end(), 0.0) / n_noise;
  out["noise_output_variance"] = std::accumulate(block_var.begin(), block_var.end(), 0.0) / n_noise;
  return out;
}

Json run_defend(const Json& st, Context& ctx) {
  const model::AEParams params = stage_params(st, ctx);
  const pipeline::DefenseConfig cfg = stage_defense(st, ctx, params);
  const NamedImages set = stage_images(st, ctx);
  const std::string out_dir = st.contains("out") ? ctx.resolve(st.at("out").get<std::string>()) : "";
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const auto results = pipeline::defend_batch(set.images, params, cfg);
  Json list = Json::array();
  Json timings = Json::array();
  double sum = 0;
  int ok = 0;
  int failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.result) {
      list.push_back({{"name", set.names[i]}, {"error", r.error}});
      ++failed;
      continue;
    }
    list.push_back({{"name", set.names[i]}, {"masked_fraction", r.result->masked_fraction}});
    timings.push_back(r.result->timings.total_us);
    sum += r.result->masked_fraction;
    ++ok;
    if (!out_dir.empty()) {
      const std::string stem = fs::path(set.names[i]).stem().string();
      io::write_image(r.result->masked, (fs::path(out_dir) / (stem + "_defended.png")).string());
      io::write_mask(dualmask::select_mask(r.result->masks, cfg.mode), (fs::path(out_dir) / (stem + "_mask.png")).string());
    }
  }
  Json out;
  out["block_size"] = cfg.block_size;
  out["k1"] = cfg.thresholds.kappa1;
  out["k2"] = cfg.thresholds.kappa2;
  out["mode"] = dualmask::mask_mode_name(cfg.mode);
  out["images"] = list;
  out["mean_masked_fraction"] = ok ? sum / ok : 0.0;
  out["failed"] = failed;
  out["timings"] = {{"total_us", timings}};
  if (failed) throw InputError(std::to_string(failed) + " image(s) failed to defend; see the defend section");
  return out;
}

Json run_locate(const Json& st, Context& ctx) {
  const model::AEParams params = stage_params(st, ctx);
  const pipeline::DefenseConfig cfg = stage_defense(st, ctx, params);
  NamedImages set = stage_images(st, ctx);
  std::vector<Mask> truth;
  std::vector<double> coverage;
  if (st.contains("ground_truth")) {
    const std::string dir = ctx.resolve(st.at("ground_truth").get<std::string>());
    for (const auto& name : set.names) {
      const std::string stem = fs::path(name).stem().string();
      fs::path p = fs::path(dir) / (stem + "_mask.png");
      if (!fs::exists(p)) p = fs::path(dir) / (stem + ".png");
      truth.push_back(io::read_mask(p.string()));
      coverage.push_back(truth.back().fraction());
    }
  } else {
    const Json syn = st.value("synthetic", Json::object());
    patchlab::NoisePatchOptions opts;
    opts.min_coverage = syn.value("min_coverage", opts.min_coverage);
    opts.max_coverage = syn.value("max_coverage", opts.max_coverage);
    opts.max_blur_sigma = syn.value("max_blur_sigma", opts.max_blur_sigma);
    opts.max_rotation_deg = syn.value("max_rotation_deg", opts.max_rotation_deg);
    Rng rng(stats::mix_seed(syn.value("seed", ctx.seed), 0x10CA7E));
    for (Image& img : set.images) {
      auto c = patchlab::synthesize_noise_patch(img, opts, rng);
      img = std::move(c.image);
      truth.push_back(std::move(c.ground_truth));
      coverage.push_back(c.coverage);
    }
  }
  const std::string out_dir = st.contains("out") ? ctx.resolve(st.at("out").get<std::string>()) : "";
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const auto results = pipeline::defend_batch(set.images, params, cfg);
  Json list = Json::array();
  double sum = 0;
  double masked = 0;
  int ok = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].result) {
      list.push_back({{"name", set.names[i]}, {"error", results[i].error}});
      continue;
    }
    const Mask& m = dualmask::select_mask(results[i].result->masks, cfg.mode);
    const double r = patchlab::overlap_ratio(m, truth[i]);
    list.push_back({{"name", set.names[i]}, {"overlap_ratio", r}, {"coverage", coverage[i]},
                    {"masked_fraction", results[i].result->masked_fraction}});
    sum += r;
    masked += results[i].result->masked_fraction;
    ++ok;
    if (!out_dir.empty()) {
      const std::string stem = fs::path(set.names[i]).stem().string();
      io::write_mask(m, (fs::path(out_dir) / (stem + "_mask.png")).string());
    }
  }
  Json out;
  out["mode"] = dualmask::mask_mode_name(cfg.mode);
  out["images"] = list;
  out["mean_overlap_ratio"] = ok ? sum / ok : 0.0;
  out["mean_masked_fraction"] = ok ? masked / ok : 0.0;
  if (ok != static_cast<int>(results.size())) throw InputError("some images failed to defend; see the locate section");
  return out;
}

Json run_attack(const Json& st, Context& ctx) {
  const model::AEParams params = stage_params(st, ctx);
  Image image;
  if (st.contains("image")) {
    image = io::read_image(ctx.resolve(st.at("image").get<std::string>()));
  } else {
    image = stage_images(st, ctx).images.front();
  }
  const std::vector<double> alphas = st.value("alphas", std::vector<double>{0.0, 0.01, 0.1, 1.0, 1000.0});
  std::vector<std::uint64_t> seeds = st.value("seeds", std::vector<std::uint64_t>{});
  if (seeds.empty())
    for (std::uint64_t s = 0; s < 5; ++s) seeds.push_back(ctx.seed + s);
  Json patch_json = st.value("patch", Json{{"pixels", "noise:48"}, {"placement", {{"mode", "absolute"}}}});
  std::vector<DetectionBox> gt;
  for (const auto& b : st.value("ground_truth", std::vector<std::vector<double>>{})) {
    if (b.size() != 4) throw ConfigError("ground_truth boxes must be [x1, y1, x2, y2]");
    gt.push_back({0, 1.0, b[0], b[1], b[2], b[3]});
  }
  const std::string out_dir = st.contains("out") ? ctx.resolve(st.at("out").get<std::string>()) : "";
  if (!out_dir.empty()) fs::create_directories(out_dir);

  Json runs = Json::array();
  for (double alpha : alphas) {
    double sum_dist = 0;
    double sum_loss = 0;
    std::size_t negative = 0;
    std::size_t recorded = 0;
    Json per_seed = Json::array();
    for (std::uint64_t seed : seeds) {
      Json pj = patch_json;
      pj["seed"] = seed;
      if (!pj.contains("placement") || pj["placement"].value("mode", "absolute") == "absolute") {
        // Default: centred on the frame.
        const auto probe = patchlab::patch_spec_from_json(pj.dump(), ctx.options->base_dir);
        if (!pj.contains("placement") || !pj["placement"].contains("y")) {
          pj["placement"] = {{"mode", "absolute"},
                             {"y", (image.height - probe.pixels.height) / 2},
                             {"x", (image.width - probe.pixels.width) / 2}};
        }
      }
      const auto spec = patchlab::patch_spec_from_json(pj.dump(), ctx.options->base_dir);
      patchlab::AdaptiveAttackConfig cfg;
      cfg.alpha = alpha;
      cfg.steps = st.value("steps", cfg.steps);
      cfg.step_size = st.value("step_size", cfg.step_size);
      cfg.oracle_id = st.value("oracle", cfg.oracle_id);
      cfg.seed = seed;
      const auto oracle = patchlab::make_oracle(cfg.oracle_id, st.value("oracle_seed", std::uint64_t{0}));
      const auto trace = patchlab::adaptive_attack(image, spec, gt, cfg, params, *oracle);
      const auto& last = trace.steps.back();
      sum_dist += last.distance;
      sum_loss += last.attack_loss;
      if (alpha > 0) {
        for (const auto& s : trace.steps) {
          ++recorded;
          negative += s.inner_product < 0;
        }
      }
      per_seed.push_back({{"seed", seed}, {"final_distance", last.distance}, {"final_attack_loss", last.attack_loss}});
      if (!out_dir.empty()) {
        std::ostringstream stem;
        stem << "attack_alpha" << alpha << "_seed" << seed;
        write_text_atomic((fs::path(out_dir) / (stem.str() + ".json")).string(), trace.to_json());
        write_text_atomic((fs::path(out_dir) / (stem.str() + ".csv")).string(), trace.to_csv());
        io::write_image(trace.final_patch, (fs::path(out_dir) / (stem.str() + "_patch.png")).string());
      }
    }
    const double n = static_cast<double>(seeds.size());
    Json run = {{"alpha", alpha},
                {"mean_final_distance", sum_dist / n},
                {"mean_final_attack_loss", sum_loss / n},
                {"seeds", per_seed}};
    if (alpha > 0) run["negative_inner_product_fraction"] = recorded ? static_cast<double>(negative) / recorded : 0.0;
    runs.push_back(run);
  }
  bool dist_ok = true;
  bool loss_ok = true;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (alphas[i] < alphas[i - 1]) continue;
    dist_ok &= runs[i]["mean_final_distance"].get<double>() <= runs[i - 1]["mean_final_distance"].get<double>();
    loss_ok &= runs[i]["mean_final_attack_loss"].get<double>() >= runs[i - 1]["mean_final_attack_loss"].get<double>();
  }
  Json out;
  out["oracle"] = st.value("oracle", std::string("mock"));
  out["runs"] = runs;
  out["distance_non_increasing"] = dist_ok;
  out["attack_loss_non_decreasing"] = loss_ok;
  return out;
}

Json run_eval(const Json& st, Context& ctx) {
  ClassTable classes;
  const Dataset ds = st.contains("images")
                         ? Dataset::load(ctx.resolve(st.at("images").get<std::string>()),
                                         ctx.resolve(st.at("annotations").get<std::string>()), &classes)
                         : Dataset{};
  BoxSet gt = ds.annotations ? *ds.annotations
                             : parse_boxes(read_text(ctx.resolve(st.at("annotations").get<std::string>())), classes);
  BoxSet det;
  Json timings = Json::object();
  if (st.contains("detector_url")) {
    if (ds.images.empty()) throw ConfigError("detector evaluation needs \"images\"");
    const bridge::Client client(st.at("detector_url").get<std::string>());
    const double floor = st.value("conf_floor", 0.0);
    std::optional<model::AEParams> params;
    std::optional<pipeline::DefenseConfig> dcfg;
    if (st.value("defend", true)) {
      params = stage_params(st, ctx);
      dcfg = stage_defense(st, ctx, *params);
    }
    std::vector<double> ms;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
      Image img = io::read_image(ds.path(i));
      if (params) img = pipeline::defend(img, *params, *dcfg).masked;
      const auto resp = client.detect(img, floor);
      ms.push_back(resp.time_ms);
      for (const auto& rb : resp.boxes) {
        DetectionBox b = rb.box;
        if (!classes.ids.empty()) b.class_id = classes.id_for(rb.class_name);
        det[ds.images[i]].push_back(b);
      }
    }
    timings["detector_ms"] = ms;
  } else {
    det = parse_boxes(read_text(ctx.resolve(st.at("detections").get<std::string>())), classes);
  }
  const MapResult m = mean_ap(det, gt);
  Json per_class = Json::object();
  for (const auto& [c, ap] : m.per_class) per_class[std::to_string(c)] = ap;
  Json names = Json::object();
  for (const auto& [name, id] : classes.ids) names[name] = id;
  Json out;
  out["per_class_ap50"] = per_class;
  out["map50"] = m.map;
  out["class_names"] = names;
  if (!timings.empty()) out["timings"] = timings;
  return out;
}

Json run_bench(const Json& st, Context& ctx) {
  std::vector<Image> images;
  if (st.contains("images")) {
    images = stage_images(st, ctx).images;
  } else {
    const Json syn = st.value("synthetic", Json::object());
    const int size = syn.value("size", 416);
    const int count = syn.value("count", 4);
    Rng rng(stats::mix_seed(syn.value("seed", ctx.seed), 0xBE7C));
    for (int i = 0; i < count; ++i) {
      Image img(size, size);
      for (float& v : img.data) v = static_cast<float>(rng.uniform());
      images.push_back(std::move(img));
    }
  }
  std::optional<model::AEParams> loaded;
  if (st.contains("checkpoint") || ctx.trained) loaded = stage_params(st, ctx);
  const std::vector<int> sizes = st.value("block_sizes", std::vector<int>{model::kDefaultBlockSize});
  const int reps = st.value("repetitions", 10);
  const int warmup = st.value("warmup", 10);
  std::optional<bridge::Client> client;
  if (st.contains("detector_url")) client.emplace(st.at("detector_url").get<std::string>());

  Json runs = Json::array();
  for (int B : sizes) {
    const bool use_loaded = loaded && loaded->block_size == B;
    const model::AEParams params = use_loaded ? *loaded : model::init_params(ctx.seed, B);
    Json defense_st = st;
    defense_st.erase("threads");
    pipeline::DefenseConfig cfg = stage_defense(defense_st, ctx, params);
    cfg.threads = st.value("threads", 1);
    const FpsReport r = bench_fps(cfg, params, images, reps, warmup, client ? &*client : nullptr);
    Json run = {{"block_size", B},
                {"weights", use_loaded ? "checkpoint" : "initialized"},
                {"threads", cfg.threads},
                {"frame", {images.front().height, images.front().width}},
                {"warmup", r.warmup}};
    Json t = {{"defense", latency_json(r.defense)}};
    if (r.end_to_end) t["end_to_end"] = latency_json(*r.end_to_end);
    run["timings"] = t;
    runs.push_back(run);
    ctx.log("bench B=" + std::to_string(B) + ": median " + std::to_string(r.defense.median_ms) + " ms");
  }
  return {{"runs", runs}};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void strip(Json& j) {
  if (j.is_object()) {
    j.erase("timings");
    j.erase("generated_at");
    for (auto& [k, v] : j.items()) strip(v);
  } else if (j.is_array()) {
    for (auto& v : j) strip(v);
  }
}

}  // namespace

EvalReport run_experiment(const std::string& config_json, const ExperimentOptions& options) {
  Json cfg;
  try {
    cfg = Json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  if (!cfg.is_object() || !cfg.contains("stages") || !cfg["stages"].is_array()) {
    throw ConfigError("experiment config needs a \"stages\" array");
  }
  Context ctx;
  ctx.options = &options;
  try {
    ctx.seed = cfg.value("seed", std::uint64_t{1});
    ctx.deterministic = cfg.value("deterministic", true);
    ctx.threads = cfg.value("threads", 1);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }

  EvalReport report;
  Json doc;
  doc["schema"] = kReportSchema;
  doc["tool_version"] = kToolVersion;
  doc["name"] = cfg.value("name", std::string("experiment"));
  doc["generated_at"] = utc_now();
  doc["config"] = cfg;
  Json sections = Json::object();
  Json failures = Json::array();

  for (std::size_t i = 0; i < cfg["stages"].size(); ++i) {
    const Json& st = cfg["stages"][i];
    std::string type = st.is_object() ? st.value("type", std::string()) : std::string();
    std::string key = st.is_object() ? st.value("name", type) : type;
    if (key.empty()) key = "stage" + std::to_string(i);
    if (sections.contains(key)) key += "#" + std::to_string(i);
    ctx.log("stage " + key);
    try {
      Json result;
      if (type == "train") {
        result = run_train(st, ctx);
      } else if (type == "separation") {
        result = run_separation(st, ctx);
      } else if (type == "defend") {
        result = run_defend(st, ctx);
      } else if (type == "locate") {
        result = run_locate(st, ctx);
      } else if (type == "attack") {
        result = run_attack(st, ctx);
      } else if (type == "eval") {
        result = run_eval(st, ctx);
      } else if (type == "bench") {
        result = run_bench(st, ctx);
      } else {
        throw ConfigError("unknown stage type '" + type + "'");
      }
      sections[key] = std::move(result);
    } catch (const Error& e) {
      report.failures.push_back({key, e.what(), e.category() == Error::Category::kInternal});
    } catch (const nlohmann::json::exception& e) {
      report.failures.push_back({key, std::string("bad stage config: ") + e.what(), false});
    } catch (const std::exception& e) {
      report.failures.push_back({key, e.what(), true});
    }
    if (!report.failures.empty() && report.failures.back().stage == key) {
      failures.push_back({{"stage", key}, {"error", report.failures.back().error},
                          {"internal", report.failures.back().internal}});
      ctx.log("stage " + key + " failed: " + report.failures.back().error);
    }
  }
  doc["status"] = report.failures.empty() ? "ok" : "partial";
  doc["sections"] = sections;
  doc["failures"] = failures;
  report.json = doc.dump(2);

  std::string path = options.report_path;
  if (path.empty() && cfg.contains("report")) path = ctx.resolve(cfg["report"].get<std::string>());
  if (!path.empty()) write_text_atomic(path, report.json + "\n");
  return report;
}

std::string strip_volatile(const std::string& report_json) {
  Json j = Json::parse(report_json);
  strip(j);
  return j.dump(2);
}

}  // namespace nutnet::eval
