#pragma once

// Detection metrics, dataset ingestion, latency benchmarking and the
// experiment runner behind the CLI.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nutnet/image.hpp"
#include "nutnet/model.hpp"
#include "nutnet/patchlab.hpp"
#include "nutnet/pipeline.hpp"
#include "nutnet/rng.hpp"

namespace nutnet::bridge {
class Client;
}

namespace nutnet::eval {

using patchlab::DetectionBox;

/// Boxes keyed by image name.
using BoxSet = std::map<std::string, std::vector<DetectionBox>>;

double iou(const DetectionBox& a, const DetectionBox& b);

inline constexpr double kMatchIou = 0.5;

/// All-point interpolated AP for one class. Detections are matched greedily in
/// order of descending confidence (ties by image name, then input order), each
/// to the unmatched ground-truth box of highest IoU >= 0.5 in its image.
/// Throws MetricError when the class has no ground truth.
double ap_at_50(const BoxSet& detections, const BoxSet& ground_truth, int class_id);

struct MapResult {
  std::map<int, double> per_class;  // classes present in the ground truth
  double map = 0;
};

/// Throws MetricError when the ground truth holds no boxes at all.
MapResult mean_ap(const BoxSet& detections, const BoxSet& ground_truth);

/// Maps class names to ids. Numeric "class" values are taken as ids; names
/// get ids in order of first appearance, after any the table already holds.
struct ClassTable {
  std::map<std::string, int> ids;
  int id_for(const std::string& name);
};

/// {"image.png": [{"class": ..., "x1": .., "y1": .., "x2": .., "y2": .., "conf": ..}]}.
/// "conf" defaults to 1 (annotations) and must lie in [0, 1]. Throws InputError.
BoxSet parse_boxes(const std::string& json_text, ClassTable& classes);

struct Dataset {
  std::string root;
  std::vector<std::string> images;  // file names relative to root, sorted
  std::optional<BoxSet> annotations;

  /// Throws InputError when the directory has no images, an annotation names a
  /// missing image, or a box leaves its image.
  /// Class names in the annotations are resolved through `classes` when given.
  static Dataset load(const std::string& directory, const std::string& annotation_path = "",
                      ClassTable* classes = nullptr);

  std::string path(std::size_t i) const;
};

// --- Synthetic frames ----------------------------------------------------------

/// Square crop with side drawn from [min_fraction, 1] of the shorter image
/// side at a uniform position, bilinearly resized to size x size.
Image random_crop(const Image& photo, int size, Rng& rng, double min_fraction = 0.6);

/// `per_photo` crops of every photo in `directory`, in sorted photo order.
std::vector<Image> crop_corpus(const std::string& directory, int per_photo, int size, std::uint64_t seed);

// --- Benchmarking --------------------------------------------------------------

struct LatencyStats {
  int frames = 0;
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
  double fps = 0;  // 1000 / mean_ms
};

LatencyStats summarize_latencies(std::vector<double> ms);

struct FpsReport {
  int block_size = 0;
  int warmup = 0;
  LatencyStats defense;
  std::optional<LatencyStats> end_to_end;  // defense + remote detection
};

/// Times defend() over `repetitions` passes of `images` after `warmup`
/// untimed frames (at least 10). Throws InputError for an empty image set.
FpsReport bench_fps(const pipeline::DefenseConfig& cfg, const model::AEParams& params,
                    const std::vector<Image>& images, int repetitions, int warmup = 10,
                    const bridge::Client* detector = nullptr);

// --- Experiments ---------------------------------------------------------------

inline constexpr const char* kReportSchema = "nutnet.report/1";
inline constexpr const char* kToolVersion = "0.3.0";

struct StageFailure {
  std::string stage;
  std::string error;
  bool internal = false;
};

struct EvalReport {
  std::string json;  // the full report document
  std::vector<StageFailure> failures;
  bool ok() const { return failures.empty(); }
};

struct ExperimentOptions {
  std::string base_dir = ".";  // relative paths in the config resolve here
  std::string report_path;     // overrides the config's "report"; empty = config value or none
  std::function<void(const std::string&)> log;
};

/// Runs the stages listed in the experiment config, in order, and writes the
/// report atomically when a path is configured. A failing stage is recorded
/// and later stages still run. Throws ConfigError only when the config itself
/// cannot be parsed.
///
/// Config: {"name", "seed", "deterministic", "threads", "report",
///          "stages": [{"type": "train" | "separation" | "defend" | "locate" |
///                      "attack" | "eval" | "bench", ...}]}
/// Timing-dependent values live under "timings" keys and the wall-clock
/// stamp under "generated_at"; everything else is reproducible.
EvalReport run_experiment(const std::string& config_json, const ExperimentOptions& options = {});

/// Report JSON with every "timings" and "generated_at" member removed, for
/// comparing runs.
std::string strip_volatile(const std::string& report_json);

}  // namespace nutnet::eval
