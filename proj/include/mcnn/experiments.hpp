#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mcnn/config.hpp"
#include "mcnn/datagen.hpp"
#include "mcnn/error.hpp"
#include "mcnn/image.hpp"
#include "mcnn/morphology.hpp"
#include "mcnn/network.hpp"
#include "mcnn/training.hpp"

namespace mcnn {

/// Error raised by the experiment runner; `stage` names the step that failed
/// (config, data, network, train, eval, output, apply).
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

// ---------------------------------------------------------------------------
// Image sources
// ---------------------------------------------------------------------------

/// Where a set of images comes from: a comma list of PGM files and/or
/// directories (every *.pgm inside, sorted by name), or a generator written
/// `synthetic:texture:COUNT:SIZE` / `synthetic:defects:COUNT:SIZE`.
struct ImageSource {
  std::vector<std::filesystem::path> paths;
  std::string generator;  // empty for files
  int count = 0;
  int size = 0;

  bool synthetic() const noexcept { return !generator.empty(); }

  static ImageSource parse(const std::string& text) {
    ImageSource s;
    if (text.rfind("synthetic:", 0) == 0) {
      const std::vector<std::string> parts = split(text, ':');
      if (parts.size() != 4) throw Error(Errc::InvalidConfig, "expected synthetic:KIND:COUNT:SIZE, got '" + text + "'");
      s.generator = parts[1];
      if (s.generator != "texture" && s.generator != "defects") {
        throw Error(Errc::InvalidConfig, "unknown synthetic generator '" + s.generator + "'");
      }
      s.count = static_cast<int>(parse_int(parts[2], "synthetic image count"));
      s.size = static_cast<int>(parse_int(parts[3], "synthetic image size"));
      if (s.count < 1 || s.size < 1) throw Error(Errc::InvalidConfig, "synthetic count and size must be >= 1");
      return s;
    }
    for (const std::string& p : split(text, ','))
      if (!p.empty()) s.paths.emplace_back(p);
    if (s.paths.empty()) throw Error(Errc::InvalidConfig, "empty image list");
    return s;
  }

  std::string to_string() const {
    if (synthetic()) return "synthetic:" + generator + ":" + std::to_string(count) + ":" + std::to_string(size);
    std::string out;
    for (std::size_t i = 0; i < paths.size(); ++i) out += (i ? "," : "") + paths[i].string();
    return out;
  }

  /// Expands directories into their sorted *.pgm files. Throws Io when a path
  /// does not exist or a directory holds no PGM file.
  std::vector<std::filesystem::path> files() const {
    namespace fs = std::filesystem;
    std::vector<fs::path> out;
    for (const fs::path& p : paths) {
      if (fs::is_directory(p)) {
        std::vector<fs::path> found;
        for (const auto& entry : fs::directory_iterator(p))
          if (entry.is_regular_file() && entry.path().extension() == ".pgm") found.push_back(entry.path());
        if (found.empty()) throw Error(Errc::Io, "no .pgm files in directory " + p.string());
        std::sort(found.begin(), found.end());
        out.insert(out.end(), found.begin(), found.end());
      } else if (fs::is_regular_file(p)) {
        out.push_back(p);
      } else {
        throw Error(Errc::Io, "input path does not exist: " + p.string());
      }
    }
    return out;
  }
};

inline std::vector<Image> generate_images(const std::string& generator, int count, int size, const DefectSpec& defects,
                                          std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    out.push_back(generator == "defects" ? synth_defects(size, size, defects, rng) : synth_texture(size, size, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle baselines
// ---------------------------------------------------------------------------

struct PipelineStep {
  Operator op = Operator::Identity;
  SeSpec se;
};

/// Parses "close:square:2; open:square:2" (steps applied left to right).
inline std::vector<PipelineStep> parse_pipeline(const std::string& text) {
  std::vector<PipelineStep> steps;
  for (const std::string& part : split(text, ';')) {
    if (part.empty()) continue;
    const auto colon = part.find(':');
    PipelineStep step;
    step.op = parse_operator(part.substr(0, colon));
    if (step.op == Operator::External || step.op == Operator::DualTopHat) {
      throw Error(Errc::InvalidConfig, "baseline step '" + part + "' is not a single oracle operator");
    }
    if (step.op != Operator::Identity) {
      if (colon == std::string::npos) throw Error(Errc::InvalidConfig, "baseline step '" + part + "' needs a structuring element");
      step.se = SeSpec::parse(part.substr(colon + 1));
    }
    steps.push_back(step);
  }
  if (steps.empty()) throw Error(Errc::InvalidConfig, "empty baseline pipeline");
  return steps;
}

inline Image run_pipeline(const std::vector<PipelineStep>& steps, const Image& f) {
  Image out = f;
  for (const PipelineStep& s : steps) {
    TaskSpec t;
    t.op = s.op;
    t.se = s.se;
    out = apply_operator(t, out);
  }
  return out;
}

struct Metrics {
  double mse = 0.0;
  double psnr = 0.0;
};

/// Applies the oracle pipeline to each input and scores it against the
/// target on the target's region (the pipeline output is center-cropped to
/// it).
inline Metrics eval_baseline(const std::vector<Sample>& samples, const std::string& pipeline) {
  const std::vector<PipelineStep> steps = parse_pipeline(pipeline);
  if (samples.empty()) throw Error(Errc::InvalidArgument, "no images to evaluate");
  double total = 0.0;
  for (const Sample& s : samples) {
    const Image out = run_pipeline(steps, s.input);
    if (out.width() < s.target.width() || out.height() < s.target.height()) {
      throw Error(Errc::ShapeMismatch, "baseline output " + to_string(size_of(out)) + " smaller than target " +
                                           to_string(size_of(s.target)));
    }
    total += mse(center_crop(out, size_of(s.target)), s.target);
  }
  const double m = total / static_cast<double>(samples.size());
  return {m, psnr_from_mse(m)};
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path output = "out";
  std::uint64_t seed = 1;
  TaskSpec task;
  NetworkSpec network;
  TrainConfig train;
  ImageSource train_images;
  std::optional<ImageSource> val_images;  // defaults to the training images
  ImageSource test_images;
  std::optional<std::filesystem::path> train_targets, val_targets, test_targets;
  DefectSpec defects;
  std::string baseline;  // empty: none
  KeyValues source;

  /// Parses every section and rejects unknown keys. Seeds that are not set
  /// explicitly are derived from experiment.seed.
  static ExperimentConfig from_config(const KeyValues& kv) {
    ExperimentConfig c;
    c.source = kv;
    c.name = kv.get_or("experiment.name", c.name);
    c.output = kv.get_or("experiment.output", c.output.string());
    c.seed = static_cast<std::uint64_t>(kv.get_int("experiment.seed", 1));

    c.task.op = parse_operator(kv.get_or("task.operator", "dilate"));
    c.task.se = SeSpec::parse(kv.get_or("task.se", "square:5"));
    c.task.se2 = SeSpec::parse(kv.get_or("task.se2", "line:10:0"));
    c.task.noise = NoiseSpec::parse(kv.get_or("task.noise", "none"));
    c.task.patch = static_cast<int>(kv.get_int("task.patch", 0));
    c.task.seed = static_cast<std::uint64_t>(kv.get_int("task.seed", static_cast<long long>(derived_seed(c.seed, 1))));

    c.network = NetworkSpec::from_config(kv);
    c.train = TrainConfig::from_config(kv);
    if (!kv.has("train.seed")) c.train.seed = derived_seed(c.seed, 2);

    c.train_images = ImageSource::parse(kv.require("data.train"));
    if (auto v = kv.get("data.val")) c.val_images = ImageSource::parse(*v);
    c.test_images = ImageSource::parse(kv.require("data.test"));
    if (auto v = kv.get("data.train_targets")) c.train_targets = *v;
    if (auto v = kv.get("data.val_targets")) c.val_targets = *v;
    if (auto v = kv.get("data.test_targets")) c.test_targets = *v;
    if (c.task.op == Operator::External && (!c.train_targets || !c.test_targets)) {
      throw Error(Errc::InvalidConfig, "external_target needs data.train_targets and data.test_targets");
    }
    if (c.task.op == Operator::External && c.val_images && !c.val_targets) {
      throw Error(Errc::InvalidConfig, "external_target with data.val needs data.val_targets");
    }

    DefectSpec& d = c.defects;
    d.spots = static_cast<int>(kv.get_int("data.defects.spots", d.spots));
    d.spot_radius = kv.get_double("data.defects.spot_radius", d.spot_radius);
    d.spot_contrast = kv.get_double("data.defects.spot_contrast", d.spot_contrast);
    d.lines = static_cast<int>(kv.get_int("data.defects.lines", d.lines));
    d.line_length = static_cast<int>(kv.get_int("data.defects.line_length", d.line_length));
    d.line_width = static_cast<int>(kv.get_int("data.defects.line_width", d.line_width));
    d.line_contrast = kv.get_double("data.defects.line_contrast", d.line_contrast);
    d.orientation = static_cast<int>(kv.get_int("data.defects.orientation", d.orientation));

    c.baseline = kv.get_or("baseline.pipeline", "");
    if (!c.baseline.empty()) parse_pipeline(c.baseline);

    const std::vector<std::string> unused = kv.unused_keys();
    if (!unused.empty()) throw Error(Errc::InvalidConfig, "unknown key '" + unused.front() + "'");
    analyze(c.network);
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) { return from_config(KeyValues::load(path)); }

  static std::uint64_t derived_seed(std::uint64_t master, std::uint64_t tag) {
    return Rng::substream(master, tag).next() >> 11;
  }
};

/// The three image sets of an experiment, loaded and paired with targets.
struct ExperimentData {
  std::vector<Image> train, val, test;
  std::vector<Image> train_targets, val_targets, test_targets;  // external tasks only
  std::vector<std::string> test_names;
};

namespace detail {

inline std::vector<Image> load_set(const ImageSource& src, const ExperimentConfig& c, std::uint64_t tag,
                                   std::vector<std::string>* names = nullptr) {
  if (src.synthetic()) {
    std::vector<Image> imgs = generate_images(src.generator, src.count, src.size, c.defects,
                                              ExperimentConfig::derived_seed(c.seed, tag));
    if (names)
      for (int i = 0; i < src.count; ++i) names->push_back("test_" + std::to_string(i));
    return imgs;
  }
  std::vector<Image> imgs;
  for (const auto& f : src.files()) {
    imgs.push_back(normalize(load_pgm(f)));
    if (names) names->push_back(f.stem().string());
  }
  return imgs;
}

/// Targets for `src` read from `dir`, matched by file name.
inline std::vector<Image> load_targets(const ImageSource& src, const std::filesystem::path& dir) {
  if (src.synthetic()) throw Error(Errc::InvalidConfig, "external targets need file inputs, not a generator");
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::Io, "target directory does not exist: " + dir.string());
  std::vector<Image> out;
  for (const auto& f : src.files()) {
    const std::filesystem::path t = dir / f.filename();
    if (!std::filesystem::exists(t)) throw Error(Errc::Io, "no target for " + f.filename().string() + " in " + dir.string());
    out.push_back(normalize(load_pgm(t)));
  }
  return out;
}

}  // namespace detail

/// Loads or generates every image the experiment needs. Missing inputs fail
/// here, before any training.
inline ExperimentData load_data(const ExperimentConfig& c) {
  ExperimentData d;
  d.train = detail::load_set(c.train_images, c, 10);
  d.test = detail::load_set(c.test_images, c, 11, &d.test_names);
  d.val = c.val_images ? detail::load_set(*c.val_images, c, 12) : d.train;
  if (c.task.op == Operator::External) {
    d.train_targets = detail::load_targets(c.train_images, *c.train_targets);
    d.test_targets = detail::load_targets(c.test_images, *c.test_targets);
    d.val_targets = c.val_images ? detail::load_targets(*c.val_images, *c.val_targets) : d.train_targets;
  }
  return d;
}

/// Whole-image held-out samples; image i draws its noise from index i.
inline std::vector<Sample> whole_samples(const PairStream& stream) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < stream.image_count(); ++i) out.push_back(stream.whole(i, i));
  return out;
}

// ---------------------------------------------------------------------------
// Reports and artifacts
// ---------------------------------------------------------------------------

struct FilterSummary {
  std::size_t layer = 0;
  std::size_t filter = 0;
  double order = 0.0;
  std::optional<double> support_iou;
};

struct ExperimentReport {
  std::string name;
  std::string data_note;
  Metrics network;
  std::optional<Metrics> baseline;
  std::vector<Metrics> per_image;
  std::vector<FilterSummary> filters;
  std::optional<TrainReport> training;
};

/// IoU between {w > 0.5 max w} and the cells of `se` centered in the kernel.
inline double support_iou(const Taps& w, const StructuringElement& se) {
  const StructuringElement target = se.padded_to(w.width(), w.height());
  double peak = 0.0;
  for (double v : w.values()) peak = std::max(peak, v);
  int inter = 0;
  int uni = 0;
  for (int r = 0; r < w.height(); ++r) {
    for (int c = 0; c < w.width(); ++c) {
      const bool a = w(r, c) > 0.5 * peak;
      const bool b = target.at(r, c);
      inter += a && b;
      uni += a || b;
    }
  }
  return uni ? static_cast<double>(inter) / uni : 1.0;
}

namespace detail {

inline bool single_se_task(Operator op) {
  return op == Operator::Dilate || op == Operator::Erode || op == Operator::Open || op == Operator::Close ||
         op == Operator::WhiteTopHat || op == Operator::BlackTopHat;
}

inline std::vector<FilterSummary> summarize_filters(const Network& net, const TaskSpec& task) {
  std::vector<FilterSummary> out;
  const StructuringElement se = task.se.make();
  for (std::size_t l = 0; l < net.params().size(); ++l) {
    const auto& filters = net.params()[l].pconv;
    for (std::size_t f = 0; f < filters.size(); ++f) {
      FilterSummary s{l, f, filters[f].order, std::nullopt};
      if (single_se_task(task.op) && se.width() <= filters[f].w.width() && se.height() <= filters[f].w.height()) {
        s.support_iou = support_iou(filters[f].w, se);
      }
      out.push_back(s);
    }
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

/// Affine rescale of `values` to 0..255 plus a metadata line naming the map.
inline void write_scaled(const std::filesystem::path& stem, std::span<const double> values, int width, int height) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double max = *hi;
  Image raw(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    raw.pixels()[i] = max > min ? std::round(255.0 * (values[i] - min) / (max - min)) : 0.0;
  }
  save_pgm(raw, stem.string() + ".pgm");
  write_text(stem.string() + ".txt", "pixel = round(255 * (value - min) / (max - min)); min = " + format_double(min) +
                                         "; max = " + format_double(max) + "\n");
  std::string csv;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) csv += (c ? "," : "") + format_double(values[static_cast<std::size_t>(r) * width + c]);
    csv += "\n";
  }
  write_text(stem.string() + ".csv", csv);
}

}  // namespace detail

/// Writes w and log(w) of every PConv filter and every Conv kernel under
/// `dir` as rescaled PGM + metadata + raw CSV.
inline void write_kernels(const Network& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t l = 0; l < net.params().size(); ++l) {
    const LayerParams& p = net.params()[l];
    for (std::size_t f = 0; f < p.pconv.size(); ++f) {
      const Taps& w = p.pconv[f].w;
      const std::string stem = "layer" + std::to_string(l) + "_filter" + std::to_string(f);
      detail::write_scaled(dir / (stem + "_w"), w.values(), w.width(), w.height());
      std::vector<double> logs(w.values().size());
      std::transform(w.values().begin(), w.values().end(), logs.begin(), [](double v) { return std::log(v); });
      detail::write_scaled(dir / (stem + "_logw"), logs, w.width(), w.height());
    }
    for (std::size_t k = 0; k < p.conv.kernels.size(); ++k) {
      const Taps& w = p.conv.kernels[k];
      detail::write_scaled(dir / ("layer" + std::to_string(l) + "_kernel" + std::to_string(k)), w.values(), w.width(),
                           w.height());
    }
  }
}

inline std::string data_note(const ExperimentConfig& c) {
  auto describe = [](const ImageSource& s) {
    return s.synthetic() ? "synthetic " + s.generator + " images (generator substitutes for the unspecified corpus)"
                         : "user-supplied files";
  };
  return "train: " + describe(c.train_images) + "; test: " + describe(c.test_images);
}

inline void write_report_csv(const ExperimentReport& r, std::ostream& out) {
  out << "# experiment: " << r.name << "\n";
  out << "# images: " << r.data_note << "\n";
  out << "metric,value\n";
  out << "network_mse," << format_double(r.network.mse) << "\n";
  out << "network_psnr," << format_double(r.network.psnr) << "\n";
  if (r.baseline) {
    out << "baseline_mse," << format_double(r.baseline->mse) << "\n";
    out << "baseline_psnr," << format_double(r.baseline->psnr) << "\n";
  }
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    out << "image" << i << "_network_mse," << format_double(r.per_image[i].mse) << "\n";
  }
  for (const FilterSummary& f : r.filters) {
    const std::string key = "layer" + std::to_string(f.layer) + "_filter" + std::to_string(f.filter);
    out << key << "_order," << format_double(f.order) << "\n";
    if (f.support_iou) out << key << "_support_iou," << format_double(*f.support_iou) << "\n";
  }
  if (r.training) {
    out << "train_samples," << r.training->samples << "\n";
    out << "best_sample," << r.training->best_sample << "\n";
    out << "best_val_mse," << format_double(r.training->best_eval_mse) << "\n";
    out << "stopped_early," << (r.training->stopped_early ? 1 : 0) << "\n";
  }
}

/// Scores `net` on the test set, writes predictions, kernels and report.csv
/// under the output directory, and returns the report.
inline ExperimentReport evaluate_experiment(const ExperimentConfig& c, const ExperimentData& data, const Network& net,
                                            std::optional<TrainReport> training = std::nullopt) {
  namespace fs = std::filesystem;
  ExperimentReport report;
  report.name = c.name;
  report.data_note = data_note(c);
  report.training = std::move(training);

  const PairStream test(data.test, c.task, net.margin(), data.test_targets);
  const std::vector<Sample> samples = whole_samples(test);
  std::vector<Image> predictions;
  in_stage("eval", [&] {
    double total = 0.0;
    for (const Sample& s : samples) {
      predictions.push_back(predict(net, s.input));
      const double m = mse(predictions.back(), s.target);
      report.per_image.push_back({m, psnr_from_mse(m)});
      total += m;
    }
    const double m = total / static_cast<double>(samples.size());
    report.network = {m, psnr_from_mse(m)};
    if (!c.baseline.empty()) report.baseline = eval_baseline(samples, c.baseline);
    report.filters = detail::summarize_filters(net, c.task);
  });

  in_stage("output", [&] {
    fs::create_directories(c.output / "pred");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::string stem = (c.output / "pred" / data.test_names[i]).string();
      save_pgm(denormalize(samples[i].input), stem + "_input.pgm");
      save_pgm(denormalize(samples[i].target), stem + "_target.pgm");
      save_pgm(denormalize(predictions[i]), stem + "_pred.pgm");
    }
    write_kernels(net, c.output / "kernels");
    std::ostringstream csv;
    write_report_csv(report, csv);
    detail::write_text(c.output / "report.csv", csv.str());
  });
  return report;
}

/// Trains per the config and writes params/, pred/, kernels/, curves.csv and
/// report.csv under the output directory. Reported metrics use the snapshot
/// with the best validation MSE.
inline ExperimentReport run(const ExperimentConfig& c, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const ExperimentData data = in_stage("data", [&] { return load_data(c); });
  const Network initial = in_stage("network", [&] { return build(c.network, ExperimentConfig::derived_seed(c.seed, 3)); });

  TrainReport trained = in_stage("train", [&] {
    const PairStream stream(data.train, c.task, initial.margin(), data.train_targets);
    TaskSpec val_task = c.task;
    val_task.patch = 0;
    const PairStream val(data.val, val_task, initial.margin(), data.val_targets);
    return train_online(initial, stream, whole_samples(val), c.train, log);
  });

  in_stage("output", [&] {
    fs::create_directories(c.output / "params");
    save_params(trained.final_net, c.output / "params" / "final.txt");
    save_params(trained.best, c.output / "params" / "best.txt");
    std::ostringstream curve;
    write_curve_csv(trained, curve);
    detail::write_text(c.output / "curves.csv", curve.str());
    detail::write_text(c.output / "config.txt", c.source.to_string());
  });
  TaskSpec test_task = c.task;
  test_task.patch = 0;
  ExperimentConfig eval_config = c;
  eval_config.task = test_task;
  const Network best = trained.best;
  return evaluate_experiment(eval_config, data, best, std::move(trained));
}

/// Evaluation only: scores a saved parameter file on the config's test set.
inline ExperimentReport eval(const ExperimentConfig& c, const std::filesystem::path& params) {
  const ExperimentData data = in_stage("data", [&] { return load_data(c); });
  const Network net = in_stage("network", [&] { return load_params(params); });
  if (!(net.spec() == c.network)) {
    throw StageError("network", Error(Errc::InvalidSpec, "parameter file does not match the config's network"));
  }
  ExperimentConfig eval_config = c;
  eval_config.task.patch = 0;
  return evaluate_experiment(eval_config, data, net);
}

/// Forward passes of a saved network; writes <out>/<stem>.pgm per input and
/// returns the written paths.
inline std::vector<std::filesystem::path> apply(const std::filesystem::path& params,
                                                const std::vector<std::filesystem::path>& images,
                                                const std::filesystem::path& out) {
  const Network net = in_stage("network", [&] { return load_params(params); });
  return in_stage("apply", [&] {
    std::filesystem::create_directories(out);
    std::vector<std::filesystem::path> written;
    for (const auto& path : images) {
      const Image pred = predict(net, normalize(load_pgm(path)));
      written.push_back(out / (path.stem().string() + ".pgm"));
      save_pgm(denormalize(pred), written.back());
    }
    return written;
  });
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace detail {

inline const std::map<std::string, std::string>& preset_table() {
  // Single-layer dilation/erosion share the same training schedule.
  static const std::string single =
      "data.train = synthetic:texture:2:128\n"
      "data.test = synthetic:texture:1:128\n"
      "task.patch = 40\n"
      "layer.0.kind = pconv\n"
      "layer.0.kernel = 11\n"
      "train.lr = 0.03\n"
      "train.momentum = 0.9\n"
      "train.max_samples = 60000\n"
      "train.decay_tau = 30000\n"
      "train.grad_clip = 0.03\n"
      "train.order_lr_scale = 100\n"
      "train.eval_every = 6000\n";
  auto single_op = [&](const std::string& op, const std::string& se) {
    return "task.operator = " + op + "\ntask.se = " + se + "\n" + single;
  };
  // Opening/closing: two PConv layers, larger patches for the doubled margin.
  static const std::string pair =
      "data.train = synthetic:texture:2:128\n"
      "data.test = synthetic:texture:1:128\n"
      "task.patch = 60\n"
      "layer.0.kind = pconv\n"
      "layer.0.kernel = 11\n"
      "layer.1.kind = pconv\n"
      "layer.1.kernel = 11\n"
      "train.lr = 0.03\n"
      "train.momentum = 0.9\n"
      "train.max_samples = 60000\n"
      "train.decay_tau = 30000\n"
      "train.grad_clip = 0.03\n"
      "train.order_lr_scale = 300\n"
      "train.eval_every = 6000\n";
  auto pair_op = [&](const std::string& op, const std::string& se) {
    return "task.operator = " + op + "\ntask.se = " + se + "\n" + pair;
  };
  static const std::string tophat =
      "task.operator = white_top_hat\ntask.se = disk:5\ntask.patch = 60\n"
      "data.train = synthetic:defects:2:128\ndata.test = synthetic:defects:1:128\ndata.defects.spots = 12\n"
      "train.lr = 0.03\ntrain.momentum = 0.9\ntrain.max_samples = 30000\ntrain.decay_tau = 15000\n"
      "train.grad_clip = 0.03\ntrain.eval_every = 3000\n";
  static const std::string texture = "data.train = synthetic:texture:2:128\ndata.test = synthetic:texture:1:128\n";
  static const std::string denoise =
      "train.lr = 0.03\ntrain.momentum = 0.9\ntrain.max_samples = 30000\ntrain.decay_tau = 15000\n"
      "train.grad_clip = 0.03\ntrain.order_lr_scale = 100\ntrain.eval_every = 3000\n";
  static const std::map<std::string, std::string> table = {
      {"dilate-square5", single_op("dilate", "square:5")},
      {"dilate-diamond5", single_op("dilate", "diamond:5")},
      {"dilate-line15-45", single_op("dilate", "line:15:45")},
      {"erode-square5", single_op("erode", "square:5")},
      {"erode-diamond5", single_op("erode", "diamond:5")},
      {"erode-line15-45", single_op("erode", "line:15:45")},
      {"open-square5", pair_op("open", "square:5")},
      {"close-square5", pair_op("close", "square:5")},
      {"close-line10-45", pair_op("close", "line:10:45")},
      {"tophat-disk5", tophat + "train.order_lr_scale = 100\n"
                                "layer.0.kind = pconv\nlayer.0.kernel = 11\n"
                                "layer.1.kind = pconv\nlayer.1.kernel = 11\n"
                                "layer.2.kind = absdiff\nlayer.2.inputs = input, 1\n"},
      {"tophat-disk5-cnn", tophat + "layer.0.kind = conv\nlayer.0.kernel = 11\nlayer.0.activation = relu\n"
                                    "layer.1.kind = conv\nlayer.1.kernel = 11\nlayer.1.activation = relu\n"
                                    "layer.2.kind = absdiff\nlayer.2.inputs = input, 1\n"},
      {"dual-tophat",
       "task.operator = dual_top_hat\ntask.se = disk:5\ntask.se2 = line:10:0\ntask.patch = 60\n"
       "data.train = synthetic:defects:2:128\ndata.test = synthetic:defects:1:128\n"
       "layer.0.kind = pconv\nlayer.0.kernel = 11\nlayer.0.filters = 2\n"
       "layer.1.kind = pconv\nlayer.1.kernel = 11\nlayer.1.filters = 2\n"
       "layer.2.kind = conv\nlayer.2.kernel = 1\n"
       "layer.3.kind = absdiff\nlayer.3.inputs = input, 2\n"
       "train.lr = 0.03\ntrain.momentum = 0.9\ntrain.max_samples = 40000\ntrain.decay_tau = 20000\n"
       "train.grad_clip = 0.03\ntrain.order_lr_scale = 100\ntrain.eval_every = 4000\n"},
      {"denoise-binomial",
       "task.operator = identity\ntask.noise = binomial:0.1\ntask.patch = 40\n" + texture + denoise +
           "layer.0.kind = pconv\nlayer.0.kernel = 5\nlayer.1.kind = pconv\nlayer.1.kernel = 5\n"
           "baseline.pipeline = close:square:2\n"},
      {"denoise-saltpepper",
       "task.operator = identity\ntask.noise = salt_pepper:0.1\ntask.patch = 48\n" + texture + denoise +
           "layer.0.kind = pconv\nlayer.0.kernel = 5\nlayer.1.kind = pconv\nlayer.1.kernel = 5\n"
           "layer.2.kind = pconv\nlayer.2.kernel = 5\nlayer.3.kind = pconv\nlayer.3.kernel = 5\n"
           "baseline.pipeline = close:square:2; open:square:2\n"},
      // Inputs are noisy files, targets their restorations; paths are placeholders.
      {"tv-approx",
       "task.operator = external_target\ntask.patch = 40\n"
       "data.train = tv/train\ndata.train_targets = tv/train_targets\n"
       "data.test = tv/test\ndata.test_targets = tv/test_targets\n"
       "layer.0.kind = pconv\nlayer.0.kernel = 5\nlayer.0.filters = 2\n"
       "layer.1.kind = pconv\nlayer.1.kernel = 5\nlayer.1.filters = 2\n"
       "layer.2.kind = average\n" +
           denoise},
  };
  return table;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : detail::preset_table()) out.push_back(name);
  return out;
}

/// Config text of a built-in experiment; `output` becomes experiment.output.
inline KeyValues preset_config(const std::string& name, const std::filesystem::path& output) {
  const auto& table = detail::preset_table();
  const auto it = table.find(name);
  if (it == table.end()) throw Error(Errc::InvalidConfig, "unknown preset '" + name + "'");
  KeyValues kv = KeyValues::parse("experiment.name = " + name + "\nexperiment.seed = 1\n" + it->second);
  kv.set("experiment.output", output.string());
  return kv;
}

}  // namespace mcnn
