#pragma once

// `relabel` command-line front end. run() is the whole program minus the
// process boundary, so tests can drive it with captured streams.
//
// Exit codes: 0 success, 1 usage error, 2 data/format/I-O error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "relabel/relabel.hpp"

namespace relabel::cli {

/// Bad flag values; reported with exit code 1.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what) {}
};

inline CropRegion parse_region(const std::string& text) {
  const auto f = split_fields(text);
  if (f.size() != 4) throw UsageError("--region expects x,y,w,h");
  double v[4];
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string s(trim(f[i]));
    char* end = nullptr;
    v[i] = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw UsageError("--region: '" + s + "' is not a number");
  }
  try {
    return CropRegion(v[0], v[1], v[2], v[3]);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--region: ") + e.what());
  }
}

template <class Fn>
auto as_usage(const std::string& flag, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InvalidArgument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

/// Reads `key=value` lines; blank lines and lines starting with '#' are ignored.
inline std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view row = trim(line);
    if (row.empty() || row.front() == '#') continue;
    const auto eq = row.find('=');
    if (eq == std::string_view::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key=value");
    out[std::string(trim(row.substr(0, eq)))] = std::string(trim(row.substr(eq + 1)));
  }
  return out;
}

/// CSV destination: the --out file when given, otherwise `fallback`.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw FormatError("cannot create '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& stream() { return *stream_; }
  bool to_file() const { return file_ != nullptr; }
  void close() {
    if (file_) {
      file_->close();
      if (!*file_) throw FormatError("write failed");
    }
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

struct Options {
  std::string features, head, maps, store, out, id, region, variant = "loc_multi", quant = "f32", boxes, mode,
      params = "area=0.08:1.0,aspect=0.75:1.3333333333333333", layout = "dense", config;
  std::size_t topk = 5;
  std::uint64_t seed = 0;
  std::size_t samples = 10;
  std::size_t crops_per_image = 100;
  double width = 1.0, height = 1.0;
  std::uint64_t images = 0, h = 0, w = 0, classes = 0, index_bytes = 2, id_bytes = 20;
  std::size_t steps = 0, scenes = 200, objects = 2, demo_classes = 6, workers = 0, runs = 1;
  double lr = 0.0;
  bool list_ids = false;
};

namespace detail {

inline void print_seed(std::uint64_t seed, bool csv_on_stdout, std::ostream& out, std::ostream& err) {
  (csv_on_stdout ? err : out) << "seed=" << seed << '\n';
}

inline std::vector<std::pair<std::string, SparseLabelMap>> encode_grids(const std::vector<NamedGrid>& grids,
                                                                        const ClassifierHead* head, std::size_t k,
                                                                        QuantFormat quant) {
  std::vector<std::pair<std::string, SparseLabelMap>> maps;
  maps.reserve(grids.size());
  for (const auto& g : grids) {
    DenseLabelMap dense = head ? fc_to_pointwise_conv(FeatureMap(g.height, g.width, g.channels, g.values), *head)
                               : DenseLabelMap(g.height, g.width, g.channels, g.values, ValueMode::RawScores);
    maps.emplace_back(g.id, encode_sparse(dense, k, quant));
  }
  return maps;
}

inline int cmd_annotate(const Options& o, std::ostream& out) {
  const QuantFormat quant = as_usage("--quant", [&] { return parse_quant(o.quant); });
  if (o.topk == 0) throw UsageError("--topk must be >= 1");
  const auto [kind, grids] = read_grids(o.features);
  if (kind != TensorFileKind::Features) throw FormatError("'" + o.features + "' does not hold feature maps");
  const ClassifierHead head = read_head(o.head);
  if (o.topk > head.num_classes()) throw UsageError("--topk exceeds the number of classes");
  const LabelStore store = write_store(encode_grids(grids, &head, o.topk, quant), o.out);
  out << "wrote " << store.size() << " label maps (" << store.header().height << "x" << store.header().width << "x"
      << store.header().classes << ", top-" << o.topk << ", " << to_string(quant) << ") to " << o.out << '\n';
  return 0;
}

inline int cmd_encode(const Options& o, std::ostream& out) {
  const QuantFormat quant = as_usage("--quant", [&] { return parse_quant(o.quant); });
  if (o.topk == 0) throw UsageError("--topk must be >= 1");
  const auto [kind, grids] = read_grids(o.maps);
  if (kind != TensorFileKind::LabelMaps) throw FormatError("'" + o.maps + "' does not hold dense label maps");
  if (o.topk > grids.front().channels) throw UsageError("--topk exceeds the number of classes");
  const LabelStore store = write_store(encode_grids(grids, nullptr, o.topk, quant), o.out);
  out << "wrote " << store.size() << " label maps to " << o.out << '\n';
  return 0;
}

inline int cmd_pool(const Options& o, std::ostream& out) {
  const CropRegion region = parse_region(o.region);
  const LabelVariant variant = as_usage("--variant", [&] { return parse_variant(o.variant); });
  const LabelStore store = LabelStore::open(o.store);
  const PooledTarget t = label_variant(store.get_map(o.id), region, variant);
  out << "class_index,probability\n";
  for (std::size_t c = 0; c < t.size(); ++c) {
    if (t[c] != 0.0) out << c << ',' << format_number(t[c]) << '\n';
  }
  return 0;
}

inline int cmd_simulate_crops(const Options& o, std::ostream& out, std::ostream& err) {
  const CropParams params = as_usage("--params", [&] { return parse_crop_params(o.params); });
  if (!(o.width > 0.0 && o.height > 0.0)) throw UsageError("--width and --height must be positive");
  Output csv(o.out, out);
  print_seed(o.seed, !csv.to_file(), out, err);
  Rng rng(o.seed);
  csv.stream() << "x,y,w,h,area,fallback\n";
  for (std::size_t i = 0; i < o.samples; ++i) {
    const CropSample s = sample_crop_detailed(rng, params, {o.width, o.height});
    csv.stream() << format_number(s.region.x) << ',' << format_number(s.region.y) << ',' << format_number(s.region.w)
                 << ',' << format_number(s.region.h) << ',' << format_number(s.region.area()) << ','
                 << (s.fallback ? 1 : 0) << '\n';
  }
  csv.close();
  return 0;
}

inline int cmd_crop_stats(const Options& o, std::ostream& out, std::ostream& err) {
  const CropParams params = as_usage("--params", [&] { return parse_crop_params(o.params); });
  if (o.crops_per_image == 0) throw UsageError("--crops-per-image must be >= 1");
  const auto images = read_boxes_csv(o.boxes);
  if (images.empty()) throw FormatError("'" + o.boxes + "' contains no boxes");
  const CdfTable t = crop_iou_cdf(images, params, o.crops_per_image, o.seed, o.workers ? o.workers : default_workers());
  Output csv(o.out, out);
  std::ostream& summary = csv.to_file() ? out : err;
  print_seed(o.seed, !csv.to_file(), out, err);
  summary << "samples=" << t.sample_count << '\n'
          << "fraction_iou_zero=" << format_number(t.fraction_no_overlap) << '\n'
          << "fraction_iou_above_half=" << format_number(t.fraction_above_half) << '\n'
          << "skipped_images=" << t.skipped_images << '\n';
  write_cdf_csv(csv.stream(), t);
  csv.close();
  return 0;
}

inline int cmd_confidence(const Options& o, std::ostream& out, std::ostream& err) {
  const CropParams params = as_usage("--params", [&] { return parse_crop_params(o.params); });
  if (o.samples == 0) throw UsageError("--samples must be >= 1");
  const LabelStore store = LabelStore::open(o.store);
  const auto images = read_boxes_csv(o.boxes);
  const ConfidenceProfile p =
      confidence_vs_iou(store, images, params, o.samples, o.seed, o.workers ? o.workers : default_workers());
  Output csv(o.out, out);
  print_seed(o.seed, !csv.to_file(), out, err);
  write_profile_csv(csv.stream(), p);
  csv.close();
  return 0;
}

inline int cmd_storage_cost(const Options& o, std::ostream& out) {
  StorageQuery q;
  q.num_images = o.images;
  q.height = o.h;
  q.width = o.w;
  q.quant = as_usage("--quant", [&] { return parse_quant(o.quant); });
  q.index_bytes = o.index_bytes;
  q.id_bytes = o.id_bytes;
  if (o.layout == "dense") {
    q.layout = StorageLayout::Dense;
    q.channels = o.classes;
  } else if (o.layout == "sparse") {
    q.layout = StorageLayout::Sparse;
    q.channels = o.topk;
    if (o.classes != 0 && o.topk > o.classes) throw UsageError("--topk exceeds --classes");
  } else {
    throw UsageError("--layout must be dense or sparse");
  }
  const StorageCost cost = as_usage("storage-cost", [&] { return storage_cost(q); });
  out << cost.payload << " bytes\n"
      << "overhead_bytes=" << cost.overhead << '\n'
      << "total_bytes=" << cost.total() << '\n';
  return 0;
}

inline int cmd_train_demo(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.mode != "conflict" && o.mode != "variants") throw UsageError("--mode must be conflict or variants");
  Output csv(o.out, out);
  print_seed(o.seed, !csv.to_file(), out, err);
  if (o.mode == "conflict") {
    const std::size_t steps = o.steps ? o.steps : 2000;
    const double lr = o.lr > 0.0 ? o.lr : 0.5;
    const std::size_t two[] = {0, 1};
    const std::size_t three[] = {0, 0, 1, 2};
    csv.stream() << "case,class,target,probability\n";
    auto emit = [&](const char* name, std::span<const std::size_t> cycle, std::size_t classes) {
      const ConflictResult r = conflicting_label_demo(cycle, classes, steps, lr);
      for (std::size_t c = 0; c < classes; ++c) {
        const double target =
            static_cast<double>(std::count(cycle.begin(), cycle.end(), c)) / static_cast<double>(cycle.size());
        csv.stream() << name << ',' << c << ',' << format_number(target) << ',' << format_number(r.probs[c]) << '\n';
      }
    };
    emit("alternating_2", two, 2);
    emit("frequencies_2_1_1", three, 3);
  } else {
    SceneConfig scene;
    scene.num_classes = o.demo_classes;
    scene.objects_per_scene = o.objects;
    std::vector<TrainReport> reports;
    for (std::size_t run = 0; run < o.runs; ++run) {
      const std::uint64_t seed = o.seed + run;
      const auto data = as_usage("train-demo", [&] { return make_synthetic_dataset(seed, o.scenes, scene); });
      for (Supervision s : kAllSupervisions) {
        TrainConfig cfg;
        cfg.supervision = s;
        cfg.seed = seed;
        if (o.steps) cfg.steps = o.steps;
        if (o.lr > 0.0) cfg.lr = o.lr;
        reports.push_back(train(data, cfg));
      }
    }
    write_train_reports_csv(csv.stream(), reports);
  }
  csv.close();
  return 0;
}

inline int cmd_inspect(const Options& o, std::ostream& out) {
  const LabelStore store = LabelStore::open(o.store);
  const StoreHeader& h = store.header();
  out << "path=" << o.store << '\n'
      << "version=" << h.version << '\n'
      << "quant=" << to_string(h.quant) << '\n'
      << "value_mode=" << (h.mode == ValueMode::Probabilities ? "probabilities" : "raw_scores") << '\n'
      << "height=" << h.height << '\n'
      << "width=" << h.width << '\n'
      << "classes=" << h.classes << '\n'
      << "k=" << h.k << '\n'
      << "records=" << h.count << '\n'
      << "record_bytes=" << h.record_bytes() << '\n';
  if (o.list_ids) {
    for (const auto& e : store.manifest()) out << "id=" << e.id << " offset=" << e.offset << " length=" << e.length << '\n';
  }
  return 0;
}

/// Appends `--key=value` for config keys the subcommand knows and the
/// command line does not already set.
inline void apply_config(CLI::App& app, std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args.front());
  } catch (const CLI::OptionNotFound&) {
    return;
  }
  for (const auto& [key, value] : read_config(path)) {
    const std::string flag = "--" + key;
    if (key == "config" || sub->get_option_no_throw(flag) == nullptr) continue;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) args.push_back(flag + "=" + value);
  }
}

}  // namespace detail

/// `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"relabel: localized multi-label maps for crop-level classification targets", "relabel"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  auto add_config = [&](CLI::App* s) { s->add_option("--config", o.config, "key=value file; flags override it"); };
  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "RNG seed")->required(); };
  auto add_params = [&](CLI::App* s) {
    s->add_option("--params", o.params, "Crop params area=LO:HI,aspect=LO:HI[,attempts=N]")->capture_default_str();
  };

  auto* annotate = app.add_subcommand("annotate", "Feature maps + classifier head -> label store");
  annotate->add_option("--features", o.features, "RLFT feature file")->required();
  annotate->add_option("--head", o.head, "RLFT classifier head file")->required();
  annotate->add_option("--out", o.out, "Output store (.rlbl)")->required();
  annotate->add_option("--topk", o.topk, "Classes kept per pixel")->capture_default_str();
  annotate->add_option("--quant", o.quant, "Value format f32|f16|f8")->capture_default_str();
  add_config(annotate);

  auto* encode = app.add_subcommand("encode", "Dense raw-score label maps -> label store");
  encode->add_option("--maps", o.maps, "RLFT dense label-map file")->required();
  encode->add_option("--out", o.out, "Output store (.rlbl)")->required();
  encode->add_option("--topk", o.topk, "Classes kept per pixel")->capture_default_str();
  encode->add_option("--quant", o.quant, "Value format f32|f16|f8")->capture_default_str();
  add_config(encode);

  auto* pool = app.add_subcommand("pool", "Pooled target of one crop, as CSV");
  pool->add_option("--store", o.store, "Label store")->required();
  pool->add_option("--id", o.id, "Image id")->required();
  pool->add_option("--region", o.region, "Crop x,y,w,h (normalized)")->required();
  pool->add_option("--variant", o.variant, "loc_multi|loc_single|glob_multi|glob_single")->capture_default_str();
  add_config(pool);

  auto* simulate = app.add_subcommand("simulate-crops", "Sample random-resized crops, as CSV");
  add_seed(simulate);
  simulate->add_option("--samples", o.samples, "Number of crops")->capture_default_str();
  add_params(simulate);
  simulate->add_option("--width", o.width, "Image width in pixels")->capture_default_str();
  simulate->add_option("--height", o.height, "Image height in pixels")->capture_default_str();
  simulate->add_option("--out", o.out, "CSV output file (default stdout)");
  add_config(simulate);

  auto* crop_stats = app.add_subcommand("crop-stats", "Cumulative distribution of crop/box IoU");
  crop_stats->add_option("--boxes", o.boxes, "CSV image_id,x0,y0,x1,y1")->required();
  add_seed(crop_stats);
  crop_stats->add_option("--crops-per-image", o.crops_per_image, "Crops per image")->capture_default_str();
  add_params(crop_stats);
  crop_stats->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
  crop_stats->add_option("--out", o.out, "CSV output file (default stdout)");
  add_config(crop_stats);

  auto* confidence = app.add_subcommand("confidence", "Pooled-label confidence versus crop/box IoU");
  confidence->add_option("--store", o.store, "Label store")->required();
  confidence->add_option("--boxes", o.boxes, "CSV image_id,x0,y0,x1,y1")->required();
  confidence->add_option("--samples", o.samples, "Total crops")->required();
  add_seed(confidence);
  add_params(confidence);
  confidence->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
  confidence->add_option("--out", o.out, "CSV output file (default stdout)");
  add_config(confidence);

  auto* storage = app.add_subcommand("storage-cost", "Bytes needed to keep label maps");
  storage->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
  storage->add_option("--images", o.images, "Number of images")->required();
  storage->add_option("--h", o.h, "Label map height")->required();
  storage->add_option("--w", o.w, "Label map width")->required();
  storage->add_option("--classes", o.classes, "Classes (dense layout)");
  storage->add_option("--topk", o.topk, "Classes kept per pixel (sparse layout)")->capture_default_str();
  storage->add_option("--layout", o.layout, "dense|sparse")->capture_default_str();
  storage->add_option("--quant", o.quant, "Value format f32|f16|f8")->capture_default_str();
  storage->add_option("--index-bytes", o.index_bytes, "Class index width, 2 or 4")->capture_default_str();
  storage->add_option("--id-bytes", o.id_bytes, "Mean image-id length for the manifest")->capture_default_str();
  add_config(storage);

  auto* train_demo = app.add_subcommand("train-demo", "Synthetic supervision experiments");
  train_demo->add_option("--mode", o.mode, "conflict|variants")->required();
  add_seed(train_demo);
  train_demo->add_option("--steps", o.steps, "Gradient steps (default 2000 conflict, 20000 variants)");
  train_demo->add_option("--lr", o.lr, "Learning rate (default 0.5)");
  train_demo->add_option("--scenes", o.scenes, "Synthetic scenes (variants)")->capture_default_str();
  train_demo->add_option("--classes", o.demo_classes, "Classes incl. background (variants)")->capture_default_str();
  train_demo->add_option("--objects", o.objects, "Objects per scene (variants)")->capture_default_str();
  train_demo->add_option("--runs", o.runs, "Seeds seed..seed+runs-1 (variants)")->capture_default_str();
  train_demo->add_option("--out", o.out, "CSV output file (default stdout)");
  add_config(train_demo);

  auto* inspect = app.add_subcommand("inspect", "Print a store's header");
  inspect->add_option("--store", o.store, "Label store")->required();
  inspect->add_flag("--ids", o.list_ids, "Also list the manifest");
  add_config(inspect);

  try {
    detail::apply_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "relabel: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    err << "relabel: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "relabel: " << e.what() << '\n';
    return 2;
  }

  try {
    if (annotate->parsed()) return detail::cmd_annotate(o, out);
    if (encode->parsed()) return detail::cmd_encode(o, out);
    if (pool->parsed()) return detail::cmd_pool(o, out);
    if (simulate->parsed()) return detail::cmd_simulate_crops(o, out, err);
    if (crop_stats->parsed()) return detail::cmd_crop_stats(o, out, err);
    if (confidence->parsed()) return detail::cmd_confidence(o, out, err);
    if (storage->parsed()) return detail::cmd_storage_cost(o, out);
    if (train_demo->parsed()) return detail::cmd_train_demo(o, out, err);
    if (inspect->parsed()) return detail::cmd_inspect(o, out);
  } catch (const UsageError& e) {
    err << "relabel: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "relabel: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace relabel::cli
