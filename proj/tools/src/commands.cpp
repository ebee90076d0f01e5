#include "wearseg/expcli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "wearseg/activation.hpp"
#include "wearseg/augmentor.hpp"
#include "wearseg/corpus.hpp"
#include "wearseg/expcli/overlay.hpp"
#include "wearseg/expcli/report.hpp"
#include "wearseg/expcli/tileset_io.hpp"
#include "wearseg/image_io.hpp"
#include "wearseg/metrics.hpp"
#include "wearseg/tiler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wearseg::expcli {
namespace {

constexpr AugmentationLevel kLevels[] = {AugmentationLevel::none, AugmentationLevel::moderate,
                                         AugmentationLevel::full};

std::vector<int> edges_for(bool desk_scale) { return desk_scale ? std::vector<int>{256} : std::vector<int>{512, 256}; }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

TrainingProtocol protocol_with(const ProtocolOverrides& o) {
  TrainingProtocol p;
  if (o.max_epochs) {
    if (*o.max_epochs < 1) throw std::invalid_argument("--max-epochs must be positive");
    p.max_epochs = *o.max_epochs;
  }
  if (o.max_retries) {
    if (*o.max_retries < 0) throw std::invalid_argument("--max-retries must be non-negative");
    p.max_retries = *o.max_retries;
  }
  return p;
}

std::string selector_text(const AxisFilter& a) {
  std::string s;
  auto add = [&](const std::string& k, const std::string& v) { s += (s.empty() ? "" : " ") + k + "=" + v; };
  if (a.mode) add("mode", to_string(*a.mode));
  if (a.tile_edge) add("tile_edge", std::to_string(*a.tile_edge));
  if (a.aug) add("aug", to_string(*a.aug));
  if (a.loss) add("loss", to_string(*a.loss));
  if (a.batch_norm) add("bn", *a.batch_norm ? "on" : "off");
  return s.empty() ? "all" : s;
}

std::vector<int> prepared_edges(const fs::path& tiles) {
  const fs::path stamp = tiles / "prepare.json";
  if (!fs::exists(stamp)) {
    throw std::runtime_error("no prepared tile sets in " + tiles.string() + " (run `wearseg prepare` first)");
  }
  return read_json(stamp).at("edges").get<std::vector<int>>();
}

FoldRecord record_of(const FoldResult& r) {
  FoldRecord rec;
  rec.failed = r.fit.failed;
  rec.attempts = r.fit.attempts;
  rec.best_val_loss = r.fit.best_val_loss;
  rec.best_epoch = r.fit.best_epoch;
  rec.report = r.report.value_or(MetricReport{});
  return rec;
}

void print_report(std::ostream& log, const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
  log << "tiles=" << r.tiles << " iou=" << r.iou << " dice=" << r.dice << " tpr=" << r.tpr << " tnr=" << r.tnr
      << " fnbgr_m=" << opt(r.fnbgr_m) << " fnbgr_a=" << opt(r.fnbgr_a) << '\n';
}

}  // namespace

json RunManifest::to_json() const {
  return {{"command", command},       {"corpus", corpus.string()}, {"out", out.string()},
          {"selector", selector},     {"seed", seed},              {"desk_scale", desk_scale}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.corpus = j.at("corpus").get<std::string>();
  m.out = j.at("out").get<std::string>();
  m.selector = j.at("selector").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.desk_scale = j.at("desk_scale").get<bool>();
  return m;
}

int cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.count < 1) throw std::invalid_argument("--count must be positive");
  fs::create_directories(o.out);
  SyntheticCorpusOptions options;
  options.channels = o.channels;
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < o.count; ++i) {
    const AnnotatedImage img = generate_synthetic_image(i, o.height, o.width, o.seed, options);
    const fs::path image_path = img.id + ".png", mask_path = img.id + "_mask.png";
    save_annotated_image(img, o.out / image_path, o.out / mask_path);
    entries.push_back({img.id, image_path, mask_path, img.pixel_scale});
  }
  write_manifest(o.out / "manifest.jsonl", entries);
  log << "wrote " << o.count << " images (" << o.height << "x" << o.width << ") and "
      << (o.out / "manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_prepare(const PrepareOptions& o, std::ostream& log) {
  if (!fs::exists(o.corpus)) throw std::runtime_error("corpus manifest not found: " + o.corpus.string());
  const std::vector<int> edges = edges_for(o.desk_scale);
  const fs::path stamp_path = o.out / "prepare.json";
  json stamp{{"corpus", fs::absolute(o.corpus).lexically_normal().string()},
             {"n_test", o.n_test},
             {"seed", o.seed},
             {"edges", edges}};
  if (!o.force && fs::exists(stamp_path)) {
    json old = read_json(stamp_path);
    old.erase("split");
    old.erase("counts");
    if (old == stamp) {
      log << "tile sets in " << o.out.string() << " are up to date (use --force to rebuild)\n";
      return 0;
    }
  }

  const auto images = load_corpus(o.corpus);
  const CorpusSplit split = split_corpus(images, static_cast<std::size_t>(o.n_test), o.seed);
  const auto train = select_images(images, split.train);
  const auto test = select_images(images, split.test);

  std::vector<AugmentationLevel> levels(std::begin(kLevels), std::end(kLevels));
  const TileSets sets = prepare_tile_sets(train, test, edges, levels, o.seed);

  std::ostringstream counts;
  counts << "set,tile_edge,level,tiles\n";
  json count_json = json::object();
  for (int edge : edges) {
    for (AugmentationLevel level : levels) {
      const auto& tiles = sets.training_for(edge, level);
      const std::string name = training_set_name(edge, level);
      write_tile_set(o.out / "tiles" / name, tiles);
      counts << name << ',' << edge << ',' << to_string(level) << ',' << tiles.size() << '\n';
      count_json[name] = tiles.size();
    }
    const auto& tiles = sets.test_for(edge);
    const std::string name = test_set_name(edge);
    write_tile_set(o.out / "tiles" / name, tiles);
    counts << name << ',' << edge << ",test," << tiles.size() << '\n';
    count_json[name] = tiles.size();
  }
  write_file_atomic(o.out / "counts.csv", counts.str());
  log << counts.str();

  stamp["split"] = {{"train", split.train}, {"test", split.test}};
  stamp["counts"] = count_json;
  write_json(stamp_path, stamp);
  return 0;
}

GridSelector grid_selector(const AxisFilter& a, bool desk_scale, std::optional<int> base_filters,
                           std::optional<int> batch_size, std::uint64_t seed) {
  GridSelector s = desk_scale ? GridSelector::desk_scale() : GridSelector{};
  if (a.mode) s.modes = {*a.mode};
  if (a.tile_edge) s.tile_edges = {*a.tile_edge};
  if (a.aug) s.augs = {*a.aug};
  if (a.loss) s.losses = {*a.loss};
  if (a.batch_norm) s.batch_norm = {*a.batch_norm};
  if (base_filters) s.base_filters = *base_filters;
  if (batch_size) s.batch_size = *batch_size;
  s.seed = seed;
  return s;
}

ExperimentConfig single_config(const TrainOptions& o) {
  ExperimentConfig c;
  if (o.desk_scale) {
    c.tile_edge = 256;
    c.base_filters = 16;
  }
  if (o.config_file) c = ExperimentConfig::from_text(read_file(*o.config_file));
  if (o.axes.mode) c.mode = *o.axes.mode;
  if (o.axes.tile_edge) c.tile_edge = *o.axes.tile_edge;
  if (o.axes.aug) c.aug = *o.axes.aug;
  if (o.axes.loss) c.loss = *o.axes.loss;
  if (o.axes.batch_norm) c.use_batch_norm = *o.axes.batch_norm;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.base_filters) c.base_filters = *o.base_filters;
  if (o.seed) c.seed = *o.seed;
  c.model_config().validate();
  return c;
}

int cmd_train(const TrainOptions& o, std::ostream& log) {
  const ExperimentConfig config = single_config(o);
  const auto edges = prepared_edges(o.tiles);
  if (std::find(edges.begin(), edges.end(), config.tile_edge) == edges.end()) {
    throw std::invalid_argument("no tile sets prepared for tile edge " + std::to_string(config.tile_edge));
  }
  const TileSets sets = read_prepared_tiles(o.tiles, {config.tile_edge}, {config.aug});
  const TrainingProtocol protocol = protocol_with(o.protocol);

  const fs::path dir = o.out / "final" / config.hash();
  fs::create_directories(dir);
  write_file_atomic(dir / "config.txt", config.to_text());
  write_json(dir / "manifest.json",
             RunManifest{"train", o.tiles, o.out, config.hash(), config.seed, o.desk_scale}.to_json());

  log << "training " << config.hash() << " on " << sets.training_for(config.tile_edge, config.aug).size()
      << " tiles\n";
  FoldResult result = train_final(config, protocol, sets.training_for(config.tile_edge, config.aug),
                                  sets.test_for(config.tile_edge));
  save_checkpoint(dir / "checkpoint.bin", *result.model);
  write_fold_history(dir / "history.csv", result.fit.history);
  write_fold_record(dir / "report.csv", record_of(result));
  log << "best val loss " << result.fit.best_val_loss << " at epoch " << result.fit.best_epoch << " after "
      << result.fit.attempts << " attempt(s)" << (result.fit.failed ? " [FAILED]" : "") << '\n';
  if (result.report) print_report(log, *result.report);
  log << "artifacts in " << dir.string() << '\n';
  return 0;
}

int cmd_grid(const GridCommandOptions& o, std::ostream& log) {
  const GridSelector selector = grid_selector(o.axes, o.desk_scale, o.base_filters, o.batch_size, o.seed);
  const auto configs = enumerate_grid(selector);
  if (configs.empty()) throw std::invalid_argument("grid selection is empty");

  std::set<int> edges(selector.tile_edges.begin(), selector.tile_edges.end());
  std::set<AugmentationLevel> levels(selector.augs.begin(), selector.augs.end());
  const auto available = prepared_edges(o.tiles);
  for (int e : edges) {
    if (std::find(available.begin(), available.end(), e) == available.end()) {
      throw std::invalid_argument("no tile sets prepared for tile edge " + std::to_string(e));
    }
  }
  const TileSets sets = read_prepared_tiles(o.tiles, {edges.begin(), edges.end()}, {levels.begin(), levels.end()});

  fs::create_directories(o.out);
  write_json(o.out / "manifest.json",
             RunManifest{"grid", o.tiles, o.out, selector_text(o.axes), o.seed, o.desk_scale}.to_json());

  GridOptions options;
  options.run_dir = o.out;
  options.protocol = protocol_with(o.protocol);
  options.folds = o.folds;
  options.resume = o.resume;
  options.on_fold_complete = [&](const ExperimentConfig& c, int k) {
    log << "cell " << c.hash() << " fold " << k << " done\n" << std::flush;
  };
  log << "grid: " << configs.size() << " cells x " << o.folds << " folds\n";
  const auto cells = run_grid(configs, sets, options);

  const auto all = load_grid_results(o.out);
  write_file_atomic(o.out / "summary.csv", grid_summary_csv(all));
  std::size_t errored = 0;
  for (const auto& c : cells) {
    if (c.error) {
      ++errored;
      log << "cell " << c.config.hash() << " error: " << *c.error;
    }
  }
  log << "summary written to " << (o.out / "summary.csv").string() << '\n';
  return errored == cells.size() ? 2 : 0;
}

int cmd_predict(const PredictOptions& o, std::ostream& log) {
  AnnotatedImage image;
  bool has_truth = false;
  if (o.corpus) {
    if (!o.id) throw std::invalid_argument("--id is required with --corpus");
    const auto entries = read_manifest(*o.corpus);
    const auto it = std::find_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.id == *o.id; });
    if (it == entries.end()) throw std::invalid_argument("image id '" + *o.id + "' not in " + o.corpus->string());
    image = load_annotated_image(it->image_path, it->mask_path, it->id, it->pixel_scale);
    has_truth = true;
  } else if (o.image) {
    if (o.mask) {
      image = load_annotated_image(*o.image, *o.mask, o.image->stem().string());
      has_truth = true;
    } else {
      image.id = o.image->stem().string();
      image.pixels = read_image(*o.image);
    }
  } else {
    throw std::invalid_argument("predict needs --corpus with --id, or --image");
  }

  auto model = load_checkpoint(o.checkpoint);
  const int d = model->config().input_edge;
  if (image.height() < d || image.width() < d) {
    throw std::invalid_argument("image " + image.id + " (" + std::to_string(image.height()) + "x" +
                                std::to_string(image.width()) + ") is smaller than the tile edge " +
                                std::to_string(d));
  }
  const Mode mode = model->config().mode;
  const ProbabilityMap probs = stitch_predict(image.pixels, [&](const Image& t) { return model->predict(t); }, d);
  const Mask classes = predict_classes(probs, mode);

  fs::create_directories(o.out);
  write_mask(o.out / (image.id + "_classes.png"), classes);
  write_image(o.out / (image.id + "_overlay.png"), render_overlay(image.pixels, classes, mode));
  log << "wrote " << (o.out / (image.id + "_classes.png")).string() << " ("
      << classes.height() << "x" << classes.width() << ")\n";
  if (has_truth) {
    const Mask pred_binary = mode == Mode::binary ? classes : collapse_to_binary(classes);
    const Scores s = scores(confusion(collapse_to_binary(image.mask), pred_binary));
    log << "full-image IoU (A and M joint) = " << s.iou << '\n';
  }
  return 0;
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& log) {
  auto model = load_checkpoint(o.checkpoint);
  const int d = model->config().input_edge;
  const auto tiles = read_tile_set(o.tiles / "tiles" / test_set_name(d));
  const MetricReport r =
      evaluate_testset([&](const Image& t) { return model->predict(t); }, tiles, model->config().mode);
  print_report(log, r);
  return 0;
}

int cmd_report(const ReportOptions& o, std::ostream& log) {
  const auto cells = load_grid_results(o.run_dir);
  std::size_t completed = 0;
  for (const auto& c : cells) completed += c.folds.empty() ? 0 : 1;
  if (completed == 0) throw std::runtime_error("no completed grid cells under " + o.run_dir.string());
  for (const auto& p : write_report(cells, o.out.value_or(o.run_dir / "report"))) log << p.string() << '\n';
  return 0;
}

}  // namespace wearseg::expcli
