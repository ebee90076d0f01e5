#include "wearseg/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "wearseg/augmentor.hpp"
#include "wearseg/seeding.hpp"
#include "wearseg/tiler.hpp"

namespace fs = std::filesystem;

namespace wearseg {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(path.string() + ": malformed line '" + line + "'");
    kv[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return kv;
}

std::string report_text(const FoldRecord& r) {
  std::ostringstream out;
  out << "fold," << r.fold << '\n'
      << "failed," << (r.failed ? 1 : 0) << '\n'
      << "attempts," << r.attempts << '\n'
      << "best_val_loss," << fmt(r.best_val_loss) << '\n'
      << "best_epoch," << r.best_epoch << '\n'
      << "iou," << fmt(r.report.iou) << '\n'
      << "dice," << fmt(r.report.dice) << '\n'
      << "tpr," << fmt(r.report.tpr) << '\n'
      << "tnr," << fmt(r.report.tnr) << '\n'
      << "fnbgr_m," << fmt(r.report.fnbgr_m) << '\n'
      << "fnbgr_a," << fmt(r.report.fnbgr_a) << '\n'
      << "tiles," << r.report.tiles << '\n';
  return out.str();
}

FoldRecord read_report_file(const fs::path& path) {
  const auto kv = read_key_values(path);
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(path.string() + ": missing '" + key + "'");
    return it->second;
  };
  FoldRecord r;
  r.fold = std::stoi(get("fold"));
  r.failed = get("failed") == "1";
  r.attempts = std::stoi(get("attempts"));
  r.best_val_loss = std::stod(get("best_val_loss"));
  r.best_epoch = std::stoi(get("best_epoch"));
  r.report.iou = std::stod(get("iou"));
  r.report.dice = std::stod(get("dice"));
  r.report.tpr = std::stod(get("tpr"));
  r.report.tnr = std::stod(get("tnr"));
  r.report.fnbgr_m = parse_optional(get("fnbgr_m"));
  r.report.fnbgr_a = parse_optional(get("fnbgr_a"));
  r.report.tiles = std::stoul(get("tiles"));
  return r;
}

fs::path fold_dir(const fs::path& cell, int fold) { return cell / ("fold" + std::to_string(fold)); }

CellResult load_cell(const fs::path& cell) {
  CellResult c;
  c.config = ExperimentConfig::from_text(read_file(cell / "config.txt"));
  std::vector<std::pair<int, fs::path>> reports;
  for (const auto& entry : fs::directory_iterator(cell)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("fold", 0) != 0) continue;
    if (fs::exists(entry.path() / "report.csv")) reports.emplace_back(std::stoi(name.substr(4)), entry.path() / "report.csv");
  }
  std::sort(reports.begin(), reports.end());
  for (const auto& [k, path] : reports) c.folds.push_back(read_report_file(path));
  if (fs::exists(cell / "error.txt")) c.error = read_file(cell / "error.txt");
  return c;
}

auto canonical_key(const ExperimentConfig& c) {
  return std::make_tuple(static_cast<int>(c.mode), -c.tile_edge, static_cast<int>(c.loss),
                         !c.use_batch_norm, static_cast<int>(c.aug), c.base_filters, c.seed);
}

}  // namespace

GridSelector GridSelector::desk_scale() {
  GridSelector s;
  s.tile_edges = {256};
  s.base_filters = 16;
  return s;
}

std::vector<ExperimentConfig> enumerate_grid(const GridSelector& selector) {
  std::vector<ExperimentConfig> out;
  for (Mode mode : selector.modes)
    for (int edge : selector.tile_edges)
      for (LossKind loss : selector.losses)
        for (bool bn : selector.batch_norm)
          for (AugmentationLevel aug : selector.augs) {
            ExperimentConfig c;
            c.mode = mode;
            c.tile_edge = edge;
            c.aug = aug;
            c.loss = loss;
            c.use_batch_norm = bn;
            c.base_filters = selector.base_filters;
            c.batch_size = selector.batch_size;
            c.seed = selector.seed;
            out.push_back(c);
          }
  return out;
}

const std::vector<Tile>& TileSets::training_for(int edge, AugmentationLevel level) const {
  const auto it = training.find({edge, level});
  if (it == training.end()) {
    throw std::invalid_argument("no training tiles prepared for d=" + std::to_string(edge) +
                                " aug=" + to_string(level));
  }
  return it->second;
}

const std::vector<Tile>& TileSets::test_for(int edge) const {
  const auto it = test.find(edge);
  if (it == test.end()) throw std::invalid_argument("no test tiles prepared for d=" + std::to_string(edge));
  return it->second;
}

TileSets prepare_tile_sets(const std::vector<AnnotatedImage>& train_images,
                           const std::vector<AnnotatedImage>& test_images, const std::vector<int>& edges,
                           const std::vector<AugmentationLevel>& levels, std::uint64_t seed) {
  TileSets sets;
  for (int edge : edges) {
    for (AugmentationLevel level : levels) {
      sets.training[{edge, level}] =
          build_training_set(train_images, TileGeometry::for_level(edge, level), level,
                             derive_seed(seed, {static_cast<std::uint64_t>(edge), static_cast<std::uint64_t>(level)}));
    }
    sets.test[edge] = filter_wear_tiles(plain_tiles(test_images, TileGeometry::for_level(edge, AugmentationLevel::none)));
  }
  return sets;
}

int CellResult::failed_folds() const {
  return static_cast<int>(std::count_if(folds.begin(), folds.end(), [](const FoldRecord& f) { return f.failed; }));
}

fs::path cell_dir(const fs::path& run_dir, const ExperimentConfig& config) {
  return run_dir / "runs" / config.hash();
}

std::vector<CellResult> run_grid(const std::vector<ExperimentConfig>& configs, const TileSets& tiles,
                                 const GridOptions& options) {
  if (options.folds < 2) throw std::invalid_argument("grid: need at least 2 folds");
  if (!options.resume) {
    for (const auto& config : configs) {
      const fs::path cell = cell_dir(options.run_dir, config);
      if (fs::exists(cell / "config.txt")) {
        throw std::runtime_error("run directory already holds cell " + cell.string() +
                                 "; pass resume to continue it");
      }
    }
  }

  std::vector<CellResult> results;
  for (const auto& config : configs) {
    const fs::path cell = cell_dir(options.run_dir, config);
    fs::create_directories(cell);
    const std::string config_text = config.to_text();
    if (fs::exists(cell / "config.txt") && read_file(cell / "config.txt") != config_text) {
      throw std::runtime_error(cell.string() + ": config.txt does not match the requested configuration");
    }
    write_file_atomic(cell / "config.txt", config_text);
    fs::remove(cell / "error.txt");

    for (int k = 0; k < options.folds; ++k) {
      const fs::path dir = fold_dir(cell, k);
      if (fs::exists(dir / "report.csv")) continue;
      std::optional<FoldResult> trained;
      try {
        trained = run_cv_fold(config, options.protocol, tiles.training_for(config.tile_edge, config.aug),
                              tiles.test_for(config.tile_edge), options.folds, k);
      } catch (const std::exception& e) {
        write_file_atomic(cell / "error.txt", "fold " + std::to_string(k) + ": " + e.what() + "\n");
        break;
      }
      fs::create_directories(dir);
      save_checkpoint(dir / "checkpoint.bin", *trained->model);
      write_fold_history(dir / "history.csv", trained->fit.history);
      FoldRecord record;
      record.fold = k;
      record.failed = trained->fit.failed;
      record.attempts = trained->fit.attempts;
      record.best_val_loss = trained->fit.best_val_loss;
      record.best_epoch = trained->fit.best_epoch;
      record.report = trained->report.value_or(MetricReport{});
      write_fold_record(dir / "report.csv", record);
      trained.reset();
      if (options.on_fold_complete) options.on_fold_complete(config, k);
    }
    results.push_back(load_cell(cell));
  }
  return results;
}

std::vector<CellResult> load_grid_results(const fs::path& run_dir) {
  const fs::path runs = run_dir / "runs";
  if (!fs::is_directory(runs)) throw std::runtime_error("no runs directory under " + run_dir.string());
  std::vector<CellResult> cells;
  for (const auto& entry : fs::directory_iterator(runs)) {
    if (entry.is_directory() && fs::exists(entry.path() / "config.txt")) cells.push_back(load_cell(entry.path()));
  }
  std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
    return canonical_key(a.config) < canonical_key(b.config);
  });
  return cells;
}

void write_fold_record(const fs::path& path, const FoldRecord& record) {
  write_file_atomic(path, report_text(record));
}

FoldRecord read_fold_record(const fs::path& path) { return read_report_file(path); }

void write_fold_history(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "attempt,epoch,train_loss,val_loss,learning_rate\n";
  for (const auto& r : history) {
    out << r.attempt << ',' << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ','
        << fmt(r.learning_rate) << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<EpochRecord> read_fold_history(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field[5];
    for (auto& f : field) std::getline(row, f, ',');
    out.push_back({std::stoi(field[0]), std::stoi(field[1]), std::stod(field[2]), std::stod(field[3]),
                   std::stod(field[4])});
  }
  return out;
}

std::string grid_summary_csv(const std::vector<CellResult>& cells) {
  std::ostringstream out;
  out << "mode,loss,aug,bn,tile_edge,folds,failed_folds";
  for (const char* m : {"iou", "dice", "tpr", "tnr", "fnbgr_m", "fnbgr_a"}) out << ',' << m << "_median," << m << "_iqr";
  out << '\n';
  for (const auto& cell : cells) {
    const auto& c = cell.config;
    out << to_string(c.mode) << ',' << to_string(c.loss) << ',' << to_string(c.aug) << ','
        << (c.use_batch_norm ? "on" : "off") << ',' << c.tile_edge << ',' << cell.folds.size() << ','
        << cell.failed_folds();
    if (cell.folds.size() >= 2) {
      std::vector<MetricReport> reports;
      for (const auto& f : cell.folds) reports.push_back(f.report);
      const FoldSummary s = summarize_folds(reports);
      for (const MedianIqr& m : {s.iou, s.dice, s.tpr, s.tnr}) out << ',' << fmt(m.median) << ',' << fmt(m.iqr);
      for (const auto& m : {s.fnbgr_m, s.fnbgr_a}) {
        out << ',' << (m ? fmt(m->median) : "") << ',' << (m ? fmt(m->iqr) : "");
      }
    } else {
      out << std::string(12, ',');
    }
    out << '\n';
  }
  return out.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << contents;
    if (!f.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace wearseg
