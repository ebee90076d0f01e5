#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"
#include "wearseg/expcli/commands.hpp"
#include "wearseg/expcli/overlay.hpp"
#include "wearseg/expcli/report.hpp"
#include "wearseg/expcli/tileset_io.hpp"
#include "wearseg/image_io.hpp"

using namespace wearseg;
using namespace wearseg::expcli;
using wearseg::testing::TempDir;

namespace {

CellResult cell(Mode mode, LossKind loss, bool bn, AugmentationLevel aug, std::vector<double> ious) {
  CellResult c;
  c.config.mode = mode;
  c.config.loss = loss;
  c.config.use_batch_norm = bn;
  c.config.aug = aug;
  c.config.tile_edge = 256;
  for (std::size_t k = 0; k < ious.size(); ++k) {
    FoldRecord f;
    f.fold = static_cast<int>(k);
    f.report.iou = ious[k];
    f.report.dice = 2 * ious[k] / (1 + ious[k]);
    f.report.tpr = f.report.tnr = 0.9;
    c.folds.push_back(f);
  }
  return c;
}

std::vector<CellResult> full_desk_grid() {
  std::vector<CellResult> cells;
  double base = 0.5;
  for (const auto& c : enumerate_grid(GridSelector::desk_scale())) {
    base += 0.01;
    CellResult r = cell(c.mode, c.loss, c.use_batch_norm, c.aug, {base, base + 0.02, base - 0.01, base + 0.01, base});
    r.config = c;
    cells.push_back(r);
  }
  return cells;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "wearseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

}  // namespace

TEST(Report, FormatsMedianIqr) {
  EXPECT_EQ(format_median_iqr({0.8884, 0.0061}), "0.888 (0.006)");
  EXPECT_EQ(format_median_iqr({1.0, 0.0}), "1.000 (0.000)");
}

TEST(Report, BoxStats) {
  const BoxStats b = box_stats({0.8, 0.82, 0.84, 0.86, 0.88});
  EXPECT_DOUBLE_EQ(b.median, 0.84);
  EXPECT_DOUBLE_EQ(b.q1, 0.82);
  EXPECT_DOUBLE_EQ(b.q3, 0.86);
  EXPECT_DOUBLE_EQ(b.whisker_low, 0.8);
  EXPECT_DOUBLE_EQ(b.whisker_high, 0.88);
  EXPECT_TRUE(b.outliers.empty());
  const BoxStats o = box_stats({0.8, 0.81, 0.82, 0.83, 0.2});
  ASSERT_EQ(o.outliers.size(), 1u);
  EXPECT_EQ(o.outliers[0], 0.2);
  EXPECT_EQ(o.whisker_low, 0.8);
}

TEST(Report, BestConfigBreaksTiesByDice) {
  auto a = cell(Mode::binary, LossKind::ce, true, AugmentationLevel::none, {0.8, 0.8, 0.8});
  auto b = cell(Mode::binary, LossKind::iou, true, AugmentationLevel::none, {0.8, 0.8, 0.8});
  for (auto& f : b.folds) f.report.dice += 0.01;
  auto c = cell(Mode::multiclass, LossKind::fce, false, AugmentationLevel::full, {0.9, 0.9, 0.9});
  const auto best = best_config({a, b, c}, Mode::binary, 256);
  ASSERT_TRUE(best);
  EXPECT_EQ(best->config.loss, LossKind::iou);
  EXPECT_FALSE(best_config({a, b, c}, Mode::binary, 512));
  EXPECT_EQ(best_config({a, b, c}, Mode::multiclass, 256)->config.loss, LossKind::fce);
}

TEST(Report, TableRowOrder) {
  const auto md = results_table_markdown(full_desk_grid(), 256);
  std::vector<std::string> rows;
  std::istringstream in(md);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("| binary", 0) == 0 || line.rfind("| multiclass", 0) == 0) rows.push_back(line);
  ASSERT_EQ(rows.size(), 36u);
  EXPECT_EQ(rows[0].find("+ BN"), std::string::npos);
  EXPECT_NE(rows[0].find("| CE"), std::string::npos);
  EXPECT_NE(rows[0].find("| full"), std::string::npos);
  EXPECT_NE(rows[2].find("| none"), std::string::npos);
  EXPECT_NE(rows[3].find("| FCE"), std::string::npos);
  EXPECT_NE(rows[9].find("binary + BN"), std::string::npos);
  EXPECT_EQ(rows[18].rfind("| multiclass", 0), 0u);
  EXPECT_NE(md.find("(0.010)"), std::string::npos);
}

TEST(Report, BoxplotPanelsCoverEveryCell) {
  const auto cells = full_desk_grid();
  const auto svg = boxplot_panel_svg(cells, Mode::binary, 256);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t boxes = 0;
  for (auto pos = svg.find("class=\"box\""); pos != std::string::npos; pos = svg.find("class=\"box\"", pos + 1)) ++boxes;
  EXPECT_EQ(boxes, 18u);
  const auto fig = boxplot_figure_svg(cells);
  EXPECT_NE(fig.find("binary"), std::string::npos);
  EXPECT_NE(fig.find("multiclass"), std::string::npos);
}

TEST(Report, WritesAllArtifacts) {
  TempDir dir("report");
  const auto paths = write_report(full_desk_grid(), dir.path());
  for (const char* name : {"summary.csv", "table_d256.md", "table_d256.csv", "boxplot_binary_d256.svg",
                           "boxplot_multiclass_d256.svg", "boxplots.svg", "best.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  EXPECT_EQ(paths.size(), 7u);
  EXPECT_THROW(write_report({}, dir.path()), std::invalid_argument);
}

TEST(Overlay, ColorsByClass) {
  Image img(1, 3, 3, 0.0f);
  Mask m(1, 3, 1);
  m.at(0, 1) = 1;
  m.at(0, 2) = 2;
  const Image multi = render_overlay(img, m, Mode::multiclass);
  EXPECT_EQ(multi.at(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(multi.at(0, 1, 2), 0.425f);
  EXPECT_FLOAT_EQ(multi.at(0, 2, 0), 0.475f);
  const Image gray = render_overlay(Image(1, 3, 1, 1.0f), collapse_to_binary(m), Mode::binary);
  EXPECT_EQ(gray.channels(), 3);
  EXPECT_FLOAT_EQ(gray.at(0, 1, 0), 0.95f);
  EXPECT_FLOAT_EQ(gray.at(0, 1, 1), 0.575f);
  EXPECT_FLOAT_EQ(gray.at(0, 0, 1), 1.0f);
}

TEST(TileSetIo, RoundTrip) {
  TempDir dir("tileset");
  const auto tiles = wearseg::testing::band_tiles(3, 16, 2, 3);
  std::vector<Tile> quantized = tiles;
  quantized[1].provenance.level = AugmentationLevel::full;
  quantized[1].provenance.augmentation = AugmentationSpec{12.5, 0.1, -0.05, 1.1, 0.9, 1.5, 99};
  write_tile_set(dir / "set", quantized);
  const auto back = read_tile_set(dir / "set");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].mask, tiles[i].mask);
    EXPECT_EQ(back[i].provenance.source_id, tiles[i].provenance.source_id);
    for (std::size_t v = 0; v < tiles[i].pixels.size(); ++v)
      EXPECT_NEAR(back[i].pixels.values()[v], tiles[i].pixels.values()[v], 0.5 / 255 + 1e-6);
  }
  EXPECT_EQ(back[1].provenance.augmentation, quantized[1].provenance.augmentation);
  EXPECT_EQ(training_set_name(256, AugmentationLevel::none), "d256_none");
  EXPECT_EQ(test_set_name(512), "d512_test");
}

TEST(Cli, UsageErrors) {
  std::string text;
  EXPECT_NE(run({}, &text), 0);
  EXPECT_NE(run({"train", "--tiles", "x"}, &text), 0);
  EXPECT_NE(run({"train", "--tiles", "x", "--out", "y", "--tile-edge", "300"}, &text), 0);
  EXPECT_NE(run({"train", "--tiles", "x", "--out", "y", "--bn", "--no-bn"}, &text), 0);
  EXPECT_EQ(run({"prepare", "--corpus", "/nonexistent/manifest.jsonl", "--out", "/tmp/x"}, &text), 1);
  EXPECT_NE(text.find("error:"), std::string::npos);
}

TEST(Cli, EndToEnd) {
  TempDir dir("cli");
  const std::string corpus = (dir / "corpus").string(), prepared = (dir / "prepared").string();
  const std::string runs = (dir / "runs").string();
  std::string text;
  ASSERT_EQ(run({"synth", "--out", corpus, "--count", "3", "--height", "512", "--width", "768", "--seed", "2"}, &text), 0)
      << text;
  const std::string manifest = corpus + "/manifest.jsonl";
  ASSERT_EQ(run({"prepare", "--corpus", manifest, "--out", prepared, "--n-test", "1", "--desk-scale"}, &text), 0)
      << text;
  EXPECT_TRUE(std::filesystem::exists(dir / "prepared/tiles/d256_none"));
  EXPECT_TRUE(std::filesystem::exists(dir / "prepared/tiles/d256_test"));
  ASSERT_EQ(run({"prepare", "--corpus", manifest, "--out", prepared, "--n-test", "1", "--desk-scale"}, &text), 0);
  EXPECT_NE(text.find("up to date"), std::string::npos);

  ASSERT_EQ(run({"train", "--tiles", prepared, "--out", runs, "--desk-scale", "--mode", "binary", "--aug", "none",
                 "--loss", "iou", "--no-bn", "--base-filters", "4", "--batch-size", "4", "--max-epochs", "1",
                 "--max-retries", "0", "--seed", "1"},
                &text),
            0)
      << text;
  std::filesystem::path checkpoint;
  for (const auto& e : std::filesystem::directory_iterator(dir / "runs/final")) checkpoint = e.path() / "checkpoint.bin";
  ASSERT_TRUE(std::filesystem::exists(checkpoint));
  for (const char* f : {"config.txt", "manifest.json", "history.csv", "report.csv"})
    EXPECT_TRUE(std::filesystem::exists(checkpoint.parent_path() / f)) << f;

  ASSERT_EQ(run({"evaluate", "--checkpoint", checkpoint.string(), "--tiles", prepared}, &text), 0) << text;
  EXPECT_NE(text.find("iou="), std::string::npos);

  const auto ids = read_manifest(manifest);
  ASSERT_EQ(run({"predict", "--checkpoint", checkpoint.string(), "--corpus", manifest, "--id", ids[0].id, "--out",
                 (dir / "pred").string()},
                &text),
            0)
      << text;
  EXPECT_NE(text.find("full-image IoU"), std::string::npos);
  const Mask classes = read_mask(dir / "pred" / (ids[0].id + "_classes.png"));
  EXPECT_EQ(classes.height(), 512);
  EXPECT_EQ(classes.width(), 768);
  EXPECT_TRUE(std::filesystem::exists(dir / "pred" / (ids[0].id + "_overlay.png")));
}
