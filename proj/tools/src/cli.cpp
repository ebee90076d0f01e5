#include <exception>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "wearseg/expcli/commands.hpp"

namespace wearseg::expcli {
namespace {

const std::map<std::string, Mode> kModes{{"binary", Mode::binary}, {"multiclass", Mode::multiclass}};
const std::map<std::string, AugmentationLevel> kAugs{{"none", AugmentationLevel::none},
                                                     {"moderate", AugmentationLevel::moderate},
                                                     {"full", AugmentationLevel::full}};
const std::map<std::string, LossKind> kLosses{{"ce", LossKind::ce}, {"fce", LossKind::fce}, {"iou", LossKind::iou}};

struct AxisFlags {
  std::string mode, aug, loss;
  int tile_edge = 0;
  bool bn = false, no_bn = false;

  void attach(CLI::App* app) {
    app->add_option("--mode", mode, "binary or multiclass")->check(CLI::IsMember({"binary", "multiclass"}));
    app->add_option("--tile-edge", tile_edge, "tile edge d")->check(CLI::IsMember({256, 512}));
    app->add_option("--aug", aug, "augmentation level")->check(CLI::IsMember({"none", "moderate", "full"}));
    app->add_option("--loss", loss, "loss function")->check(CLI::IsMember({"ce", "fce", "iou"}));
    auto* on = app->add_flag("--bn", bn, "use batch normalization");
    app->add_flag("--no-bn", no_bn, "disable batch normalization")->excludes(on);
  }

  AxisFilter filter() const {
    AxisFilter f;
    if (!mode.empty()) f.mode = kModes.at(mode);
    if (tile_edge) f.tile_edge = tile_edge;
    if (!aug.empty()) f.aug = kAugs.at(aug);
    if (!loss.empty()) f.loss = kLosses.at(loss);
    if (bn) f.batch_norm = true;
    if (no_bn) f.batch_norm = false;
    return f;
  }
};

template <class T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wear segmentation experiments: tiling, augmentation, U-Net training and evaluation"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic annotated corpus");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--count", synth.count, "number of images");
  s->add_option("--height", synth.height, "image height");
  s->add_option("--width", synth.width, "image width");
  s->add_option("--channels", synth.channels, "1 or 3")->check(CLI::IsMember({1, 3}));
  s->add_option("--seed", synth.seed, "generator seed");

  PrepareOptions prep;
  auto* p = app.add_subcommand("prepare", "cut the training and test tile sets");
  p->add_option("--corpus", prep.corpus, "corpus manifest (manifest.jsonl)")->required();
  p->add_option("--out", prep.out, "prepared directory")->required();
  p->add_option("--n-test", prep.n_test, "images held out as test set");
  p->add_option("--seed", prep.seed, "split and augmentation seed");
  p->add_flag("--desk-scale", prep.desk_scale, "tile edge 256 only");
  p->add_flag("--force", prep.force, "rebuild even when up to date");

  TrainOptions train;
  AxisFlags train_axes;
  std::string config_file;
  auto* t = app.add_subcommand("train", "train one configuration on 90% of the training tiles");
  t->add_option("--tiles", train.tiles, "prepared directory")->required();
  t->add_option("--out", train.out, "run directory")->required();
  t->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
  train_axes.attach(t);
  optional_option(t, "--batch-size", train.batch_size, "tiles per optimizer step");
  optional_option(t, "--base-filters", train.base_filters, "filters of the first encoder level");
  optional_option(t, "--seed", train.seed, "experiment seed");
  optional_option(t, "--max-epochs", train.protocol.max_epochs, "epoch cap");
  optional_option(t, "--max-retries", train.protocol.max_retries, "re-initializations after a failed run");
  t->add_flag("--desk-scale", train.desk_scale, "d=256 and 16 base filters unless overridden");

  GridCommandOptions grid;
  AxisFlags grid_axes;
  auto* g = app.add_subcommand("grid", "cross-validate every configuration of the grid");
  g->add_option("--tiles", grid.tiles, "prepared directory")->required();
  g->add_option("--out", grid.out, "run directory")->required();
  grid_axes.attach(g);
  optional_option(g, "--batch-size", grid.batch_size, "tiles per optimizer step");
  optional_option(g, "--base-filters", grid.base_filters, "filters of the first encoder level");
  g->add_option("--folds", grid.folds, "cross-validation folds");
  g->add_option("--seed", grid.seed, "experiment seed");
  optional_option(g, "--max-epochs", grid.protocol.max_epochs, "epoch cap");
  optional_option(g, "--max-retries", grid.protocol.max_retries, "re-initializations after a failed run");
  g->add_flag("--desk-scale", grid.desk_scale, "d=256 and 16 base filters");
  g->add_flag("--resume", grid.resume, "continue an interrupted run, skipping completed folds");

  PredictOptions pred;
  std::string pred_corpus, pred_id, pred_image, pred_mask;
  auto* pr = app.add_subcommand("predict", "stitched full-image prediction with overlay");
  pr->add_option("--checkpoint", pred.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--corpus", pred_corpus, "corpus manifest")->check(CLI::ExistingFile);
  pr->add_option("--id", pred_id, "image id within the corpus");
  pr->add_option("--image", pred_image, "image file")->check(CLI::ExistingFile);
  pr->add_option("--mask", pred_mask, "ground-truth mask for --image")->check(CLI::ExistingFile);
  pr->add_option("--out", pred.out, "output directory")->required();

  EvaluateOptions eval;
  auto* e = app.add_subcommand("evaluate", "score a checkpoint on the prepared test tiles");
  e->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--tiles", eval.tiles, "prepared directory")->required();

  ReportOptions rep;
  std::string rep_out;
  auto* r = app.add_subcommand("report", "tables, boxplots and best configurations of a grid run");
  r->add_option("--run", rep.run_dir, "grid run directory")->required();
  r->add_option("--out", rep_out, "report directory (default <run>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*p) return cmd_prepare(prep, out);
    if (*t) {
      train.axes = train_axes.filter();
      if (!config_file.empty()) train.config_file = config_file;
      return cmd_train(train, out);
    }
    if (*g) {
      grid.axes = grid_axes.filter();
      return cmd_grid(grid, out);
    }
    if (*pr) {
      if (!pred_corpus.empty()) pred.corpus = pred_corpus;
      if (!pred_id.empty()) pred.id = pred_id;
      if (!pred_image.empty()) pred.image = pred_image;
      if (!pred_mask.empty()) pred.mask = pred_mask;
      return cmd_predict(pred, out);
    }
    if (*e) return cmd_evaluate(eval, out);
    if (*r) {
      if (!rep_out.empty()) rep.out = rep_out;
      return cmd_report(rep, out);
    }
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace wearseg::expcli
