#include "wearseg/expcli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace wearseg::expcli {
namespace {

constexpr LossKind kLossOrder[] = {LossKind::ce, LossKind::fce, LossKind::iou};
constexpr AugmentationLevel kAugOrder[] = {AugmentationLevel::full, AugmentationLevel::moderate,
                                           AugmentationLevel::none};

std::string loss_label(LossKind k) {
  switch (k) {
    case LossKind::ce: return "CE";
    case LossKind::fce: return "FCE";
    case LossKind::iou: return "IoU";
  }
  return "?";
}

std::string group_label(Mode mode, bool bn) { return to_string(mode) + (bn ? " + BN" : ""); }

std::optional<FoldSummary> summary_of(const CellResult& cell) {
  if (cell.folds.size() < 2) return std::nullopt;
  std::vector<MetricReport> reports;
  for (const auto& f : cell.folds) reports.push_back(f.report);
  return summarize_folds(reports);
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Rows in table order: mode, BN off before on, loss, augmentation full -> none.
std::vector<const CellResult*> table_rows(const std::vector<CellResult>& cells, int tile_edge) {
  std::vector<const CellResult*> rows;
  for (Mode mode : {Mode::binary, Mode::multiclass})
    for (bool bn : {false, true})
      for (LossKind loss : kLossOrder)
        for (AugmentationLevel aug : kAugOrder)
          for (const auto& c : cells) {
            const auto& k = c.config;
            if (k.tile_edge == tile_edge && k.mode == mode && k.use_batch_norm == bn && k.loss == loss &&
                k.aug == aug) {
              rows.push_back(&c);
            }
          }
  return rows;
}

std::vector<std::string> metric_cells(const CellResult& cell) {
  const auto s = summary_of(cell);
  if (!s) return std::vector<std::string>(6, "n/a");
  auto opt = [](const std::optional<MedianIqr>& m) { return m ? format_median_iqr(*m) : std::string("n/a"); };
  return {format_median_iqr(s->iou), format_median_iqr(s->dice), format_median_iqr(s->tpr),
          format_median_iqr(s->tnr), opt(s->fnbgr_m),             opt(s->fnbgr_a)};
}

std::string csv_quote(const std::string& s) { return "\"" + s + "\""; }

const char* kAugColors[] = {"#d95f02", "#1b9e77", "#7570b3"};  // full, moderate, none

std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<double> fold_ious(const CellResult& c) {
  std::vector<double> v;
  for (const auto& f : c.folds) v.push_back(f.report.iou);
  return v;
}

}  // namespace

std::string format_median_iqr(const MedianIqr& m) { return fmt3(m.median) + " (" + fmt3(m.iqr) + ")"; }

std::string results_table_markdown(const std::vector<CellResult>& cells, int tile_edge) {
  std::ostringstream out;
  out << "| mode | loss | train data aug. | IoU | Dice | TPR | TNR | FNBGR M | FNBGR A | failed folds |\n"
      << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const CellResult* c : table_rows(cells, tile_edge)) {
    out << "| " << group_label(c->config.mode, c->config.use_batch_norm) << " | " << loss_label(c->config.loss)
        << " | " << to_string(c->config.aug);
    for (const auto& m : metric_cells(*c)) out << " | " << m;
    out << " | " << c->failed_folds() << "/" << c->folds.size() << " |\n";
  }
  return out.str();
}

std::string results_table_csv(const std::vector<CellResult>& cells, int tile_edge) {
  std::ostringstream out;
  out << "mode,loss,aug,IoU,Dice,TPR,TNR,FNBGR M,FNBGR A,folds,failed_folds\n";
  for (const CellResult* c : table_rows(cells, tile_edge)) {
    out << csv_quote(group_label(c->config.mode, c->config.use_batch_norm)) << ',' << loss_label(c->config.loss)
        << ',' << to_string(c->config.aug);
    for (const auto& m : metric_cells(*c)) out << ',' << csv_quote(m);
    out << ',' << c->folds.size() << ',' << c->failed_folds() << '\n';
  }
  return out.str();
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("box_stats: no values");
  std::sort(values.begin(), values.end());
  BoxStats b;
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const double lo = b.q1 - 1.5 * (b.q3 - b.q1), hi = b.q3 + 1.5 * (b.q3 - b.q1);
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo || v > hi) {
      b.outliers.push_back(v);
      continue;
    }
    b.whisker_low = std::min(b.whisker_low, v);
    b.whisker_high = std::max(b.whisker_high, v);
  }
  return b;
}

std::string boxplot_panel_svg(const std::vector<CellResult>& cells, Mode mode, int tile_edge) {
  constexpr double kWidth = 480, kHeight = 320, kLeft = 50, kRight = 10, kTop = 30, kBottom = 60;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;

  std::vector<double> all;
  for (const auto& c : cells) {
    if (c.config.mode == mode && c.config.tile_edge == tile_edge) {
      const auto v = fold_ious(c);
      all.insert(all.end(), v.begin(), v.end());
    }
  }
  double y_lo = 0.0, y_hi = 1.0;
  if (!all.empty()) {
    y_lo = std::floor(*std::min_element(all.begin(), all.end()) * 20.0) / 20.0;
    y_hi = std::ceil(*std::max_element(all.begin(), all.end()) * 20.0) / 20.0;
    if (y_hi - y_lo < 0.05) y_hi = y_lo + 0.05;
  }
  auto ymap = [&](double v) { return kTop + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"12\">" << to_string(mode)
    << " model, tile edge " << tile_edge << " px</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y_lo + (y_hi - y_lo) * t / 4.0;
    s << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << svg_number(ymap(v)) << "\" y2=\""
      << svg_number(ymap(v)) << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << kLeft - 4 << "\" y=\"" << svg_number(ymap(v) + 3) << "\" text-anchor=\"end\">"
      << fmt3(v) << "</text>\n";
  }
  s << "<text x=\"12\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 12 " << kTop + plot_h / 2
    << ")\" text-anchor=\"middle\">IoU</text>\n";

  const double group_w = plot_w / 6.0, box_w = group_w / 4.0;
  int g = 0;
  for (LossKind loss : kLossOrder) {
    for (bool bn : {false, true}) {
      const double gx = kLeft + g * group_w;
      s << "<text x=\"" << svg_number(gx + group_w / 2) << "\" y=\"" << kHeight - kBottom + 14
        << "\" text-anchor=\"middle\">" << loss_label(loss) << (bn ? " + BN" : "") << "</text>\n";
      for (int a = 0; a < 3; ++a) {
        const CellResult* cell = nullptr;
        for (const auto& c : cells) {
          const auto& k = c.config;
          if (k.mode == mode && k.tile_edge == tile_edge && k.loss == loss && k.use_batch_norm == bn &&
              k.aug == kAugOrder[a]) {
            cell = &c;
          }
        }
        if (!cell || cell->folds.empty()) continue;
        const BoxStats b = box_stats(fold_ious(*cell));
        const double x0 = gx + box_w * (0.5 + a), xc = x0 + box_w / 2;
        s << "<line x1=\"" << svg_number(xc) << "\" x2=\"" << svg_number(xc) << "\" y1=\""
          << svg_number(ymap(b.whisker_low)) << "\" y2=\"" << svg_number(ymap(b.whisker_high))
          << "\" stroke=\"black\"/>\n"
          << "<rect class=\"box\" x=\"" << svg_number(x0 + 1) << "\" y=\"" << svg_number(ymap(b.q3)) << "\" width=\""
          << svg_number(box_w - 2) << "\" height=\"" << svg_number(std::max(0.5, ymap(b.q1) - ymap(b.q3)))
          << "\" fill=\"" << kAugColors[a] << "\" stroke=\"black\"/>\n"
          << "<line x1=\"" << svg_number(x0 + 1) << "\" x2=\"" << svg_number(x0 + box_w - 1) << "\" y1=\""
          << svg_number(ymap(b.median)) << "\" y2=\"" << svg_number(ymap(b.median))
          << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        for (double o : b.outliers) {
          s << "<circle cx=\"" << svg_number(xc) << "\" cy=\"" << svg_number(ymap(o))
            << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
        }
      }
      ++g;
    }
  }
  for (int a = 0; a < 3; ++a) {
    const double lx = kLeft + 10 + a * 110, ly = kHeight - 18;
    s << "<rect x=\"" << lx << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << kAugColors[a]
      << "\"/>\n<text x=\"" << lx + 14 << "\" y=\"" << ly << "\">aug: " << to_string(kAugOrder[a]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string boxplot_figure_svg(const std::vector<CellResult>& cells) {
  std::set<int, std::greater<>> edges;
  for (const auto& c : cells) edges.insert(c.config.tile_edge);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"" << 320 * edges.size() << "\">\n";
  int row = 0;
  for (int edge : edges) {
    int col = 0;
    for (Mode mode : {Mode::binary, Mode::multiclass}) {
      std::string panel = boxplot_panel_svg(cells, mode, edge);
      panel.replace(0, 4, "<svg x=\"" + std::to_string(480 * col) + "\" y=\"" + std::to_string(320 * row) + "\"");
      s << panel;
      ++col;
    }
    ++row;
  }
  s << "</svg>\n";
  return s.str();
}

std::optional<CellResult> best_config(const std::vector<CellResult>& cells, Mode mode, int tile_edge) {
  std::optional<CellResult> best;
  std::optional<FoldSummary> best_summary;
  for (const auto& c : cells) {
    if (c.config.mode != mode || c.config.tile_edge != tile_edge) continue;
    const auto s = summary_of(c);
    if (!s) continue;
    const bool better = !best_summary || s->iou.median > best_summary->iou.median ||
                        (s->iou.median == best_summary->iou.median && s->dice.median > best_summary->dice.median);
    if (better) {
      best = c;
      best_summary = s;
    }
  }
  return best;
}

std::string best_config_csv(const std::vector<CellResult>& cells) {
  std::set<int, std::greater<>> edges;
  for (const auto& c : cells) edges.insert(c.config.tile_edge);
  std::ostringstream out;
  out << "mode,tile_edge,loss,aug,bn,config_hash,IoU,Dice\n";
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    for (int edge : edges) {
      const auto b = best_config(cells, mode, edge);
      if (!b) continue;
      const auto s = *summary_of(*b);
      out << to_string(mode) << ',' << edge << ',' << loss_label(b->config.loss) << ',' << to_string(b->config.aug)
          << ',' << (b->config.use_batch_norm ? "on" : "off") << ',' << b->config.hash() << ','
          << csv_quote(format_median_iqr(s.iou)) << ',' << csv_quote(format_median_iqr(s.dice)) << '\n';
    }
  }
  return out.str();
}

std::vector<fs::path> write_report(const std::vector<CellResult>& cells, const fs::path& out_dir) {
  if (cells.empty()) throw std::invalid_argument("report: no completed grid cells");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& name, const std::string& text) {
    write_file_atomic(out_dir / name, text);
    written.push_back(out_dir / name);
  };
  std::set<int, std::greater<>> edges;
  for (const auto& c : cells) edges.insert(c.config.tile_edge);
  emit("summary.csv", grid_summary_csv(cells));
  for (int edge : edges) {
    const std::string e = std::to_string(edge);
    emit("table_d" + e + ".md", results_table_markdown(cells, edge));
    emit("table_d" + e + ".csv", results_table_csv(cells, edge));
    for (Mode mode : {Mode::binary, Mode::multiclass}) {
      emit("boxplot_" + to_string(mode) + "_d" + e + ".svg", boxplot_panel_svg(cells, mode, edge));
    }
  }
  emit("boxplots.svg", boxplot_figure_svg(cells));
  emit("best.csv", best_config_csv(cells));
  return written;
}

}  // namespace wearseg::expcli
