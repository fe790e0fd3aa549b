#include "aelab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <utility>

#include "aelab/errors.hpp"

namespace aelab::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b",
                          "#17becf", "#7f7f7f", "#c8c8c8"};
constexpr int kPaletteSize = 9;
constexpr int kGray = 8;

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  double span() const { return hi - lo; }
  void pad(double frac) {
    if (!(hi > lo)) {  // degenerate or empty: open up a usable window
      const double c = (std::isfinite(lo) && std::isfinite(hi)) ? lo : 0.0;
      const double d = std::max(1e-12, std::abs(c) * 1e-3 + 0.5);
      lo = c - d;
      hi = c + d;
      return;
    }
    const double d = span() * frac;
    lo -= d;
    hi += d;
  }
};

/// Simple numeric CSV: leading '#' comment lines, a header, data rows.
struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError("plot: CSV has no column '" + name + "'");
  }

  double num(std::size_t r, std::size_t c) const {
    try {
      return std::stod(rows[r][c]);
    } catch (const std::exception&) {
      throw ParseError("plot: non-numeric cell '" + rows[r][c] + "'");
    }
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

Table parse_table(const std::string& csv) {
  Table t;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    const std::string line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    if (!have_header) {
      t.header = split_csv_line(line);
      have_header = true;
      continue;
    }
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw ParseError("plot: CSV row has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ParseError("plot: CSV has no header row");
  return t;
}

std::vector<double> column(const Table& t, const std::string& name) {
  const std::size_t c = t.col(name);
  std::vector<double> out(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) out[r] = t.num(r, c);
  return out;
}

}  // namespace

std::string render_plot(const std::vector<Series>& series,
                        const std::string& title, const std::string& x_label,
                        const std::string& y_label, int width, int height,
                        bool equal_aspect) {
  const double ml = 64, mr = 16, mt = 34, mb = 46;
  const double pw = width - ml - mr, ph = height - mt - mb;

  Range rx, ry;
  bool any = false;
  for (const Series& s : series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        rx = {s.x[i], s.x[i]};
        ry = {s.y[i], s.y[i]};
        any = true;
      } else {
        rx.lo = std::min(rx.lo, s.x[i]);
        rx.hi = std::max(rx.hi, s.x[i]);
        ry.lo = std::min(ry.lo, s.y[i]);
        ry.hi = std::max(ry.hi, s.y[i]);
      }
    }
  }
  rx.pad(0.04);
  ry.pad(0.04);
  if (equal_aspect) {
    // equalize data units per pixel, growing the tighter axis
    const double ux = rx.span() / pw, uy = ry.span() / ph;
    const double u = std::max(ux, uy);
    const double cx = 0.5 * (rx.lo + rx.hi), cy = 0.5 * (ry.lo + ry.hi);
    rx = {cx - 0.5 * u * pw, cx + 0.5 * u * pw};
    ry = {cy - 0.5 * u * ph, cy + 0.5 * u * ph};
  }

  auto px = [&](double x) { return ml + (x - rx.lo) / rx.span() * pw; };
  auto py = [&](double y) { return mt + ph - (y - ry.lo) / ry.span() * ph; };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(height) + "\">\n";
  out += "<rect width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"#ffffff\"/>\n";

  // gridlines and tick labels
  const int n_ticks = 5;
  for (int k = 0; k < n_ticks; ++k) {
    const double f = static_cast<double>(k) / (n_ticks - 1);
    const double xv = rx.lo + f * rx.span();
    const double yv = ry.lo + f * ry.span();
    out += "<line x1=\"" + fmt("%.2f", px(xv)) + "\" y1=\"" +
           fmt("%.2f", mt) + "\" x2=\"" + fmt("%.2f", px(xv)) + "\" y2=\"" +
           fmt("%.2f", mt + ph) + "\" stroke=\"#e8e8e8\"/>\n";
    out += "<line x1=\"" + fmt("%.2f", ml) + "\" y1=\"" +
           fmt("%.2f", py(yv)) + "\" x2=\"" + fmt("%.2f", ml + pw) +
           "\" y2=\"" + fmt("%.2f", py(yv)) + "\" stroke=\"#e8e8e8\"/>\n";
    out += "<text x=\"" + fmt("%.2f", px(xv)) + "\" y=\"" +
           fmt("%.2f", mt + ph + 16) +
           "\" font-family=\"monospace\" font-size=\"11\" "
           "text-anchor=\"middle\" fill=\"#333333\">" +
           escape_text(fmt("%.4g", xv)) + "</text>\n";
    out += "<text x=\"" + fmt("%.2f", ml - 6) + "\" y=\"" +
           fmt("%.2f", py(yv) + 4) +
           "\" font-family=\"monospace\" font-size=\"11\" "
           "text-anchor=\"end\" fill=\"#333333\">" +
           escape_text(fmt("%.4g", yv)) + "</text>\n";
  }
  out += "<rect x=\"" + fmt("%.2f", ml) + "\" y=\"" + fmt("%.2f", mt) +
         "\" width=\"" + fmt("%.2f", pw) + "\" height=\"" + fmt("%.2f", ph) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";

  // series
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color =
        kPalette[(s.color >= 0 ? s.color : static_cast<int>(si)) %
                 kPaletteSize];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.line) {
      std::string pts;
      auto flush = [&]() {
        if (pts.empty()) return;
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" +
               std::string(color) + "\" stroke-width=\"1.5\"/>\n";
        pts.clear();
      };
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
          flush();  // break the polyline at gaps
          continue;
        }
        if (!pts.empty()) pts += ' ';
        pts += fmt("%.2f", px(s.x[i])) + "," + fmt("%.2f", py(s.y[i]));
      }
      flush();
    }
    if (s.point_radius > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out += "<circle cx=\"" + fmt("%.2f", px(s.x[i])) + "\" cy=\"" +
               fmt("%.2f", py(s.y[i])) + "\" r=\"" +
               fmt("%.2f", s.point_radius) + "\" fill=\"" +
               std::string(color) + "\" fill-opacity=\"0.75\"/>\n";
      }
    }
  }

  // legend, top-right inside the frame
  std::size_t n_legend = 0, label_max = 0;
  for (const Series& s : series)
    if (!s.label.empty()) {
      ++n_legend;
      label_max = std::max(label_max, s.label.size());
    }
  if (n_legend > 0) {
    const double lw = 34 + 7.2 * static_cast<double>(label_max);
    const double lh = 8 + 18.0 * static_cast<double>(n_legend);
    const double lx = ml + pw - lw - 8, ly = mt + 8;
    out += "<rect x=\"" + fmt("%.2f", lx) + "\" y=\"" + fmt("%.2f", ly) +
           "\" width=\"" + fmt("%.2f", lw) + "\" height=\"" +
           fmt("%.2f", lh) +
           "\" fill=\"#ffffff\" fill-opacity=\"0.85\" stroke=\"#cccccc\"/>\n";
    std::size_t row = 0;
    for (std::size_t si = 0; si < series.size(); ++si) {
      const Series& s = series[si];
      if (s.label.empty()) continue;
      const char* color =
          kPalette[(s.color >= 0 ? s.color : static_cast<int>(si)) %
                   kPaletteSize];
      const double yy = ly + 17 + 18.0 * static_cast<double>(row);
      out += "<line x1=\"" + fmt("%.2f", lx + 6) + "\" y1=\"" +
             fmt("%.2f", yy - 4) + "\" x2=\"" + fmt("%.2f", lx + 24) +
             "\" y2=\"" + fmt("%.2f", yy - 4) + "\" stroke=\"" +
             std::string(color) + "\" stroke-width=\"3\"/>\n";
      out += "<text x=\"" + fmt("%.2f", lx + 28) + "\" y=\"" +
             fmt("%.2f", yy) +
             "\" font-family=\"monospace\" font-size=\"12\" "
             "fill=\"#333333\">" +
             escape_text(s.label) + "</text>\n";
      ++row;
    }
  }

  // title and axis labels
  out += "<text x=\"" + fmt("%.2f", ml + pw / 2) + "\" y=\"20\" "
         "font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\" "
         "fill=\"#111111\">" +
         escape_text(title) + "</text>\n";
  out += "<text x=\"" + fmt("%.2f", ml + pw / 2) + "\" y=\"" +
         fmt("%.2f", mt + ph + 36) +
         "\" font-family=\"monospace\" font-size=\"12\" "
         "text-anchor=\"middle\" fill=\"#111111\">" +
         escape_text(x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + fmt("%.2f", mt + ph / 2) +
         "\" font-family=\"monospace\" font-size=\"12\" "
         "text-anchor=\"middle\" fill=\"#111111\" transform=\"rotate(-90 16 " +
         fmt("%.2f", mt + ph / 2) + ")\">" +
         escape_text(y_label) + "</text>\n";
  out += "</svg>\n";
  return out;
}

std::string run_csv_to_svg(const std::string& csv) {
  const Table t = parse_table(csv);
  const std::vector<double> it = column(t, "iteration");
  std::vector<Series> series;
  series.push_back({"train rmse", it, column(t, "train_rmse"), true, 0.0, 0});
  series.push_back({"test rmse", it, column(t, "test_rmse"), true, 0.0, 1});
  return render_plot(series, "reconstruction error", "iteration", "rmse");
}

std::string scatter_csv_to_svg(const std::string& csv) {
  const Table t = parse_table(csv);
  std::vector<Series> series;
  series.push_back(
      {"data", column(t, "x0"), column(t, "x1"), false, 2.0, kGray});
  series.push_back({"reconstruction", column(t, "r0"), column(t, "r1"), false,
                    2.0, 1});
  return render_plot(series, "reconstruction scatter", "x0", "x1", 560, 560,
                     true);
}

std::string grid_csv_to_svg(const std::string& csv) {
  const Table t = parse_table(csv);
  const std::size_t ck = t.col("kind"), cidx = t.col("k");
  const std::size_t cx0 = t.col("x0"), cx1 = t.col("x1");
  const std::size_t cm0 = t.col("m0"), cm1 = t.col("m1");

  // rows arrive polyline by polyline; split on (kind, k) changes
  std::vector<Series> series;
  std::string cur_key;
  Series* orig = nullptr;
  Series* mapped = nullptr;
  bool first_ray = true, first_circle = true;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string key = t.rows[r][ck] + ":" + t.rows[r][cidx];
    if (key != cur_key) {
      cur_key = key;
      const bool is_ray = t.rows[r][ck] == "ray";
      series.push_back({"", {}, {}, true, 0.0, kGray});
      orig = &series.back();
      std::string label;
      if (is_ray && first_ray) {
        label = "rays (mapped)";
        first_ray = false;
      } else if (!is_ray && first_circle) {
        label = "circles (mapped)";
        first_circle = false;
      }
      series.push_back({label, {}, {}, true, 0.0, is_ray ? 0 : 1});
      mapped = &series.back();
    }
    orig->x.push_back(t.num(r, cx0));
    orig->y.push_back(t.num(r, cx1));
    mapped->x.push_back(t.num(r, cm0));
    mapped->y.push_back(t.num(r, cm1));
  }
  return render_plot(series, "deformed polar grid", "x0", "x1", 560, 560,
                     true);
}

std::string shapes_csv_to_svg(const std::string& csv) {
  const Table t = parse_table(csv);
  const std::vector<double> tt = column(t, "t");
  std::vector<Series> series;
  int c = 0;
  for (const char* name : {"residual_sq", "ortho", "normalized", "total_ortho",
                           "total_normalized"}) {
    series.push_back({name, tt, column(t, name), true, 0.0, c});
    ++c;
  }
  std::string title = "penalty landscape";
  const std::string tag = "# meta: ";
  if (!t.comments.empty() && t.comments[0].rfind(tag, 0) == 0)
    title += ", " + t.comments[0].substr(tag.size());
  return render_plot(series, title, "t", "value");
}

std::string gnorm_csv_to_svg(const std::string& csv) {
  const Table t = parse_table(csv);
  std::vector<Series> series;
  series.push_back({"log10 gradient norm", column(t, "step"),
                    column(t, "log10_grad_norm"), true, 0.0, 0});
  return render_plot(series, "gradient norm descent", "accepted step",
                     "log10 |grad f|");
}

}  // namespace aelab::svg
