#pragma once

// Static SVG plots of a run: overhead trajectory, pose components against
// truth, and the planar gain block over time.

#include "smloc/harness.hpp"
#include "smloc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace smloc {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool equal_aspect = false;
};

namespace detail {

inline std::string fmt_tick(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

inline void draw_panel(std::ostringstream& svg, const Panel& p, double x0, double y0, double w, double h) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : p.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad_l = 60, pad_r = 10, pad_t = 24, pad_b = 34;
  const double pw = w - pad_l - pad_r, ph = h - pad_t - pad_b;
  if (p.equal_aspect) {
    const double sx = (xmax - xmin) / pw, sy = (ymax - ymin) / ph, s = std::max(sx, sy);
    const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    xmin = cx - 0.5 * s * pw, xmax = cx + 0.5 * s * pw;
    ymin = cy - 0.5 * s * ph, ymax = cy + 0.5 * s * ph;
  }
  auto X = [&](double v) { return x0 + pad_l + (v - xmin) / (xmax - xmin) * pw; };
  auto Y = [&](double v) { return y0 + pad_t + (ymax - v) / (ymax - ymin) * ph; };

  svg << "<rect x=\"" << x0 + pad_l << "\" y=\"" << y0 + pad_t << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  svg << "<text x=\"" << x0 + pad_l + pw / 2 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\" font-size=\"13\">"
      << p.title << "</text>\n";
  svg << "<text x=\"" << x0 + pad_l + pw / 2 << "\" y=\"" << y0 + h - 4
      << "\" text-anchor=\"middle\" font-size=\"11\">" << p.x_label << "</text>\n";
  svg << "<text x=\"" << x0 + 12 << "\" y=\"" << y0 + pad_t + ph / 2 << "\" font-size=\"11\" transform=\"rotate(-90 "
      << x0 + 12 << ' ' << y0 + pad_t + ph / 2 << ")\" text-anchor=\"middle\">" << p.y_label << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0, fy = ymin + (ymax - ymin) * i / 4.0;
    svg << "<text x=\"" << X(fx) << "\" y=\"" << y0 + pad_t + ph + 13 << "\" text-anchor=\"middle\" font-size=\"9\">"
        << fmt_tick(fx) << "</text>\n";
    svg << "<text x=\"" << x0 + pad_l - 4 << "\" y=\"" << Y(fy) + 3 << "\" text-anchor=\"end\" font-size=\"9\">"
        << fmt_tick(fy) << "</text>\n";
  }
  double ly = y0 + pad_t + 12;
  for (const auto& s : p.series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) svg << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << x0 + pad_l + pw - 4 << "\" y=\"" << ly << "\" text-anchor=\"end\" font-size=\"10\" fill=\""
        << s.color << "\">" << s.label << "</text>\n";
    ly += 12;
  }
}

}  // namespace detail

/// Lays panels out in a grid of `cols` columns.
inline std::string render_svg(const std::vector<Panel>& panels, std::size_t cols, double panel_w = 420,
                              double panel_h = 260) {
  cols = std::max<std::size_t>(1, cols);
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * panel_w << "\" height=\"" << rows * panel_h
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    detail::draw_panel(svg, panels[i], static_cast<double>(i % cols) * panel_w,
                       static_cast<double>(i / cols) * panel_h, panel_w, panel_h);
  }
  svg << "</svg>\n";
  return svg.str();
}

inline const char* filter_color(FilterKind k) { return k == FilterKind::IEKF ? "#1f77b4" : "#d62728"; }

inline Panel overhead_panel(const RunResult& res) {
  Panel p{"Overhead trajectory", "x [m]", "y [m]", {}, true};
  Series truth{"truth", "#000000", {}, {}};
  for (const auto& q : res.truth) {
    truth.x.push_back(q.p.x());
    truth.y.push_back(q.p.y());
  }
  p.series.push_back(truth);
  for (const auto& tr : res.tracks) {
    Series s{std::string(to_string(tr.kind)), filter_color(tr.kind), {}, {}};
    for (const auto& q : tr.pose) {
      s.x.push_back(q.p.x());
      s.y.push_back(q.p.y());
    }
    p.series.push_back(s);
  }
  return p;
}

/// x, y, z and Z-Y-X yaw, pitch, roll against truth.
inline std::vector<Panel> pose_panels(const RunResult& res) {
  static const char* names[] = {"x [m]", "y [m]", "z [m]", "yaw [deg]", "pitch [deg]", "roll [deg]"};
  auto component = [](const Pose& q, int c) {
    if (c < 3) return q.p(c);
    const auto e = euler_zyx(q.R);
    const double v = c == 3 ? e.yaw : c == 4 ? e.pitch : e.roll;
    return v * 180.0 / kPi;
  };
  std::vector<Panel> out;
  for (int c = 0; c < 6; ++c) {
    Panel p{names[c], "t [s]", names[c], {}, false};
    Series truth{"truth", "#000000", res.t, {}};
    for (const auto& q : res.truth) truth.y.push_back(component(q, c));
    p.series.push_back(truth);
    for (const auto& tr : res.tracks) {
      Series s{std::string(to_string(tr.kind)), filter_color(tr.kind), res.t, {}};
      for (const auto& q : tr.pose) s.y.push_back(component(q, c));
      p.series.push_back(s);
    }
    out.push_back(p);
  }
  return out;
}

/// Planar gain entries at each applied update.
inline std::vector<Panel> gain_panels(const RunResult& res) {
  std::vector<Panel> out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Panel p{std::string("K[") + kPlanarNames[i] + "," + kPlanarNames[j] + "]", "t [s]", "gain", {}, false};
      for (const auto& tr : res.tracks) {
        Series s{std::string(to_string(tr.kind)), filter_color(tr.kind), {}, {}};
        for (const auto& u : tr.updates) {
          if (!u.applied) continue;
          s.x.push_back(u.t);
          s.y.push_back(planar_gain(u.K)(i, j));
        }
        p.series.push_back(s);
      }
      out.push_back(p);
    }
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Writes result.csv, summary.csv, config.txt and the three plots into dir.
inline void emit_report(const RunResult& res, const ScenarioConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
  const fs::path d(dir);
  write_result_csv((d / "result.csv").string(), res);
  write_summary_csv((d / "summary.csv").string(), res);
  write_config((d / "config.txt").string(), cfg);
  write_text((d / "overhead.svg").string(), render_svg({overhead_panel(res)}, 1, 560, 520));
  write_text((d / "pose.svg").string(), render_svg(pose_panels(res), 2));
  write_text((d / "gains.svg").string(), render_svg(gain_panels(res), 3, 360, 240));
}

}  // namespace smloc
