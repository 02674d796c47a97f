#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "margot/runner.hpp"

namespace margot {

namespace {

constexpr double kCanvas = 640.0;
constexpr double kMargin = 40.0;
constexpr double kPane = kCanvas - 2.0 * kMargin;

const std::array<const char*, 7> kNodePalette = {
    "#4c72b0", "#dd8452", "#55a35c", "#c44e52",
    "#8172b3", "#937860", "#da8bc3"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct Frame {
  double lo0, hi0, lo1, hi1;

  double px(double x) const { return kMargin + (x - lo0) / (hi0 - lo0) * kPane; }
  double py(double y) const {
    return kMargin + (hi1 - y) / (hi1 - lo1) * kPane;
  }
};

Frame make_frame(const Eigen::MatrixXd& X) {
  Frame f{X.col(0).minCoeff(), X.col(0).maxCoeff(), X.col(1).minCoeff(),
          X.col(1).maxCoeff()};
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double p = span > 0.0 ? 0.08 * span : 0.5;
    lo -= p;
    hi += p;
  };
  pad(f.lo0, f.hi0);
  pad(f.lo1, f.hi1);
  return f;
}

/// Clips the line w'x + b = c to the frame box; false when it misses.
bool clip_line(const Eigen::VectorXd& w, double b, double c, const Frame& f,
               std::array<double, 4>& seg) {
  std::vector<std::pair<double, double>> pts;
  const double tol =
      1e-9 * std::max({1.0, std::abs(f.hi0 - f.lo0), std::abs(f.hi1 - f.lo1)});
  auto push = [&](double x, double y) {
    for (const auto& p : pts)
      if (std::abs(p.first - x) <= tol && std::abs(p.second - y) <= tol) return;
    pts.emplace_back(x, y);
  };
  if (std::abs(w(1)) > 1e-14) {
    for (double x : {f.lo0, f.hi0}) {
      const double y = (c - b - w(0) * x) / w(1);
      if (y >= f.lo1 - tol && y <= f.hi1 + tol) push(x, y);
    }
  }
  if (std::abs(w(0)) > 1e-14) {
    for (double y : {f.lo1, f.hi1}) {
      const double x = (c - b - w(1) * y) / w(0);
      if (x >= f.lo0 - tol && x <= f.hi0 + tol) push(x, y);
    }
  }
  if (pts.size() < 2) return false;
  std::sort(pts.begin(), pts.end());
  seg = {pts.front().first, pts.front().second, pts.back().first,
         pts.back().second};
  return true;
}

void append_line(std::string& svg, const Frame& f, const std::array<double, 4>& seg,
                 const char* color, double width, bool dashed) {
  svg += "<line x1=\"" + num(f.px(seg[0])) + "\" y1=\"" + num(f.py(seg[1])) +
         "\" x2=\"" + num(f.px(seg[2])) + "\" y2=\"" + num(f.py(seg[3])) +
         "\" stroke=\"" + color + "\" stroke-width=\"" + num(width) + "\"";
  if (dashed) svg += " stroke-dasharray=\"6 4\"";
  svg += "/>\n";
}

}  // namespace

std::string plot_2d_svg(const TreeClassifier& clf, const Dataset& data) {
  if (clf.num_features() != 2 || data.cols() != 2)
    throw std::invalid_argument("plot: requires exactly two features");
  data.validate();

  const Frame frame = make_frame(data.X);
  std::string svg;
  svg +=
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
      "viewBox=\"0 0 640 640\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
  svg += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" +
         num(kPane) + "\" height=\"" + num(kPane) +
         "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";

  for (int t = 0; t < clf.topology.num_branch(); ++t) {
    const Eigen::VectorXd w = clf.weights.row(t).transpose();
    if (w.lpNorm<Eigen::Infinity>() <= 1e-8) continue;
    const char* color = kNodePalette[static_cast<std::size_t>(t) %
                                     kNodePalette.size()];
    std::array<double, 4> seg;
    if (clip_line(w, clf.intercepts(t), 0.0, frame, seg))
      append_line(svg, frame, seg, color, 2.0, false);
    if (clf.topology.is_last_level(t)) {
      for (double c : {-1.0, 1.0})
        if (clip_line(w, clf.intercepts(t), c, frame, seg))
          append_line(svg, frame, seg, color, 1.0, true);
    }
  }

  for (long i = 0; i < data.rows(); ++i) {
    const char* fill = data.y(i) > 0 ? "#d95f02" : "#1f78b4";
    svg += "<circle cx=\"" + num(frame.px(data.X(i, 0))) + "\" cy=\"" +
           num(frame.py(data.X(i, 1))) + "\" r=\"3.5\" fill=\"" + fill +
           "\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void plot_2d(const TreeClassifier& clf, const Dataset& data,
             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << plot_2d_svg(clf, data);
}

}  // namespace margot
