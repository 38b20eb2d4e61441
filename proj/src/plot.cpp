#include "trajflow/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "trajflow/errors.hpp"

namespace trajflow {

namespace {

const char* kPalette[] = {"#e08a00", "#2a9d4b", "#9b4dca", "#c2185b", "#00838f", "#8d6e63", "#7cb342", "#5c6bc0"};
constexpr const char* kBest = "#1f4fff";
constexpr const char* kTruth = "#d62728";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct View {
  double x0, y0, s, ox, oy;
  double px(double x) const { return ox + (x - x0) * s; }
  double py(double y) const { return oy - (y - y0) * s; }
};

std::string polyline(const View& v, const Eigen::MatrixXd& pts, const std::string& style) {
  std::string d;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) d += num(v.px(pts(i, 0))) + "," + num(v.py(pts(i, 1))) + " ";
  return "<polyline fill=\"none\" points=\"" + d + "\" " + style + "/>\n";
}

}  // namespace

std::string render_svg(const Scene& scene, const PredictionSet& preds, const PlotOptions& opt) {
  if (preds.size() == 0) throw DataError("plot: empty prediction set");
  const int panel = opt.width * 3 / 4;

  // Extent from the ego, the ground truth and the predictions.
  Eigen::Vector2d lo(0.0, 0.0);
  Eigen::Vector2d hi(0.0, 0.0);
  auto grow = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      lo = lo.cwiseMin(m.row(i).head<2>().transpose());
      hi = hi.cwiseMax(m.row(i).head<2>().transpose());
    }
  };
  grow(scene.future.waypoints);
  for (const auto& t : preds.trajectories) grow(t.waypoints);
  lo.array() -= opt.margin;
  hi.array() += opt.margin;
  const double s = std::min(panel / (hi.x() - lo.x()), opt.height / (hi.y() - lo.y()));
  const double used_w = (hi.x() - lo.x()) * s;
  const double used_h = (hi.y() - lo.y()) * s;
  const View v{lo.x(), lo.y(), s, (panel - used_w) / 2.0, opt.height - (opt.height - used_h) / 2.0};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
    << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<clipPath id=\"scene\"><rect width=\"" << panel << "\" height=\"" << opt.height << "\"/></clipPath>\n";
  o << "<g clip-path=\"url(#scene)\">\n";

  for (const auto& pl : scene.context.map) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < pl.valid.size(); ++i) {
      if (pl.valid[i]) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.size() < 2) continue;
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = pl.points.block<1, 2>(rows[i], 0);
    std::string style;
    switch (pl.type) {
      case PolylineType::lane: style = "stroke=\"#b0b0b0\" stroke-width=\"1.2\" stroke-dasharray=\"6,4\""; break;
      case PolylineType::edge: style = "stroke=\"#555555\" stroke-width=\"1.6\""; break;
      case PolylineType::sidewalk: style = "stroke=\"#cfc6a8\" stroke-width=\"1.2\""; break;
      case PolylineType::crosswalk: style = "stroke=\"#999999\" stroke-width=\"3\" stroke-dasharray=\"2,2\""; break;
    }
    o << polyline(v, pts, style);
  }

  auto box = [&](const AgentHistory& a, const char* fill) {
    const int f = a.last_valid();
    if (f < 0) return;
    const bool vehicle = a.type == AgentType::vehicle;
    const double len = (vehicle ? 4.5 : 0.9) * s;
    const double wid = (vehicle ? 2.0 : 0.9) * s;
    const double deg = -a.heading(f) * 180.0 / std::numbers::pi;
    const double cx = v.px(a.states(f, 0));
    const double cy = v.py(a.states(f, 1));
    o << "<rect x=\"" << num(cx - len / 2) << "\" y=\"" << num(cy - wid / 2) << "\" width=\"" << num(len)
      << "\" height=\"" << num(wid) << "\" fill=\"" << fill << "\" stroke=\"#444\" stroke-width=\"0.8\" transform=\"rotate("
      << num(deg) << ' ' << num(cx) << ' ' << num(cy) << ")\"/>\n";
  };
  for (const auto& n : scene.context.neighbors) box(n, "#c8c8c8");
  box(scene.context.ego, "#6fa8ff");

  // Ground truth with an end flag.
  o << polyline(v, scene.future.waypoints, std::string("stroke=\"") + kTruth + "\" stroke-width=\"2.5\"");
  const Eigen::Index last = scene.future.waypoints.rows() - 1;
  const double fx = v.px(scene.future.waypoints(last, 0));
  const double fy = v.py(scene.future.waypoints(last, 1));
  o << "<line x1=\"" << num(fx) << "\" y1=\"" << num(fy) << "\" x2=\"" << num(fx) << "\" y2=\"" << num(fy - 22)
    << "\" stroke=\"" << kTruth << "\" stroke-width=\"1.5\"/>\n";
  o << "<polygon points=\"" << num(fx) << ',' << num(fy - 22) << ' ' << num(fx + 12) << ',' << num(fy - 17) << ' '
    << num(fx) << ',' << num(fy - 12) << "\" fill=\"" << kTruth << "\"/>\n";

  // Most confident index; predictions are drawn worst first so the best stays on top.
  std::size_t best = 0;
  for (std::size_t k = 1; k < preds.confidences.size(); ++k) {
    if (preds.confidences[k] > preds.confidences[best]) best = k;
  }
  auto color = [&](std::size_t k) { return k == best ? std::string(kBest) : std::string(kPalette[k % 8]); };
  for (std::size_t r = preds.trajectories.size(); r-- > 0;) {
    const auto& w = preds.trajectories[r].waypoints;
    o << polyline(v, w, "stroke=\"" + color(r) + "\" stroke-width=\"" + (r == best ? "2.5" : "1.6") + "\"");
    const double ex = v.px(w(w.rows() - 1, 0));
    const double ey = v.py(w(w.rows() - 1, 1));
    o << "<circle cx=\"" << num(ex) << "\" cy=\"" << num(ey) << "\" r=\"7\" fill=\"" << color(r) << "\"/>\n";
    o << "<text x=\"" << num(ex) << "\" y=\"" << num(ey + 3.5) << "\" font-size=\"10\" fill=\"white\" text-anchor=\"middle\">"
      << r + 1 << "</text>\n";
  }
  o << "</g>\n";

  // Confidence bars, normalized for display only.
  double total = 0.0;
  for (double c : preds.confidences) total += c;
  const double bx = panel + 20.0;
  const double bw = opt.width - panel - 40.0;
  const double top = 60.0;
  const double row_h = std::min(40.0, (opt.height - top - 40.0) / static_cast<double>(preds.size()));
  o << "<text x=\"" << num(bx) << "\" y=\"36\" font-size=\"14\">normalized confidence</text>\n";
  for (std::size_t k = 0; k < preds.confidences.size(); ++k) {
    const double share = total > 0.0 ? preds.confidences[k] / total : 1.0 / static_cast<double>(preds.size());
    const double y = top + static_cast<double>(k) * row_h;
    o << "<text x=\"" << num(bx) << "\" y=\"" << num(y + row_h * 0.6) << "\" font-size=\"11\">" << k + 1 << "</text>\n";
    o << "<rect x=\"" << num(bx + 16) << "\" y=\"" << num(y + row_h * 0.15) << "\" width=\""
      << num(std::max(0.5, share * (bw - 60))) << "\" height=\"" << num(row_h * 0.7) << "\" fill=\"" << color(k)
      << "\"/>\n";
    o << "<text x=\"" << num(bx + 20 + share * (bw - 60)) << "\" y=\"" << num(y + row_h * 0.6)
      << "\" font-size=\"10\">" << num(share) << "</text>\n";
  }
  o << "<text x=\"12\" y=\"20\" font-size=\"13\">" << scene.id << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace trajflow
