#include "polarbg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
constexpr const char* kUnclassifiedColor = "#999999";

std::string num(double v) { return io::format_number(std::round(v * 100.0) / 100.0); }

struct Bounds {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }
};

}  // namespace

std::string pgm(const Eigen::MatrixXd& values, double lo, double hi) {
  if (!(hi > lo)) throw Error(ErrorCode::InvalidConfig, "pgm range must be increasing");
  std::string out = "P2\n" + std::to_string(values.cols()) + " " + std::to_string(values.rows()) + "\n255\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = std::clamp((values(r, c) - lo) / (hi - lo), 0.0, 1.0);
      out += std::to_string(static_cast<int>(std::lround(v * 255.0)));
      // Plain PGM lines stay under 70 characters.
      out += (c + 1 == values.cols() || (c + 1) % 16 == 0) ? '\n' : ' ';
    }
  }
  return out;
}

std::array<std::string, 3> stmap_triptych(std::span<const PolarFrame> frames, const BackgroundModel& model, int beam) {
  if (beam < 0 || beam >= static_cast<int>(model.beams.size())) {
    throw Error(ErrorCode::InvalidConfig, "beam " + std::to_string(beam) + " not in model");
  }
  const auto st = build_st_matrix(frames, beam, Channel::Intensity);
  const auto& bg = model.beams[static_cast<std::size_t>(beam)].background;
  if (static_cast<Eigen::Index>(bg.size()) != st.data.rows()) {
    throw Error(ErrorCode::ModelMismatch, "frames and model disagree on azimuth bins");
  }
  Eigen::MatrixXd background(st.data.rows(), st.data.cols());
  for (Eigen::Index r = 0; r < background.rows(); ++r) background.row(r).setConstant(bg[static_cast<std::size_t>(r)]);
  const Eigen::MatrixXd foreground = (st.data - background).cwiseAbs();
  return {pgm(st.data, 0.0, 255.0), pgm(background, 0.0, 255.0), pgm(foreground, 0.0, 255.0)};
}

std::string trajectories_svg(std::span<const tracking::Trajectory> trajectories, const tracking::MovementZones& zones) {
  constexpr double kSize = 800.0;
  constexpr double kMargin = 20.0;
  Bounds b;
  for (const auto& t : trajectories) {
    for (const auto& p : t.points) b.add(p.x, p.y);
  }
  for (const auto& z : zones.zones) {
    for (const auto& v : z.polygon) b.add(v.x, v.y);
  }
  if (!std::isfinite(b.min_x)) b = Bounds{-1.0, -1.0, 1.0, 1.0};
  const double span = std::max({b.max_x - b.min_x, b.max_y - b.min_y, 1e-6});
  const double scale = (kSize - 2.0 * kMargin) / span;
  auto sx = [&](double x) { return num(kMargin + (x - b.min_x) * scale); };
  auto sy = [&](double y) { return num(kSize - kMargin - (y - b.min_y) * scale); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n";
  out += "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  for (const auto& z : zones.zones) {
    out += "<polygon fill=\"#f0f0f0\" stroke=\"#444444\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < z.polygon.size(); ++i) {
      out += (i ? " " : "") + sx(z.polygon[i].x) + "," + sy(z.polygon[i].y);
    }
    out += "\"/>\n";
    double cx = 0.0;
    double cy = 0.0;
    for (const auto& v : z.polygon) {
      cx += v.x;
      cy += v.y;
    }
    cx /= static_cast<double>(z.polygon.size());
    cy /= static_cast<double>(z.polygon.size());
    out += "<text x=\"" + sx(cx) + "\" y=\"" + sy(cy) + "\" font-size=\"14\" text-anchor=\"middle\">" + z.name +
           "</text>\n";
  }

  std::map<std::pair<std::string, std::string>, std::size_t> colour_index;
  for (const auto& t : trajectories) {
    std::string colour = kUnclassifiedColor;
    std::string movement = "unclassified";
    if (!zones.zones.empty()) {
      const auto counts = tracking::count_movements(std::span<const tracking::Trajectory>(&t, 1), zones);
      if (!counts.counts.empty()) {
        const auto key = counts.counts.begin()->first;
        const auto [it, inserted] = colour_index.try_emplace(key, colour_index.size());
        colour = kPalette[it->second % std::size(kPalette)];
        movement = key.first + "->" + key.second;
      }
    }
    out += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" data-track=\"" +
           std::to_string(t.track_id) + "\" data-movement=\"" + movement + "\" points=\"";
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      out += (i ? " " : "") + sx(t.points[i].x) + "," + sy(t.points[i].y);
    }
    out += "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string histogram_svg(const cfta::RangeHistogram& hist, double threshold) {
  if (hist.counts.empty()) throw Error(ErrorCode::EmptyHistogram, "nothing to plot");
  constexpr double kWidth = 800.0;
  constexpr double kHeight = 400.0;
  constexpr double kMargin = 30.0;
  const double lo = hist.edges.front();
  const double hi = hist.edges.back();
  const double xspan = std::max(hi - lo, 1e-9);
  std::size_t peak_bin = 0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (hist.counts[i] >= hist.counts[peak_bin]) peak_bin = i;
  }
  const double peak = std::max<double>(static_cast<double>(hist.counts[peak_bin]), 1.0);
  auto sx = [&](double x) { return kMargin + (x - lo) / xspan * (kWidth - 2.0 * kMargin); };
  auto sy = [&](double c) { return kHeight - kMargin - c / peak * (kHeight - 2.0 * kMargin); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" viewBox=\"0 0 800 400\">\n";
  out += "<rect width=\"800\" height=\"400\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (hist.counts[i] == 0) continue;
    const double x0 = sx(hist.edges[i]);
    const double x1 = sx(hist.edges[i + 1]);
    const double y = sy(static_cast<double>(hist.counts[i]));
    out += "<rect x=\"" + num(x0) + "\" y=\"" + num(y) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
           num(kHeight - kMargin - y) + "\" fill=\"#4c72b0\"/>\n";
  }
  // Triangle line in bin-index space: bin i sits at its lower edge.
  out += "<line x1=\"" + num(sx(lo)) + "\" y1=\"" + num(sy(0.0)) + "\" x2=\"" +
         num(sx(hist.edges[peak_bin])) + "\" y2=\"" + num(sy(peak)) +
         "\" stroke=\"#dd8452\" stroke-width=\"2\"/>\n";
  out += "<line x1=\"" + num(sx(threshold)) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(sx(threshold)) +
         "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"#c44e52\" stroke-width=\"2\" stroke-dasharray=\"6,4\"/>\n";
  out += "<text x=\"" + num(sx(threshold) + 4.0) + "\" y=\"" + num(kMargin + 12.0) +
         "\" font-size=\"12\">threshold " + num(threshold) + " m</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace polarbg::plot
