#include "hmagat/render.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hmagat::evalkit {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string render_svg(const mapf::Instance& instance, const RenderOptions& options) {
  const mapf::GridMap& map = instance.map;
  const int n = instance.num_agents();
  const int s = options.cell;
  if (s < 1) throw std::invalid_argument("render_svg: cell size must be positive");
  const int width = map.width() * s;
  const int height = map.height() * s;
  auto centre = [s](mapf::Cell c) { return std::pair<double, double>{(c.x + 0.5) * s, (c.y + 0.5) * s}; };

  mapf::Configuration config = instance.starts;
  if (options.trajectory != nullptr && !options.trajectory->configs.empty()) {
    const auto& configs = options.trajectory->configs;
    const int last = static_cast<int>(configs.size()) - 1;
    const int t = options.timestep < 0 ? last : options.timestep;
    if (t > last) throw std::out_of_range("render_svg: timestep beyond the trajectory");
    config = configs[t];
  }
  if (static_cast<int>(config.size()) != n) throw std::invalid_argument("render_svg: agent count mismatch");
  if (!options.agent_groups.empty() && static_cast<int>(options.agent_groups.size()) != n) {
    throw std::invalid_argument("render_svg: one group per agent");
  }
  auto agent_colour = [&](int i) {
    const int key = options.agent_groups.empty() ? i : options.agent_groups[i];
    return kPalette[static_cast<std::size_t>(key) % kPalette.size()];
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";

  out << "<g id=\"obstacles\" fill=\"#333333\">\n";
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.is_obstacle({x, y})) {
        out << "<rect x=\"" << x * s << "\" y=\"" << y * s << "\" width=\"" << s << "\" height=\"" << s << "\"/>\n";
      }
    }
  }
  out << "</g>\n";

  if (options.colouring != nullptr) {
    const hypergen::Colouring& col = *options.colouring;
    if (col.width != map.width() || col.height != map.height()) {
      throw std::invalid_argument("render_svg: colouring does not match the map");
    }
    out << "<g id=\"colouring\">\n";
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) {
        const auto& colours = col.at({x, y});
        if (colours.empty()) continue;
        // Cells in several regions are split into vertical bands.
        const double band = static_cast<double>(s) / static_cast<double>(colours.size());
        for (std::size_t k = 0; k < colours.size(); ++k) {
          out << "<rect x=\"" << num(x * s + k * band) << "\" y=\"" << y * s << "\" width=\"" << num(band)
              << "\" height=\"" << s << "\" fill=\"" << kPalette[static_cast<std::size_t>(colours[k]) % kPalette.size()]
              << "\" fill-opacity=\"0.300\"/>\n";
        }
      }
    }
    out << "</g>\n";
  }

  out << "<g id=\"grid\" stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (int x = 0; x <= map.width(); ++x) {
    out << "<line x1=\"" << x * s << "\" y1=\"0\" x2=\"" << x * s << "\" y2=\"" << height << "\"/>\n";
  }
  for (int y = 0; y <= map.height(); ++y) {
    out << "<line x1=\"0\" y1=\"" << y * s << "\" x2=\"" << width << "\" y2=\"" << y * s << "\"/>\n";
  }
  out << "</g>\n";

  if (options.trajectory != nullptr && options.trajectory->configs.size() > 1) {
    out << "<g id=\"paths\" fill=\"none\" stroke-width=\"2\" stroke-opacity=\"0.500\">\n";
    for (int i = 0; i < n; ++i) {
      out << "<polyline stroke=\"" << agent_colour(i) << "\" points=\"";
      for (std::size_t t = 0; t < options.trajectory->configs.size(); ++t) {
        const auto [cx, cy] = centre(options.trajectory->configs[t][i]);
        out << (t ? " " : "") << num(cx) << ',' << num(cy);
      }
      out << "\"/>\n";
    }
    out << "</g>\n";
  }

  if (options.attention != nullptr) {
    const Eigen::MatrixXd& a = *options.attention;
    if (a.rows() != n || a.cols() != n) throw std::invalid_argument("render_svg: attention must be n x n");
    out << "<g id=\"attention\" stroke=\"#000000\" stroke-width=\"2\">\n";
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j || a(i, j) <= 0.0) continue;
        const auto [x1, y1] = centre(config[j]);
        const auto [x2, y2] = centre(config[i]);
        out << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
            << "\" stroke-opacity=\"" << num(std::min(1.0, a(i, j))) << "\"/>\n";
      }
    }
    out << "</g>\n";
  }

  const double r = 0.35 * s;
  out << "<g id=\"goals\" fill=\"none\" stroke-width=\"2\">\n";
  for (int i = 0; i < n; ++i) {
    const auto [cx, cy] = centre(instance.goals[i]);
    out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r) << "\" stroke=\""
        << agent_colour(i) << "\"/>\n";
  }
  out << "</g>\n";
  out << "<g id=\"agents\">\n";
  for (int i = 0; i < n; ++i) {
    const auto [cx, cy] = centre(config[i]);
    out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r) << "\" fill=\""
        << agent_colour(i) << "\"/>\n";
  }
  out << "</g>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace hmagat::evalkit
