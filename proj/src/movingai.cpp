#include "hmagat/movingai.hpp"

#include <charconv>
#include <sstream>

namespace hmagat::evalkit {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t at = 0;
  while (at < text.size()) {
    std::size_t end = text.find('\n', at);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(at, end - at);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    at = end + 1;
  }
  return lines;
}

int parse_int(std::string_view s, int line, const char* what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, std::string("expected integer ") + what + ", got '" + std::string(s) + "'");
  }
  return v;
}

int header_value(std::string_view line, std::string_view key, int number) {
  if (!line.starts_with(key) || line.size() <= key.size() || line[key.size()] != ' ') {
    throw ParseError(number, "expected '" + std::string(key) + " <value>'");
  }
  return parse_int(line.substr(key.size() + 1), number, key.data());
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t at = 0;
  while (true) {
    const std::size_t end = line.find('\t', at);
    out.push_back(line.substr(at, end == std::string_view::npos ? std::string_view::npos : end - at));
    if (end == std::string_view::npos) break;
    at = end + 1;
  }
  return out;
}

}  // namespace

mapf::GridMap parse_movingai_map(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.size() < 4) throw ParseError(static_cast<int>(lines.size()) + 1, "truncated map header");
  if (!lines[0].starts_with("type ")) throw ParseError(1, "expected 'type <name>'");
  const int height = header_value(lines[1], "height", 2);
  const int width = header_value(lines[2], "width", 3);
  if (lines[3] != "map") throw ParseError(4, "expected 'map'");
  if (height < 1 || width < 1) throw ParseError(2, "map dimensions must be positive");
  if (static_cast<int>(lines.size()) < 4 + height) {
    throw ParseError(static_cast<int>(lines.size()) + 1, "expected " + std::to_string(height) + " map rows");
  }
  mapf::GridMap map(width, height);
  for (int y = 0; y < height; ++y) {
    const std::string_view row = lines[4 + y];
    if (static_cast<int>(row.size()) != width) {
      throw ParseError(5 + y, "row has " + std::to_string(row.size()) + " cells, expected " + std::to_string(width));
    }
    for (int x = 0; x < width; ++x) {
      switch (row[x]) {
        case '.': case 'G': case 'S': break;
        case '@': case 'O': case 'T': case 'W': map.set_obstacle({x, y}, true); break;
        default: throw ParseError(5 + y, std::string("unknown terrain '") + row[x] + "'");
      }
    }
  }
  for (std::size_t k = 4 + height; k < lines.size(); ++k) {
    if (!lines[k].empty()) throw ParseError(static_cast<int>(k) + 1, "unexpected content after map rows");
  }
  return map;
}

std::string serialize_movingai_map(const mapf::GridMap& map) {
  std::ostringstream out;
  out << "type octile\nheight " << map.height() << "\nwidth " << map.width() << "\nmap\n";
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out << (map.is_obstacle({x, y}) ? '@' : '.');
    out << '\n';
  }
  return out.str();
}

std::vector<ScenEntry> parse_movingai_scen(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || !lines[0].starts_with("version")) throw ParseError(1, "expected 'version <n>'");
  std::vector<ScenEntry> out;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const int number = static_cast<int>(k) + 1;
    if (lines[k].empty()) continue;
    const auto f = split_tabs(lines[k]);
    if (f.size() != 9) throw ParseError(number, "expected 9 tab-separated fields, got " + std::to_string(f.size()));
    ScenEntry e;
    e.bucket = parse_int(f[0], number, "bucket");
    e.map = std::string(f[1]);
    e.width = parse_int(f[2], number, "width");
    e.height = parse_int(f[3], number, "height");
    e.start = {parse_int(f[4], number, "start x"), parse_int(f[5], number, "start y")};
    e.goal = {parse_int(f[6], number, "goal x"), parse_int(f[7], number, "goal y")};
    try {
      e.optimal = std::stod(std::string(f[8]));
    } catch (const std::exception&) {
      throw ParseError(number, "expected optimal length, got '" + std::string(f[8]) + "'");
    }
    auto inside = [&](mapf::Cell c) { return c.x >= 0 && c.y >= 0 && c.x < e.width && c.y < e.height; };
    if (!inside(e.start) || !inside(e.goal)) throw ParseError(number, "coordinate outside the stated map size");
    out.push_back(std::move(e));
  }
  return out;
}

std::string serialize_movingai_scen(const std::vector<ScenEntry>& entries) {
  std::ostringstream out;
  out << "version 1\n";
  out.precision(17);
  for (const ScenEntry& e : entries) {
    out << e.bucket << '\t' << e.map << '\t' << e.width << '\t' << e.height << '\t' << e.start.x << '\t'
        << e.start.y << '\t' << e.goal.x << '\t' << e.goal.y << '\t' << e.optimal << '\n';
  }
  return out.str();
}

std::vector<mapf::Instance> parse_movingai(std::string_view map_text, std::string_view scen_text,
                                           const std::vector<int>& agent_counts) {
  const mapf::GridMap map = parse_movingai_map(map_text);
  const std::vector<ScenEntry> entries = parse_movingai_scen(scen_text);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const ScenEntry& e = entries[k];
    const int number = static_cast<int>(k) + 2;
    if (e.width != map.width() || e.height != map.height()) throw ParseError(number, "scen size differs from map");
    if (!map.is_free(e.start) || !map.is_free(e.goal)) throw ParseError(number, "start or goal on an obstacle");
  }
  std::vector<int> counts = agent_counts;
  if (counts.empty()) counts.push_back(static_cast<int>(entries.size()));
  std::vector<mapf::Instance> out;
  for (int n : counts) {
    if (n < 1 || n > static_cast<int>(entries.size())) {
      throw std::invalid_argument("parse_movingai: scen has " + std::to_string(entries.size()) + " rows, asked for " +
                                  std::to_string(n));
    }
    mapf::Instance inst;
    inst.map = map;
    for (int i = 0; i < n; ++i) {
      inst.starts.push_back(entries[i].start);
      inst.goals.push_back(entries[i].goal);
    }
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<ScenEntry> scen_from_instance(const mapf::Instance& instance, const std::string& map_name) {
  std::vector<ScenEntry> out;
  for (int i = 0; i < instance.num_agents(); ++i) {
    ScenEntry e;
    e.map = map_name;
    e.width = instance.map.width();
    e.height = instance.map.height();
    e.start = instance.starts[i];
    e.goal = instance.goals[i];
    e.optimal = mapf::bfs_dist(instance.map, e.goal)(e.start);
    out.push_back(e);
  }
  return out;
}

}  // namespace hmagat::evalkit
