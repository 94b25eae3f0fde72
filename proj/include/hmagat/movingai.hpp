#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hmagat/mapf.hpp"

namespace hmagat::evalkit {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// `.map` files: "type octile", "height H", "width W", "map", then H rows. '@', 'O', 'T' and 'W'
// are obstacles; '.', 'G' and 'S' are free.
mapf::GridMap parse_movingai_map(std::string_view text);
std::string serialize_movingai_map(const mapf::GridMap& map);

struct ScenEntry {
  int bucket = 0;
  std::string map;
  int width = 0;
  int height = 0;
  mapf::Cell start;
  mapf::Cell goal;
  double optimal = 0.0;
};

// `.scen` files: "version 1" then tab-separated rows of bucket, map, width, height, start x,
// start y, goal x, goal y, optimal length.
std::vector<ScenEntry> parse_movingai_scen(std::string_view text);
std::string serialize_movingai_scen(const std::vector<ScenEntry>& entries);

// One instance per agent count, taking the first n scen rows. An empty list yields a single
// instance with every row. Coordinates are checked against the map.
std::vector<mapf::Instance> parse_movingai(std::string_view map_text, std::string_view scen_text,
                                           const std::vector<int>& agent_counts = {});

// Scen rows for an instance; optimal lengths are single-agent BFS distances.
std::vector<ScenEntry> scen_from_instance(const mapf::Instance& instance, const std::string& map_name);

}  // namespace hmagat::evalkit
