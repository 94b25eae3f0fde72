#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmagat/experts.hpp"
#include "hmagat/training.hpp"

namespace hmagat::evalkit {

struct BenchmarkRow {
  std::string map;
  int agents = 0;
  int instance = 0;
  bool success = false;
  bool timed_out = false;
  long long soc = 0;           // failed agents charged the step limit
  long long baseline_soc = 0;
  double rel_soc = 0.0;
  double seconds = 0.0;
};

struct BenchmarkGroup {
  std::string map;
  int agents = 0;
  int instances = 0;
  double success_rate = 0.0;
  double mean_rel_soc = 0.0;
  double ci95 = 0.0;  // half-width, 1.96 * sample sd / sqrt(n)
  double mean_seconds = 0.0;
  int timeouts = 0;
};

struct BenchmarkReport {
  std::string solver;
  std::string baseline;
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkGroup> groups;  // sorted by (map, agents)
};

// Per-(map, agents) aggregates recomputed from raw rows.
std::vector<BenchmarkGroup> aggregate(const std::vector<BenchmarkRow>& rows);

// SoC over baseline SoC; 0 / 0 counts as 1.
double relative_soc(long long soc, long long baseline_soc);

struct EvalOptions {
  std::string solver = "policy";
  std::string map = "map";
  int step_limit = 256;
  double time_limit = 60.0;  // seconds per instance
  std::uint64_t seed = 0;
  std::string baseline = "pibt_expert";
  experts::Expert baseline_expert;  // empty selects pibt_expert with the run seed
  int workers = 1;
};

// Shielded closed-loop rollouts, one controller per worker.
BenchmarkReport evaluate(const training::ControllerFactory& factory, const std::vector<mapf::Instance>& instances,
                         const EvalOptions& options);
// Offline solver on every instance.
BenchmarkReport evaluate(const experts::Expert& solver, const std::vector<mapf::Instance>& instances,
                         const EvalOptions& options);

// Merges reports of the same solver (e.g. one per map or agent count) and re-aggregates.
BenchmarkReport merge_reports(const std::vector<BenchmarkReport>& reports);

std::string format_report(const BenchmarkReport& report);
std::string report_to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Radar-plot scores

// SoC_best / SoC, or 0 when no solution was found.
double solution_quality(long long best_soc, long long soc, bool solved);
// runtime(n) / n * n_min / runtime(n_min), or 0 when timed out.
double scalability(double runtime, int agents, double anchor_runtime, int anchor_agents, bool timed_out);

struct RadarScores {
  std::string solver;
  double quality = 0.0;      // mean over rows
  double scalability = 0.0;  // mean over (map, agents) groups
};

// One score pair per report. SoC_best is the minimum successful SoC over all reports on the same
// (map, agents, instance). A group with any timeout scores 0 scalability. Throws
// std::invalid_argument if some report lacks the (map, anchor_agents) group for a map it covers.
std::vector<RadarScores> radar_metrics(const std::vector<BenchmarkReport>& reports, int anchor_agents);

}  // namespace hmagat::evalkit
