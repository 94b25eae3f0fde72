#include "hmagat/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <json.hpp>

namespace hmagat::evalkit {

using nlohmann::json;

double relative_soc(long long soc, long long baseline_soc) {
  if (baseline_soc == 0) return soc == 0 ? 1.0 : static_cast<double>(soc);
  return static_cast<double>(soc) / static_cast<double>(baseline_soc);
}

std::vector<BenchmarkGroup> aggregate(const std::vector<BenchmarkRow>& rows) {
  std::map<std::pair<std::string, int>, std::vector<const BenchmarkRow*>> by_group;
  for (const BenchmarkRow& r : rows) by_group[{r.map, r.agents}].push_back(&r);
  std::vector<BenchmarkGroup> out;
  for (const auto& [key, members] : by_group) {
    BenchmarkGroup g;
    g.map = key.first;
    g.agents = key.second;
    g.instances = static_cast<int>(members.size());
    double rel = 0.0, secs = 0.0;
    int ok = 0;
    for (const BenchmarkRow* r : members) {
      ok += r->success ? 1 : 0;
      g.timeouts += r->timed_out ? 1 : 0;
      rel += r->rel_soc;
      secs += r->seconds;
    }
    const double n = g.instances;
    g.success_rate = ok / n;
    g.mean_rel_soc = rel / n;
    g.mean_seconds = secs / n;
    if (g.instances > 1) {
      double ss = 0.0;
      for (const BenchmarkRow* r : members) ss += (r->rel_soc - g.mean_rel_soc) * (r->rel_soc - g.mean_rel_soc);
      g.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    out.push_back(g);
  }
  return out;
}

namespace {

template <typename Task>
void parallel_for(std::size_t count, int workers, const Task& task) {
  std::atomic<std::size_t> next{0};
  auto run = [&](int worker) {
    for (std::size_t k = next++; k < count; k = next++) task(worker, k);
  };
  if (workers <= 1) {
    run(0);
    return;
  }
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
}

long long baseline_cost(const EvalOptions& options, const mapf::Instance& inst, std::uint64_t seed) {
  if (options.baseline_expert) return options.baseline_expert(inst, options.step_limit).soc;
  return experts::pibt_expert(inst, options.step_limit, seed).soc;
}

BenchmarkReport finish(const EvalOptions& options, std::vector<BenchmarkRow> rows) {
  BenchmarkReport report;
  report.solver = options.solver;
  report.baseline = options.baseline;
  report.rows = std::move(rows);
  report.groups = aggregate(report.rows);
  return report;
}

}  // namespace

BenchmarkReport evaluate(const training::ControllerFactory& factory, const std::vector<mapf::Instance>& instances,
                         const EvalOptions& options) {
  const int workers = std::max(1, options.workers);
  std::vector<std::unique_ptr<experts::Controller>> controllers;
  for (int w = 0; w < workers; ++w) controllers.push_back(factory());
  std::vector<BenchmarkRow> rows(instances.size());
  parallel_for(instances.size(), workers, [&](int worker, std::size_t k) {
    const mapf::Instance& inst = instances[k];
    const std::uint64_t seed = options.seed + k;
    const experts::RolloutResult run =
        experts::rollout(*controllers[worker], inst, options.step_limit, seed, options.time_limit);
    BenchmarkRow& row = rows[k];
    row.map = options.map;
    row.agents = inst.num_agents();
    row.instance = static_cast<int>(k);
    row.success = run.success;
    row.timed_out = run.timed_out;
    row.soc = run.soc;
    row.seconds = run.seconds;
    row.baseline_soc = baseline_cost(options, inst, seed);
    row.rel_soc = relative_soc(row.soc, row.baseline_soc);
  });
  return finish(options, std::move(rows));
}

BenchmarkReport evaluate(const experts::Expert& solver, const std::vector<mapf::Instance>& instances,
                         const EvalOptions& options) {
  std::vector<BenchmarkRow> rows(instances.size());
  parallel_for(instances.size(), std::max(1, options.workers), [&](int, std::size_t k) {
    const mapf::Instance& inst = instances[k];
    BenchmarkRow& row = rows[k];
    row.map = options.map;
    row.agents = inst.num_agents();
    row.instance = static_cast<int>(k);
    const auto start = std::chrono::steady_clock::now();
    try {
      const experts::SolveResult r = solver(inst, options.step_limit);
      row.success = r.success;
      row.soc = r.soc;
    } catch (const experts::ResourceLimitError&) {
      row.success = false;
      row.soc = static_cast<long long>(options.step_limit) * inst.num_agents();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (row.seconds > options.time_limit) {
      row.timed_out = true;
      row.success = false;
      row.soc = static_cast<long long>(options.step_limit) * inst.num_agents();
    }
    row.baseline_soc = baseline_cost(options, inst, options.seed + k);
    row.rel_soc = relative_soc(row.soc, row.baseline_soc);
  });
  return finish(options, std::move(rows));
}

BenchmarkReport merge_reports(const std::vector<BenchmarkReport>& reports) {
  BenchmarkReport out;
  for (const BenchmarkReport& r : reports) {
    if (out.solver.empty()) {
      out.solver = r.solver;
      out.baseline = r.baseline;
    } else if (out.solver != r.solver || out.baseline != r.baseline) {
      throw std::invalid_argument("merge_reports: solver or baseline mismatch");
    }
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
  }
  out.groups = aggregate(out.rows);
  return out;
}

std::string format_report(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "solver " << report.solver << ", Rel. SoC baseline " << report.baseline << "\n";
  out << std::left << std::setw(16) << "map" << std::right << std::setw(7) << "agents" << std::setw(6) << "n"
      << std::setw(9) << "success" << std::setw(10) << "rel_soc" << std::setw(9) << "ci95" << std::setw(10)
      << "seconds" << std::setw(9) << "timeout" << "\n";
  out << std::fixed;
  for (const BenchmarkGroup& g : report.groups) {
    out << std::left << std::setw(16) << g.map << std::right << std::setw(7) << g.agents << std::setw(6)
        << g.instances << std::setw(9) << std::setprecision(3) << g.success_rate << std::setw(10)
        << std::setprecision(4) << g.mean_rel_soc << std::setw(9) << g.ci95 << std::setw(10) << g.mean_seconds
        << std::setw(9) << g.timeouts << "\n";
  }
  return out.str();
}

std::string report_to_json(const BenchmarkReport& report) {
  json rows = json::array();
  for (const BenchmarkRow& r : report.rows) {
    rows.push_back({{"map", r.map},
                    {"agents", r.agents},
                    {"instance", r.instance},
                    {"success", r.success},
                    {"timed_out", r.timed_out},
                    {"soc", r.soc},
                    {"baseline_soc", r.baseline_soc},
                    {"rel_soc", r.rel_soc},
                    {"seconds", r.seconds}});
  }
  json groups = json::array();
  for (const BenchmarkGroup& g : report.groups) {
    groups.push_back({{"map", g.map},
                      {"agents", g.agents},
                      {"instances", g.instances},
                      {"success_rate", g.success_rate},
                      {"mean_rel_soc", g.mean_rel_soc},
                      {"ci95", g.ci95},
                      {"mean_seconds", g.mean_seconds},
                      {"timeouts", g.timeouts}});
  }
  json doc = {{"solver", report.solver}, {"baseline", report.baseline}, {"rows", rows}, {"groups", groups}};
  return doc.dump(2);
}

BenchmarkReport report_from_json(const std::string& text) {
  const json doc = json::parse(text);
  BenchmarkReport report;
  report.solver = doc.at("solver").get<std::string>();
  report.baseline = doc.at("baseline").get<std::string>();
  for (const json& r : doc.at("rows")) {
    BenchmarkRow row;
    row.map = r.at("map").get<std::string>();
    row.agents = r.at("agents").get<int>();
    row.instance = r.at("instance").get<int>();
    row.success = r.at("success").get<bool>();
    row.timed_out = r.at("timed_out").get<bool>();
    row.soc = r.at("soc").get<long long>();
    row.baseline_soc = r.at("baseline_soc").get<long long>();
    row.rel_soc = r.at("rel_soc").get<double>();
    row.seconds = r.at("seconds").get<double>();
    report.rows.push_back(row);
  }
  report.groups = aggregate(report.rows);
  return report;
}

// ---------------------------------------------------------------------------

double solution_quality(long long best_soc, long long soc, bool solved) {
  if (!solved) return 0.0;
  if (soc == 0) return 1.0;
  return static_cast<double>(best_soc) / static_cast<double>(soc);
}

double scalability(double runtime, int agents, double anchor_runtime, int anchor_agents, bool timed_out) {
  if (timed_out) return 0.0;
  if (agents < 1 || anchor_agents < 1 || !(anchor_runtime > 0.0)) {
    throw std::invalid_argument("scalability: agent counts and anchor runtime must be positive");
  }
  return runtime / agents * anchor_agents / anchor_runtime;
}

std::vector<RadarScores> radar_metrics(const std::vector<BenchmarkReport>& reports, int anchor_agents) {
  using Key = std::tuple<std::string, int, int>;
  std::map<Key, long long> best;
  for (const BenchmarkReport& r : reports) {
    for (const BenchmarkRow& row : r.rows) {
      if (!row.success) continue;
      const Key key{row.map, row.agents, row.instance};
      auto it = best.find(key);
      if (it == best.end() || row.soc < it->second) best[key] = row.soc;
    }
  }
  std::vector<RadarScores> out;
  for (const BenchmarkReport& r : reports) {
    RadarScores s;
    s.solver = r.solver;
    for (const BenchmarkRow& row : r.rows) {
      const auto it = best.find({row.map, row.agents, row.instance});
      s.quality += it == best.end() ? 0.0 : solution_quality(it->second, row.soc, row.success);
    }
    if (!r.rows.empty()) s.quality /= static_cast<double>(r.rows.size());

    const std::vector<BenchmarkGroup> groups = aggregate(r.rows);
    std::map<std::string, const BenchmarkGroup*> anchors;
    for (const BenchmarkGroup& g : groups) {
      if (g.agents == anchor_agents) anchors[g.map] = &g;
    }
    for (const BenchmarkGroup& g : groups) {
      const auto it = anchors.find(g.map);
      if (it == anchors.end()) {
        throw std::invalid_argument("radar_metrics: report '" + r.solver + "' has no " +
                                    std::to_string(anchor_agents) + "-agent row for map '" + g.map + "'");
      }
      const BenchmarkGroup& a = *it->second;
      const bool timed_out = g.timeouts > 0 || a.timeouts > 0;
      s.scalability += scalability(g.mean_seconds, g.agents, a.mean_seconds, a.agents, timed_out);
    }
    if (!groups.empty()) s.scalability /= static_cast<double>(groups.size());
    out.push_back(s);
  }
  return out;
}

}  // namespace hmagat::evalkit
