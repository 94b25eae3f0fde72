#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "hmagat/hypergen.hpp"
#include "hmagat/mapf.hpp"

namespace hmagat::evalkit {

struct RenderOptions {
  int cell = 24;  // pixels per grid cell
  const mapf::Trajectory* trajectory = nullptr;
  int timestep = -1;  // configuration drawn from the trajectory; -1 is the last one
  const hypergen::Colouring* colouring = nullptr;
  const Eigen::MatrixXd* attention = nullptr;  // n x n a_ij; edge j -> i drawn with opacity a_ij
  std::vector<int> agent_groups;               // colour agents by group instead of by id
};

// Grid, obstacles, colour regions, trajectory traces, attention edges, goals (empty circles) and
// agents (filled circles), in that drawing order. Output depends only on the inputs.
std::string render_svg(const mapf::Instance& instance, const RenderOptions& options = {});

}  // namespace hmagat::evalkit
