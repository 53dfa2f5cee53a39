#pragma once

#include <vector>

#include "spg/geometry.hpp"
#include "spg/voxelgrid.hpp"

namespace spg {

/// Network output for one generation-area voxel.
struct VoxelPrediction {
  VoxelIndex voxel = 0;
  double p_fg = 0.5;  // foreground probability
  Vec3 chi_hat;       // predicted point location, inside the voxel
  std::vector<double> f_hat;  // predicted point properties
};

}  // namespace spg
