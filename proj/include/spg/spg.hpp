#pragma once

#include "spg/config.hpp"
#include "spg/errors.hpp"
#include "spg/generation.hpp"
#include "spg/geometry.hpp"
#include "spg/io.hpp"
#include "spg/losses.hpp"
#include "spg/metrics.hpp"
#include "spg/network.hpp"
#include "spg/parallel.hpp"
#include "spg/prediction.hpp"
#include "spg/rng.hpp"
#include "spg/supervision.hpp"
#include "spg/synth.hpp"
#include "spg/tensor.hpp"
#include "spg/train.hpp"
#include "spg/voxelgrid.hpp"
