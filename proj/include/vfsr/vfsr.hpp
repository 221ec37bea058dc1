#pragma once

// Umbrella header for the vfsr library.

#include "vfsr/core.hpp"
#include "vfsr/geometry.hpp"
#include "vfsr/volume.hpp"
#include "vfsr/flowgen.hpp"
#include "vfsr/knn.hpp"
#include "vfsr/io.hpp"
#include "vfsr/mrsim.hpp"
#include "vfsr/dataset.hpp"
#include "vfsr/nn/tensor.hpp"
#include "vfsr/nn/ops.hpp"
#include "vfsr/nn/model.hpp"
#include "vfsr/nn/train.hpp"
#include "vfsr/infer.hpp"
#include "vfsr/metrics.hpp"
