#pragma once
// Everything except the CLI layer (bench.hpp, needs vendor/json.hpp) and the
// dense reference code (oracle*.hpp).

#include "graphpy/autodiff.hpp"
#include "graphpy/backend.hpp"
#include "graphpy/dataset.hpp"
#include "graphpy/edge_list.hpp"
#include "graphpy/error.hpp"
#include "graphpy/graph.hpp"
#include "graphpy/graph_io.hpp"
#include "graphpy/kernels.hpp"
#include "graphpy/ledger.hpp"
#include "graphpy/models.hpp"
#include "graphpy/tensor.hpp"
#include "graphpy/timing.hpp"
