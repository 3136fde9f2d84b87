#pragma once

#include "dknn/types.hpp"
#include "dknn/road_graph.hpp"
#include "dknn/dimacs.hpp"
#include "dknn/partitioner.hpp"
#include "dknn/objects.hpp"
#include "dknn/oracle.hpp"
#include "dknn/kbest.hpp"
#include "dknn/messages.hpp"
#include "dknn/worker.hpp"
#include "dknn/coordinator.hpp"
#include "dknn/runtime.hpp"
#include "dknn/bench.hpp"
