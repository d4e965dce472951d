#pragma once

#include "hforest/common.hpp"
#include "hforest/dataset.hpp"
#include "hforest/hilbert.hpp"
#include "hforest/hilbert_tree.hpp"
#include "hforest/compact_codes.hpp"
#include "hforest/ann.hpp"
#include "hforest/knn_graph.hpp"
#include "hforest/eval.hpp"
