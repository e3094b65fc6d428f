#pragma once

#include "decrl/error.hpp"
#include "decrl/linalg.hpp"
#include "decrl/autodiff.hpp"
#include "decrl/data_model.hpp"
#include "decrl/relational_encoder.hpp"
#include "decrl/hungarian.hpp"
#include "decrl/evolutionary_clustering.hpp"
#include "decrl/cluster_graph.hpp"
#include "decrl/temporal_encoding.hpp"
#include "decrl/decoder_metrics.hpp"
#include "decrl/config.hpp"
#include "decrl/model.hpp"
#include "decrl/training.hpp"
#include "decrl/checkpoint.hpp"
