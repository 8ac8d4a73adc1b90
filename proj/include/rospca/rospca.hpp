#pragma once

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "mcd.hpp"
#include "model_io.hpp"
#include "pca_core.hpp"
#include "random.hpp"
#include "robust_pca.hpp"
#include "sparse_pca.hpp"
