#pragma once

// Unsupervised outlier detection with deliberately under-fitted deep
// generative models: per-sample IWAE losses from an early, bimodality-gated
// training phase separate inliers from outliers.

#include "odim/csv.hpp"
#include "odim/error.hpp"
#include "odim/linear_vae.hpp"
#include "odim/matrix.hpp"
#include "odim/metrics.hpp"
#include "odim/mixture.hpp"
#include "odim/mlp.hpp"
#include "odim/numeric.hpp"
#include "odim/optim.hpp"
#include "odim/params_io.hpp"
#include "odim/rng.hpp"
#include "odim/scaler.hpp"
#include "odim/trainer.hpp"
