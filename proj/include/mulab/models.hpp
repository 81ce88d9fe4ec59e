#pragma once

#include "mulab/dichotomy.hpp"

#include <vector>

namespace mulab {

/// Diagonal system without lags: x_i' = -alpha_i (mu'/mu) x_i for the stable
/// block, x_j' = beta_j (mu'/mu) x_j for the unstable block. Projections,
/// unstable basis and backward evolution are exact.
DichotomyModel diagonal_model(const GrowthRate& g, double delay,
                              const std::vector<double>& stable_rates,
                              const std::vector<double>& unstable_rates,
                              const DichotomyConstants& constants, int resolution = 32);

/// x' = -alpha (mu'/mu) x with K = N^alpha, K~ = 1, a = 0.
DichotomyModel scalar_stable_model(const GrowthRate& g, double alpha = 0.8, double delay = 1.0,
                                   int resolution = 32);

/// x' = beta (mu'/mu) x with K = 2 N^alpha, K~ = 1, a = beta.
DichotomyModel scalar_unstable_model(const GrowthRate& g, double beta = 0.6, double alpha = 0.8,
                                     double delay = 1.0, int resolution = 32);

/// One stable and one unstable coordinate with the declared exponents.
/// K = 2 N^alpha covers the unstable coordinate's part of P(s) on [s, s + r).
DichotomyModel planar_saddle_model(const GrowthRate& g, const DichotomyConstants& declared,
                                   double delay = 1.0, int resolution = 32);

/// x' = (-alpha - theta (t sin t)') x with mu = e^t. Declared rate
/// alpha - theta_declared, nonuniformity 2 theta_declared,
/// eps = max(2 theta_declared, 0.1).
DichotomyModel nonuniform_exp_model(double alpha, double theta, double theta_declared,
                                    double delay = 1.0, int resolution = 32);

} // namespace mulab
