#pragma once

// Slow reference implementations for tests. They share no code with the
// main library paths and always run in double precision.

#include "bmdal/common.hpp"
#include "bmdal/model.hpp"

#include <cstdint>

namespace bmdal::oracle {

inline constexpr int kMaxPoints = 64;

// k(i,j) - k(i,S) (k(S,S) + sigma^2 I)^{-1} k(S,j) by dense LU.
double naive_posterior(const Mat& gram, const Indices& obs, double sigma2, int i, int j);

// Greedy determinant maximization. Starts from `mode` and picks from `pool`
// (all points when empty), lowest index on ties.
Indices naive_greedy_maxdet(const Mat& gram, double sigma2, int n_batch, const Indices& mode = {},
                            const Indices& pool = {});

// Sum of posterior variances over tp given observations sel.
double naive_bait_objective(const Mat& features, const Indices& tp, const Indices& sel,
                            double sigma2);

// Covering radius of a batch: max over pool of the distance to the nearest
// point of mode + batch (kernel distance, not squared).
double cover_radius(const Mat& gram, const Indices& pool, const Indices& mode, const Indices& batch);

// Optimal covering radius over all batches of the given size.
double brute_force_cover_radius(const Mat& gram, int n_batch, const Indices& mode,
                                const Indices& pool);

// Full per-sample parameter Jacobian by forward-mode tangent propagation.
// Column order: layer by layer, W row-major then b.
Mat explicit_jacobian(const ModelParams& params, const ModelConfig& config, const Mat& X);
Mat explicit_ntk(const ModelParams& params, const ModelConfig& config, const Mat& X);

// Same layout as explicit_jacobian, by central differences.
Mat finite_difference_jacobian(const ModelParams& params, const ModelConfig& config, const Mat& X,
                               double h = 1e-6);

// Monte Carlo estimate of the NNGP Gram at initialization. With
// integrate_last_layer the Gaussian output layer is averaged in closed form.
Mat mc_nngp(const ModelConfig& config, const Mat& X, int n_samples, std::uint64_t seed,
            bool integrate_last_layer = true);

}  // namespace bmdal::oracle
