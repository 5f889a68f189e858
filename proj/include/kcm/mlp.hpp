#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "kcm/rng.hpp"
#include "kcm/tensor.hpp"

namespace kcm {

// Weights of a ReLU MLP: layer s maps d_{s-1} -> d_s through W_s x + b_s,
// ReLU after every layer but the last. A single layer is a linear model.
struct MlpParams {
    struct Layer {
        std::size_t out_dim = 0;
        std::size_t in_dim = 0;
        std::vector<double> w;  // out_dim x in_dim, row-major
        std::vector<double> b;  // out_dim
    };
    std::vector<Layer> layers;

    std::vector<std::size_t> dims() const;  // (d_0, ..., d_{L+1})
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t param_count() const;
    void validate() const;  // chained dims, finite entries
};

// Per-layer spectral-norm radii r_s.
struct SpectralBudget {
    std::vector<double> radii;
};

// He-style init: W ~ N(0, 2/fan_in), biases zero.
MlpParams make_mlp(const std::vector<std::size_t>& dims, RngStream& init_stream);

// Parameter tensors attached to a tape for one optimization step.
struct MlpVars {
    std::vector<std::pair<Tensor, Tensor>> layers;  // (W, b)
};
MlpVars attach_params(const MlpParams& params, Tape& tape);

Tensor mlp_forward(const MlpVars& vars, const Tensor& x);
// Tape-free evaluation; x: batch x d_0.
Tensor mlp_forward(const MlpParams& params, const Tensor& x);

// Largest singular value by power iteration on W^T W. Returns 0 for the zero
// matrix. Converges when the relative change drops below tol.
double spectral_norm(std::size_t rows, std::size_t cols, const std::vector<double>& w,
                     std::size_t iters = 256, double tol = 1e-12);

// All singular values (descending) via cyclic Jacobi on the smaller Gram
// matrix; desk-scale matrices only.
std::vector<double> singular_values(std::size_t rows, std::size_t cols,
                                    const std::vector<double>& w);

// Count of singular values above rank_tol * sigma_max.
std::size_t numerical_rank(std::size_t rows, std::size_t cols,
                           const std::vector<double>& w, double rank_tol = 1e-10);

// prod_s ||W_s||_2; a certified Lipschitz constant of the forward map in l2
// since ReLU is 1-Lipschitz.
double lipschitz_upper_bound(const MlpParams& params);

// Spectral radii measured from trained weights, r_s := ||W_s||_2.
SpectralBudget measure_budget(const MlpParams& params);

struct ComplexityProxy {
    double value = 0.0;
    bool log_clamped = false;  // log argument was <= 1; clamped at 0
};

// G = (B_x prod r_s / sqrt(n)) * sqrt(d_w log((L+1) sqrt(n) max{r_s m_s} /
// (sqrt(d_w) min r_s))). Core form over precomputed quantities.
ComplexityProxy complexity_proxy_g_terms(double b_x, std::size_t n, std::size_t d_w,
                                         const std::vector<double>& radii,
                                         const std::vector<double>& m);

// Wrapper measuring d_w from dims and m_s = sqrt(numerical rank(W_s)).
ComplexityProxy complexity_proxy_g(const MlpParams& params, const SpectralBudget& budget,
                                   double b_x, std::size_t n, double rank_tol = 1e-10);

}  // namespace kcm
