#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "kcm/mlp.hpp"
#include "kcm/rng.hpp"
#include "kcm/tensor.hpp"

namespace kcm {

// Product-Gaussian kernel N(0, h^2 I_d). h = 0 is the degenerate point mass:
// offsets are drawn as h * z, so a zero bandwidth yields exactly-zero offsets
// and the convolved model reduces to the raw one bit-for-bit.
struct KernelSpec {
    double bandwidth = 0.1;  // h >= 0, input units
    std::size_t dim = 0;     // d >= 1
    bool antithetic = false;

    void validate() const;
};

// One realization of the Monte Carlo offsets u_1..u_N.
struct OffsetBatch {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> offsets;  // n x d, row-major
    std::uint64_t seed_tag = 0;   // provenance of the draw

    const double* row(std::size_t i) const { return offsets.data() + i * d; }
    double max_row_norm() const;
};

// N i.i.d. draws from N(0, h^2 I_d); antithetic mode mirrors N/2 draws and
// requires N even.
OffsetBatch sample_offsets(const KernelSpec& spec, std::size_t n, RngStream& rng);

// Closed-form E||u||_2 = h * sqrt(2) * Gamma((d+1)/2) / Gamma(d/2) for the
// sampled kernel; the h=1 value is the c^1_K moment witness.
double kernel_mean_norm(const KernelSpec& spec);
double gaussian_unit_norm_moment(std::size_t d);

// Monte Carlo convolution: N^-1 sum_i f(x - u_i). The same offsets apply to
// every batch row; gradients flow through every shifted evaluation.
Tensor kcm_forward(const std::function<Tensor(const Tensor&)>& model, const Tensor& x,
                   const OffsetBatch& offsets);

// Convolved model values on a batch with fresh eval offsets from `rng`.
Tensor kcm_values(const MlpParams& params, const KernelSpec& spec, std::size_t n_eval,
                  const Tensor& x, RngStream& rng);

// sign (single output) or argmax (multi-output) of the Monte Carlo average.
// Binary labels are -1/+1 with sign(0) mapped to +1.
std::vector<int> kcm_predict(const MlpParams& params, const KernelSpec& spec,
                             std::size_t n_eval, const Tensor& x, RngStream& rng);

std::vector<int> labels_of(const Tensor& outputs);

}  // namespace kcm
