#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kcm/kernel.hpp"
#include "kcm/mlp.hpp"
#include "kcm/rng.hpp"

namespace kcm {

enum class RademacherMethod { exhaustive, monte_carlo, ascent_lower_bound };

std::string rademacher_method_name(RademacherMethod m);

struct RademacherEstimate {
    double value = 0.0;
    double std_error = 0.0;  // 0 for exhaustive enumeration
    RademacherMethod method = RademacherMethod::exhaustive;
    std::size_t sign_samples = 0;  // 2^n for exhaustive, M otherwise
};

// Empirical Rademacher complexity of {x -> w.x : ||w||_2 <= radius} on a
// fixed sample, using the closed-form inner sup (radius/n)||sum_i eps_i x_i||.
// Exhaustive enumerates all 2^n sign vectors (n <= 20); Monte Carlo draws M
// sign vectors and reports a standard error.
RademacherEstimate rademacher_linear_l2(const std::vector<double>& sample, std::size_t n,
                                        std::size_t d, double radius,
                                        RademacherMethod method, std::size_t m_draws,
                                        RngStream& rng);

// Same class, every member convolved with the kernel realized by `offsets`.
// For affine members the convolution shifts inputs by the empirical offset
// mean, so with antithetic (exactly zero-mean) draws the two estimates agree.
RademacherEstimate rademacher_linear_l2_convolved(const std::vector<double>& sample,
                                                  std::size_t n, std::size_t d,
                                                  double radius, const OffsetBatch& offsets,
                                                  RademacherMethod method,
                                                  std::size_t m_draws, RngStream& rng);

enum class AscentInit { zero, random_in_budget };

struct MlpAscentOptions {
    std::size_t sign_draws = 32;
    std::size_t ascent_steps = 50;
    double ascent_rate = 0.05;
    AscentInit init = AscentInit::random_in_budget;
};

// Lower bound of the empirical Rademacher complexity of the spectrally
// constrained MLP class: per sign vector, projected gradient ascent on the
// weights (power-iteration rescale onto each radius), best iterate kept.
// The zero function is always in the class, so per-sign maxima are >= 0.
RademacherEstimate rademacher_mlp_lower_bound(const std::vector<std::size_t>& dims,
                                              const SpectralBudget& budget,
                                              const std::vector<double>& sample,
                                              std::size_t n, std::size_t d,
                                              const MlpAscentOptions& opt, RngStream& rng);

// B_*/B_x = (3 h cK1 + B_x)/B_x; the complexity scale of the convolved class
// relative to the original.
double kcm_scale(double h, double ck1, double b_x);

struct RademacherCsvRow {
    RademacherEstimate estimate;
    std::size_t n = 0;
};

// CSV: method,n,M,value,stderr
void write_rademacher_csv(const std::string& path,
                          const std::vector<RademacherCsvRow>& rows);

}  // namespace kcm
