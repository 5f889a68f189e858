#pragma once

// Test-side oracles, written independently of the library code paths they
// check: central finite differences for gradients, one-sided Jacobi SVD for
// spectral quantities, and small statistics helpers.

#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

// Central finite differences (f(x+h e_i) - f(x-h e_i)) / 2h.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double step);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                   double floor = 1e-6);

// Singular values (descending) by one-sided Jacobi column orthogonalization.
std::vector<double> jacobi_svd(std::size_t rows, std::size_t cols,
                               std::vector<double> a);

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);  // sample std (n-1)

// Kolmogorov-Smirnov statistic of `sample` against a CDF.
double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf);

// Median, independent of any library path.
double median_of(std::vector<double> v);

}  // namespace oracle
