#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcm/kernel.hpp"
#include "kcm/mlp.hpp"

namespace kcm {

struct ContourBounds {
    double x1_min = -1.5, x1_max = 2.5;
    double x2_min = -1.0, x2_max = 1.5;
};

// Model values on a regular 2-d grid; inputs for level-set plots of the
// decision boundary and the -1/+1 contours.
struct ContourGrid {
    std::size_t resolution = 0;
    ContourBounds bounds;
    std::vector<double> values;  // resolution^2, row-major over (x2, x1)
    std::vector<int> labels;
};

// Evaluates f (or the Monte Carlo f^K when spec is non-null) at every node.
// Two-dimensional inputs only.
ContourGrid export_contour(const MlpParams& params, const KernelSpec* spec,
                           std::size_t n_eval, std::uint64_t eval_seed,
                           const ContourBounds& bounds, std::size_t resolution);

// CSV: x1,x2,value,label
void write_contour_csv(const ContourGrid& grid, const std::string& path);

}  // namespace kcm
