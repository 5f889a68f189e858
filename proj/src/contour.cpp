#include "kcm/contour.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kcm/errors.hpp"
#include "kcm/rng.hpp"

namespace kcm {

ContourGrid export_contour(const MlpParams& params, const KernelSpec* spec,
                           std::size_t n_eval, std::uint64_t eval_seed,
                           const ContourBounds& bounds, std::size_t resolution) {
    if (params.input_dim() != 2) {
        throw ContractError("export_contour: contours are 2-d only, model takes " +
                            std::to_string(params.input_dim()) + " inputs");
    }
    if (resolution < 2) throw ContractError("export_contour: resolution must be >= 2");

    ContourGrid grid;
    grid.resolution = resolution;
    grid.bounds = bounds;
    const std::size_t nodes = resolution * resolution;
    std::vector<double> inputs(nodes * 2);
    const double dx1 = (bounds.x1_max - bounds.x1_min) / static_cast<double>(resolution - 1);
    const double dx2 = (bounds.x2_max - bounds.x2_min) / static_cast<double>(resolution - 1);
    std::size_t k = 0;
    for (std::size_t r = 0; r < resolution; ++r) {
        for (std::size_t c = 0; c < resolution; ++c) {
            inputs[k * 2] = bounds.x1_min + dx1 * static_cast<double>(c);
            inputs[k * 2 + 1] = bounds.x2_min + dx2 * static_cast<double>(r);
            ++k;
        }
    }
    Tensor x = Tensor::matrix(nodes, 2, inputs);
    Tensor out;
    if (spec != nullptr) {
        KernelSpec eval_spec = *spec;
        eval_spec.dim = 2;
        RngStream rng(eval_seed);
        out = kcm_values(params, eval_spec, n_eval, x, rng);
    } else {
        out = mlp_forward(params, x);
    }
    if (out.cols() != 1) {
        throw ContractError("export_contour: model must have a single output");
    }
    grid.values.resize(nodes);
    grid.labels.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        const double v = out.at(i, 0);
        if (!std::isfinite(v)) throw ContractError("export_contour: non-finite grid value");
        grid.values[i] = v;
        grid.labels[i] = v >= 0.0 ? 1 : -1;
    }
    return grid;
}

void write_contour_csv(const ContourGrid& grid, const std::string& path) {
    std::ostringstream os;
    os << "x1,x2,value,label\n";
    char buf[160];
    const std::size_t res = grid.resolution;
    const double dx1 =
        (grid.bounds.x1_max - grid.bounds.x1_min) / static_cast<double>(res - 1);
    const double dx2 =
        (grid.bounds.x2_max - grid.bounds.x2_min) / static_cast<double>(res - 1);
    std::size_t k = 0;
    for (std::size_t r = 0; r < res; ++r) {
        for (std::size_t c = 0; c < res; ++c) {
            const double x1 = grid.bounds.x1_min + dx1 * static_cast<double>(c);
            const double x2 = grid.bounds.x2_min + dx2 * static_cast<double>(r);
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.12g,%d\n", x1, x2,
                          grid.values[k], grid.labels[k]);
            os << buf;
            ++k;
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_contour_csv: cannot open " + path);
    out << os.str();
}

}  // namespace kcm
