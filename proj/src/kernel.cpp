#include "kcm/kernel.hpp"

#include <cmath>

#include "kcm/errors.hpp"

namespace kcm {

void KernelSpec::validate() const {
    if (!(bandwidth >= 0.0)) throw ContractError("KernelSpec: bandwidth must be >= 0");
    if (dim < 1) throw ContractError("KernelSpec: dim must be >= 1");
}

double OffsetBatch::max_row_norm() const {
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += r[j] * r[j];
        best = std::max(best, std::sqrt(acc));
    }
    return best;
}

OffsetBatch sample_offsets(const KernelSpec& spec, std::size_t n, RngStream& rng) {
    spec.validate();
    if (n < 1) throw ContractError("sample_offsets: N must be >= 1");
    if (spec.antithetic && n % 2 != 0) {
        throw ContractError("sample_offsets: antithetic draws require even N");
    }
    OffsetBatch batch;
    batch.n = n;
    batch.d = spec.dim;
    batch.offsets.resize(n * spec.dim);
    const std::size_t fresh = spec.antithetic ? n / 2 : n;
    for (std::size_t i = 0; i < fresh; ++i) {
        for (std::size_t j = 0; j < spec.dim; ++j) {
            batch.offsets[i * spec.dim + j] = spec.bandwidth * rng.normal();
        }
    }
    if (spec.antithetic) {
        for (std::size_t i = 0; i < fresh; ++i) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                batch.offsets[(fresh + i) * spec.dim + j] = -batch.offsets[i * spec.dim + j];
            }
        }
    }
    return batch;
}

double gaussian_unit_norm_moment(std::size_t d) {
    if (d < 1) throw ContractError("gaussian_unit_norm_moment: d must be >= 1");
    const double dd = static_cast<double>(d);
    return std::sqrt(2.0) * std::exp(std::lgamma((dd + 1.0) / 2.0) - std::lgamma(dd / 2.0));
}

double kernel_mean_norm(const KernelSpec& spec) {
    spec.validate();
    return spec.bandwidth * gaussian_unit_norm_moment(spec.dim);
}

Tensor kcm_forward(const std::function<Tensor(const Tensor&)>& model, const Tensor& x,
                   const OffsetBatch& offsets) {
    if (x.rank() != 2 || x.cols() != offsets.d) {
        throw ShapeError("kcm_forward: input shape " + x.shape_str() +
                         " does not match offset dim " + std::to_string(offsets.d));
    }
    if (offsets.n < 1) throw ContractError("kcm_forward: empty offset batch");
    Tensor acc;
    for (std::size_t i = 0; i < offsets.n; ++i) {
        Tensor u = Tensor::vector(std::vector<double>(
            offsets.row(i), offsets.row(i) + offsets.d));
        Tensor shifted = sub_rowvec(x, u);
        Tensor out = model(shifted);
        acc = i == 0 ? out : add(acc, out);
    }
    return scale(acc, 1.0 / static_cast<double>(offsets.n));
}

Tensor kcm_values(const MlpParams& params, const KernelSpec& spec, std::size_t n_eval,
                  const Tensor& x, RngStream& rng) {
    const OffsetBatch offsets = sample_offsets(spec, n_eval, rng);
    return kcm_forward([&params](const Tensor& in) { return mlp_forward(params, in); }, x,
                       offsets);
}

std::vector<int> labels_of(const Tensor& outputs) {
    const std::size_t m = outputs.rows();
    const std::size_t c = outputs.cols();
    std::vector<int> labels(m);
    if (c == 1) {
        for (std::size_t i = 0; i < m; ++i) {
            labels[i] = outputs.at(i, 0) >= 0.0 ? 1 : -1;
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < c; ++j) {
                if (outputs.at(i, j) > outputs.at(i, best)) best = j;
            }
            labels[i] = static_cast<int>(best);
        }
    }
    return labels;
}

std::vector<int> kcm_predict(const MlpParams& params, const KernelSpec& spec,
                             std::size_t n_eval, const Tensor& x, RngStream& rng) {
    if (n_eval < 1) throw ContractError("kcm_predict: N_eval must be >= 1");
    return labels_of(kcm_values(params, spec, n_eval, x, rng));
}

}  // namespace kcm
