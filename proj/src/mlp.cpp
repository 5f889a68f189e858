#include "kcm/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kcm/errors.hpp"

namespace kcm {

namespace {

// Deterministic unit-ish start vector for power iteration.
std::vector<double> power_iteration_seed(std::size_t n) {
    std::vector<double> v(n);
    std::uint64_t z = 0x243f6a8885a308d3ULL;  // fixed; not user-seeded
    for (std::size_t i = 0; i < n; ++i) {
        z = derive_seed(z, i);
        v[i] = static_cast<double>(z >> 11) * 0x1.0p-53 - 0.5;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) v[0] = 1.0;
    else
        for (double& x : v) x /= norm;
    return v;
}

// Symmetric eigenvalues by cyclic Jacobi rotations; a: n x n, destroyed.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    const std::size_t max_sweeps = 64;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        }
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i * n + p];
                    const double aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p * n + i];
                    const double aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    std::sort(eig.rbegin(), eig.rend());
    return eig;
}

}  // namespace

std::vector<std::size_t> MlpParams::dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(layers.front().in_dim);
    for (const auto& layer : layers) d.push_back(layer.out_dim);
    return d;
}

std::size_t MlpParams::input_dim() const {
    return layers.empty() ? 0 : layers.front().in_dim;
}

std::size_t MlpParams::output_dim() const {
    return layers.empty() ? 0 : layers.back().out_dim;
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.w.size() + layer.b.size();
    return n;
}

void MlpParams::validate() const {
    if (layers.empty()) throw ContractError("MlpParams: no layers");
    for (std::size_t s = 0; s < layers.size(); ++s) {
        const auto& layer = layers[s];
        if (layer.w.size() != layer.out_dim * layer.in_dim ||
            layer.b.size() != layer.out_dim) {
            throw ShapeError("MlpParams: layer " + std::to_string(s) +
                             " buffer sizes do not match dims");
        }
        if (s > 0 && layer.in_dim != layers[s - 1].out_dim) {
            throw ShapeError("MlpParams: layer " + std::to_string(s) + " expects " +
                             std::to_string(layer.in_dim) + " inputs, previous layer has " +
                             std::to_string(layers[s - 1].out_dim) + " outputs");
        }
        for (double v : layer.w) {
            if (!std::isfinite(v)) throw ContractError("MlpParams: non-finite weight");
        }
        for (double v : layer.b) {
            if (!std::isfinite(v)) throw ContractError("MlpParams: non-finite bias");
        }
    }
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, RngStream& init_stream) {
    if (dims.size() < 2) throw ContractError("make_mlp: need at least input and output dims");
    MlpParams params;
    for (std::size_t s = 1; s < dims.size(); ++s) {
        MlpParams::Layer layer;
        layer.in_dim = dims[s - 1];
        layer.out_dim = dims[s];
        layer.w.resize(layer.out_dim * layer.in_dim);
        layer.b.assign(layer.out_dim, 0.0);
        const double sigma = std::sqrt(2.0 / static_cast<double>(layer.in_dim));
        for (double& v : layer.w) v = sigma * init_stream.normal();
        params.layers.push_back(std::move(layer));
    }
    return params;
}

MlpVars attach_params(const MlpParams& params, Tape& tape) {
    MlpVars vars;
    for (const auto& layer : params.layers) {
        Tensor w = tape.leaf(Tensor::matrix(layer.out_dim, layer.in_dim, layer.w));
        Tensor b = tape.leaf(Tensor::vector(layer.b));
        vars.layers.emplace_back(std::move(w), std::move(b));
    }
    return vars;
}

Tensor mlp_forward(const MlpVars& vars, const Tensor& x) {
    if (vars.layers.empty()) throw ContractError("mlp_forward: no layers");
    Tensor h = x;
    for (std::size_t s = 0; s < vars.layers.size(); ++s) {
        h = linear(h, vars.layers[s].first, vars.layers[s].second);
        if (s + 1 < vars.layers.size()) h = relu(h);
    }
    return h;
}

Tensor mlp_forward(const MlpParams& params, const Tensor& x) {
    if (params.layers.empty()) throw ContractError("mlp_forward: no layers");
    Tensor h = x;
    for (std::size_t s = 0; s < params.layers.size(); ++s) {
        const auto& layer = params.layers[s];
        Tensor w = Tensor::matrix(layer.out_dim, layer.in_dim, layer.w);
        Tensor b = Tensor::vector(layer.b);
        h = linear(h, w, b);
        if (s + 1 < params.layers.size()) h = relu(h);
    }
    return h;
}

double spectral_norm(std::size_t rows, std::size_t cols, const std::vector<double>& w,
                     std::size_t iters, double tol) {
    if (rows == 0 || cols == 0 || w.size() != rows * cols) {
        throw ShapeError("spectral_norm: bad matrix dims");
    }
    std::vector<double> v = power_iteration_seed(cols);
    std::vector<double> wv(rows);
    double sigma = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        // wv = W v
        for (std::size_t i = 0; i < rows; ++i) {
            const double* wi = w.data() + i * cols;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += wi[j] * v[j];
            wv[i] = acc;
        }
        double norm_wv = 0.0;
        for (double x : wv) norm_wv += x * x;
        norm_wv = std::sqrt(norm_wv);
        if (norm_wv == 0.0) return 0.0;
        // v = W^T wv, normalized
        for (std::size_t j = 0; j < cols; ++j) v[j] = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double* wi = w.data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) v[j] += wi[j] * wv[i];
        }
        double norm_v = 0.0;
        for (double x : v) norm_v += x * x;
        norm_v = std::sqrt(norm_v);
        if (norm_v == 0.0) return norm_wv;
        for (double& x : v) x /= norm_v;
        const double next = norm_v / norm_wv;  // ||W^T u|| with u = Wv/||Wv||
        if (it > 0 && std::abs(next - sigma) <= tol * std::max(next, 1e-300)) {
            return next;
        }
        sigma = next;
    }
    return sigma;
}

std::vector<double> singular_values(std::size_t rows, std::size_t cols,
                                    const std::vector<double>& w) {
    if (rows == 0 || cols == 0 || w.size() != rows * cols) {
        throw ShapeError("singular_values: bad matrix dims");
    }
    // Gram matrix on the smaller side.
    const bool use_cols = cols <= rows;
    const std::size_t n = use_cols ? cols : rows;
    std::vector<double> g(n * n, 0.0);
    if (use_cols) {
        for (std::size_t i = 0; i < rows; ++i) {
            const double* wi = w.data() + i * cols;
            for (std::size_t p = 0; p < cols; ++p) {
                for (std::size_t q = p; q < cols; ++q) g[p * cols + q] += wi[p] * wi[q];
            }
        }
    } else {
        for (std::size_t p = 0; p < rows; ++p) {
            for (std::size_t q = p; q < rows; ++q) {
                const double* wp = w.data() + p * cols;
                const double* wq = w.data() + q * cols;
                double acc = 0.0;
                for (std::size_t j = 0; j < cols; ++j) acc += wp[j] * wq[j];
                g[p * rows + q] = acc;
            }
        }
    }
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < p; ++q) g[p * n + q] = g[q * n + p];
    }
    std::vector<double> eig = jacobi_eigenvalues(std::move(g), n);
    for (double& e : eig) e = e > 0.0 ? std::sqrt(e) : 0.0;
    return eig;
}

std::size_t numerical_rank(std::size_t rows, std::size_t cols,
                           const std::vector<double>& w, double rank_tol) {
    const std::vector<double> sv = singular_values(rows, cols, w);
    if (sv.empty() || sv.front() == 0.0) return 0;
    const double cutoff = rank_tol * sv.front();
    std::size_t rank = 0;
    for (double s : sv) {
        if (s > cutoff) ++rank;
    }
    return rank;
}

double lipschitz_upper_bound(const MlpParams& params) {
    double bound = 1.0;
    for (const auto& layer : params.layers) {
        bound *= spectral_norm(layer.out_dim, layer.in_dim, layer.w);
    }
    return bound;
}

SpectralBudget measure_budget(const MlpParams& params) {
    SpectralBudget budget;
    for (const auto& layer : params.layers) {
        budget.radii.push_back(spectral_norm(layer.out_dim, layer.in_dim, layer.w));
    }
    return budget;
}

ComplexityProxy complexity_proxy_g_terms(double b_x, std::size_t n, std::size_t d_w,
                                         const std::vector<double>& radii,
                                         const std::vector<double>& m) {
    if (n < 1) throw ContractError("complexity_proxy_g: n must be >= 1");
    if (radii.empty() || radii.size() != m.size()) {
        throw ContractError("complexity_proxy_g: radii/rank lists must align");
    }
    double prod_r = 1.0;
    double min_r = radii.front();
    double max_rm = radii.front() * m.front();
    for (std::size_t s = 0; s < radii.size(); ++s) {
        if (!(radii[s] > 0.0)) throw ContractError("complexity_proxy_g: radii must be positive");
        prod_r *= radii[s];
        min_r = std::min(min_r, radii[s]);
        max_rm = std::max(max_rm, radii[s] * m[s]);
    }
    const double nd = static_cast<double>(n);
    const double dw = static_cast<double>(d_w);
    const double layers = static_cast<double>(radii.size());  // L + 1
    const double log_arg = layers * std::sqrt(nd) * max_rm / (std::sqrt(dw) * min_r);
    ComplexityProxy out;
    double log_term = 0.0;
    if (log_arg > 1.0) {
        log_term = std::log(log_arg);
    } else {
        out.log_clamped = true;  // formula leaves this regime undefined
    }
    out.value = (b_x * prod_r / std::sqrt(nd)) * std::sqrt(dw * log_term);
    return out;
}

ComplexityProxy complexity_proxy_g(const MlpParams& params, const SpectralBudget& budget,
                                   double b_x, std::size_t n, double rank_tol) {
    if (budget.radii.size() != params.layers.size()) {
        throw ContractError("complexity_proxy_g: budget size does not match layer count");
    }
    std::size_t d_w = 0;
    std::vector<double> m;
    for (const auto& layer : params.layers) {
        d_w += layer.in_dim * layer.out_dim;
        m.push_back(std::sqrt(static_cast<double>(
            numerical_rank(layer.out_dim, layer.in_dim, layer.w, rank_tol))));
    }
    return complexity_proxy_g_terms(b_x, n, d_w, budget.radii, m);
}

}  // namespace kcm
