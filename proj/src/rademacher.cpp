#include "kcm/rademacher.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kcm/errors.hpp"
#include "kcm/tensor.hpp"

namespace kcm {

namespace {

constexpr std::size_t kExhaustiveLimit = 20;

// (radius/n) ||sum_i eps_i x_i - (sum_i eps_i) shift||_2 for one sign vector.
// `shift` is the per-member input shift induced by convolution (empty: none).
double inner_sup(const std::vector<double>& sample, std::size_t n, std::size_t d,
                 double radius, const std::vector<int>& eps,
                 const std::vector<double>& shift) {
    std::vector<double> acc(d, 0.0);
    double eps_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = static_cast<double>(eps[i]);
        eps_sum += e;
        for (std::size_t j = 0; j < d; ++j) acc[j] += e * sample[i * d + j];
    }
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double v = shift.empty() ? acc[j] : acc[j] - eps_sum * shift[j];
        norm2 += v * v;
    }
    return radius / static_cast<double>(n) * std::sqrt(norm2);
}

RademacherEstimate estimate_linear(const std::vector<double>& sample, std::size_t n,
                                   std::size_t d, double radius,
                                   const std::vector<double>& shift,
                                   RademacherMethod method, std::size_t m_draws,
                                   RngStream& rng) {
    if (n < 1) throw ContractError("rademacher_linear_l2: n must be >= 1");
    if (sample.size() != n * d) throw ShapeError("rademacher_linear_l2: bad sample buffer");
    if (!(radius > 0.0)) throw ContractError("rademacher_linear_l2: radius must be positive");

    RademacherEstimate est;
    est.method = method;
    std::vector<int> eps(n);
    if (method == RademacherMethod::exhaustive) {
        if (n > kExhaustiveLimit) {
            throw CapacityError("rademacher_linear_l2: exhaustive enumeration over 2^" +
                                std::to_string(n) + " sign vectors exceeds the n <= " +
                                std::to_string(kExhaustiveLimit) + " ceiling");
        }
        const std::size_t total = std::size_t{1} << n;
        double acc = 0.0;
        for (std::size_t mask = 0; mask < total; ++mask) {
            for (std::size_t i = 0; i < n; ++i) eps[i] = (mask >> i) & 1 ? 1 : -1;
            acc += inner_sup(sample, n, d, radius, eps, shift);
        }
        est.value = acc / static_cast<double>(total);
        est.std_error = 0.0;
        est.sign_samples = total;
        return est;
    }
    if (method != RademacherMethod::monte_carlo) {
        throw ContractError("rademacher_linear_l2: method must be exhaustive or monte_carlo");
    }
    if (m_draws < 2) throw ContractError("rademacher_linear_l2: Monte Carlo needs M >= 2");
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t m = 0; m < m_draws; ++m) {
        for (std::size_t i = 0; i < n; ++i) eps[i] = rng.uniform() < 0.5 ? -1 : 1;
        const double v = inner_sup(sample, n, d, radius, eps, shift);
        acc += v;
        acc2 += v * v;
    }
    const double md = static_cast<double>(m_draws);
    est.value = acc / md;
    const double var = std::max(0.0, (acc2 - acc * acc / md) / (md - 1.0));
    est.std_error = std::sqrt(var / md);
    est.sign_samples = m_draws;
    return est;
}

}  // namespace

std::string rademacher_method_name(RademacherMethod m) {
    switch (m) {
        case RademacherMethod::exhaustive: return "exhaustive";
        case RademacherMethod::monte_carlo: return "monte-carlo";
        case RademacherMethod::ascent_lower_bound: return "ascent-lower-bound";
    }
    return "?";
}

RademacherEstimate rademacher_linear_l2(const std::vector<double>& sample, std::size_t n,
                                        std::size_t d, double radius,
                                        RademacherMethod method, std::size_t m_draws,
                                        RngStream& rng) {
    return estimate_linear(sample, n, d, radius, {}, method, m_draws, rng);
}

RademacherEstimate rademacher_linear_l2_convolved(const std::vector<double>& sample,
                                                  std::size_t n, std::size_t d,
                                                  double radius, const OffsetBatch& offsets,
                                                  RademacherMethod method,
                                                  std::size_t m_draws, RngStream& rng) {
    if (offsets.d != d) throw ShapeError("rademacher_linear_l2_convolved: offset dim mismatch");
    // w.(x - u) averaged over offsets = w.(x - mean(u)): affine members see a
    // pure input shift.
    std::vector<double> shift(d, 0.0);
    for (std::size_t i = 0; i < offsets.n; ++i) {
        for (std::size_t j = 0; j < d; ++j) shift[j] += offsets.row(i)[j];
    }
    for (double& s : shift) s /= static_cast<double>(offsets.n);
    return estimate_linear(sample, n, d, radius, shift, method, m_draws, rng);
}

RademacherEstimate rademacher_mlp_lower_bound(const std::vector<std::size_t>& dims,
                                              const SpectralBudget& budget,
                                              const std::vector<double>& sample,
                                              std::size_t n, std::size_t d,
                                              const MlpAscentOptions& opt, RngStream& rng) {
    if (dims.size() < 2 || dims.front() != d || dims.back() != 1) {
        throw ContractError("rademacher_mlp_lower_bound: dims must map d inputs to 1 output");
    }
    if (budget.radii.size() != dims.size() - 1) {
        throw ContractError("rademacher_mlp_lower_bound: budget size mismatch");
    }
    for (double r : budget.radii) {
        if (!(r > 0.0)) throw ContractError("rademacher_mlp_lower_bound: radii must be positive");
    }
    if (opt.sign_draws < 1) throw ContractError("rademacher_mlp_lower_bound: need sign draws");

    const Tensor x = Tensor::matrix(n, d, sample);
    auto project = [&budget](MlpParams& params) {
        for (std::size_t s = 0; s < params.layers.size(); ++s) {
            auto& layer = params.layers[s];
            const double sigma = spectral_norm(layer.out_dim, layer.in_dim, layer.w);
            if (sigma > budget.radii[s]) {
                const double scale = budget.radii[s] / sigma;
                for (double& v : layer.w) v *= scale;
            }
        }
    };
    auto objective = [&](const MlpParams& params, const std::vector<double>& eps) {
        const Tensor out = mlp_forward(params, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += eps[i] * out.at(i, 0);
        return acc / static_cast<double>(n);
    };

    double acc = 0.0, acc2 = 0.0;
    std::vector<double> eps(n);
    for (std::size_t m = 0; m < opt.sign_draws; ++m) {
        for (std::size_t i = 0; i < n; ++i) eps[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;

        MlpParams params;
        if (opt.init == AscentInit::zero) {
            for (std::size_t s = 1; s < dims.size(); ++s) {
                MlpParams::Layer layer;
                layer.in_dim = dims[s - 1];
                layer.out_dim = dims[s];
                layer.w.assign(layer.out_dim * layer.in_dim, 0.0);
                layer.b.assign(layer.out_dim, 0.0);
                params.layers.push_back(std::move(layer));
            }
        } else {
            params = make_mlp(dims, rng);
            project(params);
        }

        // The zero function is a class member, so the sup is at least 0.
        double best = std::max(0.0, objective(params, eps));
        for (std::size_t it = 0; it < opt.ascent_steps; ++it) {
            Tape tape;
            MlpVars vars = attach_params(params, tape);
            Tensor out = mlp_forward(vars, x);
            Tensor goal = mean(mul(Tensor::vector(eps), flatten(out)));
            tape.backward(goal);
            // Weights only: the spectrally constrained class is bias-free.
            for (std::size_t s = 0; s < params.layers.size(); ++s) {
                auto& layer = params.layers[s];
                const auto& gw = vars.layers[s].first.grad();
                for (std::size_t i = 0; i < layer.w.size(); ++i) {
                    layer.w[i] += opt.ascent_rate * gw[i];
                }
            }
            project(params);
            best = std::max(best, objective(params, eps));
        }
        acc += best;
        acc2 += best * best;
    }
    const double md = static_cast<double>(opt.sign_draws);
    RademacherEstimate est;
    est.method = RademacherMethod::ascent_lower_bound;
    est.sign_samples = opt.sign_draws;
    est.value = acc / md;
    if (opt.sign_draws > 1) {
        const double var = std::max(0.0, (acc2 - acc * acc / md) / (md - 1.0));
        est.std_error = std::sqrt(var / md);
    }
    return est;
}

double kcm_scale(double h, double ck1, double b_x) {
    if (h < 0.0 || ck1 < 0.0) throw ContractError("kcm_scale: h and cK1 must be >= 0");
    if (!(b_x > 0.0)) throw ContractError("kcm_scale: B_x must be positive");
    return (3.0 * h * ck1 + b_x) / b_x;
}

void write_rademacher_csv(const std::string& path,
                          const std::vector<RademacherCsvRow>& rows) {
    std::ostringstream os;
    os << "method,n,M,value,stderr\n";
    char buf[256];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.12g,%.12g\n",
                      rademacher_method_name(row.estimate.method).c_str(), row.n,
                      row.estimate.sign_samples, row.estimate.value,
                      row.estimate.std_error);
        os << buf;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_rademacher_csv: cannot open " + path);
    out << os.str();
}

}  // namespace kcm
