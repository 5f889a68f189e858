#include "kcm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kcm/errors.hpp"

namespace kcm {

namespace {

constexpr std::size_t kCifarPixels = 3072;  // 3 x 32 x 32, channel-major

Dataset cifar_read_impl(const std::vector<std::string>& files, const std::string& split,
                        std::size_t label_bytes, int num_classes) {
    const std::size_t record = label_bytes + kCifarPixels;
    Dataset ds;
    ds.d = kCifarPixels;
    ds.num_classes = num_classes;
    ds.binary = false;
    ds.split = split;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cifar: cannot open " + path);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        if (bytes.size() % record != 0) {
            throw FormatError("cifar: " + path + " has " + std::to_string(bytes.size()) +
                              " bytes, not a multiple of the " + std::to_string(record) +
                              "-byte record; trailing " +
                              std::to_string(bytes.size() % record) + " bytes at offset " +
                              std::to_string(bytes.size() - bytes.size() % record));
        }
        const std::size_t count = bytes.size() / record;
        for (std::size_t r = 0; r < count; ++r) {
            const unsigned char* rec =
                reinterpret_cast<const unsigned char*>(bytes.data()) + r * record;
            const unsigned char label = rec[label_bytes - 1];  // fine label for CIFAR-100
            if (label >= num_classes) {
                throw FormatError("cifar: " + path + " record " + std::to_string(r) +
                                  " has label byte " + std::to_string(label) +
                                  " >= " + std::to_string(num_classes));
            }
            ds.labels.push_back(static_cast<int>(label));
            for (std::size_t p = 0; p < kCifarPixels; ++p) {
                ds.inputs.push_back(static_cast<double>(rec[label_bytes + p]) / 255.0);
            }
        }
    }
    ds.n = ds.labels.size();
    return ds;
}

}  // namespace

void Dataset::validate() const {
    if (labels.size() != n || inputs.size() != n * d) {
        throw ContractError("Dataset: buffer sizes do not match n and d");
    }
    if (binary) {
        for (int y : labels) {
            if (y != -1 && y != 1) throw ContractError("Dataset: binary label not in {-1,+1}");
        }
    }
}

Tensor Dataset::input_tensor() const { return Tensor::matrix(n, d, inputs); }

std::vector<double> Dataset::row(std::size_t i) const {
    return std::vector<double>(inputs.begin() + i * d, inputs.begin() + (i + 1) * d);
}

Batch Dataset::gather(const std::vector<std::size_t>& idx, std::size_t begin,
                      std::size_t count) const {
    Batch batch;
    batch.n = count;
    batch.d = d;
    batch.target_width = binary ? 1 : static_cast<std::size_t>(num_classes);
    batch.inputs.resize(count * d);
    batch.targets.assign(count * batch.target_width, 0.0);
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t i = idx[begin + j];
        std::copy(inputs.begin() + i * d, inputs.begin() + (i + 1) * d,
                  batch.inputs.begin() + j * d);
        if (binary) {
            batch.targets[j] = static_cast<double>(labels[i]);
        } else {
            batch.targets[j * batch.target_width + labels[i]] = 1.0;
        }
    }
    return batch;
}

Dataset two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw ContractError("two_moons: n must be >= 2");
    if (noise < 0.0) throw ContractError("two_moons: noise must be >= 0");
    const std::size_t n_outer = (n + 1) / 2;
    const std::size_t n_inner = n / 2;
    Dataset ds;
    ds.n = n;
    ds.d = 2;
    ds.num_classes = 2;
    ds.binary = true;
    ds.inputs.resize(n * 2);
    ds.labels.resize(n);
    RngStream rng(seed);
    auto arc_t = [](std::size_t i, std::size_t m) {
        return m > 1 ? M_PI * static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
    };
    for (std::size_t i = 0; i < n_outer; ++i) {
        const double t = arc_t(i, n_outer);
        ds.inputs[i * 2] = std::cos(t);
        ds.inputs[i * 2 + 1] = std::sin(t);
        ds.labels[i] = -1;
    }
    for (std::size_t i = 0; i < n_inner; ++i) {
        const double t = arc_t(i, n_inner);
        const std::size_t j = n_outer + i;
        ds.inputs[j * 2] = 1.0 - std::cos(t);
        ds.inputs[j * 2 + 1] = 0.5 - std::sin(t);
        ds.labels[j] = 1;
    }
    if (noise > 0.0) {
        for (double& v : ds.inputs) v += noise * rng.normal();
    }
    return ds;
}

Dataset cifar10_read(const std::vector<std::string>& files, const std::string& split) {
    return cifar_read_impl(files, split, 1, 10);
}

Dataset cifar100_read(const std::vector<std::string>& files, const std::string& split) {
    return cifar_read_impl(files, split, 2, 100);
}

void apply_normalization(Dataset& ds, const std::vector<double>& mean,
                         const std::vector<double>& scale) {
    if (ds.normalized) throw ContractError("Dataset: already normalized");
    if (mean.size() != ds.d || scale.size() != ds.d) {
        throw ContractError("Dataset: normalization record does not match dimension");
    }
    for (std::size_t i = 0; i < ds.n; ++i) {
        for (std::size_t j = 0; j < ds.d; ++j) {
            ds.inputs[i * ds.d + j] = (ds.inputs[i * ds.d + j] - mean[j]) / scale[j];
        }
    }
    ds.norm_mean = mean;
    ds.norm_scale = scale;
    ds.normalized = true;
}

void normalize_like(Dataset& ds, const Dataset& stats_source, std::size_t channels) {
    if (channels == 0 || stats_source.d % channels != 0) {
        throw ContractError("normalize_like: channel count does not divide dimension");
    }
    const std::size_t per = stats_source.d / channels;
    std::vector<double> cmean(channels, 0.0), cvar(channels, 0.0);
    const double count = static_cast<double>(stats_source.n * per);
    for (std::size_t i = 0; i < stats_source.n; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t p = 0; p < per; ++p) {
                cmean[c] += stats_source.inputs[i * stats_source.d + c * per + p];
            }
        }
    }
    for (double& m : cmean) m /= count;
    for (std::size_t i = 0; i < stats_source.n; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t p = 0; p < per; ++p) {
                const double dv =
                    stats_source.inputs[i * stats_source.d + c * per + p] - cmean[c];
                cvar[c] += dv * dv;
            }
        }
    }
    std::vector<double> mean(ds.d), scale(ds.d);
    for (std::size_t c = 0; c < channels; ++c) {
        const double sd = std::max(std::sqrt(cvar[c] / count), 1e-8);
        for (std::size_t p = 0; p < per; ++p) {
            mean[c * per + p] = cmean[c];
            scale[c * per + p] = sd;
        }
    }
    apply_normalization(ds, mean, scale);
}

void augment_batch(Batch& batch, bool flip, bool crop, std::size_t pad, RngStream& rng) {
    if (!flip && !crop) return;
    if (batch.d != kCifarPixels) {
        throw ContractError("augment_batch: expects channel-major 3x32x32 rows");
    }
    const std::size_t side = 32;
    std::vector<double> scratch(kCifarPixels);
    for (std::size_t i = 0; i < batch.n; ++i) {
        double* img = batch.inputs.data() + i * kCifarPixels;
        if (flip && rng.uniform() < 0.5) {
            for (std::size_t c = 0; c < 3; ++c) {
                double* plane = img + c * side * side;
                for (std::size_t r = 0; r < side; ++r) {
                    std::reverse(plane + r * side, plane + (r + 1) * side);
                }
            }
        }
        if (crop) {
            const std::size_t dy = rng.index(2 * pad + 1);
            const std::size_t dx = rng.index(2 * pad + 1);
            // shift by (dy - pad, dx - pad) with zero padding
            for (std::size_t c = 0; c < 3; ++c) {
                const double* plane = img + c * side * side;
                double* out = scratch.data() + c * side * side;
                for (std::size_t r = 0; r < side; ++r) {
                    for (std::size_t col = 0; col < side; ++col) {
                        const long sr = static_cast<long>(r + dy) - static_cast<long>(pad);
                        const long sc = static_cast<long>(col + dx) - static_cast<long>(pad);
                        out[r * side + col] =
                            (sr >= 0 && sr < static_cast<long>(side) && sc >= 0 &&
                             sc < static_cast<long>(side))
                                ? plane[sr * side + sc]
                                : 0.0;
                    }
                }
            }
            std::copy(scratch.begin(), scratch.end(), img);
        }
    }
}

void write_synthetic_cifar10(const std::string& path, std::size_t records,
                             std::uint64_t seed) {
    RngStream rng(seed);
    // Ten fixed class patterns: smooth per-channel gradients with distinct
    // orientation and hue per class, plus pixel noise.
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_synthetic_cifar10: cannot open " + path);
    const std::size_t side = 32;
    for (std::size_t r = 0; r < records; ++r) {
        const unsigned char label = static_cast<unsigned char>(r % 10);
        out.put(static_cast<char>(label));
        const double angle = 2.0 * M_PI * label / 10.0;
        const double cx = std::cos(angle), sx = std::sin(angle);
        for (std::size_t c = 0; c < 3; ++c) {
            const double hue = 0.25 + 0.25 * std::sin(angle + 2.0 * c);
            for (std::size_t y = 0; y < side; ++y) {
                for (std::size_t x = 0; x < side; ++x) {
                    const double u = (static_cast<double>(x) / side - 0.5) * cx +
                                     (static_cast<double>(y) / side - 0.5) * sx;
                    double v = 0.5 + hue * std::sin(6.0 * u) + 0.08 * rng.normal();
                    v = std::clamp(v, 0.0, 1.0);
                    out.put(static_cast<char>(static_cast<unsigned char>(
                        std::lround(v * 255.0))));
                }
            }
        }
    }
    if (!out) throw FormatError("write_synthetic_cifar10: write failed for " + path);
}

}  // namespace kcm
