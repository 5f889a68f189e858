#include "kcm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kcm/errors.hpp"

namespace kcm {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::shared_ptr<detail::TensorNode> make_node(std::vector<std::size_t> shape) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->values.resize(shape_product(node->shape));
    return node;
}

// Tape the output joins, if any. Mixing tensors from two live tapes is a
// wiring bug in the caller.
Tape* joint_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->defined() || t->node()->tape == nullptr) continue;
        if (tape != nullptr && tape != t->node()->tape) {
            throw ContractError("op inputs belong to different tapes");
        }
        tape = t->node()->tape;
    }
    return tape;
}

void attach_output(const std::shared_ptr<detail::TensorNode>& out, Tape* tape) {
    out->tape = tape;
    out->requires_grad = true;
    out->grad.assign(out->values.size(), 0.0);
}

// C = A(m-by-k) * B(k-by-n), row-major, C pre-zeroed by caller.
void mm_nn(const double* a, const double* b, double* c, std::size_t m,
           std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C(m-by-k) += A(m-by-n) * B(k-by-n)^T
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        double* ci = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
            ci[p] += acc;
        }
    }
}

// C(k-by-n) += A(m-by-k)^T * B(m-by-n)
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < m; ++p) {
        const double* ap = a + p * k;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = ap[i];
            if (av == 0.0) continue;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

double stable_logistic(double z) {
    // log(1 + exp(-z)) without overflow on either tail.
    if (z > 0.0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::scalar(double v) {
    auto node = make_node({});
    node->values[0] = v;
    return Tensor(std::move(node));
}

Tensor Tensor::vector(std::vector<double> v) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = {v.size()};
    node->values = std::move(v);
    return Tensor(std::move(node));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    if (v.size() != rows * cols) {
        throw ShapeError("matrix: buffer size " + std::to_string(v.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = {rows, cols};
    node->values = std::move(v);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    return Tensor(make_node(std::move(shape)));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    auto node = make_node(std::move(shape));
    std::fill(node->values.begin(), node->values.end(), v);
    return Tensor(std::move(node));
}

const std::vector<std::size_t>& Tensor::shape() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->values.size();
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor is not rank 2, shape " + shape_str());
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor is not rank 2, shape " + shape_str());
    return node_->shape[1];
}

const std::vector<double>& Tensor::values() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->values;
}

std::vector<double>& Tensor::values_mut() {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->values;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
    if (!requires_grad()) {
        throw ContractError("grad(): tensor does not participate in a tape");
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!requires_grad()) {
        throw ContractError("zero_grad(): tensor does not participate in a tape");
    }
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
    }
    return node_->values[0];
}

double Tensor::at(std::size_t i) const { return values().at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
    return values().at(i * cols() + j);
}

std::string Tensor::shape_str() const { return shape_to_string(shape()); }

// --- Tape -------------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = value.shape();
    node->values = value.values();
    node->requires_grad = true;
    node->is_leaf = true;
    node->tape = this;
    node->grad.assign(node->values.size(), 0.0);
    leaves_.push_back(node);
    return Tensor(std::move(node));
}

void Tape::register_op(std::shared_ptr<detail::TensorNode> output,
                       std::function<void()> pull) {
    records_.push_back(Record{std::move(output), std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.node()->tape == nullptr) {
        throw ContractError("backward: loss is detached from any tape");
    }
    if (loss.node()->tape != this) {
        throw ContractError("backward: loss belongs to a different tape");
    }
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, shape " + loss.shape_str());
    }
    // Intermediate adjoints restart from zero on every call; leaf gradients
    // accumulate across calls.
    for (auto& rec : records_) {
        std::fill(rec.output->grad.begin(), rec.output->grad.end(), 0.0);
    }
    if (loss.node()->is_leaf) {
        loss.node()->grad[0] += 1.0;
        return;
    }
    loss.node()->grad[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        it->pull();
    }
}

void Tape::zero_grad() {
    for (auto& leaf : leaves_) {
        std::fill(leaf->grad.begin(), leaf->grad.end(), 0.0);
    }
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node({m, n});
    mm_nn(a.values().data(), b.values().data(), out->values.data(), m, k, n);
    if (Tape* tape = joint_tape({&a, &b})) {
        attach_output(out, tape);
        auto an = a.node(), bn = b.node(), on = out;
        tape->register_op(on, [an, bn, on, m, k, n] {
            if (an->requires_grad) {
                mm_nt_acc(on->grad.data(), bn->values.data(), an->grad.data(), m, n, k);
            }
            if (bn->requires_grad) {
                mm_tn_acc(an->values.data(), on->grad.data(), bn->grad.data(), m, k, n);
            }
        });
    }
    return Tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.cols()) {
        throw ShapeError("linear: incompatible shapes x " + x.shape_str() + ", w " +
                         w.shape_str());
    }
    if (b.rank() != 1 || b.size() != w.rows()) {
        throw ShapeError("linear: bias shape " + b.shape_str() + " does not match " +
                         std::to_string(w.rows()) + " outputs");
    }
    const std::size_t m = x.rows(), k = x.cols(), n = w.rows();
    auto out = make_node({m, n});
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = xv + i * k;
        double* oi = out->values.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* wj = wv + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += xi[p] * wj[p];
            oi[j] = acc + bv[j];
        }
    }
    if (Tape* tape = joint_tape({&x, &w, &b})) {
        attach_output(out, tape);
        auto xn = x.node(), wn = w.node(), bn = b.node(), on = out;
        tape->register_op(on, [xn, wn, bn, on, m, k, n] {
            const double* g = on->grad.data();
            if (xn->requires_grad) {
                // dX += G * W
                mm_nn(g, wn->values.data(), xn->grad.data(), m, n, k);
            }
            if (wn->requires_grad) {
                // dW += G^T * X
                mm_tn_acc(g, xn->values.data(), wn->grad.data(), m, n, k);
            }
            if (bn->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* gi = g + i * n;
                    for (std::size_t j = 0; j < n; ++j) bn->grad[j] += gi[j];
                }
            }
        });
    }
    return Tensor(out);
}

Tensor relu(const Tensor& a) {
    auto out = make_node(a.shape());
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        out->values[i] = av[i] > 0.0 ? av[i] : 0.0;
    }
    if (Tape* tape = joint_tape({&a})) {
        attach_output(out, tape);
        auto an = a.node(), on = out;
        tape->register_op(on, [an, on] {
            if (!an->requires_grad) return;
            for (std::size_t i = 0; i < an->values.size(); ++i) {
                if (an->values[i] > 0.0) an->grad[i] += on->grad[i];
            }
        });
    }
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool rowcast = a.rank() == 2 && b.rank() == 1 && b.size() == a.cols();
    if (!rowcast && a.shape() != b.shape()) {
        throw ShapeError("add: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
    }
    auto out = make_node(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    if (rowcast) {
        const std::size_t m = a.rows(), n = a.cols();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out->values[i * n + j] = av[i * n + j] + bv[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] + bv[i];
    }
    if (Tape* tape = joint_tape({&a, &b})) {
        attach_output(out, tape);
        auto an = a.node(), bn = b.node(), on = out;
        tape->register_op(on, [an, bn, on, rowcast] {
            if (an->requires_grad) {
                for (std::size_t i = 0; i < an->grad.size(); ++i) {
                    an->grad[i] += on->grad[i];
                }
            }
            if (bn->requires_grad) {
                if (rowcast) {
                    const std::size_t n = bn->values.size();
                    for (std::size_t i = 0; i < on->grad.size(); ++i) {
                        bn->grad[i % n] += on->grad[i];
                    }
                } else {
                    for (std::size_t i = 0; i < bn->grad.size(); ++i) {
                        bn->grad[i] += on->grad[i];
                    }
                }
            }
        });
    }
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("sub: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
    }
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out->values[i] = a.values()[i] - b.values()[i];
    }
    if (Tape* tape = joint_tape({&a, &b})) {
        attach_output(out, tape);
        auto an = a.node(), bn = b.node(), on = out;
        tape->register_op(on, [an, bn, on] {
            if (an->requires_grad) {
                for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] -= on->grad[i];
            }
        });
    }
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
    }
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out->values[i] = a.values()[i] * b.values()[i];
    }
    if (Tape* tape = joint_tape({&a, &b})) {
        attach_output(out, tape);
        auto an = a.node(), bn = b.node(), on = out;
        tape->register_op(on, [an, bn, on] {
            if (an->requires_grad) {
                for (std::size_t i = 0; i < an->grad.size(); ++i) {
                    an->grad[i] += on->grad[i] * bn->values[i];
                }
            }
            if (bn->requires_grad) {
                for (std::size_t i = 0; i < bn->grad.size(); ++i) {
                    bn->grad[i] += on->grad[i] * an->values[i];
                }
            }
        });
    }
    return Tensor(out);
}

Tensor scale(const Tensor& a, double c) {
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out->values[i] = a.values()[i] * c;
    if (Tape* tape = joint_tape({&a})) {
        attach_output(out, tape);
        auto an = a.node(), on = out;
        tape->register_op(on, [an, on, c] {
            if (!an->requires_grad) return;
            for (std::size_t i = 0; i < an->grad.size(); ++i) {
                an->grad[i] += on->grad[i] * c;
            }
        });
    }
    return Tensor(out);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sum(const Tensor& a) {
    auto out = make_node({});
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    out->values[0] = acc;
    if (Tape* tape = joint_tape({&a})) {
        attach_output(out, tape);
        auto an = a.node(), on = out;
        tape->register_op(on, [an, on] {
            if (!an->requires_grad) return;
            const double g = on->grad[0];
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
        });
    }
    return Tensor(out);
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ContractError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sub_rowvec(const Tensor& x, const Tensor& u) {
    if (x.rank() != 2 || u.rank() != 1 || u.size() != x.cols()) {
        throw ShapeError("sub_rowvec: incompatible shapes " + x.shape_str() + " and " +
                         u.shape_str());
    }
    const std::size_t m = x.rows(), d = x.cols();
    auto out = make_node({m, d});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out->values[i * d + j] = x.values()[i * d + j] - u.values()[j];
        }
    }
    if (Tape* tape = joint_tape({&x, &u})) {
        attach_output(out, tape);
        auto xn = x.node(), un = u.node(), on = out;
        tape->register_op(on, [xn, un, on, d] {
            if (xn->requires_grad) {
                for (std::size_t i = 0; i < xn->grad.size(); ++i) {
                    xn->grad[i] += on->grad[i];
                }
            }
            if (un->requires_grad) {
                for (std::size_t i = 0; i < on->grad.size(); ++i) {
                    un->grad[i % d] -= on->grad[i];
                }
            }
        });
    }
    return Tensor(out);
}

Tensor flatten(const Tensor& a) {
    auto out = std::make_shared<detail::TensorNode>();
    out->shape = {a.size()};
    out->values = a.values();
    if (Tape* tape = joint_tape({&a})) {
        attach_output(out, tape);
        auto an = a.node(), on = out;
        tape->register_op(on, [an, on] {
            if (!an->requires_grad) return;
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return Tensor(out);
}

Tensor logistic_loss(const Tensor& z) {
    auto out = make_node(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out->values[i] = stable_logistic(z.values()[i]);
    }
    if (Tape* tape = joint_tape({&z})) {
        attach_output(out, tape);
        auto zn = z.node(), on = out;
        tape->register_op(on, [zn, on] {
            if (!zn->requires_grad) return;
            for (std::size_t i = 0; i < zn->grad.size(); ++i) {
                // d/dz log(1+e^{-z}) = -sigmoid(-z)
                zn->grad[i] += on->grad[i] * (-sigmoid(-zn->values[i]));
            }
        });
    }
    return Tensor(out);
}

Tensor hinge_loss(const Tensor& z) {
    auto out = make_node(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double v = 1.0 - z.values()[i];
        out->values[i] = v > 0.0 ? v : 0.0;
    }
    if (Tape* tape = joint_tape({&z})) {
        attach_output(out, tape);
        auto zn = z.node(), on = out;
        tape->register_op(on, [zn, on] {
            if (!zn->requires_grad) return;
            for (std::size_t i = 0; i < zn->grad.size(); ++i) {
                if (zn->values[i] < 1.0) zn->grad[i] -= on->grad[i];
            }
        });
    }
    return Tensor(out);
}

Tensor clamp_max(const Tensor& a, double hi) {
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out->values[i] = a.values()[i] < hi ? a.values()[i] : hi;
    }
    if (Tape* tape = joint_tape({&a})) {
        attach_output(out, tape);
        auto an = a.node(), on = out;
        tape->register_op(on, [an, on, hi] {
            if (!an->requires_grad) return;
            for (std::size_t i = 0; i < an->grad.size(); ++i) {
                if (an->values[i] < hi) an->grad[i] += on->grad[i];
            }
        });
    }
    return Tensor(out);
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& targets) {
    if (logits.rank() != 2 || logits.shape() != targets.shape()) {
        throw ShapeError("softmax_cross_entropy: incompatible shapes " +
                         logits.shape_str() + " and " + targets.shape_str());
    }
    const std::size_t m = logits.rows(), c = logits.cols();
    auto out = make_node({m});
    const double* lv = logits.values().data();
    const double* tv = targets.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* li = lv + i * c;
        const double* ti = tv + i * c;
        double mx = li[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, li[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(li[j] - mx);
        const double lse = mx + std::log(se);
        double tsum = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            tsum += ti[j];
            dot += ti[j] * li[j];
        }
        out->values[i] = lse * tsum - dot;
    }
    if (Tape* tape = joint_tape({&logits, &targets})) {
        attach_output(out, tape);
        auto ln = logits.node(), tn = targets.node(), on = out;
        tape->register_op(on, [ln, tn, on, m, c] {
            for (std::size_t i = 0; i < m; ++i) {
                const double g = on->grad[i];
                if (g == 0.0) continue;
                const double* li = ln->values.data() + i * c;
                const double* ti = tn->values.data() + i * c;
                double mx = li[0];
                for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, li[j]);
                double se = 0.0;
                for (std::size_t j = 0; j < c; ++j) se += std::exp(li[j] - mx);
                const double lse = mx + std::log(se);
                double tsum = 0.0;
                for (std::size_t j = 0; j < c; ++j) tsum += ti[j];
                if (ln->requires_grad) {
                    for (std::size_t j = 0; j < c; ++j) {
                        const double p = std::exp(li[j] - mx) / se;
                        ln->grad[i * c + j] += g * (p * tsum - ti[j]);
                    }
                }
                if (tn->requires_grad) {
                    for (std::size_t j = 0; j < c; ++j) {
                        tn->grad[i * c + j] += g * (lse - li[j]);
                    }
                }
            }
        });
    }
    return Tensor(out);
}

}  // namespace kcm
