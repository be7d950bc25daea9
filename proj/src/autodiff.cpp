#include "prior/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace prior::ad {

std::string Shape::str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make_result(Shape shape, std::vector<double> value, std::string op, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    node->op = std::move(op);
    bool tracked = false;
    for (const auto& in : inputs) tracked = tracked || in.requires_grad();
    if (tracked) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

// Gradient buffer of a parent, allocated lazily. Returns nullptr if the parent is untracked.
double* grad_of(const NodePtr& n) {
    if (!n->requires_grad) return nullptr;
    if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
    return n->grad.data();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace

Tensor::Tensor() : Tensor(Shape{0, 0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) : node_(std::make_shared<Node>()) {
    if (shape.size() != values.size())
        throw std::invalid_argument("Tensor: shape " + shape.str() + " does not match " +
                                    std::to_string(values.size()) + " values");
    node_->shape = shape;
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return Tensor(Shape{rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{1, 1}, {v}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    const auto n = values.size();
    return Tensor(Shape{1, n}, std::move(values), requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
    const auto n = values.size();
    return Tensor(Shape{n, 1}, std::move(values), requires_grad);
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor " + shape().str() + " is not a scalar");
    return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), values(), false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(shape(), values(), requires_grad); }

Tape Tape::record(const Tensor& root) {
    // Iterative post-order DFS; parents are visited in declaration order so the
    // resulting order is a deterministic function of the graph.
    Tape tape;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const auto& parent = node->parents[next++];
            if (parent->requires_grad && visited.insert(parent.get()).second) stack.emplace_back(parent, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::backward() {
    if (nodes_.empty()) return;
    const auto& root = nodes_.back();
    if (root->shape.size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + root->shape.str());
    // Interior nodes start from zero each pass; leaves accumulate across passes.
    for (auto& n : nodes_)
        if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
    grad_of(root);
    root->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.backward_fn) n.backward_fn(n);
    }
}

std::string Tape::to_json() const {
    std::unordered_map<const Node*, std::size_t> index;
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        index[n.get()] = i;
        nlohmann::json parents = nlohmann::json::array();
        for (const auto& p : n->parents) {
            auto found = index.find(p.get());
            parents.push_back(found == index.end() ? nlohmann::json(nullptr) : nlohmann::json(found->second));
        }
        out.push_back({{"op", n->op}, {"shape", {n->shape.rows, n->shape.cols}}, {"parents", parents}});
    }
    return out.dump();
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + loss.shape().str());
    if (!loss.requires_grad()) return;
    Tape::record(loss).backward();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape().str() + " x " + b.shape().str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            const double* brow = &bv[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    return make_result(Shape{m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
        const auto& A = self.parents[0];
        const auto& B = self.parents[1];
        const double* g = self.grad.data();
        if (double* ga = grad_of(A)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* brow = &B->value[p * n];
                    const double* grow = &g[i * n];
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
        }
        if (double* gb = grad_of(B)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = A->value[i * k + p];
                    if (x == 0.0) continue;
                    const double* grow = &g[i * n];
                    double* gbrow = &gb[p * n];
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
    return make_result(Shape{n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
        if (double* ga = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
    return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
        for (const auto& p : self.parents)
            if (double* g = grad_of(p))
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
    return make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (double* g = grad_of(self.parents[1]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
    return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
        const auto& A = self.parents[0];
        const auto& B = self.parents[1];
        if (double* g = grad_of(A))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * B->value[i];
        if (double* g = grad_of(B))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * A->value[i];
    });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw std::invalid_argument("add_row: bias " + bias.shape().str() + " does not fit " + a.shape().str());
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.values()[j];
    return make_result(a.shape(), std::move(out), "add_row", {a, bias}, [m, n](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
        if (double* g = grad_of(self.parents[1]))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (auto& v : out) v *= s;
    return make_result(a.shape(), std::move(out), "scale", {a}, [s](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (auto& v : out) v += s;
    return make_result(a.shape(), std::move(out), "add_scalar", {a}, [](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.values());
    for (auto& v : out) v = std::tanh(v);
    return make_result(a.shape(), std::move(out), "tanh", {a}, [](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return make_result(Shape{1, 1}, {total}, "sum", {a}, [](Node& self) {
        const auto& A = self.parents[0];
        if (double* g = grad_of(A))
            for (std::size_t i = 0; i < A->value.size(); ++i) g[i] += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (m == 0) throw std::invalid_argument("mean_rows: no rows");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += a.values()[i * n + j];
    const double inv = 1.0 / static_cast<double>(m);
    for (auto& v : out) v *= inv;
    return make_result(Shape{1, n}, std::move(out), "mean_rows", {a}, [m, n, inv](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += inv * self.grad[j];
    });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.size())
        throw std::invalid_argument("reshape: cannot view " + a.shape().str() + " as " + Shape{rows, cols}.str());
    return make_result(Shape{rows, cols}, a.values(), "reshape", {a}, [](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.rows())
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") outside " + a.shape().str());
    const std::size_t n = a.cols();
    std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                            a.values().begin() + static_cast<std::ptrdiff_t>(end * n));
    return make_result(Shape{end - begin, n}, std::move(out), "slice_rows", {a}, [begin, n](Node& self) {
        if (double* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch " + p.shape().str());
        offsets.push_back(out.size());
        out.insert(out.end(), p.values().begin(), p.values().end());
        m += p.rows();
    }
    return make_result(Shape{m, n}, std::move(out), "concat_rows", parts, [offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k)
            if (double* g = grad_of(self.parents[k]))
                for (std::size_t i = 0; i < self.parents[k]->value.size(); ++i) g[i] += self.grad[offsets[k] + i];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch " + p.shape().str());
        offsets.push_back(n);
        n += p.cols();
    }
    std::vector<double> out(m * n);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = parts[k].cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * n + offsets[k] + j] = parts[k].values()[i * w + j];
    }
    return make_result(Shape{m, n}, std::move(out), "concat_cols", parts, [offsets, m, n](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            const std::size_t w = self.parents[k]->shape.cols;
            if (double* g = grad_of(self.parents[k]))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * n + offsets[k] + j];
        }
    });
}

Tensor element(const Tensor& a, std::size_t r, std::size_t c) {
    if (r >= a.rows() || c >= a.cols())
        throw std::invalid_argument("element: (" + std::to_string(r) + "," + std::to_string(c) + ") outside " +
                                    a.shape().str());
    const std::size_t idx = r * a.cols() + c;
    return make_result(Shape{1, 1}, {a.values()[idx]}, "element", {a}, [idx](Node& self) {
        if (double* g = grad_of(self.parents[0])) g[idx] += self.grad[0];
    });
}

namespace {

// Visits each softmax group (a row or a column) as a strided index range.
template <typename F>
void for_each_group(const Shape& s, int axis, F&& f) {
    if (axis == 1) {
        for (std::size_t i = 0; i < s.rows; ++i) f(i * s.cols, std::size_t{1}, s.cols);
    } else {
        for (std::size_t j = 0; j < s.cols; ++j) f(j, s.cols, s.rows);
    }
}

void check_axis(const Tensor& x, int axis, const char* op) {
    if (axis != 0 && axis != 1) throw std::invalid_argument(std::string(op) + ": axis must be 0 or 1");
    const std::size_t len = axis == 1 ? x.cols() : x.rows();
    if (len == 0 || x.size() == 0) throw std::invalid_argument(std::string(op) + ": empty axis");
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    check_axis(x, axis, "softmax");
    std::vector<double> out(x.size());
    for_each_group(x.shape(), axis, [&](std::size_t start, std::size_t stride, std::size_t len) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < len; ++t) hi = std::max(hi, x.values()[start + t * stride]);
        double z = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t i = start + t * stride;
            out[i] = std::exp(x.values()[i] - hi);
            z += out[i];
        }
        for (std::size_t t = 0; t < len; ++t) out[start + t * stride] /= z;
    });
    return make_result(x.shape(), std::move(out), "softmax", {x}, [axis](Node& self) {
        double* g = grad_of(self.parents[0]);
        if (!g) return;
        for_each_group(self.shape, axis, [&](std::size_t start, std::size_t stride, std::size_t len) {
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = start + t * stride;
                dot += self.grad[i] * self.value[i];
            }
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = start + t * stride;
                g[i] += self.value[i] * (self.grad[i] - dot);
            }
        });
    });
}

Tensor log_softmax(const Tensor& x, int axis) {
    check_axis(x, axis, "log_softmax");
    std::vector<double> out(x.size());
    for_each_group(x.shape(), axis, [&](std::size_t start, std::size_t stride, std::size_t len) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < len; ++t) hi = std::max(hi, x.values()[start + t * stride]);
        double z = 0.0;
        for (std::size_t t = 0; t < len; ++t) z += std::exp(x.values()[start + t * stride] - hi);
        const double lse = hi + std::log(z);
        for (std::size_t t = 0; t < len; ++t) out[start + t * stride] = x.values()[start + t * stride] - lse;
    });
    return make_result(x.shape(), std::move(out), "log_softmax", {x}, [axis](Node& self) {
        double* g = grad_of(self.parents[0]);
        if (!g) return;
        for_each_group(self.shape, axis, [&](std::size_t start, std::size_t stride, std::size_t len) {
            double total = 0.0;
            for (std::size_t t = 0; t < len; ++t) total += self.grad[start + t * stride];
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = start + t * stride;
                g[i] += self.grad[i] - std::exp(self.value[i]) * total;
            }
        });
    });
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("kl_divergence: length mismatch " + p.shape().str() + " vs " + q.shape().str());
    if (p.size() == 0) throw std::invalid_argument("kl_divergence: empty distributions");
    const std::size_t n = p.size();
    std::vector<double> qf(n);
    std::vector<bool> floored(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        floored[i] = q.values()[i] < kKlFloor;
        qf[i] = floored[i] ? kKlFloor : q.values()[i];
        z += qf[i];
    }
    for (auto& v : qf) v /= z;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = p.values()[i];
        if (pi > 0.0) total += pi * std::log(pi / qf[i]);
    }
    return make_result(Shape{1, 1}, {total}, "kl_divergence", {p, q}, [qf, floored, z](Node& self) {
        const auto& P = self.parents[0];
        const double g0 = self.grad[0];
        const std::size_t n = qf.size();
        if (double* gp = grad_of(P))
            for (std::size_t i = 0; i < n; ++i)
                if (P->value[i] > 0.0) gp[i] += g0 * (std::log(P->value[i] / qf[i]) + 1.0);
        // Through the renormalization qf_i = q'_i / z: dKL/dq'_j = (sum_i p_i - p_j / qf_j) / z,
        // and clamped entries pass no gradient.
        if (double* gq = grad_of(self.parents[1])) {
            double psum = 0.0;
            for (double v : P->value) psum += v;
            for (std::size_t j = 0; j < n; ++j)
                if (!floored[j]) gq[j] += g0 * (psum - P->value[j] / qf[j]) / z;
        }
    });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
    require_same_shape(prediction, target, "mse");
    const auto diff = sub(prediction, target);
    return mean(mul(diff, diff));
}

}  // namespace prior::ad
