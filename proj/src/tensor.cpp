#include "hyperskel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <unordered_set>

namespace hyperskel {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::shared_ptr<Node> make_node(std::vector<int> shape, std::vector<double> data) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

void ensure_grad(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
}

bool want_grad(std::initializer_list<const Tensor*> ins) {
    if (!g_grad_enabled) return false;
    for (const Tensor* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_2d(const Tensor& x, const char* op) {
    if (x.shape().size() != 2)
        throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " +
                                    shape_str(x.shape()));
}

void check_1d(const Tensor& x, const char* op) {
    if (x.shape().size() != 1)
        throw std::invalid_argument(std::string(op) + ": expected 1-d tensor, got " +
                                    shape_str(x.shape()));
}

Tensor finish(std::shared_ptr<Node> out, bool wants,
              std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> backward_fn) {
    if (wants) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(out));
}

// elementwise map with chain-rule factor computed from input and output
Tensor unary_op(const Tensor& x, const char* op, double (*fwd)(double),
                double (*dfd)(double x, double y)) {
    (void)op;
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
    auto node = make_node(x.shape(), std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [dfd](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < self.data.size(); ++i)
            p.grad[i] += self.grad[i] * dfd(p.data[i], self.data[i]);
    });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    std::size_t n = numel(shape);
    auto node = make_node(std::move(shape), std::vector<double>(n, value));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
    if (numel(shape) != data.size())
        throw std::invalid_argument("tensor: data size does not match shape " +
                                    shape_str(shape));
    auto node = make_node(std::move(shape), std::move(data));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::eye(int n) {
    std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i) * n + i] = 1.0;
    return from_data({n, n}, std::move(d));
}

const std::vector<int>& Tensor::shape() const {
    if (!node_) throw std::invalid_argument("tensor: undefined");
    return node_->shape;
}

int Tensor::dim(int axis) const {
    const auto& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("tensor: axis out of range");
    return s[axis];
}

std::size_t Tensor::size() const { return shape().empty() ? 0 : node_->data.size(); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
    if (!node_) throw std::invalid_argument("tensor: undefined");
    return node_->data;
}

std::vector<double>& Tensor::mutable_data() {
    if (!node_) throw std::invalid_argument("tensor: undefined");
    return node_->data;
}

double Tensor::value() const {
    if (size() != 1) throw std::invalid_argument("tensor: value() needs a scalar");
    return node_->data[0];
}

double Tensor::at(int i) const {
    check_1d(*this, "at");
    return node_->data.at(static_cast<std::size_t>(i));
}

double Tensor::at(int i, int j) const {
    check_2d(*this, "at");
    return node_->data.at(static_cast<std::size_t>(i) * dim(1) + j);
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw std::invalid_argument("tensor: gradient not populated");
    return node_->grad;
}

void Tensor::zero_grad() const {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (size() != 1) throw std::invalid_argument("backward: root must be a scalar");
    if (!requires_grad())
        throw std::invalid_argument("backward: root does not require grad");

    // iterative post-order topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame { Node* n; std::size_t next; };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    ensure_grad(*node_);
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

Tensor Tensor::detach() const {
    if (!node_) return Tensor();
    return from_data(node_->shape, node_->data, false);
}

Tensor Tensor::clone(bool requires_grad) const {
    if (!node_) return Tensor();
    return from_data(node_->shape, node_->data, requires_grad);
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i];
    auto node = make_node(a.shape(), std::move(out));
    return finish(node, want_grad({&a, &b}), {a.node(), b.node()}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            ensure_grad(p);
            for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] - bd[i];
    auto node = make_node(a.shape(), std::move(out));
    return finish(node, want_grad({&a, &b}), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            ensure_grad(pa);
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            ensure_grad(pb);
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[i];
    auto node = make_node(a.shape(), std::move(out));
    return finish(node, want_grad({&a, &b}), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            ensure_grad(pa);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            ensure_grad(pb);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor add_scalar(const Tensor& x, double c) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] + c;
    auto node = make_node(x.shape(), std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& x, double c) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * c;
    auto node = make_node(x.shape(), std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
    });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw std::invalid_argument("scale_by: s must be a scalar tensor");
    double c = s.value();
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * c;
    auto node = make_node(x.shape(), std::move(out));
    return finish(node, want_grad({&x, &s}), {x.node(), s.node()}, [](Node& self) {
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        double c = ps.data[0];
        if (px.requires_grad) {
            ensure_grad(px);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                px.grad[i] += c * self.grad[i];
        }
        if (ps.requires_grad) {
            ensure_grad(ps);
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                acc += self.grad[i] * px.data[i];
            ps.grad[0] += acc;
        }
    });
}

namespace {

// c (m x n) += a (m x k) * b (k x n), raw row-major
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m x n) += a (m x k) * b^T where b is (n x k)
void mm_acc_bt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// c (m x n) += a^T * b where a is (k x m), b is (k x n)
void mm_acc_at(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dimensions disagree " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto node = make_node({m, n}, std::move(out));
    return finish(node, want_grad({&a, &b}), {a.node(), b.node()}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            ensure_grad(pa);
            // da += g * b^T
            mm_acc_bt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
            ensure_grad(pb);
            // db += a^T * g
            mm_acc_at(pa.data.data(), self.grad.data(), pb.grad.data(), k, m, n);
        }
    });
}

Tensor transpose(const Tensor& x) {
    check_2d(x, "transpose");
    int m = x.dim(0), n = x.dim(1);
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = xd[static_cast<std::size_t>(i) * n + j];
    auto node = make_node({n, m}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [m, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                p.grad[static_cast<std::size_t>(i) * n + j] +=
                    self.grad[static_cast<std::size_t>(j) * m + i];
    });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

namespace {
bool g_corrupt_gelu_adjoint = false;
}

void set_gelu_adjoint_corruption(bool enabled) { g_corrupt_gelu_adjoint = enabled; }

Tensor gelu(const Tensor& x) {
    return unary_op(
        x, "gelu",
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)); },
        [](double v, double) {
            double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475));
            double pdf = 0.3989422804014327 * std::exp(-0.5 * v * v);
            double d = cdf + v * pdf;
            // deliberately wrong scale, used to prove the derivative checker
            // catches a bad adjoint
            return g_corrupt_gelu_adjoint ? 1.001 * d : d;
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid",
        [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                       : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
    return unary_op(
        x, "softplus",
        [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
        [](double v, double) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                               : std::exp(v) / (1.0 + std::exp(v)); });
}

Tensor softmax_rows(const Tensor& x) {
    check_2d(x, "softmax_rows");
    int m = x.dim(0), n = x.dim(1);
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (int i = 0; i < m; ++i) {
        const double* row = xd.data() + static_cast<std::size_t>(i) * n;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= z;
    }
    auto node = make_node({m, n}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [m, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (int i = 0; i < m; ++i) {
            const double* y = self.data.data() + static_cast<std::size_t>(i) * n;
            const double* g = self.grad.data() + static_cast<std::size_t>(i) * n;
            double* out = p.grad.data() + static_cast<std::size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g[j] * y[j];
            for (int j = 0; j < n; ++j) out[j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor log_elem(const Tensor& x) {
    for (double v : x.data())
        if (v <= 0.0) throw numeric_error("log: non-positive input");
    return unary_op(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor clamp_min(const Tensor& x, double lo) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::max(xd[i], lo);
    auto node = make_node(x.shape(), std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [lo](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (p.data[i] > lo) p.grad[i] += self.grad[i];
    });
}

Tensor rsqrt(const Tensor& x) {
    for (double v : x.data())
        if (v <= 0.0) throw numeric_error("rsqrt: non-positive input");
    return unary_op(
        x, "rsqrt", [](double v) { return 1.0 / std::sqrt(v); },
        [](double v, double y) { return -0.5 * y / v; });
}

Tensor reciprocal(const Tensor& x) {
    for (double v : x.data())
        if (v == 0.0) throw numeric_error("reciprocal: zero input");
    return unary_op(
        x, "reciprocal", [](double v) { return 1.0 / v; },
        [](double, double y) { return -y * y; });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto node = make_node({1}, {acc});
    return finish(node, want_grad({&x}), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        double g = self.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    });
}

Tensor mean_all(const Tensor& x) {
    return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor row_sums(const Tensor& x) {
    check_2d(x, "row_sums");
    int m = x.dim(0), n = x.dim(1);
    const auto& xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const double* row = xd.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i)] += row[j];
    }
    auto node = make_node({m}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [m, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (int i = 0; i < m; ++i) {
            double g = self.grad[static_cast<std::size_t>(i)];
            double* row = p.grad.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) row[j] += g;
        }
    });
}

Tensor rowdot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "rowdot");
    check_2d(a, "rowdot");
    int m = a.dim(0), n = a.dim(1);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        std::size_t off = static_cast<std::size_t>(i) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += ad[off + j] * bd[off + j];
        out[static_cast<std::size_t>(i)] = acc;
    }
    auto node = make_node({m}, std::move(out));
    return finish(node, want_grad({&a, &b}), {a.node(), b.node()}, [m, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int i = 0; i < m; ++i) {
            double g = self.grad[static_cast<std::size_t>(i)];
            std::size_t off = static_cast<std::size_t>(i) * n;
            if (pa.requires_grad) {
                ensure_grad(pa);
                for (int j = 0; j < n; ++j) pa.grad[off + j] += g * pb.data[off + j];
            }
            if (pb.requires_grad) {
                ensure_grad(pb);
                for (int j = 0; j < n; ++j) pb.grad[off + j] += g * pa.data[off + j];
            }
        }
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    check_2d(x, "scale_rows");
    check_1d(s, "scale_rows");
    int m = x.dim(0), n = x.dim(1);
    if (s.dim(0) != m) throw std::invalid_argument("scale_rows: scale length != rows");
    const auto& xd = x.data();
    const auto& sd = s.data();
    std::vector<double> out(xd.size());
    for (int i = 0; i < m; ++i) {
        double c = sd[static_cast<std::size_t>(i)];
        std::size_t off = static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[off + j] = xd[off + j] * c;
    }
    auto node = make_node({m, n}, std::move(out));
    return finish(node, want_grad({&x, &s}), {x.node(), s.node()}, [m, n](Node& self) {
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        for (int i = 0; i < m; ++i) {
            std::size_t off = static_cast<std::size_t>(i) * n;
            double c = ps.data[static_cast<std::size_t>(i)];
            if (px.requires_grad) {
                ensure_grad(px);
                for (int j = 0; j < n; ++j) px.grad[off + j] += c * self.grad[off + j];
            }
            if (ps.requires_grad) {
                ensure_grad(ps);
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += self.grad[off + j] * px.data[off + j];
                ps.grad[static_cast<std::size_t>(i)] += acc;
            }
        }
    });
}

Tensor scale_cols(const Tensor& x, const Tensor& s) {
    check_2d(x, "scale_cols");
    check_1d(s, "scale_cols");
    int m = x.dim(0), n = x.dim(1);
    if (s.dim(0) != n) throw std::invalid_argument("scale_cols: scale length != cols");
    const auto& xd = x.data();
    const auto& sd = s.data();
    std::vector<double> out(xd.size());
    for (int i = 0; i < m; ++i) {
        std::size_t off = static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[off + j] = xd[off + j] * sd[static_cast<std::size_t>(j)];
    }
    auto node = make_node({m, n}, std::move(out));
    return finish(node, want_grad({&x, &s}), {x.node(), s.node()}, [m, n](Node& self) {
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        if (px.requires_grad) ensure_grad(px);
        if (ps.requires_grad) ensure_grad(ps);
        for (int i = 0; i < m; ++i) {
            std::size_t off = static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                if (px.requires_grad)
                    px.grad[off + j] += ps.data[static_cast<std::size_t>(j)] * self.grad[off + j];
                if (ps.requires_grad)
                    ps.grad[static_cast<std::size_t>(j)] += self.grad[off + j] * px.data[off + j];
            }
        }
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    check_2d(x, "add_rowvec");
    check_1d(b, "add_rowvec");
    int m = x.dim(0), n = x.dim(1);
    if (b.dim(0) != n) throw std::invalid_argument("add_rowvec: bias length != cols");
    const auto& xd = x.data();
    const auto& bd = b.data();
    std::vector<double> out(xd.size());
    for (int i = 0; i < m; ++i) {
        std::size_t off = static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[off + j] = xd[off + j] + bd[static_cast<std::size_t>(j)];
    }
    auto node = make_node({m, n}, std::move(out));
    return finish(node, want_grad({&x, &b}), {x.node(), b.node()}, [m, n](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.requires_grad) {
            ensure_grad(px);
            for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            ensure_grad(pb);
            for (int i = 0; i < m; ++i) {
                std::size_t off = static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) pb.grad[static_cast<std::size_t>(j)] += self.grad[off + j];
            }
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
    int n = xs[0].dim(1);
    int m = 0;
    bool wants = false;
    for (const auto& t : xs) {
        check_2d(t, "concat_rows");
        if (t.dim(1) != n) throw std::invalid_argument("concat_rows: column mismatch");
        m += t.dim(0);
        wants = wants || (g_grad_enabled && t.requires_grad());
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m) * n);
    for (const auto& t : xs) out.insert(out.end(), t.data().begin(), t.data().end());
    auto node = make_node({m, n}, std::move(out));
    std::vector<std::shared_ptr<Node>> parents;
    parents.reserve(xs.size());
    for (const auto& t : xs) parents.push_back(t.node());
    return finish(node, wants, std::move(parents), [](Node& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            Node& p = *pp;
            if (p.requires_grad) {
                ensure_grad(p);
                for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += self.grad[off + i];
            }
            off += p.data.size();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
    int m = xs[0].dim(0);
    int n = 0;
    bool wants = false;
    for (const auto& t : xs) {
        check_2d(t, "concat_cols");
        if (t.dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
        n += t.dim(1);
        wants = wants || (g_grad_enabled && t.requires_grad());
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    int col0 = 0;
    for (const auto& t : xs) {
        int tn = t.dim(1);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < tn; ++j)
                out[static_cast<std::size_t>(i) * n + col0 + j] =
                    t.data()[static_cast<std::size_t>(i) * tn + j];
        col0 += tn;
    }
    auto node = make_node({m, n}, std::move(out));
    std::vector<std::shared_ptr<Node>> parents;
    parents.reserve(xs.size());
    for (const auto& t : xs) parents.push_back(t.node());
    return finish(node, wants, std::move(parents), [m, n](Node& self) {
        int col0 = 0;
        for (auto& pp : self.parents) {
            Node& p = *pp;
            int tn = p.shape[1];
            if (p.requires_grad) {
                ensure_grad(p);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < tn; ++j)
                        p.grad[static_cast<std::size_t>(i) * tn + j] +=
                            self.grad[static_cast<std::size_t>(i) * n + col0 + j];
            }
            col0 += tn;
        }
    });
}

Tensor slice_rows(const Tensor& x, int start, int len) {
    check_2d(x, "slice_rows");
    int m = x.dim(0), n = x.dim(1);
    if (start < 0 || len <= 0 || start + len > m)
        throw std::invalid_argument("slice_rows: range out of bounds");
    const auto& xd = x.data();
    std::vector<double> out(xd.begin() + static_cast<std::size_t>(start) * n,
                            xd.begin() + static_cast<std::size_t>(start + len) * n);
    auto node = make_node({len, n}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [start, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        std::size_t off = static_cast<std::size_t>(start) * n;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, int start, int len) {
    check_2d(x, "slice_cols");
    int m = x.dim(0), n = x.dim(1);
    if (start < 0 || len <= 0 || start + len > n)
        throw std::invalid_argument("slice_cols: range out of bounds");
    const auto& xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(m) * len);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
            out[static_cast<std::size_t>(i) * len + j] =
                xd[static_cast<std::size_t>(i) * n + start + j];
    auto node = make_node({m, len}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [m, n, start, len](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < len; ++j)
                p.grad[static_cast<std::size_t>(i) * n + start + j] +=
                    self.grad[static_cast<std::size_t>(i) * len + j];
    });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (numel(shape) != x.size())
        throw std::invalid_argument("reshape: element count mismatch " +
                                    shape_str(x.shape()) + " -> " + shape_str(shape));
    auto node = make_node(std::move(shape), x.data());
    return finish(node, want_grad({&x}), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    check_2d(x, "gather_rows");
    int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(idx.size() * static_cast<std::size_t>(n));
    for (std::size_t t = 0; t < idx.size(); ++t) {
        int i = idx[t];
        if (i < 0 || i >= m) throw std::invalid_argument("gather_rows: index out of range");
        std::copy_n(x.data().begin() + static_cast<std::size_t>(i) * n, n,
                    out.begin() + t * static_cast<std::size_t>(n));
    }
    auto node = make_node({static_cast<int>(idx.size()), n}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [idx, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t t = 0; t < idx.size(); ++t)
            for (int j = 0; j < n; ++j)
                p.grad[static_cast<std::size_t>(idx[t]) * n + j] +=
                    self.grad[t * static_cast<std::size_t>(n) + j];
    });
}

Tensor take_per_row(const Tensor& x, const std::vector<int>& cols) {
    check_2d(x, "take_per_row");
    int m = x.dim(0), n = x.dim(1);
    if (static_cast<int>(cols.size()) != m)
        throw std::invalid_argument("take_per_row: one column index per row required");
    std::vector<double> out(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        if (cols[i] < 0 || cols[i] >= n)
            throw std::invalid_argument("take_per_row: column index out of range");
        out[static_cast<std::size_t>(i)] = x.data()[static_cast<std::size_t>(i) * n + cols[i]];
    }
    auto node = make_node({m}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [cols, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < cols.size(); ++i)
            p.grad[i * static_cast<std::size_t>(n) + cols[i]] += self.grad[i];
    });
}

Tensor frame_matmul(const Tensor& m, const Tensor& x, int rows_per_frame) {
    check_2d(m, "frame_matmul");
    check_2d(x, "frame_matmul");
    int v = rows_per_frame;
    if (m.dim(0) != v || m.dim(1) != v)
        throw std::invalid_argument("frame_matmul: m must be rows_per_frame square");
    int rows = x.dim(0), c = x.dim(1);
    if (rows % v != 0)
        throw std::invalid_argument("frame_matmul: rows not a multiple of frame size");
    int frames = rows / v;
    std::vector<double> out(x.data().size(), 0.0);
    for (int f = 0; f < frames; ++f)
        mm_acc(m.data().data(), x.data().data() + static_cast<std::size_t>(f) * v * c,
               out.data() + static_cast<std::size_t>(f) * v * c, v, v, c);
    auto node = make_node({rows, c}, std::move(out));
    return finish(node, want_grad({&m, &x}), {m.node(), x.node()},
                  [frames, v, c](Node& self) {
        Node& pm = *self.parents[0];
        Node& px = *self.parents[1];
        if (pm.requires_grad) ensure_grad(pm);
        if (px.requires_grad) ensure_grad(px);
        for (int f = 0; f < frames; ++f) {
            const double* g = self.grad.data() + static_cast<std::size_t>(f) * v * c;
            const double* xf = px.data.data() + static_cast<std::size_t>(f) * v * c;
            if (pm.requires_grad)
                // dm += g_f * x_f^T
                mm_acc_bt(g, xf, pm.grad.data(), v, c, v);
            if (px.requires_grad)
                // dx_f += m^T * g_f
                mm_acc_at(pm.data.data(), g,
                          px.grad.data() + static_cast<std::size_t>(f) * v * c, v, v, c);
        }
    });
}

Tensor frame_pair_mean(const Tensor& x, int frames, int rows_per_frame) {
    check_2d(x, "frame_pair_mean");
    int v = rows_per_frame, c = x.dim(1);
    if (frames % 2 != 0) throw std::invalid_argument("frame_pair_mean: odd frame count");
    if (x.dim(0) != frames * v)
        throw std::invalid_argument("frame_pair_mean: rows != frames * rows_per_frame");
    int out_frames = frames / 2;
    std::vector<double> out(static_cast<std::size_t>(out_frames) * v * c);
    const auto& xd = x.data();
    for (int f = 0; f < out_frames; ++f) {
        std::size_t a = static_cast<std::size_t>(2 * f) * v * c;
        std::size_t b = a + static_cast<std::size_t>(v) * c;
        std::size_t o = static_cast<std::size_t>(f) * v * c;
        for (std::size_t i = 0; i < static_cast<std::size_t>(v) * c; ++i)
            out[o + i] = 0.5 * (xd[a + i] + xd[b + i]);
    }
    auto node = make_node({out_frames * v, c}, std::move(out));
    return finish(node, want_grad({&x}), {x.node()}, [out_frames, v, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (int f = 0; f < out_frames; ++f) {
            std::size_t a = static_cast<std::size_t>(2 * f) * v * c;
            std::size_t b = a + static_cast<std::size_t>(v) * c;
            std::size_t o = static_cast<std::size_t>(f) * v * c;
            for (std::size_t i = 0; i < static_cast<std::size_t>(v) * c; ++i) {
                double g = 0.5 * self.grad[o + i];
                p.grad[a + i] += g;
                p.grad[b + i] += g;
            }
        }
    });
}

Tensor stop_gradient(const Tensor& x) {
    return Tensor::from_data(x.shape(), x.data(), false);
}

Tensor straight_through(const Tensor& quantized, const Tensor& original) {
    check_same_shape(quantized, original, "straight_through");
    auto node = make_node(quantized.shape(), quantized.data());
    return finish(node, want_grad({&original}), {original.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        ensure_grad(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

void assert_all_finite(const Tensor& x, const std::string& where) {
    for (double v : x.data())
        if (!std::isfinite(v)) throw numeric_error(where + ": non-finite value");
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps) {
    Tensor xg = x.clone(true);
    Tensor y = f(xg);
    if (y.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    y.backward();
    std::vector<double> analytic = xg.has_grad() ? xg.grad()
                                                 : std::vector<double>(x.size(), 0.0);

    NoGradGuard ng;
    double max_rel = 0.0;
    std::vector<double> base = x.data();
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> plus = base, minus = base;
        plus[i] += eps;
        minus[i] -= eps;
        double fp = f(Tensor::from_data(x.shape(), std::move(plus))).value();
        double fm = f(Tensor::from_data(x.shape(), std::move(minus))).value();
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw numeric_error("grad_check: non-finite probe");
        double fd = (fp - fm) / (2.0 * eps);
        double a = analytic[i];
        double denom = std::max({std::abs(a), std::abs(fd), 1e-3});
        max_rel = std::max(max_rel, std::abs(a - fd) / denom);
    }
    return max_rel;
}

}  // namespace hyperskel
