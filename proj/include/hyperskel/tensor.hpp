#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyperskel {

// thrown when a computation produces non-finite values or hits a
// mathematically invalid state (zero/negative degree, log of 0, ...)
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated lazily during backward
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

// global switch so finite-difference probes skip graph recording
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor ones(std::vector<int> shape, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor eye(int n);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int dim(int axis) const;
    std::size_t size() const;
    bool requires_grad() const;

    const std::vector<double>& data() const;
    std::vector<double>& mutable_data();  // optimizer use between forwards only
    double value() const;                 // scalar tensors
    double at(int i) const;
    double at(int i, int j) const;

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad() const;

    // reverse-mode sweep from a scalar; fills grad on every reachable
    // tensor that requires grad
    void backward() const;

    Tensor detach() const;  // same values, no history, no grad
    Tensor clone(bool requires_grad) const;

    std::shared_ptr<Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

// elementwise, same shape
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
// scale by a differentiable scalar tensor
Tensor scale_by(const Tensor& x, const Tensor& s);

// 2-d linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// activations
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);      // exact 0.5*x*(1+erf(x/sqrt(2)))
// test hook: scales gelu's backward by 1.001 so derivative checks must fail
void set_gelu_adjoint_corruption(bool enabled);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_elem(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);
Tensor rsqrt(const Tensor& x);       // x^(-1/2), requires x > 0
Tensor reciprocal(const Tensor& x);  // requires x != 0

// reductions / row-wise helpers
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor row_sums(const Tensor& x);                    // [m,n] -> [m]
Tensor rowdot(const Tensor& a, const Tensor& b);     // [m,n],[m,n] -> [m]
Tensor scale_rows(const Tensor& x, const Tensor& s); // diag(s) * x
Tensor scale_cols(const Tensor& x, const Tensor& s); // x * diag(s)
Tensor add_rowvec(const Tensor& x, const Tensor& b); // x + 1 b^T

// structure ops
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_rows(const Tensor& x, int start, int len);
Tensor slice_cols(const Tensor& x, int start, int len);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
// picks x[i, cols[i]] for each row -> [m]
Tensor take_per_row(const Tensor& x, const std::vector<int>& cols);

// applies M (v x v) to every v-row frame block of x ((frames*v) x c)
Tensor frame_matmul(const Tensor& m, const Tensor& x, int rows_per_frame);
// averages consecutive frame pairs: (frames*v) x c -> (frames/2*v) x c
Tensor frame_pair_mean(const Tensor& x, int frames, int rows_per_frame);

// custom differentiation rules
Tensor stop_gradient(const Tensor& x);
// forward takes quantized's values, backward copies the full gradient
// to original and none to quantized
Tensor straight_through(const Tensor& quantized, const Tensor& original);

void assert_all_finite(const Tensor& x, const std::string& where);

// central finite differences against reverse-mode; returns max relative
// error over coordinates of x. f must map x to a scalar tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

}  // namespace hyperskel
