#include "hyperskel/losses.hpp"

#include <stdexcept>
#include <string>

namespace hyperskel {

void Betas::validate() const {
    if (b1 < 0.0 || b2 < 0.0 || b3 < 0.0)
        throw std::invalid_argument("losses: scaling factors must be non-negative");
}

Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    int n = probs.dim(0), c = probs.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("cross_entropy: one label per row required");
    for (int l : labels)
        if (l < 0 || l >= c)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                        " outside [0, " + std::to_string(c) + ")");
    Tensor picked = clamp_min(take_per_row(probs, labels), 1e-12);
    return mul_scalar(sum_all(log_elem(picked)), -1.0 / n);
}

Tensor reconstruction(const std::vector<Tensor>& x,
                      const std::vector<Tensor>& x_hat) {
    if (x.empty() || x.size() != x_hat.size())
        throw std::invalid_argument("reconstruction: batch size mismatch");
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t s = 0; s < x.size(); ++s) {
        if (x[s].shape() != x_hat[s].shape())
            throw std::invalid_argument("reconstruction: shape mismatch");
        Tensor diff = sub(x[s], x_hat[s]);
        acc = add(acc, sum_all(mul(diff, diff)));
    }
    return mul_scalar(acc, 1.0 / static_cast<double>(x.size()));
}

LossBundle total_loss(const Tensor& ce, const Tensor& rec1, const Tensor& rec2,
                      const Tensor& quant, const Betas& betas) {
    betas.validate();
    LossBundle b;
    b.ce = ce;
    b.rec1 = rec1;
    b.rec2 = rec2;
    b.quant = quant;
    b.betas = betas;
    b.total = add(add(add(ce, mul_scalar(rec1, betas.b1)),
                      mul_scalar(rec2, betas.b2)),
                  mul_scalar(quant, betas.b3));
    return b;
}

}  // namespace hyperskel
