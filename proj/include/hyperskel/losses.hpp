#pragma once

#include <vector>

#include "hyperskel/tensor.hpp"

namespace hyperskel {

struct Betas {
    double b1 = 0.9;   // first reconstruction tap
    double b2 = 0.9;   // second reconstruction tap
    double b3 = 0.25;  // quantization commitment
    void validate() const;
};

struct LossBundle {
    Tensor ce, rec1, rec2, quant, total;  // scalars
    Betas betas;
};

// -(1/n) sum_n log(max(p[n, label_n], 1e-12))
Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// mean over the batch of the summed squared error of each sample
Tensor reconstruction(const std::vector<Tensor>& x,
                      const std::vector<Tensor>& x_hat);

// total = ce + b1*rec1 + b2*rec2 + b3*quant, evaluated as written
LossBundle total_loss(const Tensor& ce, const Tensor& rec1, const Tensor& rec2,
                      const Tensor& quant, const Betas& betas);

}  // namespace hyperskel
