#pragma once

#include <random>

#include "hyperskel/tensor.hpp"

namespace hyperskel {

inline Tensor xavier_uniform(int rows, int cols, std::mt19937_64& gen,
                             double gain = 1.0) {
    double a = gain * std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> d(-a, a);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = d(gen);
    return Tensor::from_data({rows, cols}, std::move(v), true);
}

inline Tensor zeros_param(std::vector<int> shape) {
    return Tensor::zeros(std::move(shape), true);
}

}  // namespace hyperskel
