#pragma once

#include <vector>

#include "hyperskel/hypergraph.hpp"
#include "hyperskel/tensor.hpp"

namespace hyperskel {

struct QuantizerConfig {
    int codebook_size = 5;
    int d = 8;      // low-dimensional embedding width
    int c_in = 3;   // reconstruction channels
    void validate() const;
};

// five graph-convolution layers mirroring the adaptive decoder; the
// layer-3 output (width d) is the embedding that gets quantized, the
// final output reconstructs the time-pooled input
struct QuantizerParams {
    std::vector<Tensor> dec_w;  // D->128, 128->64, 64->d, d->32, 32->c_in
    Tensor codebook;            // k x d prototype rows
    Tensor mlp_w1, mlp_b1;      // d -> d
    Tensor mlp_w2, mlp_b2;      // d -> 1
};

// captured at a base point so finite-difference probes see a fixed
// assignment and a fixed straight-through offset
struct QuantizerFreeze {
    std::vector<std::vector<int>> he;
    std::vector<std::vector<double>> q_base;  // gathered prototypes, v*d
    std::vector<std::vector<double>> e_base;  // embeddings, v*d
};

struct InphaseGraph {
    Tensor incidence;  // v x k constant
    Tensor weights;    // k, differentiable; empty hyperedges weigh zero
};

// layers 1..3 of the decoder stack (relu between, linear tap)
Tensor project_low_dim(const Tensor& f, const QuantizerParams& p, const Tensor& adj);
// layers 4..5 applied to relu(tap)
Tensor decode_from_tap(const Tensor& tap, const QuantizerParams& p, const Tensor& adj);

// nearest prototype by euclidean distance, ties to the lowest index
std::vector<int> assign(const Tensor& e, const Tensor& codebook);

// (1/v) sum_i ||Q_he_i - sg(E_i)||^2; moves the codebook only
Tensor quantization_loss(const Tensor& e, const Tensor& codebook,
                         const std::vector<int>& he);

// forward emits assigned prototypes, backward copies gradients to e
Tensor quantize_forward(const Tensor& e, const Tensor& codebook,
                        const std::vector<int>& he);

// incidence from assignments plus per-edge weights from an MLP over the
// quantized embeddings (positive via softplus, floored at 1e-4)
InphaseGraph build_inphase(const std::vector<int>& he, const Tensor& quantized,
                           int codebook_size, const QuantizerParams& p);

struct QuantizerOutput {
    std::vector<std::vector<int>> he;   // per person-sample
    std::vector<InphaseGraph> graphs;
    std::vector<Tensor> low_dim;        // per sample e, v x d
    std::vector<Tensor> recon;          // per sample, v x c_in
    Tensor quant_loss;                  // scalar, mean over samples
};

// full per-batch pass over time-pooled unit outputs (one v x D tensor
// per person-sample); freeze switches to the surrogate used by
// finite-difference checks
QuantizerOutput run_quantizer(const std::vector<Tensor>& f_pooled,
                              const QuantizerParams& p, const Tensor& adj,
                              const QuantizerConfig& cfg,
                              const QuantizerFreeze* freeze = nullptr);

QuantizerParams init_quantizer(int in_channels, const QuantizerConfig& cfg,
                               std::uint64_t seed);

}  // namespace hyperskel
