#pragma once

#include <cstdint>
#include <vector>

#include "hyperskel/hypergraph.hpp"
#include "hyperskel/tensor.hpp"

namespace hyperskel {

struct DecoderConfig {
    int d = 8;     // clustering tap width
    int c_in = 3;  // reconstruction channels
    double alpha = 0.2;     // residual scale on the attentive features
    int han_reduction = 4;  // squeeze factor for both channel and node paths
    int kmeans_max_iter = 50;
    double kmeans_tol = 1e-8;
    void validate() const;
};

struct HanParams {
    Tensor conv_red, conv_exp;  // 1x1 channel convolutions, c' -> c'/r -> c'
    Tensor lin1_w, lin1_b;      // v -> v/r node squeeze
    Tensor lin2_w, lin2_b;      // v/r -> v node excitation
};

struct DecoderParams {
    HanParams han;
    std::vector<Tensor> dec_w;  // c' -> 128 -> 64 -> d -> 32 -> c_in
};

struct HanOutput {
    Tensor a_t;   // (t*v) x c', attention-scaled channel features
    Tensor attn;  // v, per-joint weights in (0,1)
};

struct HypDecOutput {
    Tensor recon;  // v x c_in
    Tensor e_c;    // v x d, linear layer-3 tap
};

struct KMeansResult {
    std::vector<int> assignments;
    Tensor centroids;  // k x d
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // recorded after every assignment pass
};

// mean over the frame axis of a (t*v) x c tensor -> v x c
Tensor time_average(const Tensor& tall, int v, int t);

// squeeze-excitation over channels then nodes; a_t = attn (x) e2
HanOutput han(const Tensor& e_enc, const HanParams& p, int v, int t);

// e_f = e_enc + alpha * a_t
Tensor fuse_residual(const Tensor& e_enc, const Tensor& a_t, double alpha);

// five graph-convolution layers with relu between; the linear layer-3
// output is the clustering tap, the final output reconstructs coordinates
HypDecOutput hypdec_forward(const Tensor& x_pooled, const Tensor& adj,
                            const DecoderParams& p);

// seeded k-means++ then Lloyd iterations; empty clusters are repaired by
// stealing the farthest point from the largest cluster
KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed,
                    int max_iter = 50, double tol = 1e-8);

// next out-phase hypergraph: per-channel min-max normalization of each
// sample's tap, batch average, k-means incidence, attention-ratio weights
Hypergraph generate_outphase(const std::vector<Tensor>& e_c,
                             const std::vector<Tensor>& attn, int k,
                             std::uint64_t seed, int max_iter = 50,
                             double tol = 1e-8);

DecoderParams init_decoder(int c_hidden, int v, const DecoderConfig& cfg,
                           std::uint64_t seed);

}  // namespace hyperskel
