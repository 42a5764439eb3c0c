#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyperskel/hypergraph.hpp"
#include "hyperskel/quantizer.hpp"
#include "hyperskel/tensor.hpp"

namespace hyperskel {

struct EncoderConfig {
    int n_faht = 5;
    int pre_quantizer_units = 2;  // units before the quantizer; the rest follow it
    int hidden = 216;
    int heads = 4;
    double lambda1 = 1.0;  // out-phase fusion coefficient
    double lambda2 = 1.0;  // in-phase fusion coefficient
    bool lambdas_trainable = false;
    std::string attention_mode = "softmax";  // or "literal" (signed ratio)
    double eps_den = 1e-6;                   // literal-mode denominator guard
    int temporal_reduction = 4;              // squeeze factor of the frame gate
    bool use_temporal_attention = true;
    void validate() const;
};

// one spatio-temporal unit: hyperedge fusion filter, per-head attention
// projections, bone-pair projection, and the frame-gate excitation pair
struct FahtUnitParams {
    Tensor theta;                        // c_in x c_out fusion filter
    std::vector<Tensor> wq, wk, wv, whf; // c_out -> c_out/heads, per head
    std::vector<Tensor> wp;              // c_in -> c_out/heads, per head
    Tensor se_w1, se_b1, se_w2, se_b2;   // t -> t/r -> t frame gate
    Tensor lambda1, lambda2;             // scalars
};

struct EncoderParams {
    std::vector<FahtUnitParams> units;
};

struct EncoderOutput {
    std::vector<Tensor> e_enc;  // per person-sample, (t_out * v) x hidden
    QuantizerOutput quant;
    int t_out = 0;
    bool temporal_warned = false;
};

// frames remaining at the input of each unit; halved after units 2 and 4
// whenever the count is still even
std::vector<int> encoder_time_schedule(int t_initial, const EncoderConfig& cfg);

// H_f = lambda1 * hyperconv(x, out_g) + lambda2 * hyperconv(x, in_g), one
// shared filter, applied frame by frame on a (t*v) x c tensor; a null
// in-phase graph means in_g == out_g
Tensor fuse_hyperedge_features(const Tensor& x, const Hypergraph& out_g,
                               const InphaseGraph* in_g, const Tensor& theta,
                               const Tensor& lambda1, const Tensor& lambda2);

// projected joint-pair offsets for one head: row i*v+j holds (x_i - x_j) wp
Tensor bone_pair_features(const Tensor& x_frame, const Tensor& wp);

// single-frame, single-head attention with the bone term materialized;
// scores q k^T + q hf^T + ca_r, normalized by softmax or by the literal
// signed row-sum ratio
Tensor attention_head(const Tensor& q, const Tensor& k, const Tensor& v,
                      const Tensor& hf_head, const Tensor& p_head,
                      const std::string& mode, double eps_den = 1e-6);

// single-frame multi-head attention: per-head projections of x (queries,
// keys, values), hf (cross-attention), and x_in (bone pairs), heads
// concatenated, residual adds x
Tensor multi_head_st_ht(const Tensor& x, const Tensor& hf, const Tensor& x_in,
                        const FahtUnitParams& up, const EncoderConfig& cfg);

// squeeze-excitation gate over the frame axis of a (t*v) x c tensor;
// t == 1 is an identity that raises *warned
Tensor temporal_attention(const Tensor& z, const FahtUnitParams& up, int v,
                          int t, bool* warned = nullptr);

// one full unit on a tall (t*v) x c_in tensor: fusion (with precomputed
// v x v mixing factors), frame-wise attention with the bone term in
// factored form, then the frame gate
Tensor faht_unit_forward(const Tensor& x, const Tensor& mix_out,
                         const Tensor& mix_in, const FahtUnitParams& up,
                         const EncoderConfig& cfg, int v, int t,
                         bool* warned = nullptr);

// the assembled stack: pre-quantizer units on the shared out-phase graph,
// quantizer over the time-averaged stream, post-quantizer units fusing
// each sample's own in-phase graph
EncoderOutput hyp_enc_forward(const std::vector<Tensor>& samples,
                              const Hypergraph& out_g, const EncoderParams& ep,
                              const QuantizerParams& qp,
                              const QuantizerConfig& qcfg, const Tensor& adj,
                              const EncoderConfig& cfg,
                              const QuantizerFreeze* freeze = nullptr);

EncoderParams init_encoder(int c_in, int t_initial, const EncoderConfig& cfg,
                           std::uint64_t seed);

}  // namespace hyperskel
