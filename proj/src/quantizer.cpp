#include "hyperskel/quantizer.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "hyperskel/init.hpp"

namespace hyperskel {

void QuantizerConfig::validate() const {
    if (codebook_size < 1) throw std::invalid_argument("quantizer: codebook_size must be >= 1");
    if (d < 1) throw std::invalid_argument("quantizer: d must be >= 1");
    if (c_in < 1) throw std::invalid_argument("quantizer: c_in must be >= 1");
}

Tensor project_low_dim(const Tensor& f, const QuantizerParams& p, const Tensor& adj) {
    Tensor h = relu(adjacency_conv(f, adj, p.dec_w[0]));
    h = relu(adjacency_conv(h, adj, p.dec_w[1]));
    return adjacency_conv(h, adj, p.dec_w[2]);
}

Tensor decode_from_tap(const Tensor& tap, const QuantizerParams& p, const Tensor& adj) {
    Tensor h = relu(adjacency_conv(relu(tap), adj, p.dec_w[3]));
    return adjacency_conv(h, adj, p.dec_w[4]);
}

std::vector<int> assign(const Tensor& e, const Tensor& codebook) {
    int v = e.shape()[0], d = e.shape()[1];
    int k = codebook.shape()[0];
    if (codebook.shape()[1] != d)
        throw std::invalid_argument("assign: embedding width " + std::to_string(d) +
                                    " vs codebook width " + std::to_string(codebook.shape()[1]));
    const auto& ed = e.data();
    const auto& cd = codebook.data();
    std::vector<int> he(v);
    for (int i = 0; i < v; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int j = 0; j < k; ++j) {
            double dist = 0.0;
            for (int c = 0; c < d; ++c) {
                double t = ed[i * d + c] - cd[j * d + c];
                dist += t * t;
            }
            if (dist < best) {
                best = dist;
                arg = j;
            }
        }
        he[i] = arg;
    }
    return he;
}

Tensor quantization_loss(const Tensor& e, const Tensor& codebook,
                         const std::vector<int>& he) {
    int v = e.shape()[0];
    Tensor diff = sub(gather_rows(codebook, he), stop_gradient(e));
    return mul_scalar(sum_all(mul(diff, diff)), 1.0 / v);
}

Tensor quantize_forward(const Tensor& e, const Tensor& codebook,
                        const std::vector<int>& he) {
    return straight_through(gather_rows(codebook, he), e);
}

InphaseGraph build_inphase(const std::vector<int>& he, const Tensor& quantized,
                           int codebook_size, const QuantizerParams& p) {
    int v = static_cast<int>(he.size());
    int k = codebook_size;
    std::vector<double> inc(static_cast<std::size_t>(v) * k, 0.0);
    std::vector<int> members(k, 0);
    for (int i = 0; i < v; ++i) {
        if (he[i] < 0 || he[i] >= k)
            throw std::invalid_argument("build_inphase: assignment out of range");
        inc[static_cast<std::size_t>(i) * k + he[i]] = 1.0;
        members[he[i]] += 1;
    }

    // per-node scalar from the quantized embeddings, then averaged over
    // each hyperedge's members; softplus keeps the sqrt-normalized
    // degrees real, the floor keeps them away from zero
    Tensor h1 = relu(add_rowvec(matmul(quantized, p.mlp_w1), p.mlp_b1));
    Tensor raw = add_rowvec(matmul(h1, p.mlp_w2), p.mlp_b2);  // v x 1

    std::vector<double> mean_m(static_cast<std::size_t>(k) * v, 0.0);
    std::vector<double> mask(k, 0.0);
    for (int j = 0; j < k; ++j) {
        if (members[j] == 0) continue;
        mask[j] = 1.0;
        for (int i = 0; i < v; ++i)
            if (he[i] == j) mean_m[static_cast<std::size_t>(j) * v + i] = 1.0 / members[j];
    }
    Tensor means = reshape(matmul(Tensor::from_data({k, v}, std::move(mean_m)), raw), {k});
    Tensor w = mul(add_scalar(softplus(means), 1e-4),
                   Tensor::from_data({k}, std::move(mask)));

    InphaseGraph g;
    g.incidence = Tensor::from_data({v, k}, std::move(inc));
    g.weights = w;
    return g;
}

QuantizerOutput run_quantizer(const std::vector<Tensor>& f_pooled,
                              const QuantizerParams& p, const Tensor& adj,
                              const QuantizerConfig& cfg,
                              const QuantizerFreeze* freeze) {
    cfg.validate();
    int n = static_cast<int>(f_pooled.size());
    if (n == 0) throw std::invalid_argument("run_quantizer: empty batch");
    if (freeze && static_cast<int>(freeze->he.size()) != n)
        throw std::invalid_argument("run_quantizer: freeze snapshot batch mismatch");

    QuantizerOutput out;
    Tensor loss_acc = Tensor::scalar(0.0);
    for (int s = 0; s < n; ++s) {
        Tensor e = project_low_dim(f_pooled[s], p, adj);
        int v = e.shape()[0], d = e.shape()[1];

        std::vector<int> he;
        Tensor quantized, loss_s;
        if (freeze) {
            he = freeze->he[s];
            if (static_cast<int>(he.size()) != v)
                throw std::invalid_argument("run_quantizer: freeze node count mismatch");
            // fixed straight-through offset: quantized = e + (q0 - e0)
            std::vector<double> off(freeze->q_base[s]);
            for (std::size_t i = 0; i < off.size(); ++i) off[i] -= freeze->e_base[s][i];
            quantized = add(e, Tensor::from_data({v, d}, std::move(off)));
            Tensor diff = sub(gather_rows(p.codebook, he),
                              Tensor::from_data({v, d}, freeze->e_base[s]));
            loss_s = mul_scalar(sum_all(mul(diff, diff)), 1.0 / v);
        } else {
            he = assign(e, p.codebook);
            quantized = quantize_forward(e, p.codebook, he);
            loss_s = quantization_loss(e, p.codebook, he);
        }

        out.graphs.push_back(build_inphase(he, quantized, cfg.codebook_size, p));
        out.he.push_back(std::move(he));
        out.low_dim.push_back(e);
        out.recon.push_back(decode_from_tap(e, p, adj));
        loss_acc = add(loss_acc, loss_s);
    }
    out.quant_loss = mul_scalar(loss_acc, 1.0 / n);
    return out;
}

QuantizerParams init_quantizer(int in_channels, const QuantizerConfig& cfg,
                               std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 gen(seed);
    QuantizerParams p;
    int widths[6] = {in_channels, 128, 64, cfg.d, 32, cfg.c_in};
    for (int l = 0; l < 5; ++l)
        p.dec_w.push_back(xavier_uniform(widths[l], widths[l + 1], gen));
    p.codebook = xavier_uniform(cfg.codebook_size, cfg.d, gen);
    p.mlp_w1 = xavier_uniform(cfg.d, cfg.d, gen);
    p.mlp_b1 = zeros_param({cfg.d});
    p.mlp_w2 = xavier_uniform(cfg.d, 1, gen);
    p.mlp_b2 = zeros_param({1});
    return p;
}

}  // namespace hyperskel
