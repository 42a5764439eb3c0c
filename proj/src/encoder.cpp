#include "hyperskel/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "hyperskel/data.hpp"
#include "hyperskel/init.hpp"

namespace hyperskel {

void EncoderConfig::validate() const {
    if (n_faht < 2) throw std::invalid_argument("encoder: need at least two units");
    if (pre_quantizer_units < 1 || pre_quantizer_units >= n_faht)
        throw std::invalid_argument("encoder: quantizer split must leave units on both sides");
    if (hidden < 1 || heads < 1 || hidden % heads != 0)
        throw std::invalid_argument("encoder: hidden channels must be a positive multiple of heads");
    if (!std::isfinite(lambda1) || !std::isfinite(lambda2))
        throw std::invalid_argument("encoder: fusion coefficients must be finite");
    if (attention_mode != "softmax" && attention_mode != "literal")
        throw std::invalid_argument("encoder: unknown attention mode '" + attention_mode + "'");
    if (eps_den <= 0.0) throw std::invalid_argument("encoder: eps_den must be positive");
    if (temporal_reduction < 1)
        throw std::invalid_argument("encoder: temporal_reduction must be >= 1");
}

namespace {

bool pools_after(int unit, int t) {
    return (unit == 2 || unit == 4) && t > 1 && t % 2 == 0;
}

int tall_frames(const Tensor& x, int v, const char* who) {
    if (x.shape().size() != 2 || x.dim(0) % v != 0)
        throw std::invalid_argument(std::string(who) + ": rows must be a multiple of the joint count");
    return x.dim(0) / v;
}

// v x (t*v) averaging matrix: node i collects 1/t from every frame
Tensor time_mean_matrix(int v, int t) {
    std::vector<double> m(static_cast<std::size_t>(v) * t * v, 0.0);
    for (int f = 0; f < t; ++f)
        for (int i = 0; i < v; ++i)
            m[static_cast<std::size_t>(i) * t * v + static_cast<std::size_t>(f) * v + i] = 1.0 / t;
    return Tensor::from_data({v, t * v}, std::move(m));
}

Tensor normalize_scores(const Tensor& a, const std::string& mode, double eps_den) {
    if (mode == "softmax") return softmax_rows(a);
    Tensor rs = row_sums(a);
    for (double s : rs.data())
        if (std::abs(s) < eps_den)
            throw numeric_error("attention: degenerate score row sum");
    return scale_rows(a, reciprocal(rs));
}

Tensor fuse_from_mixings(const Tensor& x, const Tensor& mix_out, const Tensor& mix_in,
                         const Tensor& theta, const Tensor& l1, const Tensor& l2, int v) {
    Tensor f_out = frame_matmul(mix_out, x, v);
    Tensor f = mix_in.defined()
                   ? add(scale_by(f_out, l1), scale_by(frame_matmul(mix_in, x, v), l2))
                   : scale_by(f_out, add(l1, l2));
    return matmul(f, theta);
}

}  // namespace

std::vector<int> encoder_time_schedule(int t_initial, const EncoderConfig& cfg) {
    if (t_initial < 1) throw std::invalid_argument("encoder: frame count must be >= 1");
    std::vector<int> sched;
    int t = t_initial;
    for (int u = 1; u <= cfg.n_faht; ++u) {
        sched.push_back(t);
        if (pools_after(u, t)) t /= 2;
    }
    return sched;
}

Tensor fuse_hyperedge_features(const Tensor& x, const Hypergraph& out_g,
                               const InphaseGraph* in_g, const Tensor& theta,
                               const Tensor& lambda1, const Tensor& lambda2) {
    int v = out_g.v;
    tall_frames(x, v, "fuse_hyperedge_features");
    if (in_g && in_g->incidence.dim(0) != v)
        throw std::invalid_argument("fuse_hyperedge_features: joint count mismatch");
    Tensor mix_out = hyperconv_mixing(out_g.incidence_tensor(), out_g.weight_tensor());
    Tensor mix_in;
    if (in_g) mix_in = hyperconv_mixing(in_g->incidence, in_g->weights);
    return fuse_from_mixings(x, mix_out, mix_in, theta, lambda1, lambda2, v);
}

Tensor bone_pair_features(const Tensor& x_frame, const Tensor& wp) {
    int v = x_frame.dim(0), c = x_frame.dim(1);
    return matmul(reshape(bone_offsets(x_frame), {v * v, c}), wp);
}

Tensor attention_head(const Tensor& q, const Tensor& k, const Tensor& v,
                      const Tensor& hf_head, const Tensor& p_head,
                      const std::string& mode, double eps_den) {
    int n = q.dim(0);
    if (p_head.dim(0) != n * n || p_head.dim(1) != q.dim(1))
        throw std::invalid_argument("attention_head: bone feature shape mismatch");
    std::vector<int> rep(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) rep[static_cast<std::size_t>(i) * n + j] = i;
    Tensor ca_r = reshape(rowdot(gather_rows(q, rep), p_head), {n, n});
    Tensor a = add(add(matmul(q, transpose(k)), matmul(q, transpose(hf_head))), ca_r);
    return matmul(normalize_scores(a, mode, eps_den), v);
}

Tensor multi_head_st_ht(const Tensor& x, const Tensor& hf, const Tensor& x_in,
                        const FahtUnitParams& up, const EncoderConfig& cfg) {
    std::vector<Tensor> heads;
    for (int h = 0; h < cfg.heads; ++h) {
        Tensor q = matmul(x, up.wq[h]);
        Tensor k = matmul(x, up.wk[h]);
        Tensor vv = matmul(x, up.wv[h]);
        Tensor hfh = matmul(hf, up.whf[h]);
        Tensor ph = bone_pair_features(x_in, up.wp[h]);
        heads.push_back(attention_head(q, k, vv, hfh, ph, cfg.attention_mode, cfg.eps_den));
    }
    return add(x, concat_cols(heads));
}

Tensor temporal_attention(const Tensor& z, const FahtUnitParams& up, int v,
                          int t, bool* warned) {
    if (tall_frames(z, v, "temporal_attention") != t)
        throw std::invalid_argument("temporal_attention: frame count mismatch");
    if (t == 1) {
        if (warned) *warned = true;
        return z;
    }
    int c = z.dim(1);
    std::vector<double> pool(static_cast<std::size_t>(t) * t * v, 0.0);
    for (int f = 0; f < t; ++f)
        for (int i = 0; i < v; ++i)
            pool[static_cast<std::size_t>(f) * t * v + static_cast<std::size_t>(f) * v + i] = 1.0 / v;
    Tensor frame_means = matmul(Tensor::from_data({t, t * v}, std::move(pool)), z);
    Tensor squeezed = reshape(mul_scalar(row_sums(frame_means), 1.0 / c), {1, t});
    Tensor a1 = relu(add_rowvec(matmul(squeezed, up.se_w1), up.se_b1));
    Tensor gate = sigmoid(add_rowvec(matmul(a1, up.se_w2), up.se_b2));  // 1 x t
    std::vector<double> ex(static_cast<std::size_t>(t) * v * t, 0.0);
    for (int f = 0; f < t; ++f)
        for (int i = 0; i < v; ++i)
            ex[(static_cast<std::size_t>(f) * v + i) * t + f] = 1.0;
    Tensor per_row = reshape(matmul(Tensor::from_data({t * v, t}, std::move(ex)),
                                    transpose(gate)),
                             {t * v});
    return add(z, scale_rows(z, per_row));
}

Tensor faht_unit_forward(const Tensor& x, const Tensor& mix_out,
                         const Tensor& mix_in, const FahtUnitParams& up,
                         const EncoderConfig& cfg, int v, int t, bool* warned) {
    if (tall_frames(x, v, "faht_unit_forward") != t)
        throw std::invalid_argument("faht_unit_forward: frame count mismatch");
    Tensor hf = fuse_from_mixings(x, mix_out, mix_in, up.theta, up.lambda1, up.lambda2, v);

    std::vector<Tensor> head_cols;
    for (int h = 0; h < cfg.heads; ++h) {
        Tensor q = matmul(hf, up.wq[h]);
        Tensor k = matmul(hf, up.wk[h]);
        Tensor vv = matmul(hf, up.wv[h]);
        Tensor hfp = matmul(hf, up.whf[h]);
        // bone scores factored through the projection: q_i P_{i,j} with
        // P = (x_i - x_j) wp collapses to qp_i x_i - qp_i x_j
        Tensor qp = matmul(q, transpose(up.wp[h]));
        std::vector<Tensor> frames;
        for (int f = 0; f < t; ++f) {
            Tensor qf = slice_rows(q, f * v, v);
            Tensor kf = slice_rows(k, f * v, v);
            Tensor vf = slice_rows(vv, f * v, v);
            Tensor hff = slice_rows(hfp, f * v, v);
            Tensor qpf = slice_rows(qp, f * v, v);
            Tensor xf = slice_rows(x, f * v, v);
            Tensor ca_r = sub(scale_rows(Tensor::ones({v, v}), rowdot(qpf, xf)),
                              matmul(qpf, transpose(xf)));
            Tensor a = add(add(matmul(qf, transpose(kf)), matmul(qf, transpose(hff))), ca_r);
            frames.push_back(matmul(normalize_scores(a, cfg.attention_mode, cfg.eps_den), vf));
        }
        head_cols.push_back(concat_rows(frames));
    }
    Tensor z = add(hf, concat_cols(head_cols));
    if (cfg.use_temporal_attention) z = temporal_attention(z, up, v, t, warned);
    return z;
}

EncoderOutput hyp_enc_forward(const std::vector<Tensor>& samples,
                              const Hypergraph& out_g, const EncoderParams& ep,
                              const QuantizerParams& qp,
                              const QuantizerConfig& qcfg, const Tensor& adj,
                              const EncoderConfig& cfg,
                              const QuantizerFreeze* freeze) {
    cfg.validate();
    if (samples.empty()) throw std::invalid_argument("hyp_enc_forward: empty batch");
    if (static_cast<int>(ep.units.size()) != cfg.n_faht)
        throw std::invalid_argument("hyp_enc_forward: unit count mismatch");
    int v = out_g.v;
    int t0 = tall_frames(samples[0], v, "hyp_enc_forward");
    for (const Tensor& s : samples)
        if (s.dim(0) != t0 * v || s.dim(1) != samples[0].dim(1))
            throw std::invalid_argument("hyp_enc_forward: ragged batch");

    EncoderOutput out;
    Tensor mix_out = hyperconv_mixing(out_g.incidence_tensor(), out_g.weight_tensor());
    int n = static_cast<int>(samples.size());

    std::vector<Tensor> xs(samples.begin(), samples.end());
    int t = t0;
    for (int u = 1; u <= cfg.pre_quantizer_units; ++u) {
        for (int s = 0; s < n; ++s)
            xs[s] = faht_unit_forward(xs[s], mix_out, Tensor(), ep.units[u - 1], cfg,
                                      v, t, &out.temporal_warned);
        if (pools_after(u, t)) {
            for (int s = 0; s < n; ++s) xs[s] = frame_pair_mean(xs[s], t, v);
            t /= 2;
        }
    }

    Tensor tm = time_mean_matrix(v, t);
    std::vector<Tensor> pooled;
    pooled.reserve(xs.size());
    for (int s = 0; s < n; ++s) pooled.push_back(matmul(tm, xs[s]));
    out.quant = run_quantizer(pooled, qp, adj, qcfg, freeze);

    for (int s = 0; s < n; ++s) {
        Tensor mix_in = hyperconv_mixing(out.quant.graphs[s].incidence,
                                         out.quant.graphs[s].weights);
        Tensor x = xs[s];
        int ts = t;
        for (int u = cfg.pre_quantizer_units + 1; u <= cfg.n_faht; ++u) {
            x = faht_unit_forward(x, mix_out, mix_in, ep.units[u - 1], cfg, v, ts,
                                  &out.temporal_warned);
            if (pools_after(u, ts)) {
                x = frame_pair_mean(x, ts, v);
                ts /= 2;
            }
        }
        out.e_enc.push_back(x);
        out.t_out = ts;
    }
    return out;
}

EncoderParams init_encoder(int c_in, int t_initial, const EncoderConfig& cfg,
                           std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 gen(seed);
    std::vector<int> sched = encoder_time_schedule(t_initial, cfg);
    int hd = cfg.hidden / cfg.heads;
    EncoderParams ep;
    int c_prev = c_in;
    // no normalization layers anywhere in this stack, so the initial scales
    // carry the whole burden of keeping five residual units stable: the fuse
    // adds two branches sharing one theta (variance x4 when the graphs agree,
    // hence the 1/2), the per-head outputs feed a residual stream of n_faht
    // units (1/sqrt(2L), as in deep transformer practice), and the temporal
    // gate opens from nearly closed like a highway-network carry gate
    double res_scale = 1.0 / std::sqrt(2.0 * cfg.n_faht);
    for (int u = 0; u < cfg.n_faht; ++u) {
        FahtUnitParams p;
        p.theta = xavier_uniform(c_prev, cfg.hidden, gen, 0.5);
        for (int h = 0; h < cfg.heads; ++h) {
            p.wq.push_back(xavier_uniform(cfg.hidden, hd, gen));
            p.wk.push_back(xavier_uniform(cfg.hidden, hd, gen));
            p.wv.push_back(xavier_uniform(cfg.hidden, hd, gen, res_scale));
            p.whf.push_back(xavier_uniform(cfg.hidden, hd, gen, res_scale));
            p.wp.push_back(xavier_uniform(c_prev, hd, gen));
        }
        int tu = sched[u];
        int tr = std::max(tu / cfg.temporal_reduction, 1);
        p.se_w1 = xavier_uniform(tu, tr, gen);
        p.se_b1 = zeros_param({tr});
        p.se_w2 = xavier_uniform(tr, tu, gen);
        p.se_b2 = Tensor::full({tu}, -3.0, true);
        p.lambda1 = Tensor::scalar(cfg.lambda1, cfg.lambdas_trainable);
        p.lambda2 = Tensor::scalar(cfg.lambda2, cfg.lambdas_trainable);
        ep.units.push_back(std::move(p));
        c_prev = cfg.hidden;
    }
    return ep;
}

}  // namespace hyperskel
