#include "hyperskel/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "hyperskel/init.hpp"

namespace hyperskel {

void DecoderConfig::validate() const {
    if (d < 1 || c_in < 1) throw std::invalid_argument("decoder: widths must be positive");
    if (!std::isfinite(alpha)) throw std::invalid_argument("decoder: alpha must be finite");
    if (han_reduction < 1) throw std::invalid_argument("decoder: han_reduction must be >= 1");
    if (kmeans_max_iter < 1 || kmeans_tol < 0.0)
        throw std::invalid_argument("decoder: bad kmeans stopping rule");
}

Tensor time_average(const Tensor& tall, int v, int t) {
    if (tall.shape().size() != 2 || tall.dim(0) != t * v)
        throw std::invalid_argument("time_average: rows != frames * joints");
    std::vector<double> m(static_cast<std::size_t>(v) * t * v, 0.0);
    for (int f = 0; f < t; ++f)
        for (int i = 0; i < v; ++i)
            m[static_cast<std::size_t>(i) * t * v + static_cast<std::size_t>(f) * v + i] = 1.0 / t;
    return matmul(Tensor::from_data({v, t * v}, std::move(m)), tall);
}

HanOutput han(const Tensor& e_enc, const HanParams& p, int v, int t) {
    if (e_enc.dim(0) != t * v)
        throw std::invalid_argument("han: rows != frames * joints");
    int c = e_enc.dim(1);
    Tensor e2 = matmul(gelu(matmul(e_enc, p.conv_red)), p.conv_exp);

    // per-joint mean over frames and channels
    Tensor e3 = reshape(mul_scalar(row_sums(time_average(e2, v, t)), 1.0 / c), {1, v});
    Tensor h = relu(add_rowvec(matmul(e3, p.lin1_w), p.lin1_b));
    Tensor attn = sigmoid(add_rowvec(matmul(h, p.lin2_w), p.lin2_b));  // 1 x v

    std::vector<double> ex(static_cast<std::size_t>(t) * v * v, 0.0);
    for (int f = 0; f < t; ++f)
        for (int i = 0; i < v; ++i)
            ex[(static_cast<std::size_t>(f) * v + i) * v + i] = 1.0;
    Tensor per_row = reshape(matmul(Tensor::from_data({t * v, v}, std::move(ex)),
                                    transpose(attn)),
                             {t * v});
    HanOutput out;
    out.a_t = scale_rows(e2, per_row);
    out.attn = reshape(attn, {v});
    return out;
}

Tensor fuse_residual(const Tensor& e_enc, const Tensor& a_t, double alpha) {
    if (e_enc.shape() != a_t.shape())
        throw std::invalid_argument("fuse_residual: shape mismatch");
    return add(e_enc, mul_scalar(a_t, alpha));
}

HypDecOutput hypdec_forward(const Tensor& x_pooled, const Tensor& adj,
                            const DecoderParams& p) {
    Tensor h = relu(adjacency_conv(x_pooled, adj, p.dec_w[0]));
    h = relu(adjacency_conv(h, adj, p.dec_w[1]));
    HypDecOutput out;
    out.e_c = adjacency_conv(h, adj, p.dec_w[2]);
    h = relu(adjacency_conv(relu(out.e_c), adj, p.dec_w[3]));
    out.recon = adjacency_conv(h, adj, p.dec_w[4]);
    return out;
}

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) {
        double t = a[c] - b[c];
        s += t * t;
    }
    return s;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed,
                    int max_iter, double tol) {
    int v = points.dim(0), d = points.dim(1);
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (v < k)
        throw std::invalid_argument("kmeans: need at least k points, got " +
                                    std::to_string(v));
    const auto& pd = points.data();
    std::mt19937_64 gen(seed);

    // k-means++ seeding
    std::vector<double> cent(static_cast<std::size_t>(k) * d);
    std::uniform_int_distribution<int> first(0, v - 1);
    int c0 = first(gen);
    std::copy_n(&pd[static_cast<std::size_t>(c0) * d], d, cent.begin());
    std::vector<double> d2(v);
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (int i = 0; i < v; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int jj = 0; jj < j; ++jj)
                best = std::min(best, sq_dist(&pd[static_cast<std::size_t>(i) * d],
                                              &cent[static_cast<std::size_t>(jj) * d], d));
            d2[i] = best;
            total += best;
        }
        int pick;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(gen), acc = 0.0;
            pick = v - 1;
            for (int i = 0; i < v; ++i) {
                acc += d2[i];
                if (r <= acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(gen);  // all points coincide with chosen centroids
        }
        std::copy_n(&pd[static_cast<std::size_t>(pick) * d], d,
                    cent.begin() + static_cast<std::size_t>(j) * d);
    }

    KMeansResult res;
    res.assignments.assign(v, 0);
    std::vector<int> count(k);
    for (int it = 0; it < max_iter; ++it) {
        // assignment pass, ties to the lowest cluster index
        double inertia = 0.0;
        for (int i = 0; i < v; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int j = 0; j < k; ++j) {
                double dist = sq_dist(&pd[static_cast<std::size_t>(i) * d],
                                      &cent[static_cast<std::size_t>(j) * d], d);
                if (dist < best) {
                    best = dist;
                    arg = j;
                }
            }
            res.assignments[i] = arg;
            inertia += best;
        }

        // repair empty clusters before the update so every mean is defined
        std::fill(count.begin(), count.end(), 0);
        for (int i = 0; i < v; ++i) count[res.assignments[i]] += 1;
        for (int j = 0; j < k; ++j) {
            if (count[j] > 0) continue;
            int donor = static_cast<int>(std::max_element(count.begin(), count.end()) -
                                         count.begin());
            int steal = -1;
            double far = -1.0;
            for (int i = 0; i < v; ++i) {
                if (res.assignments[i] != donor) continue;
                double dist = sq_dist(&pd[static_cast<std::size_t>(i) * d],
                                      &cent[static_cast<std::size_t>(donor) * d], d);
                if (dist > far) {
                    far = dist;
                    steal = i;
                }
            }
            inertia -= far;  // the stolen point now sits on its own centroid
            res.assignments[steal] = j;
            count[donor] -= 1;
            count[j] += 1;
            std::copy_n(&pd[static_cast<std::size_t>(steal) * d], d,
                        cent.begin() + static_cast<std::size_t>(j) * d);
        }
        res.inertia_trace.push_back(inertia);
        res.inertia = inertia;

        // update pass
        std::vector<double> next(static_cast<std::size_t>(k) * d, 0.0);
        for (int i = 0; i < v; ++i)
            for (int c = 0; c < d; ++c)
                next[static_cast<std::size_t>(res.assignments[i]) * d + c] +=
                    pd[static_cast<std::size_t>(i) * d + c];
        double shift = 0.0;
        for (int j = 0; j < k; ++j)
            for (int c = 0; c < d; ++c) {
                double m = next[static_cast<std::size_t>(j) * d + c] / count[j];
                shift = std::max(shift, std::abs(m - cent[static_cast<std::size_t>(j) * d + c]));
                cent[static_cast<std::size_t>(j) * d + c] = m;
            }
        if (shift < tol) break;
    }

    // final assignment against the settled centroids
    double inertia = 0.0;
    for (int i = 0; i < v; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int j = 0; j < k; ++j) {
            double dist = sq_dist(&pd[static_cast<std::size_t>(i) * d],
                                  &cent[static_cast<std::size_t>(j) * d], d);
            if (dist < best) {
                best = dist;
                arg = j;
            }
        }
        res.assignments[i] = arg;
        inertia += best;
    }
    res.inertia_trace.push_back(inertia);
    res.inertia = inertia;
    res.centroids = Tensor::from_data({k, d}, std::move(cent));
    return res;
}

Hypergraph generate_outphase(const std::vector<Tensor>& e_c,
                             const std::vector<Tensor>& attn, int k,
                             std::uint64_t seed, int max_iter, double tol) {
    if (e_c.empty() || e_c.size() != attn.size())
        throw std::invalid_argument("generate_outphase: batch mismatch");
    int v = e_c[0].dim(0), d = e_c[0].dim(1);
    int n = static_cast<int>(e_c.size());

    // per-sample, per-channel min-max normalization, then batch average
    std::vector<double> pts(static_cast<std::size_t>(v) * d, 0.0);
    for (int s = 0; s < n; ++s) {
        if (e_c[s].dim(0) != v || e_c[s].dim(1) != d || attn[s].dim(0) != v)
            throw std::invalid_argument("generate_outphase: ragged batch");
        const auto& ed = e_c[s].data();
        for (int c = 0; c < d; ++c) {
            double lo = ed[c], hi = ed[c];
            for (int i = 1; i < v; ++i) {
                lo = std::min(lo, ed[static_cast<std::size_t>(i) * d + c]);
                hi = std::max(hi, ed[static_cast<std::size_t>(i) * d + c]);
            }
            double range = hi - lo;
            for (int i = 0; i < v; ++i) {
                double z = range < 1e-12
                               ? 0.0
                               : (ed[static_cast<std::size_t>(i) * d + c] - lo) / range;
                pts[static_cast<std::size_t>(i) * d + c] += z / n;
            }
        }
    }

    KMeansResult km = kmeans(Tensor::from_data({v, d}, std::move(pts)), k, seed,
                             max_iter, tol);

    std::vector<double> a(v, 0.0);
    double total = 0.0;
    for (int s = 0; s < n; ++s)
        for (int i = 0; i < v; ++i) a[i] += attn[s].at(i) / n;
    for (int i = 0; i < v; ++i) total += a[i];
    if (total <= 0.0) throw numeric_error("generate_outphase: non-positive attention mass");

    std::vector<double> inc(static_cast<std::size_t>(v) * k, 0.0);
    std::vector<double> w(k, 0.0);
    for (int i = 0; i < v; ++i) {
        inc[static_cast<std::size_t>(i) * k + km.assignments[i]] = 1.0;
        w[km.assignments[i]] += a[i] / total;
    }
    return Hypergraph::from_incidence(v, k, std::move(inc), std::move(w));
}

DecoderParams init_decoder(int c_hidden, int v, const DecoderConfig& cfg,
                           std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 gen(seed);
    DecoderParams p;
    int cr = std::max(c_hidden / cfg.han_reduction, 1);
    int vr = std::max(v / cfg.han_reduction, 1);
    p.han.conv_red = xavier_uniform(c_hidden, cr, gen);
    p.han.conv_exp = xavier_uniform(cr, c_hidden, gen);
    p.han.lin1_w = xavier_uniform(v, vr, gen);
    p.han.lin1_b = zeros_param({vr});
    p.han.lin2_w = xavier_uniform(vr, v, gen);
    p.han.lin2_b = zeros_param({v});
    int widths[6] = {c_hidden, 128, 64, cfg.d, 32, cfg.c_in};
    for (int l = 0; l < 5; ++l)
        p.dec_w.push_back(xavier_uniform(widths[l], widths[l + 1], gen));
    return p;
}

}  // namespace hyperskel
