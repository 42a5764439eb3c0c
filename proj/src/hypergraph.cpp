#include "hyperskel/hypergraph.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace hyperskel {

Hypergraph Hypergraph::from_incidence(int v, int e, std::vector<double> incidence,
                                      std::vector<double> weights) {
    if (v <= 0 || e <= 0) throw std::invalid_argument("hypergraph: empty dimensions");
    if (incidence.size() != static_cast<std::size_t>(v) * e)
        throw std::invalid_argument("hypergraph: incidence size mismatch");
    if (weights.size() != static_cast<std::size_t>(e))
        throw std::invalid_argument("hypergraph: weight count mismatch");
    for (double h : incidence)
        if (h != 0.0 && h != 1.0)
            throw std::invalid_argument("hypergraph: incidence entries must be 0 or 1");
    for (double w : weights)
        if (!std::isfinite(w)) throw std::invalid_argument("hypergraph: non-finite weight");
    Hypergraph g;
    g.v = v;
    g.e = e;
    g.incidence = std::move(incidence);
    g.weights = std::move(weights);
    return g;
}

Tensor Hypergraph::incidence_tensor() const {
    return Tensor::from_data({v, e}, incidence);
}

Tensor Hypergraph::weight_tensor() const { return Tensor::from_data({e}, weights); }

bool Hypergraph::exactly_one_membership() const {
    for (int i = 0; i < v; ++i) {
        double s = 0.0;
        for (int j = 0; j < e; ++j) s += h(i, j);
        if (s != 1.0) return false;
    }
    return true;
}

std::vector<int> Hypergraph::memberships() const {
    std::vector<int> out(static_cast<std::size_t>(v), -1);
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < e; ++j)
            if (h(i, j) == 1.0) {
                out[static_cast<std::size_t>(i)] = j;
                break;
            }
    return out;
}

Hypergraph new_random(int v, int e, std::uint64_t seed) {
    if (e <= 0 || v < e)
        throw std::invalid_argument("new_random: need at least one node per hyperedge");
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> pick(0, e - 1);
    std::vector<int> assign(static_cast<std::size_t>(v));
    while (true) {
        std::vector<int> count(static_cast<std::size_t>(e), 0);
        for (int i = 0; i < v; ++i) {
            assign[static_cast<std::size_t>(i)] = pick(gen);
            ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        bool ok = true;
        for (int c : count) ok = ok && c > 0;
        if (ok) break;
    }
    std::vector<double> inc(static_cast<std::size_t>(v) * e, 0.0);
    for (int i = 0; i < v; ++i)
        inc[static_cast<std::size_t>(i) * e + assign[static_cast<std::size_t>(i)]] = 1.0;
    return Hypergraph::from_incidence(v, e, std::move(inc),
                                      std::vector<double>(static_cast<std::size_t>(e), 1.0));
}

DegreePair degree_pair(const Hypergraph& g) {
    DegreePair d;
    d.node_degree.assign(static_cast<std::size_t>(g.v), 0.0);
    d.edge_degree.assign(static_cast<std::size_t>(g.e), 0.0);
    for (int i = 0; i < g.v; ++i)
        for (int j = 0; j < g.e; ++j) {
            double h = g.h(i, j);
            d.node_degree[static_cast<std::size_t>(i)] += h * g.weights[static_cast<std::size_t>(j)];
            d.edge_degree[static_cast<std::size_t>(j)] += h;
        }
    return d;
}

Tensor hyperconv_mixing(const Tensor& incidence, const Tensor& hw) {
    if (incidence.shape().size() != 2)
        throw std::invalid_argument("hyperconv: incidence must be 2-d");
    int v = incidence.dim(0), e = incidence.dim(1);
    if (hw.shape() != std::vector<int>{e})
        throw std::invalid_argument("hyperconv: weight vector length mismatch");

    // weighted node degrees must be invertible
    {
        const auto& hd = incidence.data();
        const auto& wd = hw.data();
        for (int i = 0; i < v; ++i) {
            double dv = 0.0;
            for (int j = 0; j < e; ++j) dv += hd[static_cast<std::size_t>(i) * e + j] * wd[static_cast<std::size_t>(j)];
            if (dv <= 0.0) throw numeric_error("hyperconv: singular node degree");
        }
    }

    // unweighted edge degrees; empty edges contribute nothing
    std::vector<double> inv_de(static_cast<std::size_t>(e), 0.0);
    for (int j = 0; j < e; ++j) {
        double de = 0.0;
        for (int i = 0; i < v; ++i) de += incidence.data()[static_cast<std::size_t>(i) * e + j];
        if (de > 0.0) inv_de[static_cast<std::size_t>(j)] = 1.0 / de;
    }

    Tensor dv = reshape(matmul(incidence, reshape(hw, {e, 1})), {v});
    Tensor s = rsqrt(dv);
    Tensor w_over_de = mul(hw, Tensor::from_data({e}, inv_de));
    Tensor t1 = scale_cols(incidence, w_over_de);
    Tensor t2 = matmul(t1, transpose(incidence));
    return scale_cols(scale_rows(t2, s), s);
}

namespace {

Tensor hyperconv_chain(const Tensor& x, const Tensor& incidence, const Tensor& hw,
                       const Tensor& theta) {
    int v = incidence.dim(0);
    if (x.shape().size() != 2 || x.dim(0) != v)
        throw std::invalid_argument("hyperconv: x rows must match node count");
    if (theta.shape().size() != 2 || theta.dim(0) != x.dim(1))
        throw std::invalid_argument("hyperconv: theta rows must match x channels");
    return matmul(matmul(hyperconv_mixing(incidence, hw), x), theta);
}

}  // namespace

Tensor hyperconv(const Tensor& x, const Hypergraph& g, const Tensor& theta) {
    return hyperconv_chain(x, g.incidence_tensor(), g.weight_tensor(), theta);
}

Tensor hyperconv_weighted(const Tensor& x, const Tensor& incidence, const Tensor& hw,
                          const Tensor& theta) {
    return hyperconv_chain(x, incidence, hw, theta);
}

Tensor adjacency_conv(const Tensor& x, const Tensor& adj, const Tensor& w,
                      bool add_self_loops) {
    if (adj.shape().size() != 2 || adj.dim(0) != adj.dim(1))
        throw std::invalid_argument("adjacency_conv: adjacency must be square");
    int v = adj.dim(0);
    if (x.shape().size() != 2 || x.dim(0) != v)
        throw std::invalid_argument("adjacency_conv: x rows must match adjacency");
    if (w.shape().size() != 2 || w.dim(0) != x.dim(1))
        throw std::invalid_argument("adjacency_conv: weight rows must match x channels");

    std::vector<double> a = adj.data();
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (a[static_cast<std::size_t>(i) * v + j] != a[static_cast<std::size_t>(j) * v + i])
                throw std::invalid_argument("adjacency_conv: adjacency not symmetric");
    if (add_self_loops)
        for (int i = 0; i < v; ++i) {
            auto& d = a[static_cast<std::size_t>(i) * v + i];
            if (d == 0.0) d = 1.0;
        }

    std::vector<double> s(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) {
        double deg = 0.0;
        for (int j = 0; j < v; ++j) deg += a[static_cast<std::size_t>(i) * v + j];
        if (deg <= 0.0) throw numeric_error("adjacency_conv: singular node degree");
        s[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg);
    }

    Tensor a_t = Tensor::from_data({v, v}, std::move(a));
    Tensor s_t = Tensor::from_data({v}, std::move(s));
    Tensor t1 = scale_rows(x, s_t);
    Tensor t2 = matmul(a_t, t1);
    Tensor t3 = scale_rows(t2, s_t);
    return matmul(t3, w);
}

}  // namespace hyperskel
