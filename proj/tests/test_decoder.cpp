#include <doctest.h>

#include <cmath>
#include <random>

#include "hyperskel/data.hpp"
#include "hyperskel/decoder.hpp"

using namespace hyperskel;

namespace {

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& gen, bool rg = false) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::size_t n = 1;
    for (int s : shape) n *= s;
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return Tensor::from_data(std::move(shape), std::move(v), rg);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

// best inertia over every non-empty two-block partition of the rows
double best_two_partition_inertia(const Tensor& pts) {
    int v = pts.dim(0), d = pts.dim(1);
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask + 1 < (1u << v); ++mask) {
        std::vector<double> mean0(d, 0.0), mean1(d, 0.0);
        int n0 = 0, n1 = 0;
        for (int i = 0; i < v; ++i) {
            bool one = (mask >> i) & 1u;
            for (int c = 0; c < d; ++c)
                (one ? mean1 : mean0)[c] += pts.at(i, c);
            (one ? n1 : n0) += 1;
        }
        for (int c = 0; c < d; ++c) {
            mean0[c] /= n0;
            mean1[c] /= n1;
        }
        double inertia = 0.0;
        for (int i = 0; i < v; ++i) {
            const auto& m = ((mask >> i) & 1u) ? mean1 : mean0;
            for (int c = 0; c < d; ++c) {
                double t = pts.at(i, c) - m[c];
                inertia += t * t;
            }
        }
        best = std::min(best, inertia);
    }
    return best;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    DecoderConfig cfg;
    CHECK(cfg.alpha == 0.2);
    CHECK(cfg.d == 8);
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("time average of a frame ramp") {
    // frame f holds the constant f, so the mean over 4 frames is 1.5
    std::vector<double> x;
    for (int f = 0; f < 4; ++f)
        for (int i = 0; i < 3; ++i) x.push_back(static_cast<double>(f));
    Tensor avg = time_average(Tensor::from_data({12, 1}, std::move(x)), 3, 4);
    REQUIRE(avg.shape() == std::vector<int>{3, 1});
    for (int i = 0; i < 3; ++i) CHECK(avg.at(i, 0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("hyperedge attention network") {
    std::mt19937_64 gen(61);
    DecoderConfig cfg;
    int v = 6, t = 3, c = 8;
    DecoderParams p = init_decoder(c, v, cfg, 62);
    Tensor e = rand_tensor({t * v, c}, gen);

    SUBCASE("attention lands strictly inside the unit interval") {
        HanOutput out = han(e, p.han, v, t);
        REQUIRE(out.attn.shape() == std::vector<int>{v});
        CHECK(out.a_t.shape() == e.shape());
        for (int i = 0; i < v; ++i) {
            CHECK(out.attn.at(i) > 0.0);
            CHECK(out.attn.at(i) < 1.0);
        }
    }
    SUBCASE("zeroed excitation halves the channel features") {
        HanParams hp = p.han;
        hp.lin2_w = Tensor::zeros({hp.lin2_w.dim(0), v});
        hp.lin2_b = Tensor::zeros({v});
        HanOutput out = han(e, hp, v, t);
        for (int i = 0; i < v; ++i) CHECK(out.attn.at(i) == 0.5);
        Tensor e2 = matmul(gelu(matmul(e, hp.conv_red)), hp.conv_exp);
        CHECK(max_abs_diff(out.a_t, mul_scalar(e2, 0.5)) == 0.0);
    }
}

TEST_CASE("residual fusion") {
    std::mt19937_64 gen(63);
    Tensor e = rand_tensor({6, 4}, gen), a = rand_tensor({6, 4}, gen);
    CHECK(max_abs_diff(fuse_residual(e, a, 0.0), e) == 0.0);
    CHECK(max_abs_diff(fuse_residual(e, e, 1.0), mul_scalar(e, 2.0)) == 0.0);
    Tensor f = fuse_residual(e, a, 0.2);
    CHECK(f.at(2, 1) == doctest::Approx(e.at(2, 1) + 0.2 * a.at(2, 1)).epsilon(1e-15));
}

TEST_CASE("five-layer decoder with identity adjacency is a dense composition") {
    std::mt19937_64 gen(64);
    DecoderConfig cfg;
    cfg.d = 3;
    int v = 4, c = 6;
    DecoderParams p = init_decoder(c, v, cfg, 65);
    Tensor x = rand_tensor({v, c}, gen, true);
    HypDecOutput out = hypdec_forward(x, Tensor::eye(v), p);

    Tensor h = relu(matmul(x, p.dec_w[0]));
    h = relu(matmul(h, p.dec_w[1]));
    Tensor ec = matmul(h, p.dec_w[2]);
    Tensor recon = matmul(relu(matmul(relu(ec), p.dec_w[3])), p.dec_w[4]);

    CHECK(out.e_c.shape() == std::vector<int>{v, 3});
    CHECK(out.recon.shape() == std::vector<int>{v, 3});
    CHECK(max_abs_diff(out.e_c, ec) < 1e-13);
    CHECK(max_abs_diff(out.recon, recon) < 1e-13);

    SUBCASE("both taps are differentiable") {
        Tensor adj = skeleton_adjacency("chain4");
        double err = grad_check(
            [&](const Tensor& xx) {
                HypDecOutput o = hypdec_forward(xx, adj, p);
                return add(sum_all(o.recon), sum_all(o.e_c));
            },
            x);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("k-means recovers separated one-dimensional clusters exactly") {
    Tensor pts = Tensor::from_data({4, 1}, {0.0, 0.1, 10.0, 10.1});
    KMeansResult km = kmeans(pts, 2, 9);
    CHECK(km.assignments[0] == km.assignments[1]);
    CHECK(km.assignments[2] == km.assignments[3]);
    CHECK(km.assignments[0] != km.assignments[2]);
    double lo = std::min(km.centroids.at(0, 0), km.centroids.at(1, 0));
    double hi = std::max(km.centroids.at(0, 0), km.centroids.at(1, 0));
    CHECK(lo == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(hi == doctest::Approx(10.05).epsilon(1e-12));
    CHECK(km.inertia == doctest::Approx(best_two_partition_inertia(pts)).epsilon(1e-12));
}

TEST_CASE("k-means properties on random instances") {
    std::mt19937_64 gen(71);
    std::uniform_int_distribution<int> vk(2, 9), dk(1, 3);
    for (int it = 0; it < 100; ++it) {
        int v = vk(gen), d = dk(gen);
        std::uniform_int_distribution<int> kk(1, v);
        int k = kk(gen);
        Tensor pts = rand_tensor({v, d}, gen);
        KMeansResult km = kmeans(pts, k, 1000 + it);

        for (std::size_t m = 1; m < km.inertia_trace.size(); ++m)
            CHECK(km.inertia_trace[m] <= km.inertia_trace[m - 1] + 1e-12);

        std::vector<int> count(k, 0);
        for (int a : km.assignments) count[a] += 1;
        for (int j = 0; j < k; ++j) CHECK(count[j] > 0);

        if (k == v) CHECK(km.inertia == doctest::Approx(0.0));
    }
}

TEST_CASE("k-means finds the optimal partition of well-separated pairs") {
    std::mt19937_64 gen(72);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3), gap(8.0, 20.0);
    for (int it = 0; it < 50; ++it) {
        int v = 6;
        std::vector<double> x(v);
        double off = gap(gen);
        for (int i = 0; i < v; ++i) x[i] = (i < 3 ? 0.0 : off) + jitter(gen);
        Tensor pts = Tensor::from_data({v, 1}, std::move(x));
        KMeansResult km = kmeans(pts, 2, 500 + it);
        CHECK(km.inertia ==
              doctest::Approx(best_two_partition_inertia(pts)).epsilon(1e-10));
    }
}

TEST_CASE("k-means argument checks and determinism") {
    std::mt19937_64 gen(73);
    Tensor pts = rand_tensor({3, 2}, gen);
    CHECK_THROWS_AS(kmeans(pts, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(pts, 0, 1), std::invalid_argument);
    KMeansResult a = kmeans(pts, 2, 17), b = kmeans(pts, 2, 17);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids.data() == b.centroids.data());
}

TEST_CASE("out-phase hypergraph generation") {
    int v = 4, d = 2;
    // two tight embedding groups: nodes {0,1} and {2,3}
    Tensor ec0 = Tensor::from_data({v, d}, {0.0, 0.0, 0.01, 0.0, 1.0, 1.0, 0.99, 1.0});
    Tensor ec1 = add_scalar(ec0, 0.05);

    SUBCASE("uniform attention weighs each pair edge one half") {
        Tensor attn = Tensor::full({v}, 0.3);
        Hypergraph g = generate_outphase({ec0, ec1}, {attn, attn}, 2, 21);
        CHECK(g.exactly_one_membership());
        REQUIRE(g.e == 2);
        CHECK(g.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(g.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(g.h(0, g.memberships()[0]) == 1.0);
        CHECK(g.memberships()[0] == g.memberships()[1]);
        CHECK(g.memberships()[2] == g.memberships()[3]);
        CHECK(g.memberships()[0] != g.memberships()[2]);
    }
    SUBCASE("weights always sum to one") {
        std::mt19937_64 gen(74);
        for (int it = 0; it < 20; ++it) {
            std::vector<double> av(v);
            for (auto& x : av) x = 0.05 + 0.9 * std::uniform_real_distribution<double>()(gen);
            Tensor attn = Tensor::from_data({v}, std::move(av));
            Tensor ec = rand_tensor({v, d}, gen);
            Hypergraph g = generate_outphase({ec}, {attn}, 2, 400 + it);
            double s = 0.0;
            for (double w : g.weights) {
                CHECK(w >= 0.0);
                s += w;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(g.exactly_one_membership());
        }
    }
    SUBCASE("generation is deterministic") {
        Tensor attn = Tensor::full({v}, 0.4);
        Hypergraph a = generate_outphase({ec0}, {attn}, 2, 33);
        Hypergraph b = generate_outphase({ec0}, {attn}, 2, 33);
        CHECK(a.incidence == b.incidence);
        CHECK(a.weights == b.weights);
    }
}
