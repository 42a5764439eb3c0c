#include <doctest.h>

#include <random>

#include "hyperskel/data.hpp"
#include "hyperskel/quantizer.hpp"

using namespace hyperskel;

namespace {

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& gen, bool rg = false,
                   double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::size_t n = 1;
    for (int s : shape) n *= s;
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return Tensor::from_data(std::move(shape), std::move(v), rg);
}

// independent nearest-prototype search: full distance table, then the
// first index attaining the minimum
std::vector<int> brute_assign(const Tensor& e, const Tensor& cb) {
    int v = e.shape()[0], d = e.shape()[1], k = cb.shape()[0];
    std::vector<int> out(v);
    for (int i = 0; i < v; ++i) {
        std::vector<double> dist(k, 0.0);
        for (int j = 0; j < k; ++j)
            for (int c = 0; c < d; ++c) {
                double t = e.at(i, c) - cb.at(j, c);
                dist[j] += t * t;
            }
        double best = dist[0];
        for (int j = 1; j < k; ++j) best = std::min(best, dist[j]);
        for (int j = 0; j < k; ++j)
            if (dist[j] == best) {
                out[i] = j;
                break;
            }
    }
    return out;
}

QuantizerConfig toy_cfg() {
    QuantizerConfig cfg;
    cfg.codebook_size = 3;
    cfg.d = 2;
    cfg.c_in = 3;
    return cfg;
}

}  // namespace

TEST_CASE("assignment matches exhaustive search on 1000 random instances") {
    std::mt19937_64 gen(411);
    std::uniform_int_distribution<int> vk(1, 6), kk(1, 5), dk(1, 4), grid(0, 4);
    for (int it = 0; it < 1000; ++it) {
        int v = vk(gen), k = kk(gen), d = dk(gen);
        // coarse grid values so exact ties actually occur
        auto fill = [&](int r, int c) {
            std::vector<double> x(static_cast<std::size_t>(r) * c);
            for (auto& t : x) t = -1.0 + 0.5 * grid(gen);
            return Tensor::from_data({r, c}, std::move(x));
        };
        Tensor e = fill(v, d), cb = fill(k, d);
        CHECK(assign(e, cb) == brute_assign(e, cb));
    }
}

TEST_CASE("equidistant prototypes tie to the lowest index") {
    Tensor cb = Tensor::from_data({2, 1}, {-1.0, 1.0});
    Tensor e = Tensor::from_data({1, 1}, {0.0});
    CHECK(assign(e, cb) == std::vector<int>{0});
}

TEST_CASE("prototypes assign to themselves") {
    std::mt19937_64 gen(7);
    Tensor cb = rand_tensor({5, 3}, gen);
    std::vector<int> he = {3, 0, 4, 1, 2, 2, 0};
    CHECK(assign(gather_rows(cb, he), cb) == he);
}

TEST_CASE("quantization loss value and gradient routing") {
    Tensor e = Tensor::from_data({2, 1}, {0.0, 1.0}, true);
    Tensor cb = Tensor::from_data({2, 1}, {0.25, 2.0}, true);
    auto he = assign(e, cb);
    CHECK(he == std::vector<int>{0, 0});

    Tensor loss = quantization_loss(e, cb, he);
    CHECK(loss.value() == doctest::Approx(0.3125).epsilon(1e-14));

    loss.backward();
    CHECK_FALSE(e.has_grad());  // stop-gradient severs the embedding path
    REQUIRE(cb.has_grad());
    CHECK(cb.grad()[0] == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(cb.grad()[1] == doctest::Approx(0.0));

    std::mt19937_64 gen(19);
    Tensor e2 = rand_tensor({4, 3}, gen);
    Tensor cb2 = rand_tensor({3, 3}, gen, true);
    auto he2 = assign(e2, cb2);
    double err = grad_check(
        [&](const Tensor& c) { return quantization_loss(e2, c, he2); }, cb2);
    CHECK(err < 1e-6);
}

TEST_CASE("straight-through forward emits prototypes and copies gradients back") {
    std::mt19937_64 gen(23);
    Tensor e = rand_tensor({4, 2}, gen, true);
    Tensor cb = rand_tensor({3, 2}, gen, true);
    auto he = assign(e, cb);

    Tensor q = quantize_forward(e, cb, he);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 2; ++c) CHECK(q.at(i, c) == cb.at(he[i], c));

    Tensor w = rand_tensor({4, 2}, gen);
    sum_all(mul(w, q)).backward();
    CHECK_FALSE(cb.has_grad());
    REQUIRE(e.has_grad());
    for (int i = 0; i < 8; ++i) CHECK(e.grad()[i] == w.data()[i]);
}

TEST_CASE("in-phase graph structure and weights") {
    QuantizerConfig cfg = toy_cfg();
    QuantizerParams p = init_quantizer(5, cfg, 99);
    std::vector<int> he = {0, 0, 1, 1, 0};
    std::mt19937_64 gen(31);
    Tensor e = rand_tensor({5, 2}, gen, true);
    Tensor q = quantize_forward(e, p.codebook, he);

    InphaseGraph g = build_inphase(he, q, cfg.codebook_size, p);
    REQUIRE(g.incidence.shape() == std::vector<int>{5, 3});
    REQUIRE(g.weights.shape() == std::vector<int>{3});

    auto hg = Hypergraph::from_incidence(5, 3, g.incidence.data(), g.weights.data());
    CHECK(hg.exactly_one_membership());

    CHECK(g.weights.at(0) > 0.0);
    CHECK(g.weights.at(1) > 0.0);
    CHECK(g.weights.at(2) == 0.0);  // empty hyperedge

    SUBCASE("weights depend only on assignments and codebook") {
        Tensor e2 = add_scalar(e, 1e-9);
        REQUIRE(assign(e2, p.codebook) == assign(e, p.codebook));
        Tensor q2 = quantize_forward(e2, p.codebook, he);
        InphaseGraph g2 = build_inphase(he, q2, cfg.codebook_size, p);
        for (int j = 0; j < 3; ++j) CHECK(g2.weights.at(j) == g.weights.at(j));
    }

    SUBCASE("weights are differentiable in the weight mlp") {
        double err = grad_check(
            [&](const Tensor& w1) {
                QuantizerParams pp = p;
                pp.mlp_w1 = w1;
                InphaseGraph gg = build_inphase(he, q, cfg.codebook_size, pp);
                return sum_all(gg.weights);
            },
            p.mlp_w1);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("full pass shapes, loss averaging and reconstruction gradient") {
    QuantizerConfig cfg = toy_cfg();
    QuantizerParams p = init_quantizer(5, cfg, 5);
    Tensor adj = skeleton_adjacency("chain4");
    std::mt19937_64 gen(77);
    std::vector<Tensor> batch = {rand_tensor({4, 5}, gen, true),
                                 rand_tensor({4, 5}, gen, true),
                                 rand_tensor({4, 5}, gen, true)};

    QuantizerOutput out = run_quantizer(batch, p, adj, cfg);
    REQUIRE(out.he.size() == 3);
    REQUIRE(out.graphs.size() == 3);
    for (int s = 0; s < 3; ++s) {
        CHECK(out.low_dim[s].shape() == std::vector<int>{4, 2});
        CHECK(out.recon[s].shape() == std::vector<int>{4, 3});
        CHECK(out.he[s] == assign(out.low_dim[s], p.codebook));
    }

    double mean = 0.0;
    for (int s = 0; s < 3; ++s) {
        QuantizerOutput one = run_quantizer({batch[s]}, p, adj, cfg);
        mean += one.quant_loss.value();
    }
    CHECK(out.quant_loss.value() == doctest::Approx(mean / 3.0).epsilon(1e-12));

    double err = grad_check(
        [&](const Tensor& f) {
            QuantizerOutput o = run_quantizer({f}, p, adj, cfg);
            return sum_all(o.recon[0]);
        },
        batch[0]);
    CHECK(err < 1e-4);
}

TEST_CASE("frozen surrogate matches the live pass at its base point") {
    QuantizerConfig cfg = toy_cfg();
    QuantizerParams p = init_quantizer(5, cfg, 13);
    Tensor adj = skeleton_adjacency("chain4");
    std::mt19937_64 gen(133);
    std::vector<Tensor> batch = {rand_tensor({4, 5}, gen, true),
                                 rand_tensor({4, 5}, gen, true)};

    auto objective = [&](const QuantizerOutput& o) {
        Tensor t = o.quant_loss;
        for (const auto& r : o.recon) t = add(t, sum_all(r));
        for (const auto& g : o.graphs) t = add(t, sum_all(g.weights));
        return t;
    };

    QuantizerOutput live = run_quantizer(batch, p, adj, cfg);
    QuantizerFreeze fz;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        fz.he.push_back(live.he[s]);
        fz.e_base.push_back(live.low_dim[s].data());
        fz.q_base.push_back(gather_rows(p.codebook, live.he[s]).data());
    }

    QuantizerOutput frozen = run_quantizer(batch, p, adj, cfg, &fz);
    CHECK(frozen.quant_loss.value() ==
          doctest::Approx(live.quant_loss.value()).epsilon(1e-14));
    for (std::size_t s = 0; s < batch.size(); ++s)
        for (int j = 0; j < 3; ++j)
            CHECK(frozen.graphs[s].weights.at(j) ==
                  doctest::Approx(live.graphs[s].weights.at(j)).epsilon(1e-12));

    SUBCASE("analytic gradients of live and frozen objectives agree") {
        auto zero_all = [&]() {
            for (auto& t : batch) t.zero_grad();
            for (auto& w : p.dec_w) w.zero_grad();
            for (Tensor t : {p.codebook, p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2})
                t.zero_grad();
        };
        for (Tensor probe : {batch[0], p.codebook, p.mlp_w1, p.dec_w[2]}) {
            zero_all();
            objective(run_quantizer(batch, p, adj, cfg)).backward();
            std::vector<double> g_live = probe.grad();
            zero_all();
            objective(run_quantizer(batch, p, adj, cfg, &fz)).backward();
            REQUIRE(probe.has_grad());
            for (std::size_t i = 0; i < g_live.size(); ++i)
                CHECK(probe.grad()[i] == doctest::Approx(g_live[i]).epsilon(1e-12));
        }
        zero_all();
    }

    SUBCASE("frozen objective passes finite differences") {
        double err = grad_check(
            [&](const Tensor& f) {
                std::vector<Tensor> b = {f, batch[1]};
                return objective(run_quantizer(b, p, adj, cfg, &fz));
            },
            batch[0]);
        CHECK(err < 1e-4);

        double err_cb = grad_check(
            [&](const Tensor& c) {
                QuantizerParams pp = p;
                pp.codebook = c;
                return objective(run_quantizer(batch, pp, adj, cfg, &fz));
            },
            p.codebook);
        CHECK(err_cb < 1e-4);
    }
}

TEST_CASE("initialization is deterministic in the seed") {
    QuantizerConfig cfg;
    QuantizerParams a = init_quantizer(7, cfg, 42);
    QuantizerParams b = init_quantizer(7, cfg, 42);
    QuantizerParams c = init_quantizer(7, cfg, 43);
    CHECK(a.codebook.data() == b.codebook.data());
    CHECK(a.dec_w[4].data() == b.dec_w[4].data());
    CHECK(a.codebook.data() != c.codebook.data());
    REQUIRE(a.dec_w.size() == 5);
    CHECK(a.dec_w[0].shape() == std::vector<int>{7, 128});
    CHECK(a.dec_w[2].shape() == std::vector<int>{64, 8});
    CHECK(a.dec_w[4].shape() == std::vector<int>{32, 3});
    CHECK(a.codebook.shape() == std::vector<int>{5, 8});
}
