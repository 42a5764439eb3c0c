#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hyperskel/model.hpp"

using namespace hyperskel;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.data.layout = "chain4";
    cfg.data.num_classes = 2;
    cfg.data.t_target = 8;
    cfg.data.batch_size = 4;
    cfg.data.synth_per_class = 2;
    cfg.data.synth_val_per_class = 1;
    cfg.data.synth_t_raw = 16;
    cfg.model.hidden = 8;
    cfg.model.heads = 2;
    cfg.model.d = 4;
    cfg.model.e_h = 3;
    cfg.optim.epochs = 2;
    cfg.run.out_dir = "";
    return cfg;
}

SkeletonBatch tiny_batch(const RunConfig& cfg, int per_class = 1) {
    auto seqs = synth_generate(cfg.data.num_classes, per_class, 4,
                               cfg.data.synth_t_raw, 11, cfg.data.synth_noise);
    auto batches = make_batches(seqs, 64, cfg.data.t_target, 0, false);
    REQUIRE(batches.size() == 1);
    return batches[0];
}

}  // namespace

TEST_CASE("model: initialization is deterministic and registry names are stable") {
    RunConfig cfg = tiny_config();
    ModelState a = init_model(cfg);
    ModelState b = init_model(cfg);
    auto ra = a.param_registry();
    auto rb = b.param_registry();
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
        CHECK(ra[i].first == rb[i].first);
        CHECK(ra[i].second->data() == rb[i].second->data());
    }
    bool has_theta = false, has_fc = false, has_lambda = false;
    for (auto& [name, slot] : ra) {
        if (name == "encoder.unit1.theta") has_theta = true;
        if (name == "classifier.fc_w") has_fc = true;
        if (name.find("lambda") != std::string::npos) has_lambda = true;
    }
    CHECK(has_theta);
    CHECK(has_fc);
    CHECK_FALSE(has_lambda);

    cfg.model.lambdas_trainable = true;
    ModelState c = init_model(cfg);
    bool found = false;
    for (auto& [name, slot] : c.param_registry())
        if (name == "encoder.unit3.lambda2") found = true;
    CHECK(found);
}

TEST_CASE("model: forward emits row-stochastic probabilities of the right shape") {
    RunConfig cfg = tiny_config();
    ModelState state = init_model(cfg);
    SkeletonBatch batch = tiny_batch(cfg, 2);
    ForwardOutput out = forward(batch, state, false);
    REQUIRE(out.probs.shape() == std::vector<int>{batch.n, 2});
    REQUIRE(static_cast<int>(out.predictions.size()) == batch.n);
    REQUIRE(out.embeddings.shape() == std::vector<int>{batch.n, cfg.model.hidden});
    for (int i = 0; i < batch.n; ++i) {
        double row = 0.0;
        for (int c = 0; c < 2; ++c) {
            CHECK(out.probs.at(i, c) > 0.0);
            row += out.probs.at(i, c);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out.predictions[i] >= 0);
        CHECK(out.predictions[i] < 2);
    }
    CHECK(std::isfinite(out.losses.total.value()));
    CHECK(out.losses.ce.value() > 0.0);
    CHECK_FALSE(out.has_next);

    SUBCASE("geometry mismatches are rejected") {
        auto seqs = synth_generate(2, 1, 4, 16, 3, 0.02);
        auto wrong_t = make_batches(seqs, 64, 4, 0, false);
        CHECK_THROWS_AS(forward(wrong_t[0], state, false), std::invalid_argument);
    }
}

TEST_CASE("model: identical inputs produce bitwise identical predictions") {
    RunConfig cfg = tiny_config();
    ModelState state = init_model(cfg);
    auto seqs = synth_generate(2, 1, 4, 16, 5, 0.02);
    std::vector<SkeletonSequence> doubled = {seqs[0], seqs[0], seqs[1]};
    auto batches = make_batches(doubled, 64, cfg.data.t_target, 0, false);
    REQUIRE(batches.size() == 1);
    ForwardOutput out = forward(batches[0], state, false);
    for (int c = 0; c < 2; ++c)
        CHECK(out.probs.at(0, c) == out.probs.at(1, c));

    ForwardOutput again = forward(batches[0], state, false);
    CHECK(again.probs.data() == out.probs.data());
}

TEST_CASE("model: evaluation leaves the out-phase hypergraph untouched") {
    RunConfig cfg = tiny_config();
    ModelState state = init_model(cfg);
    SkeletonBatch batch = tiny_batch(cfg, 2);
    auto inc = state.h_out.incidence;
    auto w = state.h_out.weights;
    auto it = state.iteration;
    EvalResult r = evaluate({batch}, state);
    CHECK(state.h_out.incidence == inc);
    CHECK(state.h_out.weights == w);
    CHECK(state.iteration == it);
    CHECK(r.count == batch.n);

    SUBCASE("per-class accuracies aggregate to top-1") {
        std::vector<int> counts(2, 0);
        for (int lb : batch.labels) counts[lb] += 1;
        double agg = 0.0;
        for (int c = 0; c < 2; ++c) agg += r.per_class[c] * counts[c];
        CHECK(r.top1 == doctest::Approx(agg / batch.n).epsilon(1e-12));
    }
    SUBCASE("empty dataset is an argument error") {
        CHECK_THROWS_AS(evaluate({}, state), std::invalid_argument);
    }
}

TEST_CASE("model: training installs the regenerated hypergraph per the mode") {
    RunConfig cfg = tiny_config();
    SkeletonBatch batch = tiny_batch(cfg, 2);

    SUBCASE("iteration mode replaces it even at zero learning rate") {
        ModelState state = init_model(cfg);
        auto reg = state.param_registry();
        std::vector<std::vector<double>> before;
        for (auto& [name, slot] : reg) before.push_back(slot->data());
        cfg.optim.weight_decay = 0.0;
        state.cfg.optim.weight_decay = 0.0;
        auto inc = state.h_out.incidence;
        ForwardOutput out = train_step(batch, state, 0.0);
        CHECK(out.has_next);
        CHECK(state.iteration == 1);
        bool changed = state.h_out.incidence != inc ||
                       state.h_out.weights != std::vector<double>(state.h_out.e, 1.0);
        CHECK(changed);
        std::size_t i = 0;
        for (auto& [name, slot] : state.param_registry())
            CHECK(slot->data() == before[i++]);
    }
    SUBCASE("off mode keeps the allocation fixed") {
        cfg.model.regenerate = "off";
        ModelState state = init_model(cfg);
        auto inc = state.h_out.incidence;
        ForwardOutput out = train_step(batch, state, 0.01);
        CHECK_FALSE(out.has_next);
        CHECK(state.h_out.incidence == inc);
    }
    SUBCASE("a positive learning rate moves the parameters") {
        ModelState state = init_model(cfg);
        auto fc_before = state.fc_w.data();
        train_step(batch, state, 0.01);
        CHECK(state.fc_w.data() != fc_before);
    }
}

TEST_CASE("optimizer: nesterov momentum follows the hand-computed trace") {
    // f(p) = p^2, gradient 2p, lr 0.1, momentum 0.9, no decay
    std::vector<double> p{1.0}, vel{0.0};
    sgd_update(p, {2.0 * 1.0}, vel, 0.1, 0.9, 0.0);
    CHECK(vel[0] == doctest::Approx(2.0));
    CHECK(p[0] == doctest::Approx(0.62).epsilon(1e-14));
    sgd_update(p, {2.0 * p[0]}, vel, 0.1, 0.9, 0.0);
    CHECK(vel[0] == doctest::Approx(3.04).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(0.2224).epsilon(1e-12));
}

TEST_CASE("optimizer: decay shrinks a gradient-free parameter by exactly (1 - lr*wd)") {
    std::vector<double> p{3.0, -1.5}, vel{0.0, 0.0};
    std::vector<double> expect(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        expect[i] = p[i] - 0.1 * (0.0 + 0.9 * 0.0) - 0.1 * 0.01 * p[i];
    sgd_update(p, {0.0, 0.0}, vel, 0.1, 0.9, 0.01);
    CHECK(p == expect);

    SUBCASE("a parameter outside every loss path shrinks the same way in a step") {
        RunConfig cfg = tiny_config();
        cfg.model.use_temporal_attention = false;
        cfg.optim.weight_decay = 0.01;
        ModelState state = init_model(cfg);
        SkeletonBatch batch = tiny_batch(cfg, 1);
        auto w0 = state.enc.units[0].se_w1.data();
        train_step(batch, state, 0.05);
        const auto& w1 = state.enc.units[0].se_w1.data();
        for (std::size_t i = 0; i < w0.size(); ++i)
            CHECK(w1[i] == w0[i] - 0.05 * (0.0 + 0.9 * 0.0) - 0.05 * 0.01 * w0[i]);
    }
}

TEST_CASE("model: learning rate steps down tenfold at the configured epochs") {
    RunConfig::Optim optim;  // 0.025, decay at 110 and 120
    CHECK(lr_schedule(0, optim) == 0.025);
    CHECK(lr_schedule(109, optim) == 0.025);
    CHECK(lr_schedule(110, optim) == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK(lr_schedule(119, optim) == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK(lr_schedule(120, optim) == doctest::Approx(0.00025).epsilon(1e-12));
    CHECK(lr_schedule(139, optim) == doctest::Approx(0.00025).epsilon(1e-12));
}

TEST_CASE("model: checkpoint round trip restores bit-identical behavior") {
    RunConfig cfg = tiny_config();
    ModelState state = init_model(cfg);
    SkeletonBatch batch = tiny_batch(cfg, 2);
    train_step(batch, state, 0.01);
    train_step(batch, state, 0.01);

    std::string path = "test_ckpt_tmp.bin";
    save_checkpoint(path, state);
    ModelState back = load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(back.iteration == state.iteration);
    CHECK(back.epoch == state.epoch);
    CHECK(back.h_out.incidence == state.h_out.incidence);
    CHECK(back.h_out.weights == state.h_out.weights);
    CHECK(back.velocity == state.velocity);
    auto ra = state.param_registry();
    auto rb = back.param_registry();
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i)
        CHECK(ra[i].second->data() == rb[i].second->data());

    ForwardOutput a = forward(batch, state, false);
    ForwardOutput b = forward(batch, back, false);
    CHECK(a.probs.data() == b.probs.data());
    CHECK(a.losses.total.value() == b.losses.total.value());

    CHECK_THROWS_AS(load_checkpoint("no_such_ckpt.bin"), std::invalid_argument);
}

TEST_CASE("model: every parameter group matches central differences") {
    RunConfig cfg = tiny_config();
    ModelState state = init_model(cfg);
    SkeletonBatch batch = tiny_batch(cfg, 1);
    auto results = gradcheck_model(batch, state);
    CHECK(results.size() > 50);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : results)
        if (r.rel_err > worst) {
            worst = r.rel_err;
            worst_name = r.group;
        }
    INFO("worst group ", worst_name, " rel_err ", worst);
    CHECK(worst < 1e-4);

    SUBCASE("a corrupted activation adjoint is caught and localized") {
        set_gelu_adjoint_corruption(true);
        auto bad = gradcheck_model(batch, state);
        set_gelu_adjoint_corruption(false);
        double red_err = -1.0;
        for (const auto& r : bad)
            if (r.group == "decoder.han.conv_red") red_err = r.rel_err;
        REQUIRE(red_err >= 0.0);
        CHECK(red_err > 1e-4);
    }
}

TEST_CASE("model: ablation ladder runs without numeric failure") {
    auto step_ok = [](RunConfig cfg) {
        ModelState state = init_model(cfg);
        SkeletonBatch batch = tiny_batch(cfg, 1);
        ForwardOutput out = train_step(batch, state, 0.01);
        CHECK(std::isfinite(out.losses.total.value()));
    };
    RunConfig fixed = tiny_config();
    fixed.model.regenerate = "off";
    fixed.model.lambda2 = 0.0;
    fixed.model.use_temporal_attention = false;
    step_ok(fixed);

    RunConfig outphase = fixed;
    outphase.model.regenerate = "iteration";
    step_ok(outphase);

    RunConfig inphase = outphase;
    inphase.model.lambda2 = 1.0;
    step_ok(inphase);

    RunConfig full = inphase;
    full.model.use_temporal_attention = true;
    step_ok(full);
}

TEST_CASE("model: training emits one parsable metrics row per epoch") {
    RunConfig cfg = tiny_config();
    auto [train_seqs, val_seqs] = load_dataset(cfg);
    CHECK(train_seqs.size() == 4);
    CHECK(val_seqs.size() == 2);

    ModelState state = init_model(cfg);
    std::ostringstream metrics;
    auto rows = run_training(state, train_seqs, val_seqs, &metrics, "");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].epoch == 0);
    CHECK(rows[1].epoch == 1);
    CHECK(state.epoch == 2);
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.total));
        CHECK(r.train_acc >= 0.0);
        CHECK(r.train_acc <= 1.0);
        CHECK(r.val_acc >= 0.0);
        CHECK(r.val_acc <= 1.0);
        CHECK(r.lr == 0.025);
    }
    std::string text = metrics.str();
    CHECK(text.find(metrics_header()) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);

    SUBCASE("a rerun from the same seed is byte-identical") {
        ModelState state2 = init_model(cfg);
        std::ostringstream metrics2;
        run_training(state2, train_seqs, val_seqs, &metrics2, "");
        CHECK(metrics2.str() == text);
    }
}

TEST_CASE("model: dataset loading respects the manifest contract") {
    RunConfig cfg = tiny_config();
    SUBCASE("synthetic split sizes follow the config") {
        cfg.data.synth_per_class = 3;
        cfg.data.synth_val_per_class = 2;
        auto [train_seqs, val_seqs] = load_dataset(cfg);
        CHECK(train_seqs.size() == 6);
        CHECK(val_seqs.size() == 4);
        for (const auto& s : train_seqs) CHECK(s.v == 4);
    }
    SUBCASE("manifest layout mismatch is rejected") {
        auto seqs = synth_generate(2, 1, 4, 16, 3, 0.02);
        save_jsonl("test_train_tmp.jsonl", seqs);
        save_jsonl("test_val_tmp.jsonl", seqs);
        Manifest m;
        m.train = "test_train_tmp.jsonl";
        m.val = "test_val_tmp.jsonl";
        m.layout = "ntu25";
        m.num_classes = 2;
        save_manifest("test_manifest_tmp.json", m);
        cfg.data.manifest = "test_manifest_tmp.json";
        CHECK_THROWS_AS(load_dataset(cfg), std::invalid_argument);
        m.layout = "chain4";
        save_manifest("test_manifest_tmp.json", m);
        auto [train_seqs, val_seqs] = load_dataset(cfg);
        CHECK(train_seqs.size() == 2);
        std::remove("test_train_tmp.jsonl");
        std::remove("test_val_tmp.jsonl");
        std::remove("test_manifest_tmp.json");
    }
}
