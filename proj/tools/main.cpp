#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hyperskel/model.hpp"

using namespace hyperskel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitGradcheck = 3;

// leftover "--dotted.key value" tokens become config overrides
std::vector<std::pair<std::string, std::string>> collect_overrides(
    const std::vector<std::string>& extras) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (std::size_t i = 0; i < extras.size(); i += 2) {
        const std::string& flag = extras[i];
        if (flag.rfind("--", 0) != 0 || i + 1 >= extras.size())
            throw std::invalid_argument("expected --section.key value pairs, got '" +
                                        flag + "'");
        kv.emplace_back(flag.substr(2), extras[i + 1]);
    }
    return kv;
}

RunConfig config_from_cli(const std::string& config_path,
                          const std::vector<std::string>& extras) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    cfg = apply_overrides(cfg, collect_overrides(extras));
    cfg.validate();
    return cfg;
}

void check_thread_env() {
    const char* env = std::getenv("HYPERSKEL_THREADS");
    if (!env) return;
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1)
        throw std::invalid_argument("HYPERSKEL_THREADS must be a positive integer");
    // computation is single threaded at this scale; the variable is accepted
    // for interface stability
}

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

int cmd_train(const std::string& config_path, const std::string& resume_path,
              const std::vector<std::string>& extras) {
    ModelState state;
    if (!resume_path.empty()) {
        if (!config_path.empty() || !extras.empty())
            throw std::invalid_argument(
                "--resume uses the checkpoint's own config; drop --config/overrides");
        state = load_checkpoint(resume_path);
    } else {
        state = init_model(config_from_cli(config_path, extras));
    }
    auto [train_seqs, val_seqs] = load_dataset(state.cfg);

    std::string out_dir = state.cfg.run.out_dir;
    std::ofstream metrics;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        auto mode = resume_path.empty() ? std::ios::trunc : std::ios::app;
        metrics.open(out_dir + "/metrics.csv", mode);
        if (!metrics)
            throw std::invalid_argument("cannot write " + out_dir + "/metrics.csv");
    }
    auto rows = run_training(state, train_seqs, val_seqs,
                             out_dir.empty() ? nullptr : &metrics, out_dir);
    if (rows.empty()) {
        std::cout << "nothing to do: epoch " << state.epoch << " >= "
                  << state.cfg.optim.epochs << "\n";
    } else {
        const EpochRow& last = rows.back();
        std::cout << "trained " << rows.size() << " epochs, final train_acc "
                  << last.train_acc << ", val_acc " << last.val_acc << ", total "
                  << last.total << "\n";
    }
    if (!out_dir.empty())
        std::cout << "metrics: " << out_dir << "/metrics.csv, checkpoint: " << out_dir
                  << "/ckpt_final.bin\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& split) {
    ModelState state = load_checkpoint(checkpoint_path);
    auto [train_seqs, val_seqs] = load_dataset(state.cfg);
    const auto& seqs = split == "train" ? train_seqs : val_seqs;
    if (seqs.empty()) throw std::invalid_argument("eval: empty " + split + " split");
    auto batches = make_batches(seqs, state.cfg.data.batch_size,
                                state.cfg.data.t_target, 0, false);
    EvalResult r = evaluate(batches, state);
    std::cout << split << " samples " << r.count << "\n";
    std::cout << "top1 " << fmt17(r.top1) << "\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c)
        std::cout << "class" << c << " acc " << fmt17(r.per_class[c]) << "\n";
    std::cout << "ce " << fmt17(r.ce) << " rec1 " << fmt17(r.rec1) << " rec2 "
              << fmt17(r.rec2) << " quant " << fmt17(r.quant) << " total "
              << fmt17(r.total) << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& config_path,
                  const std::vector<std::string>& extras, bool corrupt) {
    RunConfig cfg = config_from_cli(config_path, extras);
    ModelState state = init_model(cfg);

    // two sequences with distinct labels make the toy batch
    auto [train_seqs, val_seqs] = load_dataset(cfg);
    std::vector<SkeletonSequence> toy;
    for (const auto& s : train_seqs) {
        if (toy.empty() || s.label != toy[0].label) toy.push_back(s);
        if (toy.size() == 2) break;
    }
    if (toy.size() < 2) throw std::invalid_argument("gradcheck: need two samples");
    auto batches = make_batches(toy, 2, cfg.data.t_target, 0, false);

    if (corrupt) set_gelu_adjoint_corruption(true);
    auto results = gradcheck_model(batches[0], state);
    if (corrupt) set_gelu_adjoint_corruption(false);

    std::vector<std::string> offenders;
    double worst = 0.0;
    for (const auto& r : results) {
        std::cout << r.group << " " << fmt17(r.rel_err) << "\n";
        worst = std::max(worst, r.rel_err);
        if (!(r.rel_err < 1e-4)) offenders.push_back(r.group);
    }
    std::cout << "groups " << results.size() << " worst " << fmt17(worst) << "\n";
    if (!offenders.empty()) {
        std::cout << "FAIL:";
        for (const auto& g : offenders) std::cout << " " << g;
        std::cout << "\n";
        return kExitGradcheck;
    }
    std::cout << "PASS\n";
    return kExitOk;
}

int cmd_export(const std::string& checkpoint_path, const std::string& out_dir,
               const std::string& split) {
    ModelState state = load_checkpoint(checkpoint_path);
    auto [train_seqs, val_seqs] = load_dataset(state.cfg);
    const auto& seqs = split == "train" ? train_seqs : val_seqs;
    if (seqs.empty()) throw std::invalid_argument("export: empty " + split + " split");
    auto batches = make_batches(seqs, state.cfg.data.batch_size,
                                state.cfg.data.t_target, 0, false);
    std::filesystem::create_directories(out_dir);

    std::ofstream emb(out_dir + "/embeddings.csv");
    std::ofstream pred(out_dir + "/predictions.csv");
    std::ofstream hyp(out_dir + "/hyperedges.csv");
    if (!emb || !pred || !hyp)
        throw std::invalid_argument("export: cannot write into " + out_dir);

    emb << "sample_id,label";
    for (int j = 0; j < state.cfg.model.hidden; ++j) emb << ",e" << j;
    emb << "\n";
    pred << "sample_id,label,prediction\n";
    int sample_id = 0;
    for (const auto& b : batches) {
        ForwardOutput out = forward(b, state, false);
        for (int i = 0; i < b.n; ++i, ++sample_id) {
            emb << sample_id << "," << b.labels[i];
            for (int j = 0; j < state.cfg.model.hidden; ++j)
                emb << "," << fmt17(out.embeddings.at(i, j));
            emb << "\n";
            pred << sample_id << "," << b.labels[i] << "," << out.predictions[i]
                 << "\n";
        }
    }

    hyp << "joint_id,hyperedge_id,weight\n";
    for (int i = 0; i < state.h_out.v; ++i)
        for (int j = 0; j < state.h_out.e; ++j)
            if (state.h_out.h(i, j) != 0.0)
                hyp << i << "," << j << "," << fmt17(state.h_out.weights[j]) << "\n";

    std::cout << "wrote " << sample_id << " rows to " << out_dir
              << "/{embeddings,predictions,hyperedges}.csv\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hypergraph transformer for skeleton activity recognition"};
    app.require_subcommand(1);

    std::string config_path, resume_path, checkpoint_path, out_dir, split = "val";
    bool corrupt = false;

    CLI::App* train = app.add_subcommand("train", "train from a config");
    train->add_option("--config", config_path, "JSON config file");
    train->add_option("--resume", resume_path, "checkpoint to continue from");
    train->allow_extras();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--split", split, "train or val");

    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference audit");
    grad->add_option("--config", config_path, "JSON config file");
    grad->add_flag("--corrupt-adjoint", corrupt,
                   "deliberately corrupt one adjoint (self-test)")
        ->group("");
    grad->allow_extras();

    CLI::App* exp = app.add_subcommand("export", "export embeddings and hyperedges");
    exp->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    exp->add_option("--out", out_dir, "output directory")->required();
    exp->add_option("--split", split, "train or val");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        check_thread_env();
        if (split != "train" && split != "val")
            throw std::invalid_argument("--split must be train or val");
        if (train->parsed()) return cmd_train(config_path, resume_path, train->remaining());
        if (eval->parsed()) return cmd_eval(checkpoint_path, split);
        if (grad->parsed()) return cmd_gradcheck(config_path, grad->remaining(), corrupt);
        if (exp->parsed()) return cmd_export(checkpoint_path, out_dir, split);
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
