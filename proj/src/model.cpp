#include "hyperskel/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hyperskel/init.hpp"

namespace hyperskel {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<std::pair<std::string, Tensor*>> ModelState::param_registry() {
    std::vector<std::pair<std::string, Tensor*>> reg;
    for (std::size_t u = 0; u < enc.units.size(); ++u) {
        FahtUnitParams& p = enc.units[u];
        std::string base = "encoder.unit" + std::to_string(u + 1) + ".";
        reg.emplace_back(base + "theta", &p.theta);
        for (std::size_t h = 0; h < p.wq.size(); ++h) {
            std::string hb = base + "h" + std::to_string(h) + ".";
            reg.emplace_back(hb + "wq", &p.wq[h]);
            reg.emplace_back(hb + "wk", &p.wk[h]);
            reg.emplace_back(hb + "wv", &p.wv[h]);
            reg.emplace_back(hb + "whf", &p.whf[h]);
            reg.emplace_back(hb + "wp", &p.wp[h]);
        }
        reg.emplace_back(base + "se_w1", &p.se_w1);
        reg.emplace_back(base + "se_b1", &p.se_b1);
        reg.emplace_back(base + "se_w2", &p.se_w2);
        reg.emplace_back(base + "se_b2", &p.se_b2);
        if (cfg.model.lambdas_trainable) {
            reg.emplace_back(base + "lambda1", &p.lambda1);
            reg.emplace_back(base + "lambda2", &p.lambda2);
        }
    }
    for (std::size_t l = 0; l < quant.dec_w.size(); ++l)
        reg.emplace_back("quantizer.dec_w" + std::to_string(l + 1), &quant.dec_w[l]);
    reg.emplace_back("quantizer.codebook", &quant.codebook);
    reg.emplace_back("quantizer.mlp_w1", &quant.mlp_w1);
    reg.emplace_back("quantizer.mlp_b1", &quant.mlp_b1);
    reg.emplace_back("quantizer.mlp_w2", &quant.mlp_w2);
    reg.emplace_back("quantizer.mlp_b2", &quant.mlp_b2);
    reg.emplace_back("decoder.han.conv_red", &dec.han.conv_red);
    reg.emplace_back("decoder.han.conv_exp", &dec.han.conv_exp);
    reg.emplace_back("decoder.han.lin1_w", &dec.han.lin1_w);
    reg.emplace_back("decoder.han.lin1_b", &dec.han.lin1_b);
    reg.emplace_back("decoder.han.lin2_w", &dec.han.lin2_w);
    reg.emplace_back("decoder.han.lin2_b", &dec.han.lin2_b);
    for (std::size_t l = 0; l < dec.dec_w.size(); ++l)
        reg.emplace_back("decoder.dec_w" + std::to_string(l + 1), &dec.dec_w[l]);
    reg.emplace_back("classifier.fc_w", &fc_w);
    reg.emplace_back("classifier.fc_b", &fc_b);
    return reg;
}

ModelState init_model(const RunConfig& cfg) {
    cfg.validate();
    ModelState s;
    s.cfg = cfg;
    s.v = layout_joint_count(cfg.data.layout);
    s.classes = cfg.data.num_classes;
    s.adj = skeleton_adjacency(cfg.data.layout);
    s.h_out = new_random(s.v, cfg.model.e_h, mix_seed(cfg.run.seed, 1));
    s.enc = init_encoder(3, cfg.data.t_target, encoder_config(cfg),
                         mix_seed(cfg.run.seed, 2));
    s.quant = init_quantizer(cfg.model.hidden, quantizer_config(cfg),
                             mix_seed(cfg.run.seed, 3));
    s.dec = init_decoder(cfg.model.hidden, s.v, decoder_config(cfg),
                         mix_seed(cfg.run.seed, 4));
    std::mt19937_64 gen(mix_seed(cfg.run.seed, 5));
    s.fc_w = xavier_uniform(cfg.model.hidden, s.classes, gen);
    s.fc_b = zeros_param({s.classes});
    return s;
}

namespace {

// one tall frame-major tensor per (sample, person), plus its time-pooled
// coordinates as the reconstruction target
void merge_batch(const SkeletonBatch& b, std::vector<Tensor>& samples,
                 std::vector<Tensor>& targets) {
    for (int ni = 0; ni < b.n; ++ni)
        for (int mi = 0; mi < b.m; ++mi) {
            std::vector<double> tall(static_cast<std::size_t>(b.t) * b.v * b.c);
            std::vector<double> target(static_cast<std::size_t>(b.v) * b.c, 0.0);
            for (int f = 0; f < b.t; ++f)
                for (int j = 0; j < b.v; ++j)
                    for (int c = 0; c < b.c; ++c) {
                        double x = b.at(ni, mi, j, f, c);
                        tall[(static_cast<std::size_t>(f) * b.v + j) * b.c + c] = x;
                        target[static_cast<std::size_t>(j) * b.c + c] += x / b.t;
                    }
            samples.push_back(Tensor::from_data({b.t * b.v, b.c}, std::move(tall)));
            targets.push_back(Tensor::from_data({b.v, b.c}, std::move(target)));
        }
}

Tensor node_mean_row(int v) { return Tensor::full({1, v}, 1.0 / v); }

}  // namespace

ForwardOutput forward(const SkeletonBatch& batch, ModelState& state, bool train,
                      const QuantizerFreeze* freeze) {
    if (batch.n < 1) throw std::invalid_argument("forward: empty batch");
    if (batch.v != state.v)
        throw std::invalid_argument("forward: batch joint count " +
                                    std::to_string(batch.v) + " != model " +
                                    std::to_string(state.v));
    if (batch.t != state.cfg.data.t_target)
        throw std::invalid_argument("forward: batch frames != configured t_target");

    std::vector<Tensor> samples, targets;
    merge_batch(batch, samples, targets);

    EncoderOutput enc_out =
        hyp_enc_forward(samples, state.h_out, state.enc, state.quant,
                        quantizer_config(state.cfg), state.adj,
                        encoder_config(state.cfg), freeze);

    DecoderConfig dcfg = decoder_config(state.cfg);
    Tensor nm = node_mean_row(state.v);
    std::vector<Tensor> e_cs, attns, recon2, logit_rows, emb_rows;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        HanOutput ho = han(enc_out.e_enc[s], state.dec.han, state.v, enc_out.t_out);
        Tensor e_f = fuse_residual(enc_out.e_enc[s], ho.a_t, dcfg.alpha);
        Tensor pooled = time_average(e_f, state.v, enc_out.t_out);
        HypDecOutput hd = hypdec_forward(pooled, state.adj, state.dec);
        recon2.push_back(hd.recon);
        e_cs.push_back(hd.e_c);
        attns.push_back(ho.attn);
        Tensor emb = matmul(nm, pooled);  // 1 x hidden
        emb_rows.push_back(emb);
        logit_rows.push_back(add_rowvec(matmul(emb, state.fc_w), state.fc_b));
    }

    // persons of one sample vote by averaging their logits
    std::vector<Tensor> per_sample_logits, per_sample_emb;
    for (int ni = 0; ni < batch.n; ++ni) {
        Tensor lg = logit_rows[static_cast<std::size_t>(ni) * batch.m];
        Tensor em = emb_rows[static_cast<std::size_t>(ni) * batch.m];
        for (int mi = 1; mi < batch.m; ++mi) {
            lg = add(lg, logit_rows[static_cast<std::size_t>(ni) * batch.m + mi]);
            em = add(em, emb_rows[static_cast<std::size_t>(ni) * batch.m + mi]);
        }
        per_sample_logits.push_back(mul_scalar(lg, 1.0 / batch.m));
        per_sample_emb.push_back(mul_scalar(em, 1.0 / batch.m));
    }

    ForwardOutput out;
    out.temporal_warned = enc_out.temporal_warned;
    out.probs = softmax_rows(concat_rows(per_sample_logits));
    out.embeddings = Tensor::from_data(
        {batch.n, state.cfg.model.hidden},
        concat_rows(per_sample_emb).data());
    for (int ni = 0; ni < batch.n; ++ni) {
        int arg = 0;
        for (int c = 1; c < state.classes; ++c)
            if (out.probs.at(ni, c) > out.probs.at(ni, arg)) arg = c;
        out.predictions.push_back(arg);
    }

    Tensor ce = cross_entropy(out.probs, batch.labels);
    Tensor rec1 = reconstruction(targets, enc_out.quant.recon);
    Tensor rec2 = reconstruction(targets, recon2);
    out.losses = total_loss(ce, rec1, rec2, enc_out.quant.quant_loss,
                            loss_betas(state.cfg));
    out.recon1 = enc_out.quant.recon;
    out.recon2 = std::move(recon2);
    out.targets = std::move(targets);

    if (train && state.cfg.model.regenerate != "off") {
        out.next_hypergraph = generate_outphase(
            e_cs, attns, state.cfg.model.e_h,
            mix_seed(state.cfg.run.seed, 0xA0000000ULL +
                         static_cast<std::uint64_t>(state.iteration)),
            dcfg.kmeans_max_iter, dcfg.kmeans_tol);
        out.has_next = true;
    }
    return out;
}

QuantizerFreeze capture_freeze(const SkeletonBatch& batch, ModelState& state) {
    std::vector<Tensor> samples, targets;
    merge_batch(batch, samples, targets);
    NoGradGuard guard;
    EncoderOutput enc_out =
        hyp_enc_forward(samples, state.h_out, state.enc, state.quant,
                        quantizer_config(state.cfg), state.adj,
                        encoder_config(state.cfg));
    QuantizerFreeze fz;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        fz.he.push_back(enc_out.quant.he[s]);
        fz.e_base.push_back(enc_out.quant.low_dim[s].data());
        fz.q_base.push_back(gather_rows(state.quant.codebook, enc_out.quant.he[s]).data());
    }
    return fz;
}

void sgd_update(std::vector<double>& p, const std::vector<double>& g,
                std::vector<double>& vel, double lr, double momentum, double wd) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        double p0 = p[i];
        vel[i] = momentum * vel[i] + g[i];
        p[i] = p0 - lr * (g[i] + momentum * vel[i]) - lr * wd * p0;
    }
}

ForwardOutput train_step(const SkeletonBatch& batch, ModelState& state, double lr,
                         bool install_next) {
    if (lr < 0.0) throw std::invalid_argument("train_step: negative learning rate");
    ForwardOutput out = forward(batch, state, true);
    double total = out.losses.total.value();
    if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss: ce=" << out.losses.ce.value()
            << " rec1=" << out.losses.rec1.value()
            << " rec2=" << out.losses.rec2.value()
            << " quant=" << out.losses.quant.value();
        throw numeric_error(msg.str());
    }
    out.losses.total.backward();

    double mu = state.cfg.optim.momentum, wd = state.cfg.optim.weight_decay;
    for (auto& [name, slot] : state.param_registry()) {
        Tensor& p = *slot;
        std::vector<double>& vel = state.velocity[name];
        if (vel.size() != p.data().size()) vel.assign(p.data().size(), 0.0);
        std::vector<double> zero;
        const std::vector<double>* g = &zero;
        if (p.has_grad()) g = &p.grad();
        else zero.assign(p.data().size(), 0.0);
        sgd_update(p.mutable_data(), *g, vel, lr, mu, wd);
        p.zero_grad();
    }

    if (install_next && out.has_next) state.h_out = out.next_hypergraph;
    state.iteration += 1;
    return out;
}

double lr_schedule(int epoch, const RunConfig::Optim& optim) {
    double lr = optim.lr;
    for (int d : optim.decay_epochs)
        if (epoch >= d) lr *= 0.1;
    return lr;
}

EvalResult evaluate(const std::vector<SkeletonBatch>& batches, ModelState& state) {
    if (batches.empty()) throw std::invalid_argument("evaluate: empty dataset");
    EvalResult r;
    r.per_class.assign(state.classes, 0.0);
    std::vector<int> class_total(state.classes, 0);
    NoGradGuard guard;
    for (const SkeletonBatch& b : batches) {
        ForwardOutput out = forward(b, state, false);
        for (int i = 0; i < b.n; ++i) {
            class_total[b.labels[i]] += 1;
            if (out.predictions[i] == b.labels[i]) r.per_class[b.labels[i]] += 1.0;
        }
        r.ce += out.losses.ce.value() * b.n;
        r.rec1 += out.losses.rec1.value() * b.n;
        r.rec2 += out.losses.rec2.value() * b.n;
        r.quant += out.losses.quant.value() * b.n;
        r.total += out.losses.total.value() * b.n;
        r.count += b.n;
    }
    double correct = 0.0;
    for (int c = 0; c < state.classes; ++c) {
        correct += r.per_class[c];
        r.per_class[c] = class_total[c] > 0 ? r.per_class[c] / class_total[c] : 0.0;
    }
    r.top1 = correct / r.count;
    r.ce /= r.count;
    r.rec1 /= r.count;
    r.rec2 /= r.count;
    r.quant /= r.count;
    r.total /= r.count;
    return r;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_model(const SkeletonBatch& batch,
                                            ModelState& state, double eps) {
    QuantizerFreeze fz = capture_freeze(batch, state);
    auto reg = state.param_registry();
    for (auto& [name, slot] : reg) slot->zero_grad();
    forward(batch, state, false, &fz).losses.total.backward();
    std::map<std::string, std::vector<double>> analytic;
    for (auto& [name, slot] : reg) {
        analytic[name] = slot->has_grad()
                             ? slot->grad()
                             : std::vector<double>(slot->data().size(), 0.0);
        slot->zero_grad();
    }

    // probe a deterministic handful of coordinates per group; a wrong
    // adjoint is systematically wrong, so sampling still exposes it
    constexpr std::size_t kProbes = 6;
    NoGradGuard guard;
    std::vector<GradCheckEntry> results;
    for (auto& [name, slot] : reg) {
        std::vector<double>& data = slot->mutable_data();
        const std::vector<double>& an = analytic[name];
        std::vector<std::size_t> idx;
        if (data.size() <= kProbes) {
            for (std::size_t i = 0; i < data.size(); ++i) idx.push_back(i);
        } else {
            std::uint64_t h = fnv1a(name);
            for (std::uint64_t t = 0; idx.size() < kProbes; ++t) {
                std::size_t cand = t < 64 ? mix_seed(h, t) % data.size()
                                          : (t - 64) % data.size();
                if (std::find(idx.begin(), idx.end(), cand) == idx.end())
                    idx.push_back(cand);
            }
        }
        double worst = 0.0;
        for (std::size_t i : idx) {
            double saved = data[i];
            data[i] = saved + eps;
            double up = forward(batch, state, false, &fz).losses.total.value();
            data[i] = saved - eps;
            double dn = forward(batch, state, false, &fz).losses.total.value();
            data[i] = saved;
            double fd = (up - dn) / (2.0 * eps);
            double rel = std::abs(an[i] - fd) /
                         std::max({std::abs(an[i]), std::abs(fd), 1e-3});
            worst = std::max(worst, rel);
        }
        results.push_back({name, worst});
    }
    return results;
}

namespace {

void write_u64(std::ostream& out, std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return x;
}

void write_f64s(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        write_u64(out, bits);
    }
}

std::vector<double> read_f64s(std::istream& in) {
    std::vector<double> v(read_u64(in));
    for (double& d : v) {
        std::uint64_t bits = read_u64(in);
        std::memcpy(&d, &bits, 8);
    }
    return v;
}

void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
    std::string s(read_u64(in), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

constexpr char kMagic[8] = {'H', 'S', 'K', 'L', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::string& path, ModelState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("checkpoint: cannot write '" + path + "'");
    out.write(kMagic, 8);
    write_u64(out, 1);  // version
    write_str(out, serialize_config(state.cfg));
    write_u64(out, static_cast<std::uint64_t>(state.iteration));
    write_u64(out, static_cast<std::uint64_t>(state.epoch));
    write_u64(out, static_cast<std::uint64_t>(state.h_out.v));
    write_u64(out, static_cast<std::uint64_t>(state.h_out.e));
    write_f64s(out, state.h_out.incidence);
    write_f64s(out, state.h_out.weights);
    auto reg = state.param_registry();
    write_u64(out, reg.size());
    for (auto& [name, slot] : reg) {
        write_str(out, name);
        write_f64s(out, slot->data());
    }
    write_u64(out, state.velocity.size());
    for (auto& [name, vel] : state.velocity) {
        write_str(out, name);
        write_f64s(out, vel);
    }
    if (!out) throw std::invalid_argument("checkpoint: write failed for '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::invalid_argument("checkpoint: bad magic in '" + path + "'");
    if (read_u64(in) != 1)
        throw std::invalid_argument("checkpoint: unsupported version");
    RunConfig cfg = parse_config(read_str(in));
    ModelState state = init_model(cfg);
    state.iteration = static_cast<std::int64_t>(read_u64(in));
    state.epoch = static_cast<int>(read_u64(in));
    int hv = static_cast<int>(read_u64(in));
    int he = static_cast<int>(read_u64(in));
    std::vector<double> inc = read_f64s(in);
    std::vector<double> w = read_f64s(in);
    state.h_out = Hypergraph::from_incidence(hv, he, std::move(inc), std::move(w));

    std::map<std::string, Tensor*> by_name;
    for (auto& [name, slot] : state.param_registry()) by_name[name] = slot;
    std::uint64_t nparams = read_u64(in);
    for (std::uint64_t i = 0; i < nparams; ++i) {
        std::string name = read_str(in);
        std::vector<double> values = read_f64s(in);
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::invalid_argument("checkpoint: unknown parameter '" + name + "'");
        if (values.size() != it->second->data().size())
            throw std::invalid_argument("checkpoint: size mismatch for '" + name + "'");
        it->second->mutable_data() = std::move(values);
    }
    if (nparams != by_name.size())
        throw std::invalid_argument("checkpoint: parameter set mismatch");
    std::uint64_t nvel = read_u64(in);
    for (std::uint64_t i = 0; i < nvel; ++i) {
        std::string name = read_str(in);
        state.velocity[name] = read_f64s(in);
    }
    if (!in) throw std::invalid_argument("checkpoint: truncated file '" + path + "'");
    return state;
}

std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>>
load_dataset(const RunConfig& cfg) {
    if (cfg.data.manifest.empty()) {
        int v = layout_joint_count(cfg.data.layout);
        auto train = synth_generate(cfg.data.num_classes, cfg.data.synth_per_class, v,
                                    cfg.data.synth_t_raw, cfg.data.synth_seed,
                                    cfg.data.synth_noise);
        auto val = synth_generate(cfg.data.num_classes, cfg.data.synth_val_per_class,
                                  v, cfg.data.synth_t_raw,
                                  mix_seed(cfg.data.synth_seed, 99),
                                  cfg.data.synth_noise);
        return {std::move(train), std::move(val)};
    }
    Manifest m = load_manifest(cfg.data.manifest);
    if (m.layout != cfg.data.layout)
        throw std::invalid_argument("dataset: manifest layout '" + m.layout +
                                    "' != config layout '" + cfg.data.layout + "'");
    if (m.num_classes != cfg.data.num_classes)
        throw std::invalid_argument("dataset: manifest class count mismatch");
    return {load_jsonl(m.train), load_jsonl(m.val)};
}

std::string metrics_header() {
    return "epoch,ce,rec1,rec2,quant,total,train_acc,val_acc,lr";
}

namespace {

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

std::string format_metrics_row(const EpochRow& r) {
    std::ostringstream os;
    os << r.epoch << ',' << fmt17(r.ce) << ',' << fmt17(r.rec1) << ','
       << fmt17(r.rec2) << ',' << fmt17(r.quant) << ',' << fmt17(r.total) << ','
       << fmt17(r.train_acc) << ',' << fmt17(r.val_acc) << ',' << fmt17(r.lr);
    return os.str();
}

std::vector<EpochRow> run_training(ModelState& state,
                                   const std::vector<SkeletonSequence>& train_seqs,
                                   const std::vector<SkeletonSequence>& val_seqs,
                                   std::ostream* metrics,
                                   const std::string& out_dir) {
    const RunConfig& cfg = state.cfg;
    if (train_seqs.empty()) throw std::invalid_argument("run_training: no training data");
    if (metrics && state.epoch == 0) *metrics << metrics_header() << "\n";

    std::vector<SkeletonBatch> val_batches =
        val_seqs.empty() ? std::vector<SkeletonBatch>{}
                         : make_batches(val_seqs, cfg.data.batch_size,
                                        cfg.data.t_target, 0, false);

    std::vector<EpochRow> rows;
    for (int epoch = state.epoch; epoch < cfg.optim.epochs; ++epoch) {
        double lr = lr_schedule(epoch, cfg.optim);
        auto batches = make_batches(train_seqs, cfg.data.batch_size, cfg.data.t_target,
                                    mix_seed(cfg.run.seed, 0xB0000000ULL + epoch), true);
        EpochRow row{};
        row.epoch = epoch;
        row.lr = lr;
        int correct = 0, seen = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            bool install = cfg.model.regenerate == "iteration" ||
                           (cfg.model.regenerate == "epoch" && b + 1 == batches.size());
            ForwardOutput out;
            try {
                out = train_step(batches[b], state, lr, install);
            } catch (const numeric_error& e) {
                throw numeric_error(std::string(e.what()) + " (epoch " +
                                    std::to_string(epoch) + ", batch " +
                                    std::to_string(b) + ")");
            }
            int n = batches[b].n;
            row.ce += out.losses.ce.value() * n;
            row.rec1 += out.losses.rec1.value() * n;
            row.rec2 += out.losses.rec2.value() * n;
            row.quant += out.losses.quant.value() * n;
            row.total += out.losses.total.value() * n;
            for (int i = 0; i < n; ++i)
                if (out.predictions[i] == batches[b].labels[i]) correct += 1;
            seen += n;
        }
        row.ce /= seen;
        row.rec1 /= seen;
        row.rec2 /= seen;
        row.quant /= seen;
        row.total /= seen;
        row.train_acc = static_cast<double>(correct) / seen;
        row.val_acc = val_batches.empty() ? 0.0 : evaluate(val_batches, state).top1;
        state.epoch = epoch + 1;
        rows.push_back(row);
        if (metrics) *metrics << format_metrics_row(row) << "\n";
        if (!out_dir.empty() && cfg.run.checkpoint_every > 0 &&
            (epoch + 1) % cfg.run.checkpoint_every == 0)
            save_checkpoint(out_dir + "/ckpt_epoch" + std::to_string(epoch + 1) + ".bin",
                            state);
    }
    if (!out_dir.empty()) save_checkpoint(out_dir + "/ckpt_final.bin", state);
    return rows;
}

}  // namespace hyperskel
