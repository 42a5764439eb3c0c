#include "hyperskel/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace hyperskel {

using nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
    return json{
        {"data",
         {{"manifest", c.data.manifest},
          {"layout", c.data.layout},
          {"num_classes", c.data.num_classes},
          {"synth_per_class", c.data.synth_per_class},
          {"synth_val_per_class", c.data.synth_val_per_class},
          {"synth_t_raw", c.data.synth_t_raw},
          {"synth_noise", c.data.synth_noise},
          {"synth_seed", c.data.synth_seed},
          {"t_target", c.data.t_target},
          {"batch_size", c.data.batch_size}}},
        {"model",
         {{"e_h", c.model.e_h},
          {"d", c.model.d},
          {"hidden", c.model.hidden},
          {"heads", c.model.heads},
          {"n_faht", c.model.n_faht},
          {"pre_quantizer_units", c.model.pre_quantizer_units},
          {"alpha", c.model.alpha},
          {"lambda1", c.model.lambda1},
          {"lambda2", c.model.lambda2},
          {"lambdas_trainable", c.model.lambdas_trainable},
          {"attention_mode", c.model.attention_mode},
          {"temporal_reduction", c.model.temporal_reduction},
          {"han_reduction", c.model.han_reduction},
          {"use_temporal_attention", c.model.use_temporal_attention},
          {"regenerate", c.model.regenerate}}},
        {"optim",
         {{"lr", c.optim.lr},
          {"momentum", c.optim.momentum},
          {"weight_decay", c.optim.weight_decay},
          {"epochs", c.optim.epochs},
          {"decay_epochs", c.optim.decay_epochs}}},
        {"loss",
         {{"beta1", c.loss.beta1},
          {"beta2", c.loss.beta2},
          {"beta3", c.loss.beta3}}},
        {"run",
         {{"seed", c.run.seed},
          {"out_dir", c.run.out_dir},
          {"checkpoint_every", c.run.checkpoint_every}}}};
}

void reject_unknown(const json& given, const json& defaults, const std::string& path) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!defaults.contains(it.key()))
            throw std::invalid_argument("config: unknown key '" + key + "'");
        if (defaults[it.key()].is_object()) {
            if (!it.value().is_object())
                throw std::invalid_argument("config: '" + key + "' must be an object");
            reject_unknown(it.value(), defaults[it.key()], key);
        }
    }
}

RunConfig from_json(const json& j) {
    RunConfig c;
    reject_unknown(j, to_json(c), "");
    json merged = to_json(c);
    merged.merge_patch(j);
    const json& d = merged["data"];
    c.data = {d["manifest"], d["layout"], d["num_classes"], d["synth_per_class"],
              d["synth_val_per_class"], d["synth_t_raw"], d["synth_noise"],
              d["synth_seed"], d["t_target"], d["batch_size"]};
    const json& m = merged["model"];
    c.model = {m["e_h"], m["d"], m["hidden"], m["heads"], m["n_faht"],
               m["pre_quantizer_units"], m["alpha"], m["lambda1"], m["lambda2"],
               m["lambdas_trainable"], m["attention_mode"], m["temporal_reduction"],
               m["han_reduction"], m["use_temporal_attention"], m["regenerate"]};
    const json& o = merged["optim"];
    c.optim = {o["lr"], o["momentum"], o["weight_decay"], o["epochs"],
               o["decay_epochs"].get<std::vector<int>>()};
    const json& l = merged["loss"];
    c.loss = {l["beta1"], l["beta2"], l["beta3"]};
    const json& r = merged["run"];
    c.run = {r["seed"], r["out_dir"], r["checkpoint_every"]};
    c.validate();
    return c;
}

}  // namespace

void RunConfig::validate() const {
    if (data.num_classes < 2) throw std::invalid_argument("config: need at least two classes");
    if (data.t_target < 1 || data.batch_size < 1 || data.synth_per_class < 1)
        throw std::invalid_argument("config: data sizes must be positive");
    if (optim.lr <= 0.0 || !std::isfinite(optim.lr))
        throw std::invalid_argument("config: learning rate must be positive");
    if (optim.momentum < 0.0 || optim.momentum >= 1.0)
        throw std::invalid_argument("config: momentum must lie in [0, 1)");
    if (optim.weight_decay < 0.0)
        throw std::invalid_argument("config: weight decay must be non-negative");
    if (optim.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    for (std::size_t i = 1; i < optim.decay_epochs.size(); ++i)
        if (optim.decay_epochs[i] <= optim.decay_epochs[i - 1])
            throw std::invalid_argument("config: decay epochs must increase");
    if (model.regenerate != "iteration" && model.regenerate != "epoch" &&
        model.regenerate != "off")
        throw std::invalid_argument("config: regenerate must be iteration, epoch or off");
    if (model.e_h < 1 || model.d < 1)
        throw std::invalid_argument("config: hypergraph sizes must be positive");
    encoder_config(*this).validate();
    quantizer_config(*this).validate();
    decoder_config(*this).validate();
    loss_betas(*this).validate();
}

std::string serialize_config(const RunConfig& cfg) { return to_json(cfg).dump(2); }

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    return from_json(j);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_config(text);
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("config: cannot write '" + path + "'");
    out << serialize_config(cfg) << "\n";
}

RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::pair<std::string, std::string>>& kv) {
    json j = to_json(cfg);
    for (const auto& [key, value] : kv) {
        std::string ptr = "/" + key;
        for (auto& ch : ptr)
            if (ch == '.') ch = '/';
        if (!j.contains(json::json_pointer(ptr)))
            throw std::invalid_argument("config: unknown key '" + key + "'");
        json& slot = j[json::json_pointer(ptr)];
        try {
            if (slot.is_boolean()) {
                if (value == "true" || value == "1") slot = true;
                else if (value == "false" || value == "0") slot = false;
                else throw std::invalid_argument("not a boolean");
            } else if (slot.is_number_float()) {
                std::size_t used = 0;
                double d = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument("not a number");
                slot = d;
            } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
                std::size_t used = 0;
                long long ll = std::stoll(value, &used);
                if (used != value.size()) throw std::invalid_argument("not an integer");
                slot = ll;
            } else if (slot.is_string()) {
                slot = value;
            } else if (slot.is_array()) {
                std::vector<int> items;
                std::size_t pos = 0;
                while (pos <= value.size()) {
                    std::size_t comma = value.find(',', pos);
                    if (comma == std::string::npos) comma = value.size();
                    if (comma > pos) {
                        std::string piece = value.substr(pos, comma - pos);
                        std::size_t used = 0;
                        items.push_back(std::stoi(piece, &used));
                        if (used != piece.size())
                            throw std::invalid_argument("not an integer list");
                    }
                    pos = comma + 1;
                }
                slot = items;
            } else {
                throw std::invalid_argument("unsupported type");
            }
        } catch (const std::exception& e) {
            throw std::invalid_argument("config: bad value '" + value + "' for '" +
                                        key + "': " + e.what());
        }
    }
    return from_json(j);
}

EncoderConfig encoder_config(const RunConfig& cfg) {
    EncoderConfig e;
    e.n_faht = cfg.model.n_faht;
    e.pre_quantizer_units = cfg.model.pre_quantizer_units;
    e.hidden = cfg.model.hidden;
    e.heads = cfg.model.heads;
    e.lambda1 = cfg.model.lambda1;
    e.lambda2 = cfg.model.lambda2;
    e.lambdas_trainable = cfg.model.lambdas_trainable;
    e.attention_mode = cfg.model.attention_mode;
    e.temporal_reduction = cfg.model.temporal_reduction;
    e.use_temporal_attention = cfg.model.use_temporal_attention;
    return e;
}

QuantizerConfig quantizer_config(const RunConfig& cfg) {
    QuantizerConfig q;
    q.codebook_size = cfg.model.e_h;
    q.d = cfg.model.d;
    q.c_in = 3;
    return q;
}

DecoderConfig decoder_config(const RunConfig& cfg) {
    DecoderConfig d;
    d.d = cfg.model.d;
    d.c_in = 3;
    d.alpha = cfg.model.alpha;
    d.han_reduction = cfg.model.han_reduction;
    return d;
}

Betas loss_betas(const RunConfig& cfg) {
    return Betas{cfg.loss.beta1, cfg.loss.beta2, cfg.loss.beta3};
}

}  // namespace hyperskel
