#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hyperskel/decoder.hpp"
#include "hyperskel/encoder.hpp"
#include "hyperskel/losses.hpp"
#include "hyperskel/quantizer.hpp"

namespace hyperskel {

struct RunConfig {
    struct Data {
        std::string manifest;  // empty selects the synthetic generator
        std::string layout = "chain8";
        int num_classes = 3;
        int synth_per_class = 8;
        int synth_val_per_class = 2;
        int synth_t_raw = 80;
        double synth_noise = 0.02;
        std::uint64_t synth_seed = 7;
        int t_target = 64;
        int batch_size = 64;
    } data;

    struct Model {
        int e_h = 5;  // hyperedge count (codebook size and cluster count)
        int d = 8;    // low-dimensional tap width
        int hidden = 216;
        int heads = 4;
        int n_faht = 5;
        int pre_quantizer_units = 2;
        double alpha = 0.2;
        double lambda1 = 1.0;
        double lambda2 = 1.0;
        bool lambdas_trainable = false;
        std::string attention_mode = "softmax";
        int temporal_reduction = 4;
        int han_reduction = 4;
        bool use_temporal_attention = true;
        std::string regenerate = "iteration";  // or "epoch", "off"
    } model;

    struct Optim {
        double lr = 0.025;
        double momentum = 0.9;
        double weight_decay = 0.0004;
        int epochs = 140;
        std::vector<int> decay_epochs{110, 120};
    } optim;

    struct Loss {
        double beta1 = 0.9;
        double beta2 = 0.9;
        double beta3 = 0.25;
    } loss;

    struct Run {
        std::uint64_t seed = 1;
        std::string out_dir = "runs/out";
        int checkpoint_every = 0;  // 0 keeps only the final checkpoint
    } run;

    void validate() const;
};

std::string serialize_config(const RunConfig& cfg);        // canonical JSON
RunConfig parse_config(const std::string& json_text);      // strict keys
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

// dotted-path overrides, e.g. {"optim.lr", "0.01"}; values are coerced to
// the type of the default they replace
RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::pair<std::string, std::string>>& kv);

EncoderConfig encoder_config(const RunConfig& cfg);
QuantizerConfig quantizer_config(const RunConfig& cfg);
DecoderConfig decoder_config(const RunConfig& cfg);
Betas loss_betas(const RunConfig& cfg);

}  // namespace hyperskel
