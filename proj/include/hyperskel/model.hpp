#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hyperskel/config.hpp"
#include "hyperskel/data.hpp"
#include "hyperskel/decoder.hpp"
#include "hyperskel/encoder.hpp"
#include "hyperskel/losses.hpp"
#include "hyperskel/quantizer.hpp"

namespace hyperskel {

struct ModelState {
    RunConfig cfg;
    int v = 0;
    int classes = 0;
    EncoderParams enc;
    QuantizerParams quant;
    DecoderParams dec;
    Tensor fc_w, fc_b;
    Tensor adj;        // skeleton adjacency, constant
    Hypergraph h_out;  // persistent out-phase hypergraph
    std::map<std::string, std::vector<double>> velocity;
    std::int64_t iteration = 0;
    int epoch = 0;

    // stable name -> slot order; rebuilt on demand so the state stays
    // copyable
    std::vector<std::pair<std::string, Tensor*>> param_registry();
};

struct ForwardOutput {
    Tensor probs;                  // n x classes, person-averaged then softmaxed
    std::vector<int> predictions;  // argmax per sample
    LossBundle losses;
    Hypergraph next_hypergraph;
    bool has_next = false;
    Tensor embeddings;  // n x hidden pooled features, person-averaged
    std::vector<Tensor> recon1, recon2, targets;
    bool temporal_warned = false;
};

struct EvalResult {
    double top1 = 0.0;
    std::vector<double> per_class;
    double ce = 0.0, rec1 = 0.0, rec2 = 0.0, quant = 0.0, total = 0.0;
    int count = 0;
};

struct EpochRow {
    int epoch;
    double ce, rec1, rec2, quant, total, train_acc, val_acc, lr;
};

struct GradCheckEntry {
    std::string group;
    double rel_err;
};

ModelState init_model(const RunConfig& cfg);

ForwardOutput forward(const SkeletonBatch& batch, ModelState& state, bool train,
                      const QuantizerFreeze* freeze = nullptr);

// snapshot of the quantizer's discrete choices at the current parameters,
// for finite-difference probing
QuantizerFreeze capture_freeze(const SkeletonBatch& batch, ModelState& state);

ForwardOutput train_step(const SkeletonBatch& batch, ModelState& state, double lr,
                         bool install_next = true);

// nesterov momentum with decoupled weight decay, applied in place
void sgd_update(std::vector<double>& p, const std::vector<double>& g,
                std::vector<double>& vel, double lr, double momentum, double wd);

double lr_schedule(int epoch, const RunConfig::Optim& optim);

EvalResult evaluate(const std::vector<SkeletonBatch>& batches, ModelState& state);

// every named parameter group against central differences of the frozen
// total loss
std::vector<GradCheckEntry> gradcheck_model(const SkeletonBatch& batch,
                                            ModelState& state, double eps = 1e-5);

void save_checkpoint(const std::string& path, ModelState& state);
ModelState load_checkpoint(const std::string& path);

// synthetic split or manifest-backed jsonl files, per the config
std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>>
load_dataset(const RunConfig& cfg);

std::string metrics_header();
std::string format_metrics_row(const EpochRow& row);

// full training loop from state.epoch to cfg.optim.epochs; streams one CSV
// row per epoch; saves checkpoints under out_dir unless it is empty
std::vector<EpochRow> run_training(ModelState& state,
                                   const std::vector<SkeletonSequence>& train_seqs,
                                   const std::vector<SkeletonSequence>& val_seqs,
                                   std::ostream* metrics,
                                   const std::string& out_dir);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace hyperskel
