#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grcn/model.hpp"

namespace grcn {

// Pairwise ranking objective: sum over the batch of -ln sigmoid(pos - neg)
// plus lambda * ||theta||_2 over every trainable tensor (or the squared norm
// when reg_squared is set). Computed log-sum-exp-stably.
Var bpr_loss(Tape& tape, Var scores_pos, Var scores_neg, const std::vector<Var>& params,
             double lambda, bool reg_squared = false);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Standard bias-corrected Adam over a fixed list of parameter tensors.
class Adam {
public:
    explicit Adam(AdamConfig config) : config_(config) {}

    // Applies one update. Parameter and gradient lists must stay in the same
    // order across calls; moment slots are created on first use.
    void step(std::vector<std::pair<std::string, Tensor*>>& params,
              const std::vector<const Tensor*>& grads);

    std::size_t steps_taken() const { return step_; }

private:
    AdamConfig config_;
    std::vector<Tensor> first_moment_;
    std::vector<Tensor> second_moment_;
    std::size_t step_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;       // 1-based, contiguous
    double mean_loss = 0.0;      // epoch objective sum / number of triplets
    double val_recall_at_10 = 0.0;
    double wall_seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t stopped_epoch = 0;
    std::size_t best_epoch = 0;
    double best_val_recall = 0.0;
};

std::string train_report_jsonl(const TrainReport& report);

struct FitResult {
    ModelParams params;  // best-validation checkpoint
    TrainReport report;
};

// Epoch loop: every train edge appears once per epoch as a positive with a
// freshly sampled negative; stops after `patience` epochs without a
// validation Recall@10 improvement or at max_epochs.
FitResult fit(const InteractionGraph& graph, const FeatureSet& features,
              const Hyperparams& hyper, std::uint64_t seed);

}  // namespace grcn
