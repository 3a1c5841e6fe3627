#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "skin/adam.hpp"
#include "skin/params.hpp"
#include "skin/skin_model.hpp"
#include "skin/textio.hpp"

namespace skin {

/// Training hyperparameters. Defaults are the published fine-tuning values;
/// epoch counts and early stopping are desk-scale choices.
struct TrainConfig {
    double r_l2 = 1e-5;
    double dropout = 0.3;
    double gamma = 0.2;
    double lr1 = 1e-4;
    double lr2 = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.99;
    std::size_t batch = 32;
    std::size_t epochs1 = 20;
    std::size_t epochs3 = 10;
    std::size_t patience = 3;
    double min_delta = 1e-4;
    // Renormalize smoothed targets to sum to 1.
    bool normalize_smoothing = false;
    // Zero r_l in the intensive branch (ablation).
    bool ablate_local = false;
    std::uint64_t seed = 0;
};

struct TrainingDiverged : std::runtime_error {
    TrainingDiverged(const std::string& what, int stage_, std::size_t epoch_, std::size_t step_)
        : std::runtime_error(what), stage(stage_), epoch(epoch_), step(step_) {}
    int stage;
    std::size_t epoch;
    std::size_t step;
};

/// Label smoothing as stated: 0 -> γ, 1 -> 1-γ, no renormalization unless
/// `normalize` is set.
Tensor smooth_labels(int label, std::size_t classes, double gamma, bool normalize = false);

/// r·Σ‖θ‖² over weights (biases and layer-norm parameters excluded). When
/// `add_grad` is set, 2·r·θ is added to each weight's grad buffer.
double l2_penalty(const ParamList& params, double r_l2, bool add_grad = true);

struct EpochStats {
    int stage = 0;
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_acc = 0.0;
};

/// Everything needed to continue a stage after an interruption.
struct StageState {
    std::size_t epochs_done = 0;
    std::vector<EpochStats> curve;
    std::vector<AdamState> adam;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale_epochs = 0;
    bool finished = false;
};

struct StageHooks {
    std::function<void(const StageState&)> on_epoch_end;
    // Stop (unfinished) after this many epochs in the current call.
    std::size_t max_epochs_this_run = std::numeric_limits<std::size_t>::max();
};

/// Stage 1: trains lite encoder + W_a + W_op/b_op on cross-entropy of o_pre.
/// Resumes from `state` when it holds progress. Returns the stage state.
StageState train_stage1(std::span<const SegmentedDoc> corpus, SkinParams& params, const TrainConfig& config,
                        StageState state = {}, const StageHooks& hooks = {});

struct Distilled {
    std::size_t doc_index = 0;
    KeySegment key;
    SkimOutput skim;
    int label = 0;
};

/// Stage 2: eval-mode skim of every document, then key segment selection.
std::vector<Distilled> distill_dataset(std::span<const SegmentedDoc> corpus, const SkinParams& params);

/// JSONL with doc_id, k, start, g per line.
void write_selection_jsonl(const std::filesystem::path& path, std::span<const Distilled> distilled);

/// Stage 3: joint training through both branches on cross-entropy of o,
/// with the stage-2 key segments held fixed.
StageState train_stage3(std::span<const SegmentedDoc> corpus, std::span<const KeySegment> keys,
                        SkinParams& params, const TrainConfig& config, StageState state = {},
                        const StageHooks& hooks = {});

/// Eval-mode predictions.
Tensor predict_prc(const SegmentedDoc& doc, const SkinParams& params);
Tensor predict_skin(const SegmentedDoc& doc, const SkinParams& params, bool ablate_local = false);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    // confusion[true][predicted]
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t total = 0;
};

EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion);

using Predictor = std::function<Tensor(const SegmentedDoc&)>;
EvalReport evaluate(const Predictor& predict, std::span<const SegmentedDoc> docs, std::size_t classes);
EvalReport evaluate(const Predictor& predict, const HeldOut<SegmentedDoc>& test, std::size_t classes);

std::size_t argmax(const Tensor& v);

}  // namespace skin
