#pragma once

// Minibatch Adam loop shared by the SkIn stages and the baselines.

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "skin/kernels.hpp"
#include "skin/ops.hpp"
#include "skin/training.hpp"
#include "parallel.hpp"

namespace skin::detail {

struct SampleOutcome {
    double loss = 0.0;
    bool correct = false;
};

// Sample: SampleOutcome(std::size_t doc, rnd::Engine& rng, Model& grads)
// Subset: ParamList(Model&) selecting the trainable parameters.
template <class Model, class Subset, class Sample>
StageState run_stage(int stage, std::size_t num_docs, Model& params, Subset subset, Sample sample,
                     const TrainConfig& config, double lr, std::size_t epochs, StageState state,
                     const StageHooks& hooks) {
    if (num_docs == 0) {
        throw ValidationError("training corpus is empty");
    }
    if (config.batch == 0) {
        throw ConfigError("batch size must be positive");
    }
    ParamList trainable = subset(params);
    enable_grads(trainable);
    if (state.adam.empty()) {
        state.adam.resize(trainable.size());
    } else if (state.adam.size() != trainable.size()) {
        throw ContractError("resumed optimizer state does not match the parameter set");
    }
    const AdamHyper hyper{lr, config.beta1, config.beta2, 1e-8};
    const int threads = kernels::max_threads();

    std::size_t ran = 0;
    while (state.epochs_done < epochs && !state.finished && ran < hooks.max_epochs_this_run) {
        const std::size_t epoch = state.epochs_done;
        std::vector<std::size_t> order(num_docs);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rnd::Engine order_rng(rnd::derive(config.seed, static_cast<std::uint64_t>(stage), epoch));
        rnd::shuffle(order, order_rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        std::size_t correct = 0;
        Model scratch = params.zeros_like();
        ParamList scratch_list = scratch.params();
        ParamList scratch_subset = subset(scratch);
        for (std::size_t b0 = 0; b0 < num_docs; b0 += config.batch) {
            const std::size_t bsz = std::min(config.batch, num_docs - b0);
            zero_grads(trainable);
            std::vector<SampleOutcome> outcomes(bsz);
            auto engine_for = [&](std::size_t doc) {
                return rnd::Engine(rnd::derive(config.seed, 0x100u + static_cast<std::uint64_t>(stage), epoch, doc));
            };
            if (threads > 1 && bsz > 1) {
                // Per-sample gradient models, reduced below in index order so
                // the sum does not depend on scheduling.
                std::vector<Model> per_sample(bsz, scratch);
                parallel_for(bsz, [&](std::size_t si) {
                    rnd::Engine rng = engine_for(order[b0 + si]);
                    outcomes[si] = sample(order[b0 + si], rng, per_sample[si]);
                });
                for (std::size_t i = 0; i < bsz; ++i) {
                    accumulate_grads(trainable, subset(per_sample[i]));
                }
            } else {
                for (std::size_t i = 0; i < bsz; ++i) {
                    zero_values(scratch_list);
                    rnd::Engine rng = engine_for(order[b0 + i]);
                    outcomes[i] = sample(order[b0 + i], rng, scratch);
                    accumulate_grads(trainable, scratch_subset);
                }
            }

            double batch_loss = 0.0;
            for (const auto& o : outcomes) {
                batch_loss += o.loss;
                correct += o.correct ? 1 : 0;
            }
            batch_loss /= static_cast<double>(bsz);
            const double inv = 1.0 / static_cast<double>(bsz);
            for (const auto& p : trainable) {
                for (auto& g : p.tensor->grad()) {
                    g *= inv;
                }
            }
            batch_loss += l2_penalty(trainable, config.r_l2, true);

            bool finite = std::isfinite(batch_loss);
            for (const auto& p : trainable) {
                for (double g : p.tensor->grad()) {
                    finite = finite && std::isfinite(g);
                }
            }
            if (!finite) {
                throw TrainingDiverged("stage " + std::to_string(stage) + " diverged at epoch " +
                                           std::to_string(epoch) + ", step " + std::to_string(batches) +
                                           " (non-finite loss or gradient)",
                                       stage, epoch, batches);
            }
            for (std::size_t i = 0; i < trainable.size(); ++i) {
                adam_step(*trainable[i].tensor, state.adam[i], hyper);
            }
            loss_sum += batch_loss;
            ++batches;
        }

        EpochStats stats;
        stats.stage = stage;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(batches);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(num_docs);
        state.curve.push_back(stats);
        state.epochs_done += 1;
        if (state.best_loss - stats.mean_loss > config.min_delta) {
            state.best_loss = stats.mean_loss;
            state.stale_epochs = 0;
        } else {
            state.stale_epochs += 1;
            if (state.stale_epochs >= config.patience) {
                state.finished = true;
            }
        }
        if (state.epochs_done >= epochs) {
            state.finished = true;
        }
        ++ran;
        if (hooks.on_epoch_end) {
            hooks.on_epoch_end(state);
        }
    }
    if (state.epochs_done >= epochs) {
        state.finished = true;
    }
    return state;
}

}  // namespace skin::detail
