#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtacnn/checkpoint.hpp"
#include "wtacnn/config.hpp"
#include "wtacnn/datasets.hpp"
#include "wtacnn/network.hpp"

namespace wtacnn {

struct EvalResult {
    double top1_error = 0.0;  // percent
    double top5_error = 0.0;  // percent; NaN when the label count is below 5
};

/// Top-k error over the whole test set, batched, deterministic. A sample
/// counts as correct at k when fewer than k classes rank above its true label
/// under (value desc, index asc) ordering.
EvalResult evaluate(const Network& net, const Dataset& test, int batch_size = 100);

/// Step-decay schedule: base * factor^(iteration / period); period 0 disables.
double lr_at(double base, std::uint64_t iteration, std::uint64_t period, double factor);

struct MetricRow {
    std::uint64_t iteration = 0;
    std::string phase;
    double top1 = 0.0, top5 = 0.0, loss = 0.0, entropy = 0.0;  // NaN where absent
};

struct MetricLog {
    std::vector<MetricRow> rows;

    /// CSV with header iteration,phase,top1_error,top5_error,loss,entropy;
    /// absent values serialize as empty fields.
    std::string to_csv() const;
    void write_csv(const std::string& path) const;
};

struct RunResult {
    Checkpoint checkpoint;
    MetricLog log;
};

/// Unsupervised competitive pre-training for config.iters_pretrain minibatch
/// steps. Labels are never read. Writes <out_dir>/pretrain-metrics.csv and
/// checkpoints when out_dir is set.
RunResult run_pretrain(const TrainConfig& config, const Dataset& train,
                       const Checkpoint* resume = nullptr);

/// Supervised training of the classifier head on top of frozen conv layers.
RunResult run_finetune(const TrainConfig& config, const Checkpoint& pretrained,
                       const Dataset& train, const Dataset& test,
                       const Checkpoint* resume = nullptr);

/// End-to-end backprop reference: the ReLU variant of the preset, every layer
/// trainable, trained from scratch.
RunResult run_baseline(const TrainConfig& config, const Dataset& train,
                       const Dataset& test, const Checkpoint* resume = nullptr);

}  // namespace wtacnn
