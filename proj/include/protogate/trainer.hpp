#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "protogate/dataset.hpp"
#include "protogate/kernels.hpp"
#include "protogate/model.hpp"

namespace protogate {

struct TrainConfig {
    double learning_rate = 1e-2;
    double momentum = 0.9;
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
    int log_every = 0;  ///< 0 = silent; otherwise stderr progress every N epochs
    kernels::Backend backend = kernels::Backend::parallel;

    void validate() const;
};

/// Per-epoch loss curves. Each entry is an end-of-epoch forward evaluation
/// over the whole training slice in index order, so evaluate_loss on the
/// same slice reproduces the last entry exactly.
struct TrainReport {
    std::vector<double> loss_total;
    std::vector<double> loss_visual;
    std::vector<double> loss_semantic;
    double wall_seconds = 0.0;
};

/// Called after each epoch; used by the CLI for checkpoints and logs.
using EpochCallback =
    std::function<void(int epoch, const ModelParams&, double total, double visual, double semantic)>;

/// Minibatch SGD with momentum on the joint objective. Shuffling is a
/// deterministic function of (seed, epoch); identical inputs and seed give
/// bit-identical parameters and report. Aborts with NumericError when a
/// non-finite loss appears.
std::pair<ModelParams, TrainReport> train(const Dataset& ds,
                                          std::span<const std::size_t> indices,
                                          const Hyperparams& hp, const TrainConfig& tc,
                                          const EpochCallback& on_epoch = {});

/// Forward-only loss decomposition; no parameter mutation.
kernels::LossBreakdown evaluate_loss(const Dataset& ds, std::span<const std::size_t> indices,
                                     const ModelParams& params, const Hyperparams& hp,
                                     kernels::Backend backend = kernels::Backend::parallel);

/// Attribute rows of `params.class_ids` gathered into prototype order.
Matrix gather_class_attrs(const Dataset& ds, const ModelParams& params);

}  // namespace protogate
