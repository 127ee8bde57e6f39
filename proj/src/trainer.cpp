#include "protogate/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "protogate/errors.hpp"
#include "protogate/rng.hpp"

namespace protogate {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (log_every < 0) throw ConfigError("log_every must be >= 0");
}

Matrix gather_class_attrs(const Dataset& ds, const ModelParams& params) {
    Matrix attrs(params.class_ids.size(), ds.attr_dim());
    for (std::size_t k = 0; k < params.class_ids.size(); ++k) {
        const int row = ds.attr_table.row_of(params.class_ids[k]);
        if (row < 0) throw IoError("class without attribute row: " + params.class_ids[k]);
        const auto src = ds.attr_table.attributes.row(static_cast<std::size_t>(row));
        std::copy(src.begin(), src.end(), attrs.row(k).begin());
    }
    return attrs;
}

namespace {

struct TrainingSlice {
    std::vector<std::size_t> rows;     // dataset rows
    std::vector<int> classes;          // index into params.class_ids per row
    std::vector<std::string> class_ids;
};

/// Collects the distinct classes of the slice in canonical dataset order
/// and localizes the labels. Rejects unseen-class instances.
TrainingSlice make_slice(const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ConfigError("training index list is empty");
    std::vector<int> present(ds.class_ids.size(), 0);
    for (std::size_t idx : indices) {
        if (idx >= ds.num_instances()) throw ConfigError("training index out of range");
        const int cls = ds.labels[idx];
        if (!ds.is_seen_class(cls)) {
            throw ConfigError("training slice contains unseen-class instance (class '" +
                              ds.class_ids[static_cast<std::size_t>(cls)] + "')");
        }
        present[static_cast<std::size_t>(cls)] = 1;
    }
    TrainingSlice slice;
    std::vector<int> local(ds.class_ids.size(), -1);
    for (std::size_t c = 0; c < ds.class_ids.size(); ++c) {
        if (present[c]) {
            local[c] = static_cast<int>(slice.class_ids.size());
            slice.class_ids.push_back(ds.class_ids[c]);
        }
    }
    slice.rows.assign(indices.begin(), indices.end());
    slice.classes.reserve(indices.size());
    for (std::size_t idx : indices) {
        slice.classes.push_back(local[static_cast<std::size_t>(ds.labels[idx])]);
    }
    return slice;
}

void apply_sgd_step(Matrix& param, Matrix& velocity, const Matrix& grad, double lr,
                    double momentum) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity.values()[i] = momentum * velocity.values()[i] - lr * grad.values()[i];
        param.values()[i] += velocity.values()[i];
    }
}

void apply_sgd_step(Vector& param, Vector& velocity, const Vector& grad, double lr,
                    double momentum) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * grad[i];
        param[i] += velocity[i];
    }
}

void apply_head_step(Head& head, Head& velocity, const Head& grad, double lr, double momentum) {
    apply_sgd_step(head.w1, velocity.w1, grad.w1, lr, momentum);
    apply_sgd_step(head.b1, velocity.b1, grad.b1, lr, momentum);
    if (head.has_hidden()) {
        apply_sgd_step(head.w2, velocity.w2, grad.w2, lr, momentum);
        apply_sgd_step(head.b2, velocity.b2, grad.b2, lr, momentum);
    }
}

}  // namespace

std::pair<ModelParams, TrainReport> train(const Dataset& ds,
                                          std::span<const std::size_t> indices,
                                          const Hyperparams& hp, const TrainConfig& tc,
                                          const EpochCallback& on_epoch) {
    hp.validate();
    tc.validate();
    const TrainingSlice slice = make_slice(ds, indices);
    const std::size_t n = slice.rows.size();

    ModelParams params = init_params(ds.feature_dim(), ds.attr_dim(), slice.class_ids, hp,
                                     tc.seed);
    const Matrix seen_attrs = gather_class_attrs(ds, params);
    Gradients velocity = zero_gradients_like(params);

    TrainReport report;
    report.loss_total.reserve(static_cast<std::size_t>(tc.epochs));

    const auto t0 = std::chrono::steady_clock::now();
    std::size_t global_step = 0;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        rng::Engine shuffle_eng(
            rng::derive_seed(tc.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        const std::vector<std::size_t> perm = rng::permutation(shuffle_eng, n);

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(tc.batch_size));
            std::vector<std::size_t> batch_rows;
            std::vector<int> batch_classes;
            batch_rows.reserve(stop - start);
            batch_classes.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch_rows.push_back(slice.rows[perm[i]]);
                batch_classes.push_back(slice.classes[perm[i]]);
            }
            const kernels::BatchView batch{ds.features, batch_rows, batch_classes};
            auto [loss, grads] = kernels::batch_loss_grad(params, hp, seen_attrs, batch,
                                                          tc.backend);
            if (!std::isfinite(loss.total(hp.semantic_weight))) {
                throw NumericError("non-finite loss at training step " +
                                   std::to_string(global_step) + " (epoch " +
                                   std::to_string(epoch) + ")");
            }
            apply_head_step(params.visual_head, velocity.visual_head, grads.visual_head,
                            tc.learning_rate, tc.momentum);
            apply_head_step(params.semantic_head, velocity.semantic_head, grads.semantic_head,
                            tc.learning_rate, tc.momentum);
            apply_sgd_step(params.visual_prototypes, velocity.visual_prototypes,
                           grads.visual_prototypes, tc.learning_rate, tc.momentum);
            if (!params.all_finite()) {
                throw NumericError("non-finite parameters after training step " +
                                   std::to_string(global_step) + " (epoch " +
                                   std::to_string(epoch) + "); training diverged");
            }
            ++global_step;
        }

        // End-of-epoch evaluation over the slice in index order; this is the
        // value the report, the log and evaluate_loss all agree on.
        const kernels::BatchView full{ds.features, slice.rows, slice.classes};
        const kernels::LossBreakdown eval = kernels::batch_loss(params, hp, seen_attrs, full,
                                                                tc.backend);
        const double total = eval.total(hp.semantic_weight);
        if (!std::isfinite(total)) {
            throw NumericError("non-finite loss at end-of-epoch evaluation after step " +
                               std::to_string(global_step) + " (epoch " + std::to_string(epoch) +
                               "); training diverged");
        }
        report.loss_total.push_back(total);
        report.loss_visual.push_back(eval.visual);
        report.loss_semantic.push_back(eval.semantic);
        if (tc.log_every > 0 && (epoch % tc.log_every == 0 || epoch + 1 == tc.epochs)) {
            std::fprintf(stderr, "epoch %d loss %.6f (visual %.6f semantic %.6f)\n", epoch,
                         total, eval.visual, eval.semantic);
        }
        if (on_epoch) on_epoch(epoch, params, total, eval.visual, eval.semantic);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(params), std::move(report)};
}

kernels::LossBreakdown evaluate_loss(const Dataset& ds, std::span<const std::size_t> indices,
                                     const ModelParams& params, const Hyperparams& hp,
                                     kernels::Backend backend) {
    const TrainingSlice slice = make_slice(ds, indices);
    if (slice.class_ids != params.class_ids) {
        // The slice may legitimately cover fewer classes than the model;
        // relocalize against the model's class list instead.
        std::vector<int> classes;
        classes.reserve(slice.rows.size());
        for (std::size_t idx : slice.rows) {
            const std::string& id = ds.class_ids[static_cast<std::size_t>(ds.labels[idx])];
            int found = -1;
            for (std::size_t k = 0; k < params.class_ids.size(); ++k) {
                if (params.class_ids[k] == id) {
                    found = static_cast<int>(k);
                    break;
                }
            }
            if (found < 0) {
                throw ConfigError("instance class '" + id + "' is not covered by the model");
            }
            classes.push_back(found);
        }
        const Matrix seen_attrs = gather_class_attrs(ds, params);
        const kernels::BatchView batch{ds.features, slice.rows, classes};
        return kernels::batch_loss(params, hp, seen_attrs, batch, backend);
    }
    const Matrix seen_attrs = gather_class_attrs(ds, params);
    const kernels::BatchView batch{ds.features, slice.rows, slice.classes};
    return kernels::batch_loss(params, hp, seen_attrs, batch, backend);
}

}  // namespace protogate
