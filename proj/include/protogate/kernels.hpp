#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "protogate/matrix.hpp"
#include "protogate/model.hpp"

namespace protogate::kernels {

/// Which implementation runs the batched loops. Both produce bit-identical
/// results: every accumulated value is reduced in instance-index order, so
/// the OpenMP backend only changes which thread computes a slot, never the
/// arithmetic. The serial backend is the reference the tests and the
/// benchmark compare against.
enum class Backend {
    serial,
    parallel,
};

/// A batch is a set of rows of a feature matrix plus, when training, the
/// matching class indices into the model's class order.
struct BatchView {
    const Matrix& features;                 // N x d, full matrix
    std::span<const std::size_t> rows;      // which rows form the batch
    std::span<const int> classes;           // per-row class index; empty for inference
};

struct LossBreakdown {
    double visual = 0.0;    // mean visual-head loss over the batch
    double semantic = 0.0;  // mean semantic-head loss over the batch (unweighted)

    double total(double semantic_weight) const { return visual + semantic_weight * semantic; }
};

/// Mean per-head losses of the joint objective over a batch.
/// `seen_attrs` holds the attribute row of params.class_ids[k] in row k.
LossBreakdown batch_loss(const ModelParams& params, const Hyperparams& hp,
                         const Matrix& seen_attrs, const BatchView& batch, Backend backend);

/// Same forward pass plus analytic gradients of the joint objective with
/// respect to every parameter tensor. The returned loss reuses the forward
/// values, so it equals batch_loss on the same inputs bit-for-bit.
std::pair<LossBreakdown, Gradients> batch_loss_grad(const ModelParams& params,
                                                    const Hyperparams& hp,
                                                    const Matrix& seen_attrs,
                                                    const BatchView& batch, Backend backend);

/// Everything the entropy-gated predictors need for one instance: the head
/// embeddings, the entropy of the seen-class probabilities, and the nearest
/// seen prototype / candidate attribute row (ties break to the lowest index).
struct GateRecord {
    double entropy = 0.0;
    int seen_index = -1;     // index into params.class_ids
    int unseen_index = -1;   // index into the candidate attribute matrix, -1 if none
    Vector visual_vec;
    Vector semantic_vec;
};

enum class MatchMetric {
    sq_euclidean,
    cosine,
};

/// Batched gate pass. `candidate_attrs` holds the attribute rows of the
/// classes eligible for the unseen/unknown branch; it may be empty, in
/// which case unseen_index stays -1.
std::vector<GateRecord> batch_gate(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& candidate_attrs, MatchMetric metric,
                                   const BatchView& batch, Backend backend);

/// Global default used when callers do not choose explicitly.
Backend default_backend();

}  // namespace protogate::kernels
