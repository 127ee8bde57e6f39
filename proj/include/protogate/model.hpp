#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "protogate/matrix.hpp"

namespace protogate {

/// Hyperparameters of the two-head prototype model.
struct Hyperparams {
    double gamma = 1.0;           ///< softmax hardness of the distance probability
    double lambda_pl = 0.1;       ///< weight of the prototype-pull regularizer
    int proto_dim = 64;           ///< dimension of the learnable visual prototypes
    int hidden_dim = 0;           ///< 0 = affine heads; >0 adds one tanh hidden layer
    double semantic_weight = 1.0; ///< scale of the semantic-head term; 0 = ablation

    void validate() const;
};

/// One head mapping features to an embedding space. Affine by default;
/// with a hidden layer the map is w2 * tanh(w1 x + b1) + b2.
struct Head {
    Matrix w1;  // (hidden|out) x in
    Vector b1;
    Matrix w2;  // out x hidden, empty for affine heads
    Vector b2;

    bool has_hidden() const { return !w2.empty(); }
    std::size_t in_dim() const { return w1.cols(); }
    std::size_t out_dim() const { return has_hidden() ? w2.rows() : w1.rows(); }

    /// Forward map. `hidden` receives the tanh activations when present
    /// (callers that backpropagate need them).
    Vector forward(std::span<const double> x, Vector* hidden = nullptr) const;
};

/// Learnable parameters: both heads plus one visual prototype per training
/// class. `class_ids` fixes the prototype row order; it always matches the
/// canonical class order of the dataset the model was trained on.
struct ModelParams {
    Head visual_head;           // feature_dim -> proto_dim
    Head semantic_head;         // feature_dim -> attr_dim
    Matrix visual_prototypes;   // num_classes x proto_dim
    std::vector<std::string> class_ids;

    std::size_t feature_dim() const { return visual_head.in_dim(); }
    std::size_t proto_dim() const { return visual_head.out_dim(); }
    std::size_t attr_dim() const { return semantic_head.out_dim(); }
    std::size_t num_classes() const { return visual_prototypes.rows(); }

    bool all_finite() const;
};

/// Gradient slots mirroring ModelParams. There is deliberately no slot for
/// attribute prototypes: those are fixed inputs, never parameters.
struct Gradients {
    Head visual_head;
    Head semantic_head;
    Matrix visual_prototypes;
};

Gradients zero_gradients_like(const ModelParams& params);

/// Squared Euclidean distance.
double sq_dist(std::span<const double> u, std::span<const double> v);

/// Distance-based class probabilities: component k is
/// exp(-gamma * ||z - m_k||^2) normalized over all prototype rows.
/// Uses max-subtraction, so gamma * distance in the hundreds stays finite.
Vector class_probabilities(std::span<const double> z, const Matrix& protos, double gamma);

/// -log of the true-class component of class_probabilities, evaluated in
/// log space (never materializes a zero probability).
double dce_loss(std::span<const double> z, int true_class_index, const Matrix& protos,
                double gamma);

/// Squared distance to the true-class prototype, used as a regularizer.
double pl_loss(std::span<const double> z, int true_class_index, const Matrix& protos);

/// dce_loss + lambda_pl * pl_loss.
double head_loss(std::span<const double> z, int true_class_index, const Matrix& protos,
                 double gamma, double lambda_pl);

/// Fresh parameters: prototypes uniform on [0,1), head weights uniform on
/// +-1/sqrt(fan_in), biases zero. Deterministic in `seed`.
ModelParams init_params(std::size_t feature_dim, std::size_t attr_dim,
                        std::vector<std::string> class_ids, const Hyperparams& hp,
                        std::uint64_t seed);

}  // namespace protogate
