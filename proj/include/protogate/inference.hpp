#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protogate/dataset.hpp"
#include "protogate/kernels.hpp"
#include "protogate/model.hpp"

namespace protogate {

enum class Domain { seen, unseen, unknown };

const char* to_string(Domain d);

struct Thresholds {
    double delta_g = 0.0;
    double delta_o = 0.0;
};

/// Entropy-gated decision for one instance. `semantic_vector` carries the
/// semantic embedding when the branch needs it: always for an unseen/unknown
/// decision, and for seen decisions only on request.
struct GatedPrediction {
    double entropy = 0.0;
    Domain domain = Domain::seen;
    std::optional<std::string> label;
    Vector semantic_vector;
    Vector visual_vector;
};

/// Candidate side of the gate: attribute rows of the classes eligible for
/// the unseen branch, in canonical order.
struct GateContext {
    Matrix candidate_attrs;
    std::vector<std::string> candidate_ids;
    kernels::MatchMetric metric = kernels::MatchMetric::sq_euclidean;
    bool semantic_vector_always = false;
};

GateContext make_gate_context(const ClassAttributeTable& attrs,
                              std::span<const std::string> candidate_ids,
                              kernels::MatchMetric metric = kernels::MatchMetric::sq_euclidean);

/// Natural-log Shannon entropy with 0 log 0 = 0. Rejects vectors whose
/// components leave [0,1] or whose sum strays from 1 by more than 1e-9.
double entropy_of(std::span<const double> probs);

/// Generalized zero-shot rule: entropy below delta_g routes to the nearest
/// seen visual prototype, otherwise to the nearest candidate attribute row
/// in semantic space. The boundary entropy == delta routes to rejection.
GatedPrediction predict_gzsl(std::span<const double> x, const ModelParams& params,
                             const GateContext& ctx, const Hyperparams& hp, double delta_g);

/// Generalized open-set rule: same gate with delta_o, but rejected
/// instances carry no label, only their semantic vector for cognition.
GatedPrediction predict_gosr(std::span<const double> x, const ModelParams& params,
                             const GateContext& ctx, const Hyperparams& hp, double delta_o);

/// Batched variants; output order matches `rows`.
std::vector<GatedPrediction> predict_gzsl_batch(const Matrix& features,
                                                std::span<const std::size_t> rows,
                                                const ModelParams& params, const GateContext& ctx,
                                                const Hyperparams& hp, double delta_g,
                                                kernels::Backend backend = kernels::Backend::parallel);
std::vector<GatedPrediction> predict_gosr_batch(const Matrix& features,
                                                std::span<const std::size_t> rows,
                                                const ModelParams& params, const GateContext& ctx,
                                                const Hyperparams& hp, double delta_o,
                                                kernels::Backend backend = kernels::Backend::parallel);

struct AttributeReading {
    std::string name;
    double value = 0.0;
    bool has = false;  // strictly positive value
};

/// Reads a semantic vector as signed has/has-not attribute statements,
/// strongest first (descending |value|, ties in index order). Requires the
/// centered attribute convention; the sign carries no meaning otherwise.
std::vector<AttributeReading> describe_unknown(const Vector& semantic_vector,
                                               std::span<const std::string> attr_names,
                                               bool centered);

}  // namespace protogate
