#pragma once

// Internal: the two kernel implementations behind the Backend switch.

#include <utility>
#include <vector>

#include "protogate/kernels.hpp"

namespace protogate::kernels {

namespace reference {
LossBreakdown batch_loss(const ModelParams& params, const Hyperparams& hp,
                         const Matrix& seen_attrs, const BatchView& batch);
std::pair<LossBreakdown, Gradients> batch_loss_grad(const ModelParams& params,
                                                    const Hyperparams& hp,
                                                    const Matrix& seen_attrs,
                                                    const BatchView& batch);
std::vector<GateRecord> batch_gate(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& candidate_attrs, MatchMetric metric,
                                   const BatchView& batch);
}  // namespace reference

namespace parallel {
LossBreakdown batch_loss(const ModelParams& params, const Hyperparams& hp,
                         const Matrix& seen_attrs, const BatchView& batch);
std::pair<LossBreakdown, Gradients> batch_loss_grad(const ModelParams& params,
                                                    const Hyperparams& hp,
                                                    const Matrix& seen_attrs,
                                                    const BatchView& batch);
std::vector<GateRecord> batch_gate(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& candidate_attrs, MatchMetric metric,
                                   const BatchView& batch);
}  // namespace parallel

}  // namespace protogate::kernels
