#include "protogate/kernels.hpp"

#include "kernels_backends.hpp"
#include "kernels_detail.hpp"

namespace protogate::kernels {

Backend default_backend() { return Backend::parallel; }

LossBreakdown batch_loss(const ModelParams& params, const Hyperparams& hp,
                         const Matrix& seen_attrs, const BatchView& batch, Backend backend) {
    hp.validate();
    detail::check_batch(params, seen_attrs, batch, /*need_classes=*/true);
    return backend == Backend::serial ? reference::batch_loss(params, hp, seen_attrs, batch)
                                      : parallel::batch_loss(params, hp, seen_attrs, batch);
}

std::pair<LossBreakdown, Gradients> batch_loss_grad(const ModelParams& params,
                                                    const Hyperparams& hp,
                                                    const Matrix& seen_attrs,
                                                    const BatchView& batch, Backend backend) {
    hp.validate();
    detail::check_batch(params, seen_attrs, batch, /*need_classes=*/true);
    return backend == Backend::serial ? reference::batch_loss_grad(params, hp, seen_attrs, batch)
                                      : parallel::batch_loss_grad(params, hp, seen_attrs, batch);
}

std::vector<GateRecord> batch_gate(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& candidate_attrs, MatchMetric metric,
                                   const BatchView& batch, Backend backend) {
    hp.validate();
    detail::check_batch(params, Matrix{}, batch, /*need_classes=*/false);
    if (candidate_attrs.rows() > 0 && candidate_attrs.cols() != params.attr_dim()) {
        throw std::invalid_argument("candidate attribute width does not match semantic head");
    }
    return backend == Backend::serial
               ? reference::batch_gate(params, hp, candidate_attrs, metric, batch)
               : parallel::batch_gate(params, hp, candidate_attrs, metric, batch);
}

}  // namespace protogate::kernels
