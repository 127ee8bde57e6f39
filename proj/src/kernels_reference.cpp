// Serial reference implementation: one instance at a time, gradients
// accumulated instance-by-instance. Kept deliberately simple; the tests
// and the benchmark hold the OpenMP backend to bit-equality against it.

#include "kernels_backends.hpp"
#include "kernels_detail.hpp"

namespace protogate::kernels::reference {

LossBreakdown batch_loss(const ModelParams& params, const Hyperparams& hp,
                         const Matrix& seen_attrs, const BatchView& batch) {
    const std::size_t n = batch.rows.size();
    detail::BatchTerms terms;
    terms.resize(n, params, /*want_grad=*/false);
    const double inv_batch = 1.0 / static_cast<double>(n);
    double sum_v = 0.0;
    double sum_s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        detail::compute_instance_terms(params, hp, seen_attrs, batch.features, batch.rows[i],
                                       batch.classes[i], inv_batch, false, terms, i);
        sum_v += terms.loss_visual[i];
        sum_s += terms.loss_semantic[i];
    }
    return {sum_v * inv_batch, sum_s * inv_batch};
}

std::pair<LossBreakdown, Gradients> batch_loss_grad(const ModelParams& params,
                                                    const Hyperparams& hp,
                                                    const Matrix& seen_attrs,
                                                    const BatchView& batch) {
    const std::size_t n = batch.rows.size();
    detail::BatchTerms terms;
    terms.resize(n, params, /*want_grad=*/true);
    const double inv_batch = 1.0 / static_cast<double>(n);

    Gradients grads = zero_gradients_like(params);
    double sum_v = 0.0;
    double sum_s = 0.0;

    auto accumulate_head = [](Head& g, const Head& head, std::span<const double> x,
                              std::span<const double> gz, std::span<const double> h,
                              std::span<const double> gh) {
        if (!head.has_hidden()) {
            for (std::size_t r = 0; r < g.w1.rows(); ++r) {
                for (std::size_t c = 0; c < g.w1.cols(); ++c) g.w1(r, c) += gz[r] * x[c];
                g.b1[r] += gz[r];
            }
            return;
        }
        for (std::size_t r = 0; r < g.w2.rows(); ++r) {
            for (std::size_t c = 0; c < g.w2.cols(); ++c) g.w2(r, c) += gz[r] * h[c];
            g.b2[r] += gz[r];
        }
        for (std::size_t r = 0; r < g.w1.rows(); ++r) {
            for (std::size_t c = 0; c < g.w1.cols(); ++c) g.w1(r, c) += gh[r] * x[c];
            g.b1[r] += gh[r];
        }
    };

    const bool hidden = params.visual_head.has_hidden();
    for (std::size_t i = 0; i < n; ++i) {
        detail::compute_instance_terms(params, hp, seen_attrs, batch.features, batch.rows[i],
                                       batch.classes[i], inv_batch, true, terms, i);
        sum_v += terms.loss_visual[i];
        sum_s += terms.loss_semantic[i];

        const std::span<const double> x = batch.features.row(batch.rows[i]);
        accumulate_head(grads.visual_head, params.visual_head, x, terms.gzv.row(i),
                        hidden ? terms.hv.row(i) : std::span<const double>{},
                        hidden ? terms.ghv.row(i) : std::span<const double>{});
        accumulate_head(grads.semantic_head, params.semantic_head, x, terms.gzs.row(i),
                        hidden ? terms.hs.row(i) : std::span<const double>{},
                        hidden ? terms.ghs.row(i) : std::span<const double>{});

        const std::span<const double> zv = terms.zv.row(i);
        const std::span<const double> coef = terms.coef.row(i);
        Matrix& gm = grads.visual_prototypes;
        const Matrix& m = params.visual_prototypes;
        for (std::size_t k = 0; k < gm.rows(); ++k) {
            for (std::size_t c = 0; c < gm.cols(); ++c) {
                gm(k, c) += coef[k] * (zv[c] - m(k, c));
            }
        }
    }
    return {LossBreakdown{sum_v * inv_batch, sum_s * inv_batch}, std::move(grads)};
}

std::vector<GateRecord> batch_gate(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& candidate_attrs, MatchMetric metric,
                                   const BatchView& batch) {
    std::vector<GateRecord> records(batch.rows.size());
    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
        detail::compute_gate_record(params, hp, candidate_attrs, metric, batch.features,
                                    batch.rows[i], records[i]);
    }
    return records;
}

}  // namespace protogate::kernels::reference
