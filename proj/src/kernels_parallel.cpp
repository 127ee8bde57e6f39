// OpenMP backend. Phase 1 fills per-instance slots in parallel; phase 2
// reduces over instances with one thread per output element. Every output
// element accumulates its terms in instance-index order, which is the same
// order the serial reference uses, so the two backends agree bit-for-bit
// at any thread count.

#include "kernels_backends.hpp"
#include "kernels_detail.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace protogate::kernels::parallel {

namespace {

using detail::BatchTerms;

/// gw[r][c] = sum_i seeds[i][r] * input_row(i)[c]; gb[r] = sum_i seeds[i][r].
/// `input_of` maps the batch position to the input vector of that instance.
template <typename InputOf>
void reduce_outer(const Matrix& seeds, InputOf input_of, Matrix& gw, Vector& gb) {
    const std::ptrdiff_t out_rows = static_cast<std::ptrdiff_t>(gw.rows());
    const std::size_t n = seeds.rows();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < out_rows; ++r) {
        const std::size_t ur = static_cast<std::size_t>(r);
        double* grow = gw.data() + ur * gw.cols();
        for (std::size_t c = 0; c < gw.cols(); ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += seeds(i, ur) * input_of(i)[c];
            grow[c] = acc;
        }
        double acc_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc_b += seeds(i, ur);
        gb[ur] = acc_b;
    }
}

void reduce_head(const BatchTerms& terms, const BatchView& batch, bool visual, const Head& head,
                 Head& grad) {
    const Matrix& gz = visual ? terms.gzv : terms.gzs;
    auto feature_of = [&batch](std::size_t i) { return batch.features.row(batch.rows[i]); };
    if (!head.has_hidden()) {
        reduce_outer(gz, feature_of, grad.w1, grad.b1);
        return;
    }
    const Matrix& h = visual ? terms.hv : terms.hs;
    const Matrix& gh = visual ? terms.ghv : terms.ghs;
    reduce_outer(gz, [&h](std::size_t i) { return h.row(i); }, grad.w2, grad.b2);
    reduce_outer(gh, feature_of, grad.w1, grad.b1);
}

}  // namespace

LossBreakdown batch_loss(const ModelParams& params, const Hyperparams& hp,
                         const Matrix& seen_attrs, const BatchView& batch) {
    const std::size_t n = batch.rows.size();
    BatchTerms terms;
    terms.resize(n, params, /*want_grad=*/false);
    const double inv_batch = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        detail::compute_instance_terms(params, hp, seen_attrs, batch.features, batch.rows[ui],
                                       batch.classes[ui], inv_batch, false, terms, ui);
    }
    double sum_v = 0.0;
    double sum_s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
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
    BatchTerms terms;
    terms.resize(n, params, /*want_grad=*/true);
    const double inv_batch = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        detail::compute_instance_terms(params, hp, seen_attrs, batch.features, batch.rows[ui],
                                       batch.classes[ui], inv_batch, true, terms, ui);
    }

    Gradients grads = zero_gradients_like(params);
    reduce_head(terms, batch, true, params.visual_head, grads.visual_head);
    reduce_head(terms, batch, false, params.semantic_head, grads.semantic_head);

    Matrix& gm = grads.visual_prototypes;
    const Matrix& m = params.visual_prototypes;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(gm.rows()); ++k) {
        const std::size_t uk = static_cast<std::size_t>(k);
        for (std::size_t c = 0; c < gm.cols(); ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += terms.coef(i, uk) * (terms.zv(i, c) - m(uk, c));
            }
            gm(uk, c) = acc;
        }
    }

    double sum_v = 0.0;
    double sum_s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_v += terms.loss_visual[i];
        sum_s += terms.loss_semantic[i];
    }
    return {LossBreakdown{sum_v * inv_batch, sum_s * inv_batch}, std::move(grads)};
}

std::vector<GateRecord> batch_gate(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& candidate_attrs, MatchMetric metric,
                                   const BatchView& batch) {
    std::vector<GateRecord> records(batch.rows.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(batch.rows.size()); ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        detail::compute_gate_record(params, hp, candidate_attrs, metric, batch.features,
                                    batch.rows[ui], records[ui]);
    }
    return records;
}

}  // namespace protogate::kernels::parallel
