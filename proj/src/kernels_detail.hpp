#pragma once

// Per-instance math shared by the serial reference backend and the OpenMP
// backend. Both call exactly these routines, so for a given instance the
// produced values are bit-identical; the backends differ only in how they
// schedule instances and reduction slots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "protogate/kernels.hpp"
#include "protogate/matrix.hpp"
#include "protogate/model.hpp"

namespace protogate::kernels::detail {

/// Per-instance rows of everything the gradient reductions consume.
/// Hidden-layer slots stay empty for affine heads.
struct BatchTerms {
    Vector loss_visual, loss_semantic;  // B
    Matrix zv, zs;                      // B x t, B x a
    Matrix gzv, gzs;                    // gradient seeds dLmean/dz, B x t / B x a
    Matrix hv, hs;                      // tanh activations, B x hidden
    Matrix ghv, ghs;                    // seeds at the hidden layer, B x hidden
    Matrix coef;                        // prototype coefficients, B x C

    void resize(std::size_t batch, const ModelParams& p, bool want_grad) {
        const std::size_t t = p.proto_dim();
        const std::size_t a = p.attr_dim();
        const std::size_t c = p.num_classes();
        const std::size_t h = p.visual_head.has_hidden() ? p.visual_head.w1.rows() : 0;
        loss_visual.assign(batch, 0.0);
        loss_semantic.assign(batch, 0.0);
        zv = Matrix(batch, t);
        zs = Matrix(batch, a);
        hv = Matrix(h ? batch : 0, h);
        hs = Matrix(h ? batch : 0, h);
        if (want_grad) {
            gzv = Matrix(batch, t);
            gzs = Matrix(batch, a);
            ghv = Matrix(h ? batch : 0, h);
            ghs = Matrix(h ? batch : 0, h);
            coef = Matrix(batch, c);
        }
    }
};

inline void head_forward_into(const Head& head, std::span<const double> x,
                              std::span<double> z, std::span<double> hidden) {
    const Matrix& w1 = head.w1;
    if (!head.has_hidden()) {
        for (std::size_t r = 0; r < w1.rows(); ++r) {
            double acc = head.b1[r];
            const double* wr = w1.data() + r * w1.cols();
            for (std::size_t c = 0; c < w1.cols(); ++c) acc += wr[c] * x[c];
            z[r] = acc;
        }
        return;
    }
    for (std::size_t r = 0; r < w1.rows(); ++r) {
        double acc = head.b1[r];
        const double* wr = w1.data() + r * w1.cols();
        for (std::size_t c = 0; c < w1.cols(); ++c) acc += wr[c] * x[c];
        hidden[r] = std::tanh(acc);
    }
    const Matrix& w2 = head.w2;
    for (std::size_t r = 0; r < w2.rows(); ++r) {
        double acc = head.b2[r];
        const double* wr = w2.data() + r * w2.cols();
        for (std::size_t c = 0; c < w2.cols(); ++c) acc += wr[c] * hidden[c];
        z[r] = acc;
    }
}

inline double sq_dist_raw(std::span<const double> u, std::span<const double> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        acc += d * d;
    }
    return acc;
}

/// Softmax over -gamma * distances with max-subtraction. Returns the DCE
/// loss of `true_class` (or just fills probabilities when true_class < 0).
inline double distance_softmax(std::span<const double> z, const Matrix& protos, double gamma,
                               int true_class, std::span<double> dists, std::span<double> probs) {
    const std::size_t c = protos.rows();
    for (std::size_t k = 0; k < c; ++k) dists[k] = sq_dist_raw(z, protos.row(k));
    double max_logit = -gamma * dists[0];
    for (std::size_t k = 1; k < c; ++k) max_logit = std::max(max_logit, -gamma * dists[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        probs[k] = std::exp(-gamma * dists[k] - max_logit);
        denom += probs[k];
    }
    for (std::size_t k = 0; k < c; ++k) probs[k] /= denom;
    if (true_class < 0) return 0.0;
    return std::log(denom) - (-gamma * dists[static_cast<std::size_t>(true_class)] - max_logit);
}

/// Forward pass (and optionally gradient seeds) for one instance.
/// Seeds carry the 1/batch factor and, on the semantic side, the ablation
/// weight, so the reductions are plain sums.
inline void compute_instance_terms(const ModelParams& params, const Hyperparams& hp,
                                   const Matrix& seen_attrs, const Matrix& features,
                                   std::size_t row, int cls, double inv_batch, bool want_grad,
                                   BatchTerms& out, std::size_t i) {
    const std::span<const double> x = features.row(row);
    const std::size_t t = params.proto_dim();
    const std::size_t a = params.attr_dim();
    const std::size_t c = params.num_classes();
    const double gamma = hp.gamma;
    const double lambda = hp.lambda_pl;

    std::span<double> zv = out.zv.row(i);
    std::span<double> zs = out.zs.row(i);
    head_forward_into(params.visual_head, x, zv, out.hv.rows() ? out.hv.row(i) : std::span<double>{});
    head_forward_into(params.semantic_head, x, zs, out.hs.rows() ? out.hs.row(i) : std::span<double>{});

    Vector dist_v(c), prob_v(c), dist_s(c), prob_s(c);
    const double dce_v = distance_softmax(zv, params.visual_prototypes, gamma, cls, dist_v, prob_v);
    const double dce_s = distance_softmax(zs, seen_attrs, gamma, cls, dist_s, prob_s);
    const std::size_t y = static_cast<std::size_t>(cls);
    out.loss_visual[i] = dce_v + lambda * dist_v[y];
    out.loss_semantic[i] = dce_s + lambda * dist_s[y];
    if (!want_grad) return;

    // dDCE/dz = 2*gamma*(sum_k p_k m_k - m_y); the z terms cancel because
    // the p_k - indicator coefficients sum to zero.
    std::span<double> gzv = out.gzv.row(i);
    for (std::size_t d = 0; d < t; ++d) {
        double pbar = 0.0;
        for (std::size_t k = 0; k < c; ++k) pbar += prob_v[k] * params.visual_prototypes(k, d);
        const double my = params.visual_prototypes(y, d);
        gzv[d] = inv_batch * (2.0 * gamma * (pbar - my) + 2.0 * lambda * (zv[d] - my));
    }
    std::span<double> gzs = out.gzs.row(i);
    const double sem_scale = inv_batch * hp.semantic_weight;
    for (std::size_t d = 0; d < a; ++d) {
        double pbar = 0.0;
        for (std::size_t k = 0; k < c; ++k) pbar += prob_s[k] * seen_attrs(k, d);
        const double ay = seen_attrs(y, d);
        gzs[d] = sem_scale * (2.0 * gamma * (pbar - ay) + 2.0 * lambda * (zs[d] - ay));
    }
    // dL/dm_k = coef_k * (z - m_k) with coef folding DCE and the PL pull.
    std::span<double> coef = out.coef.row(i);
    for (std::size_t k = 0; k < c; ++k) {
        const double indicator = (k == y) ? 1.0 : 0.0;
        coef[k] = inv_batch * (2.0 * gamma * (prob_v[k] - indicator) - 2.0 * lambda * indicator);
    }
    // Hidden-layer seeds: g_h = (w2^T g_z) * (1 - h^2).
    if (out.ghv.rows()) {
        const Matrix& w2 = params.visual_head.w2;
        std::span<const double> h = out.hv.row(i);
        std::span<double> gh = out.ghv.row(i);
        for (std::size_t j = 0; j < w2.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < w2.rows(); ++r) acc += w2(r, j) * gzv[r];
            gh[j] = acc * (1.0 - h[j] * h[j]);
        }
    }
    if (out.ghs.rows()) {
        const Matrix& w2 = params.semantic_head.w2;
        std::span<const double> h = out.hs.row(i);
        std::span<double> gh = out.ghs.row(i);
        for (std::size_t j = 0; j < w2.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < w2.rows(); ++r) acc += w2(r, j) * gzs[r];
            gh[j] = acc * (1.0 - h[j] * h[j]);
        }
    }
}

inline int argmin_strict(std::span<const double> values) {
    int best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] < values[best]) best = static_cast<int>(k);
    }
    return values.empty() ? -1 : best;
}

inline double match_distance(std::span<const double> z, std::span<const double> row,
                             MatchMetric metric) {
    if (metric == MatchMetric::sq_euclidean) return sq_dist_raw(z, row);
    double dot = 0.0, nz = 0.0, nr = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        dot += z[i] * row[i];
        nz += z[i] * z[i];
        nr += row[i] * row[i];
    }
    const double norm = std::sqrt(nz) * std::sqrt(nr);
    if (norm == 0.0) return 1.0;
    return 1.0 - dot / norm;
}

inline void compute_gate_record(const ModelParams& params, const Hyperparams& hp,
                                const Matrix& candidate_attrs, MatchMetric metric,
                                const Matrix& features, std::size_t row, GateRecord& out) {
    const std::size_t c = params.num_classes();
    out.visual_vec.assign(params.proto_dim(), 0.0);
    out.semantic_vec.assign(params.attr_dim(), 0.0);
    Vector hidden(params.visual_head.has_hidden() ? params.visual_head.w1.rows() : 0);
    head_forward_into(params.visual_head, features.row(row), out.visual_vec, hidden);
    Vector hidden_s(params.semantic_head.has_hidden() ? params.semantic_head.w1.rows() : 0);
    head_forward_into(params.semantic_head, features.row(row), out.semantic_vec, hidden_s);

    Vector dists(c), probs(c);
    distance_softmax(out.visual_vec, params.visual_prototypes, hp.gamma, -1, dists, probs);
    double entropy = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        if (probs[k] > 0.0) entropy -= probs[k] * std::log(probs[k]);
    }
    out.entropy = entropy;
    out.seen_index = argmin_strict(dists);

    if (candidate_attrs.rows() == 0) {
        out.unseen_index = -1;
        return;
    }
    Vector cand(candidate_attrs.rows());
    for (std::size_t k = 0; k < candidate_attrs.rows(); ++k) {
        cand[k] = match_distance(out.semantic_vec, candidate_attrs.row(k), metric);
    }
    out.unseen_index = argmin_strict(cand);
}

inline void check_batch(const ModelParams& params, const Matrix& seen_attrs,
                        const BatchView& batch, bool need_classes) {
    if (batch.rows.empty()) throw std::invalid_argument("batch is empty");
    if (batch.features.cols() != params.feature_dim()) {
        throw std::invalid_argument("batch feature width does not match model");
    }
    if (need_classes) {
        if (batch.classes.size() != batch.rows.size()) {
            throw std::invalid_argument("batch classes/rows length mismatch");
        }
        for (int cls : batch.classes) {
            if (cls < 0 || static_cast<std::size_t>(cls) >= params.num_classes()) {
                throw std::invalid_argument("batch contains a class outside the model's classes");
            }
        }
        if (seen_attrs.rows() != params.num_classes() || seen_attrs.cols() != params.attr_dim()) {
            throw std::invalid_argument("seen attribute matrix shape mismatch");
        }
    }
    for (std::size_t r : batch.rows) {
        if (r >= batch.features.rows()) throw std::invalid_argument("batch row out of range");
    }
}

}  // namespace protogate::kernels::detail
