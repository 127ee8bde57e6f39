#include "protogate/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "protogate/errors.hpp"

namespace protogate {

const char* to_string(Domain d) {
    switch (d) {
        case Domain::seen: return "seen";
        case Domain::unseen: return "unseen";
        case Domain::unknown: return "unknown";
    }
    return "?";
}

GateContext make_gate_context(const ClassAttributeTable& attrs,
                              std::span<const std::string> candidate_ids,
                              kernels::MatchMetric metric) {
    GateContext ctx;
    ctx.metric = metric;
    ctx.candidate_ids.assign(candidate_ids.begin(), candidate_ids.end());
    ctx.candidate_attrs = Matrix(ctx.candidate_ids.size(), attrs.attributes.cols());
    for (std::size_t k = 0; k < ctx.candidate_ids.size(); ++k) {
        const int row = attrs.row_of(ctx.candidate_ids[k]);
        if (row < 0) throw ConfigError("class without attribute row: " + ctx.candidate_ids[k]);
        const auto src = attrs.attributes.row(static_cast<std::size_t>(row));
        std::copy(src.begin(), src.end(), ctx.candidate_attrs.row(k).begin());
    }
    return ctx;
}

double entropy_of(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("entropy_of: empty probability vector");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("entropy_of: component outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("entropy_of: components do not sum to 1");
    }
    double e = 0.0;
    for (double p : probs) {
        if (p > 0.0) e -= p * std::log(p);
    }
    return e;
}

namespace {

void check_trained(const ModelParams& params) {
    if (params.num_classes() == 0 || params.visual_head.w1.empty()) {
        throw ConfigError("model has no trained parameters");
    }
    if (!params.all_finite()) throw NumericError("model parameters contain non-finite values");
}

GatedPrediction from_record(kernels::GateRecord&& rec, const ModelParams& params,
                            const GateContext& ctx, double delta, bool open_set) {
    GatedPrediction pred;
    pred.entropy = rec.entropy;
    pred.visual_vector = std::move(rec.visual_vec);
    // Accept into the seen branch strictly below the threshold; the
    // boundary routes to rejection.
    if (rec.entropy < delta) {
        pred.domain = Domain::seen;
        pred.label = params.class_ids[static_cast<std::size_t>(rec.seen_index)];
        if (ctx.semantic_vector_always) pred.semantic_vector = std::move(rec.semantic_vec);
        return pred;
    }
    pred.semantic_vector = std::move(rec.semantic_vec);
    if (open_set) {
        pred.domain = Domain::unknown;
        pred.label.reset();
        return pred;
    }
    pred.domain = Domain::unseen;
    if (rec.unseen_index >= 0) {
        pred.label = ctx.candidate_ids[static_cast<std::size_t>(rec.unseen_index)];
    } else {
        pred.label.reset();
    }
    return pred;
}

std::vector<GatedPrediction> predict_batch_impl(const Matrix& features,
                                                std::span<const std::size_t> rows,
                                                const ModelParams& params,
                                                const GateContext& ctx, const Hyperparams& hp,
                                                double delta, bool open_set,
                                                kernels::Backend backend) {
    check_trained(params);
    if (!(delta >= 0.0)) throw ConfigError("threshold must be >= 0");
    const kernels::BatchView batch{features, rows, {}};
    std::vector<kernels::GateRecord> records =
        kernels::batch_gate(params, hp, ctx.candidate_attrs, ctx.metric, batch, backend);
    std::vector<GatedPrediction> preds;
    preds.reserve(records.size());
    for (auto& rec : records) {
        preds.push_back(from_record(std::move(rec), params, ctx, delta, open_set));
    }
    return preds;
}

}  // namespace

GatedPrediction predict_gzsl(std::span<const double> x, const ModelParams& params,
                             const GateContext& ctx, const Hyperparams& hp, double delta_g) {
    Matrix one(1, x.size());
    std::copy(x.begin(), x.end(), one.row(0).begin());
    const std::size_t row = 0;
    return predict_batch_impl(one, std::span<const std::size_t>(&row, 1), params, ctx, hp,
                              delta_g, false, kernels::Backend::serial)[0];
}

GatedPrediction predict_gosr(std::span<const double> x, const ModelParams& params,
                             const GateContext& ctx, const Hyperparams& hp, double delta_o) {
    Matrix one(1, x.size());
    std::copy(x.begin(), x.end(), one.row(0).begin());
    const std::size_t row = 0;
    return predict_batch_impl(one, std::span<const std::size_t>(&row, 1), params, ctx, hp,
                              delta_o, true, kernels::Backend::serial)[0];
}

std::vector<GatedPrediction> predict_gzsl_batch(const Matrix& features,
                                                std::span<const std::size_t> rows,
                                                const ModelParams& params, const GateContext& ctx,
                                                const Hyperparams& hp, double delta_g,
                                                kernels::Backend backend) {
    return predict_batch_impl(features, rows, params, ctx, hp, delta_g, false, backend);
}

std::vector<GatedPrediction> predict_gosr_batch(const Matrix& features,
                                                std::span<const std::size_t> rows,
                                                const ModelParams& params, const GateContext& ctx,
                                                const Hyperparams& hp, double delta_o,
                                                kernels::Backend backend) {
    return predict_batch_impl(features, rows, params, ctx, hp, delta_o, true, backend);
}

std::vector<AttributeReading> describe_unknown(const Vector& semantic_vector,
                                               std::span<const std::string> attr_names,
                                               bool centered) {
    if (!centered) {
        throw ConfigError("describe_unknown requires centered attributes; "
                          "the sign of a raw attribute value has no has/has-not meaning");
    }
    if (attr_names.size() != semantic_vector.size()) {
        throw std::invalid_argument("describe_unknown: name count does not match vector length");
    }
    std::vector<AttributeReading> readings;
    readings.reserve(semantic_vector.size());
    for (std::size_t i = 0; i < semantic_vector.size(); ++i) {
        readings.push_back({attr_names[i], semantic_vector[i], semantic_vector[i] > 0.0});
    }
    std::stable_sort(readings.begin(), readings.end(),
                     [](const AttributeReading& a, const AttributeReading& b) {
                         return std::abs(a.value) > std::abs(b.value);
                     });
    return readings;
}

}  // namespace protogate
