#include "protogate/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "protogate/errors.hpp"
#include "protogate/rng.hpp"

namespace protogate {

void Hyperparams::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (!(lambda_pl >= 0.0)) throw ConfigError("lambda_pl must be >= 0");
    if (proto_dim < 1) throw ConfigError("proto_dim must be >= 1");
    if (hidden_dim < 0) throw ConfigError("hidden_dim must be >= 0");
    if (!(semantic_weight >= 0.0)) throw ConfigError("semantic_weight must be >= 0");
}

Vector Head::forward(std::span<const double> x, Vector* hidden) const {
    if (x.size() != in_dim()) {
        throw std::invalid_argument("Head::forward: input length mismatch");
    }
    Vector a(w1.rows());
    for (std::size_t r = 0; r < w1.rows(); ++r) {
        double acc = b1[r];
        const double* wr = w1.data() + r * w1.cols();
        for (std::size_t c = 0; c < w1.cols(); ++c) acc += wr[c] * x[c];
        a[r] = acc;
    }
    if (!has_hidden()) {
        if (hidden) hidden->clear();
        return a;
    }
    for (double& v : a) v = std::tanh(v);
    Vector z(w2.rows());
    for (std::size_t r = 0; r < w2.rows(); ++r) {
        double acc = b2[r];
        const double* wr = w2.data() + r * w2.cols();
        for (std::size_t c = 0; c < w2.cols(); ++c) acc += wr[c] * a[c];
        z[r] = acc;
    }
    if (hidden) *hidden = std::move(a);
    return z;
}

namespace {

bool finite_range(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool finite_head(const Head& h) {
    return finite_range(h.w1.values()) && finite_range(h.b1) && finite_range(h.w2.values()) &&
           finite_range(h.b2);
}

}  // namespace

bool ModelParams::all_finite() const {
    return finite_head(visual_head) && finite_head(semantic_head) &&
           finite_range(visual_prototypes.values());
}

Gradients zero_gradients_like(const ModelParams& params) {
    Gradients g;
    auto zero_head = [](const Head& h) {
        Head z;
        z.w1 = Matrix(h.w1.rows(), h.w1.cols());
        z.b1 = Vector(h.b1.size(), 0.0);
        z.w2 = Matrix(h.w2.rows(), h.w2.cols());
        z.b2 = Vector(h.b2.size(), 0.0);
        return z;
    };
    g.visual_head = zero_head(params.visual_head);
    g.semantic_head = zero_head(params.semantic_head);
    g.visual_prototypes = Matrix(params.visual_prototypes.rows(), params.visual_prototypes.cols());
    return g;
}

double sq_dist(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("sq_dist: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        acc += d * d;
    }
    return acc;
}

namespace {

/// Logits -gamma * ||z - m_k||^2 for all prototype rows.
Vector distance_logits(std::span<const double> z, const Matrix& protos, double gamma) {
    if (protos.rows() == 0) {
        throw std::invalid_argument("class_probabilities: empty prototype matrix");
    }
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("class_probabilities: gamma must be > 0");
    }
    Vector logits(protos.rows());
    for (std::size_t k = 0; k < protos.rows(); ++k) {
        logits[k] = -gamma * sq_dist(z, protos.row(k));
    }
    return logits;
}

}  // namespace

Vector class_probabilities(std::span<const double> z, const Matrix& protos, double gamma) {
    Vector logits = distance_logits(z, protos, gamma);
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - max_logit);
    Vector p(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - max_logit) / denom;
    }
    return p;
}

double dce_loss(std::span<const double> z, int true_class_index, const Matrix& protos,
                double gamma) {
    Vector logits = distance_logits(z, protos, gamma);
    if (true_class_index < 0 || static_cast<std::size_t>(true_class_index) >= logits.size()) {
        throw std::invalid_argument("dce_loss: class index out of range");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - max_logit);
    // -log p_y without forming p_y, so gamma*distance in the hundreds
    // yields a large finite loss instead of -log(0).
    return std::log(denom) - (logits[true_class_index] - max_logit);
}

double pl_loss(std::span<const double> z, int true_class_index, const Matrix& protos) {
    if (true_class_index < 0 || static_cast<std::size_t>(true_class_index) >= protos.rows()) {
        throw std::invalid_argument("pl_loss: class index out of range");
    }
    return sq_dist(z, protos.row(true_class_index));
}

double head_loss(std::span<const double> z, int true_class_index, const Matrix& protos,
                 double gamma, double lambda_pl) {
    return dce_loss(z, true_class_index, protos, gamma) +
           lambda_pl * pl_loss(z, true_class_index, protos);
}

namespace {

Head init_head(std::size_t in_dim, std::size_t out_dim, int hidden_dim, rng::Engine& eng) {
    Head h;
    auto fill_uniform = [&eng](Matrix& m, double bound) {
        for (double& v : m.values()) v = eng.uniform(-bound, bound);
    };
    if (hidden_dim > 0) {
        h.w1 = Matrix(static_cast<std::size_t>(hidden_dim), in_dim);
        h.b1 = Vector(static_cast<std::size_t>(hidden_dim), 0.0);
        h.w2 = Matrix(out_dim, static_cast<std::size_t>(hidden_dim));
        h.b2 = Vector(out_dim, 0.0);
        fill_uniform(h.w1, 1.0 / std::sqrt(static_cast<double>(in_dim)));
        fill_uniform(h.w2, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    } else {
        h.w1 = Matrix(out_dim, in_dim);
        h.b1 = Vector(out_dim, 0.0);
        fill_uniform(h.w1, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    }
    return h;
}

}  // namespace

ModelParams init_params(std::size_t feature_dim, std::size_t attr_dim,
                        std::vector<std::string> class_ids, const Hyperparams& hp,
                        std::uint64_t seed) {
    hp.validate();
    if (feature_dim == 0 || attr_dim == 0 || class_ids.empty()) {
        throw std::invalid_argument("init_params: empty dimensions or class list");
    }
    rng::Engine eng(rng::derive_seed(seed, "init"));
    ModelParams p;
    p.class_ids = std::move(class_ids);
    p.visual_head = init_head(feature_dim, static_cast<std::size_t>(hp.proto_dim),
                              hp.hidden_dim, eng);
    p.semantic_head = init_head(feature_dim, attr_dim, hp.hidden_dim, eng);
    p.visual_prototypes =
        Matrix(p.class_ids.size(), static_cast<std::size_t>(hp.proto_dim));
    for (double& v : p.visual_prototypes.values()) v = eng.uniform01();
    return p;
}

}  // namespace protogate
