// Synthetic benchmark generator. Geometry:
//   - seen-class centers sit on `separation`-scaled orthonormal feature
//     directions q_k,
//   - each unseen-class center is a scaled centroid of a small parent set
//     of seen directions (triples when possible, pairs otherwise), placed
//     exactly `separation` away from every parent. Being equidistant from
//     several trained prototypes keeps its seen-class probabilities
//     ambiguous, so its entropy stays well above that of seen instances;
//     triples are preferred because a noisy instance must break all the
//     near-ties at once to sneak under the gate,
//   - attributes repeat the same construction on orthonormal directions
//     p_k in attribute space (same parent sets, same scale), so attribute
//     geometry mirrors center geometry exactly and the feature-to-attribute
//     map is a linear isometry between the two spans, realizable by an
//     affine head. When attr_dim < seen_classes an exact mirror cannot
//     exist; random unit directions stand in and the correlation becomes
//     approximate.
// No two class centers are closer than `separation` (up to rounding).

#include <cmath>
#include <string>
#include <vector>

#include "protogate/dataset.hpp"
#include "protogate/errors.hpp"
#include "protogate/rng.hpp"

namespace protogate {

namespace {

/// Random orthonormal set via modified Gram-Schmidt; falls back to plain
/// unit vectors once `count` exceeds `dim`.
std::vector<Vector> spread_directions(rng::Engine& eng, std::size_t dim, std::size_t count) {
    std::vector<Vector> q;
    q.reserve(count);
    while (q.size() < count) {
        Vector v(dim);
        for (double& x : v) x = eng.normal();
        if (q.size() < dim) {
            for (const Vector& prev : q) {
                double dot = 0.0;
                for (std::size_t i = 0; i < dim; ++i) dot += prev[i] * v[i];
                for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * prev[i];
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;  // essentially impossible; redraw
        for (double& x : v) x /= norm;
        q.push_back(std::move(v));
    }
    return q;
}

using ParentSet = std::vector<std::size_t>;

/// Parent sets for the unseen classes: greedily picked triples sharing at
/// most one class pairwise (keeps unseen centers >= separation apart),
/// topped up with unused pairs. Deterministic given the engine state.
std::vector<ParentSet> choose_parent_sets(rng::Engine& eng, std::size_t n_seen,
                                          std::size_t n_unseen) {
    std::vector<ParentSet> chosen;
    std::vector<std::vector<bool>> edge_used(n_seen, std::vector<bool>(n_seen, false));

    if (n_seen >= 3) {
        std::vector<ParentSet> triples;
        for (std::size_t i = 0; i < n_seen; ++i) {
            for (std::size_t j = i + 1; j < n_seen; ++j) {
                for (std::size_t k = j + 1; k < n_seen; ++k) triples.push_back({i, j, k});
            }
        }
        const std::vector<std::size_t> perm = rng::permutation(eng, triples.size());
        for (std::size_t pi = 0; pi < triples.size() && chosen.size() < n_unseen; ++pi) {
            const ParentSet& t = triples[perm[pi]];
            // Sharing an edge with an earlier triple would put two unseen
            // centers closer than the separation floor.
            if (edge_used[t[0]][t[1]] || edge_used[t[0]][t[2]] || edge_used[t[1]][t[2]]) continue;
            edge_used[t[0]][t[1]] = edge_used[t[0]][t[2]] = edge_used[t[1]][t[2]] = true;
            chosen.push_back(t);
        }
    }
    if (chosen.size() < n_unseen) {
        std::vector<ParentSet> pairs;
        for (std::size_t i = 0; i < n_seen; ++i) {
            for (std::size_t j = i + 1; j < n_seen; ++j) {
                if (!edge_used[i][j]) pairs.push_back({i, j});
            }
        }
        const std::vector<std::size_t> perm = rng::permutation(eng, pairs.size());
        for (std::size_t pi = 0; pi < pairs.size() && chosen.size() < n_unseen; ++pi) {
            const ParentSet& p = pairs[perm[pi]];
            edge_used[p[0]][p[1]] = true;
            chosen.push_back(p);
        }
    }
    if (chosen.size() < n_unseen) {
        throw ConfigError("synthetic config: too many unseen classes for " +
                          std::to_string(n_seen) + " seen classes");
    }
    return chosen;
}

/// Seen point k = scale * dirs[k]; unseen point = scale * alpha * centroid
/// of its parents with alpha = 2, which lands exactly `scale` away from
/// every parent for both pairs and triples.
std::vector<Vector> build_points(const std::vector<Vector>& dirs,
                                 const std::vector<ParentSet>& parent_sets, std::size_t n_seen,
                                 double scale, std::size_t dim) {
    std::vector<Vector> pts;
    pts.reserve(n_seen + parent_sets.size());
    for (std::size_t k = 0; k < n_seen; ++k) {
        Vector c(dim);
        for (std::size_t i = 0; i < dim; ++i) c[i] = scale * dirs[k][i];
        pts.push_back(std::move(c));
    }
    for (const ParentSet& parents : parent_sets) {
        const double coeff = 2.0 * scale / static_cast<double>(parents.size());
        Vector c(dim, 0.0);
        for (std::size_t p : parents) {
            for (std::size_t i = 0; i < dim; ++i) c[i] += coeff * dirs[p][i];
        }
        pts.push_back(std::move(c));
    }
    return pts;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    const auto positive = [](int v, const char* field) {
        if (v <= 0) {
            throw ConfigError(std::string("synthetic config: ") + field + " must be positive");
        }
    };
    positive(config.seen_classes, "seen_classes");
    positive(config.unseen_classes, "unseen_classes");
    positive(config.instances_per_class, "instances_per_class");
    positive(config.feature_dim, "feature_dim");
    positive(config.attr_dim, "attr_dim");
    if (!(config.sigma >= 0.0)) throw ConfigError("synthetic config: sigma must be >= 0");
    if (!(config.separation > 0.0)) throw ConfigError("synthetic config: separation must be > 0");
    if (config.seen_classes < 2) {
        throw ConfigError("synthetic config: unseen centers need at least two seen classes");
    }
    const std::size_t n_seen = static_cast<std::size_t>(config.seen_classes);
    const std::size_t n_unseen = static_cast<std::size_t>(config.unseen_classes);
    const std::size_t d = static_cast<std::size_t>(config.feature_dim);
    const std::size_t a = static_cast<std::size_t>(config.attr_dim);
    if (d < n_seen) {
        throw ConfigError("synthetic config: feature_dim must be at least seen_classes");
    }

    rng::Engine eng(rng::derive_seed(seed, "synth"));
    const std::vector<Vector> feat_dirs = spread_directions(eng, d, n_seen);
    const std::vector<Vector> attr_dirs = spread_directions(eng, a, n_seen);
    const std::vector<ParentSet> parent_sets = choose_parent_sets(eng, n_seen, n_unseen);

    const std::vector<Vector> centers =
        build_points(feat_dirs, parent_sets, n_seen, config.separation, d);
    const std::vector<Vector> attr_rows =
        build_points(attr_dirs, parent_sets, n_seen, config.separation, a);

    Dataset ds;
    for (std::size_t k = 0; k < n_seen; ++k) ds.class_ids.push_back("s" + std::to_string(k));
    for (std::size_t u = 0; u < n_unseen; ++u) ds.class_ids.push_back("u" + std::to_string(u));
    ds.num_seen = n_seen;

    ds.attr_table.class_ids = ds.class_ids;
    ds.attr_table.attributes = Matrix(attr_rows.size(), a);
    for (std::size_t k = 0; k < attr_rows.size(); ++k) {
        std::copy(attr_rows[k].begin(), attr_rows[k].end(),
                  ds.attr_table.attributes.row(k).begin());
    }
    for (std::size_t i = 0; i < attr_rows.size(); ++i) {
        for (std::size_t j = i + 1; j < attr_rows.size(); ++j) {
            double dist = 0.0;
            for (std::size_t r = 0; r < a; ++r) {
                const double diff = ds.attr_table.attributes(i, r) - ds.attr_table.attributes(j, r);
                dist += diff * diff;
            }
            if (dist == 0.0) {
                throw NumericError("synthetic generator produced identical attribute rows");
            }
        }
    }

    const std::size_t per_class = static_cast<std::size_t>(config.instances_per_class);
    const std::size_t n = centers.size() * per_class;
    ds.features = Matrix(n, d);
    ds.labels.reserve(n);
    std::size_t row = 0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            for (std::size_t c = 0; c < d; ++c) {
                ds.features(row, c) = centers[k][c] + config.sigma * eng.normal();
            }
            ds.labels.push_back(static_cast<int>(k));
        }
    }

    for (std::size_t i = 0; i < a; ++i) ds.attr_names.push_back("a" + std::to_string(i));
    ds.validate();
    return ds;
}

}  // namespace protogate
