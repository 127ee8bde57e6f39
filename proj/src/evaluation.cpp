#include "protogate/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "protogate/errors.hpp"

namespace protogate {

void GridSpec::validate() const {
    if (!(threshold_step > 0.0)) throw ConfigError("threshold_step must be > 0");
    if (threshold_stop < threshold_start) {
        throw ConfigError("threshold_stop must be >= threshold_start");
    }
    if (lambda_candidates.empty()) throw ConfigError("lambda_candidates is empty");
    if (proto_dim_candidates.empty()) throw ConfigError("proto_dim_candidates is empty");
    for (int t : proto_dim_candidates) {
        if (t < 1) throw ConfigError("proto_dim candidates must be >= 1");
    }
    for (double l : lambda_candidates) {
        if (!(l >= 0.0)) throw ConfigError("lambda candidates must be >= 0");
    }
}

std::vector<double> GridSpec::thresholds() const {
    validate();
    // Inclusive arithmetic sequence; the epsilon absorbs accumulated
    // representation error at the stop end (0.02 / 2e-6 is not exact).
    const double span = threshold_stop - threshold_start;
    const std::size_t count = static_cast<std::size_t>(std::floor(span / threshold_step + 1e-9)) + 1;
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        out[k] = threshold_start + static_cast<double>(k) * threshold_step;
    }
    return out;
}

double harmonic_mean(double a, double b) {
    if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0)) {
        throw std::invalid_argument("harmonic_mean: arguments must lie in [0, 1]");
    }
    if (a + b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

GateCache build_gate_cache(const Dataset& ds, std::span<const std::size_t> indices,
                           const ModelParams& params, const Hyperparams& hp,
                           const GateContext& ctx, kernels::Backend backend) {
    if (indices.empty()) throw ConfigError("evaluation index list is empty");
    for (std::size_t idx : indices) {
        if (idx >= ds.num_instances()) throw ConfigError("evaluation index out of range");
    }
    const kernels::BatchView batch{ds.features, indices, {}};
    const std::vector<kernels::GateRecord> records =
        kernels::batch_gate(params, hp, ctx.candidate_attrs, ctx.metric, batch, backend);

    GateCache cache;
    cache.true_class.reserve(indices.size());
    cache.entropy.reserve(indices.size());
    cache.seen_pred.reserve(indices.size());
    cache.unseen_pred.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        cache.true_class.push_back(ds.labels[indices[i]]);
        cache.entropy.push_back(records[i].entropy);
        const auto& id = params.class_ids[static_cast<std::size_t>(records[i].seen_index)];
        cache.seen_pred.push_back(ds.class_index_of(id));
        if (records[i].unseen_index >= 0) {
            cache.unseen_pred.push_back(
                ds.class_index_of(ctx.candidate_ids[static_cast<std::size_t>(records[i].unseen_index)]));
        } else {
            cache.unseen_pred.push_back(-1);
        }
    }
    for (const auto& id : params.class_ids) cache.seen_class_list.push_back(ds.class_index_of(id));
    for (const auto& id : ctx.candidate_ids) {
        cache.unseen_class_list.push_back(ds.class_index_of(id));
    }
    return cache;
}

namespace {

struct PerClassAccuracy {
    double macro = 0.0;
    bool present = false;
};

/// Per-class (macro) mean of `correct/total` over the classes in `classes`
/// that actually appear among the instances.
template <typename IsCorrect>
PerClassAccuracy macro_accuracy(std::span<const int> true_class,
                                std::span<const int> class_list, IsCorrect&& is_correct) {
    double acc_sum = 0.0;
    std::size_t classes_present = 0;
    for (int cls : class_list) {
        std::size_t total = 0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < true_class.size(); ++i) {
            if (true_class[i] != cls) continue;
            ++total;
            if (is_correct(i)) ++correct;
        }
        if (total == 0) continue;
        acc_sum += static_cast<double>(correct) / static_cast<double>(total);
        ++classes_present;
    }
    PerClassAccuracy out;
    if (classes_present > 0) {
        out.macro = acc_sum / static_cast<double>(classes_present);
        out.present = true;
    }
    return out;
}

}  // namespace

GzslMetrics gzsl_metrics_at(const GateCache& cache, double delta_g) {
    const auto seen_side =
        macro_accuracy(cache.true_class, cache.seen_class_list, [&](std::size_t i) {
            return cache.entropy[i] < delta_g && cache.seen_pred[i] == cache.true_class[i];
        });
    const auto unseen_side =
        macro_accuracy(cache.true_class, cache.unseen_class_list, [&](std::size_t i) {
            return !(cache.entropy[i] < delta_g) && cache.unseen_pred[i] == cache.true_class[i];
        });
    GzslMetrics m;
    m.tr = seen_side.macro;
    m.ts = unseen_side.macro;
    m.seen_present = seen_side.present;
    m.unseen_present = unseen_side.present;
    m.h = (m.seen_present && m.unseen_present) ? harmonic_mean(m.ts, m.tr) : 0.0;
    return m;
}

GosrMetrics gosr_metrics_at(const GateCache& cache, double delta_o) {
    const auto known_side =
        macro_accuracy(cache.true_class, cache.seen_class_list, [&](std::size_t i) {
            return cache.entropy[i] < delta_o && cache.seen_pred[i] == cache.true_class[i];
        });
    GosrMetrics m;
    m.known_acc = known_side.macro;
    m.known_present = known_side.present;
    // Unknown side is a plain fraction: every unknown-class instance counts
    // once, rejected or not.
    std::size_t unknown_total = 0;
    std::size_t unknown_rejected = 0;
    for (std::size_t i = 0; i < cache.true_class.size(); ++i) {
        const bool is_unknown_class =
            std::find(cache.unseen_class_list.begin(), cache.unseen_class_list.end(),
                      cache.true_class[i]) != cache.unseen_class_list.end();
        if (!is_unknown_class) continue;
        ++unknown_total;
        if (!(cache.entropy[i] < delta_o)) ++unknown_rejected;
    }
    if (unknown_total > 0) {
        m.unknown_rej = static_cast<double>(unknown_rejected) / static_cast<double>(unknown_total);
        m.unknown_present = true;
    }
    m.h = (m.known_present && m.unknown_present) ? harmonic_mean(m.known_acc, m.unknown_rej) : 0.0;
    return m;
}

namespace {

GateCache cache_for_eval(const Dataset& ds, std::span<const std::size_t> test_indices,
                         const ModelParams& params, const Hyperparams& hp,
                         kernels::MatchMetric metric, kernels::Backend backend) {
    const auto unseen = ds.unseen_ids();
    const GateContext ctx = make_gate_context(ds.attr_table, unseen, metric);
    return build_gate_cache(ds, test_indices, params, hp, ctx, backend);
}

}  // namespace

GzslMetrics eval_gzsl(const Dataset& ds, std::span<const std::size_t> test_indices,
                      const ModelParams& params, const Hyperparams& hp, double delta_g,
                      kernels::MatchMetric metric, kernels::Backend backend) {
    return gzsl_metrics_at(cache_for_eval(ds, test_indices, params, hp, metric, backend), delta_g);
}

GosrMetrics eval_gosr(const Dataset& ds, std::span<const std::size_t> test_indices,
                      const ModelParams& params, const Hyperparams& hp, double delta_o,
                      kernels::MatchMetric metric, kernels::Backend backend) {
    return gosr_metrics_at(cache_for_eval(ds, test_indices, params, hp, metric, backend), delta_o);
}

namespace {

/// Adapts external predictions to the cache shape so the metric code path
/// is shared with the sweeping evaluators.
GateCache cache_from_predictions(const Dataset& ds, std::span<const std::size_t> indices,
                                 std::span<const GatedPrediction> preds, bool open_set) {
    if (indices.size() != preds.size()) {
        throw std::invalid_argument("prediction count does not match index count");
    }
    GateCache cache;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        cache.true_class.push_back(ds.labels[indices[i]]);
        const auto& p = preds[i];
        const int label_idx = p.label ? ds.class_index_of(*p.label) : -1;
        if (p.domain == Domain::seen) {
            cache.entropy.push_back(0.0);  // below any positive threshold
            cache.seen_pred.push_back(label_idx);
            cache.unseen_pred.push_back(-1);
        } else {
            cache.entropy.push_back(std::numeric_limits<double>::infinity());
            cache.seen_pred.push_back(-1);
            cache.unseen_pred.push_back(open_set ? -1 : label_idx);
        }
    }
    for (std::size_t c = 0; c < ds.class_ids.size(); ++c) {
        if (c < ds.num_seen) {
            cache.seen_class_list.push_back(static_cast<int>(c));
        } else {
            cache.unseen_class_list.push_back(static_cast<int>(c));
        }
    }
    return cache;
}

}  // namespace

GzslMetrics gzsl_metrics_from_predictions(const Dataset& ds,
                                          std::span<const std::size_t> indices,
                                          std::span<const GatedPrediction> preds) {
    return gzsl_metrics_at(cache_from_predictions(ds, indices, preds, false), 1.0);
}

GosrMetrics gosr_metrics_from_predictions(const Dataset& ds,
                                          std::span<const std::size_t> indices,
                                          std::span<const GatedPrediction> preds) {
    return gosr_metrics_at(cache_from_predictions(ds, indices, preds, true), 1.0);
}

GridResult grid_search(const Dataset& ds, std::span<const std::size_t> fitting_indices,
                       std::span<const std::size_t> gzsl_val_indices,
                       std::span<const std::string> val_seen_classes,
                       const Hyperparams& hp_base, const GridSpec& grid, const TrainConfig& tc,
                       Objective objective, kernels::MatchMetric metric) {
    grid.validate();
    if (fitting_indices.empty()) throw ConfigError("fitting index list is empty");
    if (gzsl_val_indices.empty()) throw ConfigError("validation index list is empty");
    if (val_seen_classes.empty()) throw ConfigError("validation class set is empty");

    std::vector<double> lambdas(grid.lambda_candidates);
    std::sort(lambdas.begin(), lambdas.end());
    lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
    std::vector<int> dims(grid.proto_dim_candidates);
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    const std::vector<double> thresholds = grid.thresholds();

    const GateContext ctx = make_gate_context(ds.attr_table, val_seen_classes, metric);

    struct Cell {
        double lambda;
        int proto_dim;
        std::vector<GridRow> rows;
    };
    std::vector<Cell> cells;
    for (double lambda : lambdas) {
        for (int dim : dims) cells.push_back({lambda, dim, {}});
    }

    // Cells are independent: each trains its own model, deterministically
    // seeded, and sweeps thresholds from one cached forward pass. A cell
    // whose training diverges (large lambda can blow up at a fixed
    // learning rate) scores zero instead of aborting the whole search;
    // divergence at one grid point is information, not a search failure.
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(cells.size()); ++ci) {
        Cell& cell = cells[static_cast<std::size_t>(ci)];
        Hyperparams hp = hp_base;
        hp.lambda_pl = cell.lambda;
        hp.proto_dim = cell.proto_dim;
        cell.rows.resize(thresholds.size());
        for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
            cell.rows[ti] = GridRow{cell.lambda, cell.proto_dim, thresholds[ti], 0.0, 0.0, 0.0};
        }
        try {
            auto [params, report] = train(ds, fitting_indices, hp, tc);
            const GateCache cache = build_gate_cache(ds, gzsl_val_indices, params, hp, ctx,
                                                     tc.backend);
            for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
                GridRow& row = cell.rows[ti];
                if (objective == Objective::gzsl_h) {
                    const GzslMetrics m = gzsl_metrics_at(cache, thresholds[ti]);
                    row.side_a = m.ts;
                    row.side_b = m.tr;
                    row.h = m.h;
                } else {
                    const GosrMetrics m = gosr_metrics_at(cache, thresholds[ti]);
                    row.side_a = m.known_acc;
                    row.side_b = m.unknown_rej;
                    row.h = m.h;
                }
            }
        } catch (const NumericError& e) {
            std::fprintf(stderr, "grid cell lambda=%g proto_dim=%d diverged: %s\n", cell.lambda,
                         cell.proto_dim, e.what());
        }
    }

    GridResult result;
    result.table.reserve(cells.size() * thresholds.size());
    bool first = true;
    for (const Cell& cell : cells) {
        for (const GridRow& row : cell.rows) {
            result.table.push_back(row);
            // Strict > keeps the first best: cells and thresholds are
            // iterated ascending, so ties resolve toward smaller lambda,
            // then proto_dim, then threshold.
            if (first || row.h > result.best_score) {
                result.best_score = row.h;
                result.best_row = row;
                first = false;
            }
        }
    }
    result.best_hp = hp_base;
    result.best_hp.lambda_pl = result.best_row.lambda;
    result.best_hp.proto_dim = result.best_row.proto_dim;
    if (objective == Objective::gzsl_h) {
        result.best_thresholds.delta_g = result.best_row.threshold;
    } else {
        result.best_thresholds.delta_o = result.best_row.threshold;
    }
    return result;
}

void write_score_table(const std::filesystem::path& path, const std::vector<GridRow>& table,
                       Objective objective, const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path.string());
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << (objective == Objective::gzsl_h ? "lambda,proto_dim,threshold,ts,tr,h"
                                           : "lambda,proto_dim,threshold,known_acc,unknown_rej,h")
        << '\n';
    auto fmt = [](double v) {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        return std::string(buf, ptr);
    };
    for (const GridRow& row : table) {
        out << fmt(row.lambda) << ',' << row.proto_dim << ',' << fmt(row.threshold) << ','
            << fmt(row.side_a) << ',' << fmt(row.side_b) << ',' << fmt(row.h) << '\n';
    }
}

}  // namespace protogate
