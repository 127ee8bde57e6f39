#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protogate/dataset.hpp"
#include "protogate/inference.hpp"
#include "protogate/kernels.hpp"
#include "protogate/trainer.hpp"

namespace protogate {

/// Generalized zero-shot metrics: per-class mean accuracy over unseen (ts)
/// and seen (tr) classes and their harmonic mean. A side with no test
/// instances is marked absent and forces h = 0.
struct GzslMetrics {
    double ts = 0.0;
    double tr = 0.0;
    double h = 0.0;
    bool seen_present = false;
    bool unseen_present = false;
};

/// Open-set metrics: per-class mean accuracy over known classes, fraction
/// of unknown-class instances rejected, and their harmonic mean.
struct GosrMetrics {
    double known_acc = 0.0;
    double unknown_rej = 0.0;
    double h = 0.0;
    bool known_present = false;
    bool unknown_present = false;
};

struct GridSpec {
    double threshold_start = 0.0;
    double threshold_step = 2e-6;
    double threshold_stop = 0.02;
    std::vector<double> lambda_candidates = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
    std::vector<int> proto_dim_candidates = {32, 50, 64, 85, 102, 128, 200, 256, 312, 512, 717};

    void validate() const;
    std::vector<double> thresholds() const;
};

enum class Objective { gzsl_h, gosr_h };

/// 2ab/(a+b), defined as 0 when a + b = 0. Arguments must lie in [0,1].
double harmonic_mean(double a, double b);

/// Per-instance gate outcomes cached once per model; threshold sweeps then
/// cost one comparison per instance instead of a fresh forward pass.
struct GateCache {
    std::vector<int> true_class;        // canonical dataset class index
    std::vector<double> entropy;
    std::vector<int> seen_pred;         // canonical index of nearest seen prototype
    std::vector<int> unseen_pred;       // canonical index of nearest candidate, -1 if none
    std::vector<int> seen_class_list;   // canonical indices covered by the model
    std::vector<int> unseen_class_list; // canonical indices of the candidates
};

GateCache build_gate_cache(const Dataset& ds, std::span<const std::size_t> indices,
                           const ModelParams& params, const Hyperparams& hp,
                           const GateContext& ctx,
                           kernels::Backend backend = kernels::Backend::parallel);

/// Metrics at a threshold, computed from a cache. eval_gzsl/eval_gosr use
/// the same code path, so swept and fresh metrics agree bit-for-bit.
GzslMetrics gzsl_metrics_at(const GateCache& cache, double delta_g);
GosrMetrics gosr_metrics_at(const GateCache& cache, double delta_o);

GzslMetrics eval_gzsl(const Dataset& ds, std::span<const std::size_t> test_indices,
                      const ModelParams& params, const Hyperparams& hp, double delta_g,
                      kernels::MatchMetric metric = kernels::MatchMetric::sq_euclidean,
                      kernels::Backend backend = kernels::Backend::parallel);
GosrMetrics eval_gosr(const Dataset& ds, std::span<const std::size_t> test_indices,
                      const ModelParams& params, const Hyperparams& hp, double delta_o,
                      kernels::MatchMetric metric = kernels::MatchMetric::sq_euclidean,
                      kernels::Backend backend = kernels::Backend::parallel);

/// Metrics from externally produced predictions (ordered like `indices`).
GzslMetrics gzsl_metrics_from_predictions(const Dataset& ds,
                                          std::span<const std::size_t> indices,
                                          std::span<const GatedPrediction> preds);
GosrMetrics gosr_metrics_from_predictions(const Dataset& ds,
                                          std::span<const std::size_t> indices,
                                          std::span<const GatedPrediction> preds);

struct GridRow {
    double lambda = 0.0;
    int proto_dim = 0;
    double threshold = 0.0;
    double side_a = 0.0;  // ts or known_acc
    double side_b = 0.0;  // tr or unknown_rej
    double h = 0.0;
};

struct GridResult {
    Hyperparams best_hp;
    Thresholds best_thresholds;
    double best_score = 0.0;
    GridRow best_row;
    std::vector<GridRow> table;
};

/// Trains one model per (lambda, proto_dim) cell on the fitting slice, then
/// sweeps the threshold grid on the validation slice with val_seen_classes
/// playing the unseen/unknown role. One forward pass per model; thresholds
/// reuse cached entropies. Ties break toward smaller lambda, then smaller
/// proto_dim, then smaller threshold. The test split never enters here.
GridResult grid_search(const Dataset& ds, std::span<const std::size_t> fitting_indices,
                       std::span<const std::size_t> gzsl_val_indices,
                       std::span<const std::string> val_seen_classes,
                       const Hyperparams& hp_base, const GridSpec& grid, const TrainConfig& tc,
                       Objective objective,
                       kernels::MatchMetric metric = kernels::MatchMetric::sq_euclidean);

/// CSV: lambda, proto_dim, threshold, then the objective's three metric
/// columns. `header_comment` lines are prefixed with '#'.
void write_score_table(const std::filesystem::path& path, const std::vector<GridRow>& table,
                       Objective objective, const std::string& header_comment = "");

}  // namespace protogate
