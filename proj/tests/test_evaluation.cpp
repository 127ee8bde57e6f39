#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "protogate/errors.hpp"
#include "protogate/evaluation.hpp"
#include "protogate/rng.hpp"

using namespace protogate;

TEST_CASE("harmonic_mean reproduces the published score arithmetic") {
    // 52.6 / 62.1 -> 57.0 and 60.4 / 75.1 -> 67.0, within 0.1 pp.
    CHECK(std::abs(harmonic_mean(0.526, 0.621) - 0.570) < 0.001);
    CHECK(std::abs(harmonic_mean(0.604, 0.751) - 0.670) < 0.001);
}

TEST_CASE("harmonic_mean properties") {
    CHECK(harmonic_mean(0.3, 0.3) == 0.3);
    CHECK(harmonic_mean(0.0, 0.9) == 0.0);
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
    CHECK_THROWS_AS(harmonic_mean(-0.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(harmonic_mean(0.5, 1.5), std::invalid_argument);

    rng::Engine eng(1);
    for (int it = 0; it < 500; ++it) {
        const double a = eng.uniform01();
        const double b = eng.uniform01();
        const double h = harmonic_mean(a, b);
        CHECK(h == harmonic_mean(b, a));
        CHECK(h <= std::sqrt(a * b) + 1e-12);
        CHECK(std::sqrt(a * b) <= (a + b) / 2.0 + 1e-12);
        CHECK(h <= 2.0 * std::min(a, b) + 1e-12);
    }
}

namespace {

/// 2 seen + 2 unseen classes with hand-set attribute rows.
Dataset stub_dataset(std::vector<int> labels) {
    Dataset ds;
    ds.class_ids = {"s0", "s1", "u0", "u1"};
    ds.num_seen = 2;
    ds.labels = std::move(labels);
    ds.features = Matrix(ds.labels.size(), 1);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.features(i, 0) = 0.1;
    ds.attr_table.class_ids = ds.class_ids;
    ds.attr_table.attributes =
        Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}});
    ds.attr_names = {"a0", "a1"};
    return ds;
}

GatedPrediction oracle_prediction(const Dataset& ds, std::size_t idx) {
    GatedPrediction p;
    const int cls = ds.labels[idx];
    p.label = ds.class_ids[static_cast<std::size_t>(cls)];
    p.domain = ds.is_seen_class(cls) ? Domain::seen : Domain::unseen;
    return p;
}

}  // namespace

TEST_CASE("oracle predictions give perfect gzsl metrics") {
    const Dataset ds = stub_dataset({0, 0, 1, 1, 2, 2, 3, 3});
    std::vector<std::size_t> idx(ds.num_instances());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<GatedPrediction> preds;
    for (std::size_t i : idx) preds.push_back(oracle_prediction(ds, i));
    const GzslMetrics m = gzsl_metrics_from_predictions(ds, idx, preds);
    CHECK(m.ts == 1.0);
    CHECK(m.tr == 1.0);
    CHECK(m.h == 1.0);
    CHECK(m.seen_present);
    CHECK(m.unseen_present);
}

TEST_CASE("routing everything to seen zeroes ts and h") {
    const Dataset ds = stub_dataset({0, 0, 1, 1, 2, 2, 3, 3});
    std::vector<std::size_t> idx(ds.num_instances());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<GatedPrediction> preds;
    for (std::size_t i : idx) {
        GatedPrediction p;
        p.domain = Domain::seen;
        p.label = ds.class_ids[static_cast<std::size_t>(ds.labels[i] % 2)];
        preds.push_back(p);
    }
    const GzslMetrics m = gzsl_metrics_from_predictions(ds, idx, preds);
    CHECK(m.ts == 0.0);
    CHECK(m.h == 0.0);
    CHECK(m.tr == 1.0);  // the seen half was labeled correctly above
}

TEST_CASE("gosr stubs: reject-everything and oracle") {
    const Dataset ds = stub_dataset({0, 0, 1, 1, 2, 2, 3, 3});
    std::vector<std::size_t> idx(ds.num_instances());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    std::vector<GatedPrediction> reject_all(idx.size());
    for (auto& p : reject_all) p.domain = Domain::unknown;
    const GosrMetrics rejected = gosr_metrics_from_predictions(ds, idx, reject_all);
    CHECK(rejected.known_acc == 0.0);
    CHECK(rejected.unknown_rej == 1.0);
    CHECK(rejected.h == 0.0);

    std::vector<GatedPrediction> oracle;
    for (std::size_t i : idx) {
        GatedPrediction p = oracle_prediction(ds, i);
        if (p.domain == Domain::unseen) {
            p.domain = Domain::unknown;
            p.label.reset();
        }
        oracle.push_back(p);
    }
    const GosrMetrics perfect = gosr_metrics_from_predictions(ds, idx, oracle);
    CHECK(perfect.known_acc == 1.0);
    CHECK(perfect.unknown_rej == 1.0);
    CHECK(perfect.h == 1.0);
}

TEST_CASE("a split with one side missing is flagged and h is zero") {
    const Dataset ds = stub_dataset({0, 0, 1, 1, 2, 2, 3, 3});
    const std::vector<std::size_t> seen_only = {0, 1, 2, 3};
    std::vector<GatedPrediction> preds;
    for (std::size_t i : seen_only) preds.push_back(oracle_prediction(ds, i));
    const GzslMetrics m = gzsl_metrics_from_predictions(ds, seen_only, preds);
    CHECK(m.seen_present);
    CHECK(!m.unseen_present);
    CHECK(m.h == 0.0);
}

TEST_CASE("duplicating every instance of one class changes neither ts nor tr") {
    const Dataset base = stub_dataset({0, 0, 1, 1, 2, 2, 3, 3});
    // Imbalance: repeat class s0's instances five more times.
    std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    const Dataset fat = stub_dataset(labels);

    // A deliberately imperfect predictor: s0 instances alternate correct /
    // wrong; everything else is oracle. Macro averaging must be identical.
    auto build = [](const Dataset& ds) {
        std::vector<std::size_t> idx(ds.num_instances());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::vector<GatedPrediction> preds;
        int s0_counter = 0;
        for (std::size_t i : idx) {
            GatedPrediction p = oracle_prediction(ds, i);
            if (ds.labels[i] == 0 && (s0_counter++ % 2 == 1)) p.label = "s1";
            preds.push_back(p);
        }
        return gzsl_metrics_from_predictions(ds, idx, preds);
    };
    const GzslMetrics a = build(base);
    const GzslMetrics b = build(fat);
    CHECK(a.tr == b.tr);
    CHECK(a.ts == b.ts);
}

namespace {

struct TrainedFixture {
    Dataset ds;
    SplitSpec split;
    Hyperparams hp;
    TrainConfig tc;
    ModelParams params;

    TrainedFixture() {
        SyntheticConfig cfg;
        cfg.seen_classes = 6;
        cfg.unseen_classes = 3;
        cfg.instances_per_class = 30;
        cfg.feature_dim = 12;
        cfg.attr_dim = 6;
        cfg.sigma = 0.6;
        cfg.separation = 7.0;
        ds = generate_synthetic(cfg, 33);
        split = make_gzsl_val_split(ds, 1.0 / 3.0, 1.0 / 7.0, 33);
        hp.proto_dim = 8;
        hp.lambda_pl = 0.1;
        tc.epochs = 120;
        tc.batch_size = 32;
        tc.seed = 33;
        params = train(ds, split.train_indices, hp, tc).first;
    }
};

}  // namespace

TEST_CASE("cached threshold sweep equals fresh evaluation bit-for-bit") {
    const TrainedFixture fx;
    const auto unseen = fx.ds.unseen_ids();
    const GateContext ctx = make_gate_context(fx.ds.attr_table, unseen);
    const GateCache cache = build_gate_cache(fx.ds, fx.split.test_indices, fx.params, fx.hp, ctx);
    for (double delta : {0.0, 1e-4, 1e-2, 0.2, 1.0}) {
        const GzslMetrics swept = gzsl_metrics_at(cache, delta);
        const GzslMetrics fresh = eval_gzsl(fx.ds, fx.split.test_indices, fx.params, fx.hp, delta);
        CHECK(swept.ts == fresh.ts);
        CHECK(swept.tr == fresh.tr);
        CHECK(swept.h == fresh.h);
        const GosrMetrics swept_o = gosr_metrics_at(cache, delta);
        const GosrMetrics fresh_o = eval_gosr(fx.ds, fx.split.test_indices, fx.params, fx.hp,
                                              delta);
        CHECK(swept_o.known_acc == fresh_o.known_acc);
        CHECK(swept_o.unknown_rej == fresh_o.unknown_rej);
        CHECK(swept_o.h == fresh_o.h);
    }
}

TEST_CASE("eval metrics agree with the prediction-based path") {
    const TrainedFixture fx;
    const auto unseen = fx.ds.unseen_ids();
    const GateContext ctx = make_gate_context(fx.ds.attr_table, unseen);
    const double delta = 0.01;
    const auto preds = predict_gzsl_batch(fx.ds.features, fx.split.test_indices, fx.params, ctx,
                                          fx.hp, delta);
    const GzslMetrics via_preds =
        gzsl_metrics_from_predictions(fx.ds, fx.split.test_indices, preds);
    const GzslMetrics direct = eval_gzsl(fx.ds, fx.split.test_indices, fx.params, fx.hp, delta);
    CHECK(via_preds.ts == direct.ts);
    CHECK(via_preds.tr == direct.tr);
}

TEST_CASE("grid search: singleton grids, argmax contract, tie-breaking") {
    const TrainedFixture fx;
    GridSpec grid;
    grid.lambda_candidates = {0.1};
    grid.proto_dim_candidates = {6};
    grid.threshold_start = 0.0;
    grid.threshold_step = 0.01;
    grid.threshold_stop = 0.05;
    const GridResult res =
        grid_search(fx.ds, fx.split.fitting_indices, fx.split.gzsl_val_indices,
                    fx.split.val_seen_classes, fx.hp, grid, fx.tc, Objective::gzsl_h);
    CHECK(res.table.size() == 6);
    CHECK(res.best_hp.lambda_pl == 0.1);
    CHECK(res.best_hp.proto_dim == 6);
    double max_h = 0.0;
    for (const auto& row : res.table) max_h = std::max(max_h, row.h);
    CHECK(res.best_score == max_h);
    // First-best tie-breaking: no earlier row can match the best score.
    for (const auto& row : res.table) {
        if (row.h == res.best_score) {
            CHECK(row.threshold >= res.best_row.threshold);
            break;
        }
    }
}

TEST_CASE("grid search chosen threshold is near-optimal against a 10x finer sweep") {
    const TrainedFixture fx;
    GridSpec grid;
    grid.lambda_candidates = {0.1};
    grid.proto_dim_candidates = {8};
    grid.threshold_start = 0.0;
    grid.threshold_step = 0.002;
    grid.threshold_stop = 0.2;
    const TrainConfig tc = fx.tc;
    const GridResult coarse =
        grid_search(fx.ds, fx.split.fitting_indices, fx.split.gzsl_val_indices,
                    fx.split.val_seen_classes, fx.hp, grid, tc, Objective::gzsl_h);
    GridSpec fine = grid;
    fine.threshold_step = 0.0002;
    const GridResult refined =
        grid_search(fx.ds, fx.split.fitting_indices, fx.split.gzsl_val_indices,
                    fx.split.val_seen_classes, fx.hp, fine, tc, Objective::gzsl_h);
    CHECK(refined.best_score - coarse.best_score <= 0.02);
}

TEST_CASE("score table serialization") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "protogate_scores_test.csv";
    std::vector<GridRow> rows = {{0.1, 8, 0.004, 0.5, 0.75, 0.6}};
    write_score_table(path, rows, Objective::gzsl_h, "config echo");
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# config echo");
    std::getline(in, line);
    CHECK(line == "lambda,proto_dim,threshold,ts,tr,h");
    std::getline(in, line);
    CHECK(line == "0.1,8,0.004,0.5,0.75,0.6");
    fs::remove(path);
}

TEST_CASE("grid spec validation and threshold expansion") {
    GridSpec grid;
    CHECK(grid.thresholds().size() == 10001);  // [0 : 2e-6 : 0.02]
    CHECK(grid.thresholds().front() == 0.0);
    CHECK(std::abs(grid.thresholds().back() - 0.02) < 1e-12);
    grid.threshold_step = 0.0;
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.threshold_step = 2e-6;
    grid.lambda_candidates.clear();
    CHECK_THROWS_AS(grid.validate(), ConfigError);
}
