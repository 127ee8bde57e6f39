// protogate: train and run the entropy-gated prototype classifier.
//
// Subcommands: synthesize | split | train | gridsearch | eval | predict.
// Everything is driven by one JSON config; every artifact lands in the
// configured output directory and each command echoes its effective config
// there, so a run can be reproduced from its outputs alone.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "protogate/dataset.hpp"
#include "protogate/errors.hpp"
#include "protogate/evaluation.hpp"
#include "protogate/inference.hpp"
#include "protogate/model_io.hpp"
#include "protogate/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace protogate;

namespace {

struct RunConfig {
    std::uint64_t seed = 0;
    std::string mode = "gzsl";
    fs::path out_dir = "out";

    // dataset
    fs::path manifest;
    bool center_attrs = false;
    bool l2_normalize_attrs = false;
    std::string unseen_match = "sq_euclidean";

    SyntheticConfig synth;
    std::string synth_name = "synth";

    // split
    double val_class_fraction = 0.25;
    double holdout_fraction = 1.0 / 7.0;
    double test_fraction = 0.2;
    std::string split_file = "split.json";

    Hyperparams hp;
    TrainConfig tc;
    int checkpoint_every = 0;
    std::string train_on = "train";

    GridSpec grid;
    Thresholds thresholds;

    // file names under out_dir
    std::string checkpoint_file = "model.json";
    std::string log_file = "train_log.jsonl";
    std::string metrics_file = "metrics.json";
    std::string scores_file = "scores.csv";
    std::string best_config_file = "best_config.json";
    std::string predictions_file = "predictions.jsonl";
    std::string input_file;        // predict input (csv rows)
    std::string predictions_in;    // eval from an existing predictions file

    json raw;  // effective config, echoed into artifacts
};

json default_config_json() {
    RunConfig d;
    json j;
    j["seed"] = d.seed;
    j["mode"] = d.mode;
    j["out_dir"] = d.out_dir.string();
    j["dataset"] = {{"manifest", ""},
                    {"center_attributes", d.center_attrs},
                    {"l2_normalize_attributes", d.l2_normalize_attrs},
                    {"unseen_match", d.unseen_match}};
    j["synthetic"] = {{"seen_classes", d.synth.seen_classes},
                      {"unseen_classes", d.synth.unseen_classes},
                      {"instances_per_class", d.synth.instances_per_class},
                      {"feature_dim", d.synth.feature_dim},
                      {"attr_dim", d.synth.attr_dim},
                      {"sigma", d.synth.sigma},
                      {"separation", d.synth.separation},
                      {"name", d.synth_name}};
    j["split"] = {{"val_class_fraction", d.val_class_fraction},
                  {"holdout_fraction", d.holdout_fraction},
                  {"test_fraction", d.test_fraction},
                  {"file", d.split_file}};
    j["model"] = {{"gamma", d.hp.gamma},
                  {"lambda_pl", d.hp.lambda_pl},
                  {"proto_dim", d.hp.proto_dim},
                  {"hidden_dim", d.hp.hidden_dim},
                  {"semantic_weight", d.hp.semantic_weight}};
    j["train"] = {{"learning_rate", d.tc.learning_rate},
                  {"momentum", d.tc.momentum},
                  {"epochs", d.tc.epochs},
                  {"batch_size", d.tc.batch_size},
                  {"log_every", d.tc.log_every},
                  {"checkpoint_every", d.checkpoint_every},
                  {"train_on", d.train_on}};
    j["grid"] = {{"threshold_start", d.grid.threshold_start},
                 {"threshold_step", d.grid.threshold_step},
                 {"threshold_stop", d.grid.threshold_stop},
                 {"lambda_candidates", d.grid.lambda_candidates},
                 {"proto_dim_candidates", d.grid.proto_dim_candidates}};
    j["thresholds"] = {{"delta_g", d.thresholds.delta_g}, {"delta_o", d.thresholds.delta_o}};
    j["files"] = {{"checkpoint", d.checkpoint_file},
                  {"log", d.log_file},
                  {"metrics", d.metrics_file},
                  {"scores", d.scores_file},
                  {"best_config", d.best_config_file},
                  {"predictions", d.predictions_file},
                  {"input", d.input_file},
                  {"predictions_in", d.predictions_in}};
    return j;
}

void merge_overlay(json& base, const json& overlay, const std::string& where) {
    for (const auto& [key, value] : overlay.items()) {
        if (!base.contains(key)) {
            throw ConfigError("unknown config key '" + where + key + "'");
        }
        if (value.is_object() && base[key].is_object()) {
            merge_overlay(base[key], value, where + key + ".");
        } else {
            base[key] = value;
        }
    }
}

/// "a.b.c=value" override; the value is parsed as JSON when possible and
/// treated as a string otherwise.
void apply_set(json& base, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key.path=value");
    const std::string path = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;
    }
    json* node = &base;
    std::size_t start = 0;
    std::vector<std::string> keys;
    while (true) {
        const auto dot = path.find('.', start);
        keys.push_back(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->contains(keys[i]) || !(*node)[keys[i]].is_object()) {
            throw ConfigError("unknown config key '" + path + "'");
        }
        node = &(*node)[keys[i]];
    }
    if (!node->contains(keys.back())) throw ConfigError("unknown config key '" + path + "'");
    (*node)[keys.back()] = parsed;
}

RunConfig materialize(const json& j) {
    RunConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.mode = j.at("mode").get<std::string>();
        if (c.mode != "gzsl" && c.mode != "gosr") {
            throw ConfigError("mode must be 'gzsl' or 'gosr'");
        }
        c.out_dir = j.at("out_dir").get<std::string>();
        const json& ds = j.at("dataset");
        c.manifest = ds.at("manifest").get<std::string>();
        c.center_attrs = ds.at("center_attributes").get<bool>();
        c.l2_normalize_attrs = ds.at("l2_normalize_attributes").get<bool>();
        c.unseen_match = ds.at("unseen_match").get<std::string>();
        if (c.unseen_match != "sq_euclidean" && c.unseen_match != "cosine") {
            throw ConfigError("dataset.unseen_match must be 'sq_euclidean' or 'cosine'");
        }
        const json& sy = j.at("synthetic");
        c.synth.seen_classes = sy.at("seen_classes").get<int>();
        c.synth.unseen_classes = sy.at("unseen_classes").get<int>();
        c.synth.instances_per_class = sy.at("instances_per_class").get<int>();
        c.synth.feature_dim = sy.at("feature_dim").get<int>();
        c.synth.attr_dim = sy.at("attr_dim").get<int>();
        c.synth.sigma = sy.at("sigma").get<double>();
        c.synth.separation = sy.at("separation").get<double>();
        c.synth_name = sy.at("name").get<std::string>();
        const json& sp = j.at("split");
        c.val_class_fraction = sp.at("val_class_fraction").get<double>();
        c.holdout_fraction = sp.at("holdout_fraction").get<double>();
        c.test_fraction = sp.at("test_fraction").get<double>();
        c.split_file = sp.at("file").get<std::string>();
        const json& mo = j.at("model");
        c.hp.gamma = mo.at("gamma").get<double>();
        c.hp.lambda_pl = mo.at("lambda_pl").get<double>();
        c.hp.proto_dim = mo.at("proto_dim").get<int>();
        c.hp.hidden_dim = mo.at("hidden_dim").get<int>();
        c.hp.semantic_weight = mo.at("semantic_weight").get<double>();
        const json& tr = j.at("train");
        c.tc.learning_rate = tr.at("learning_rate").get<double>();
        c.tc.momentum = tr.at("momentum").get<double>();
        c.tc.epochs = tr.at("epochs").get<int>();
        c.tc.batch_size = tr.at("batch_size").get<int>();
        c.tc.log_every = tr.at("log_every").get<int>();
        c.checkpoint_every = tr.at("checkpoint_every").get<int>();
        c.train_on = tr.at("train_on").get<std::string>();
        c.tc.seed = c.seed;
        const json& gr = j.at("grid");
        c.grid.threshold_start = gr.at("threshold_start").get<double>();
        c.grid.threshold_step = gr.at("threshold_step").get<double>();
        c.grid.threshold_stop = gr.at("threshold_stop").get<double>();
        c.grid.lambda_candidates = gr.at("lambda_candidates").get<std::vector<double>>();
        c.grid.proto_dim_candidates = gr.at("proto_dim_candidates").get<std::vector<int>>();
        const json& th = j.at("thresholds");
        c.thresholds.delta_g = th.at("delta_g").get<double>();
        c.thresholds.delta_o = th.at("delta_o").get<double>();
        const json& fi = j.at("files");
        c.checkpoint_file = fi.at("checkpoint").get<std::string>();
        c.log_file = fi.at("log").get<std::string>();
        c.metrics_file = fi.at("metrics").get<std::string>();
        c.scores_file = fi.at("scores").get<std::string>();
        c.best_config_file = fi.at("best_config").get<std::string>();
        c.predictions_file = fi.at("predictions").get<std::string>();
        c.input_file = fi.at("input").get<std::string>();
        c.predictions_in = fi.at("predictions_in").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.raw = j;
    return c;
}

fs::path out_path(const RunConfig& c, const std::string& name) { return c.out_dir / name; }

void echo_config(const RunConfig& c, const std::string& command) {
    fs::create_directories(c.out_dir);
    std::ofstream out(out_path(c, command + "_config.json"));
    out << c.raw.dump(2) << '\n';
}

kernels::MatchMetric metric_of(const RunConfig& c) {
    return c.unseen_match == "cosine" ? kernels::MatchMetric::cosine
                                      : kernels::MatchMetric::sq_euclidean;
}

Dataset load_configured_dataset(const RunConfig& c) {
    if (c.manifest.empty()) throw ConfigError("dataset.manifest is not set");
    Dataset ds = load_dataset(c.manifest);
    if (c.l2_normalize_attrs) ds = l2_normalize_attributes(ds);
    if (c.center_attrs && !ds.attr_table.centered) ds = center_attributes(ds);
    return ds;
}

int cmd_synthesize(const RunConfig& c) {
    const Dataset ds = generate_synthetic(c.synth, c.seed);
    fs::create_directories(c.out_dir);
    write_dataset(ds, c.out_dir, c.synth_name);
    echo_config(c, "synthesize");
    std::cout << (c.out_dir / (c.synth_name + "_manifest.json")).string() << "\n";
    return 0;
}

int cmd_split(const RunConfig& c) {
    const Dataset ds = load_configured_dataset(c);
    const SplitSpec split = make_gzsl_val_split(ds, c.val_class_fraction, c.holdout_fraction,
                                                c.seed, c.test_fraction);
    fs::create_directories(c.out_dir);
    save_split(split, out_path(c, c.split_file));
    echo_config(c, "split");
    std::cout << out_path(c, c.split_file).string() << "\n";
    return 0;
}

std::span<const std::size_t> training_slice(const RunConfig& c, const SplitSpec& split) {
    if (c.train_on == "train") return split.train_indices;
    if (c.train_on == "fitting") return split.fitting_indices;
    throw ConfigError("train.train_on must be 'train' or 'fitting'");
}

int cmd_train(const RunConfig& c) {
    const Dataset ds = load_configured_dataset(c);
    const SplitSpec split = load_split(out_path(c, c.split_file));
    fs::create_directories(c.out_dir);

    std::ofstream log(out_path(c, c.log_file));
    if (!log) throw IoError("cannot write file: " + out_path(c, c.log_file).string());
    const EpochCallback on_epoch = [&](int epoch, const ModelParams& params, double total,
                                       double visual, double semantic) {
        json rec;
        rec["epoch"] = epoch;
        rec["loss_total"] = total;
        rec["loss_visual"] = visual;
        rec["loss_semantic"] = semantic;
        log << rec.dump() << '\n';
        if (c.checkpoint_every > 0 && (epoch + 1) % c.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%05d.json", epoch);
            save_checkpoint(out_path(c, name), params, c.hp);
        }
    };

    const auto [params, report] = train(ds, training_slice(c, split), c.hp, c.tc, on_epoch);
    save_checkpoint(out_path(c, c.checkpoint_file), params, c.hp);
    echo_config(c, "train");
    std::cerr << "trained " << c.tc.epochs << " epochs in " << report.wall_seconds
              << " s; final loss " << report.loss_total.back() << "\n";
    std::cout << out_path(c, c.checkpoint_file).string() << "\n";
    return 0;
}

int cmd_gridsearch(const RunConfig& c) {
    const Dataset ds = load_configured_dataset(c);
    const SplitSpec split = load_split(out_path(c, c.split_file));
    const Objective objective = c.mode == "gosr" ? Objective::gosr_h : Objective::gzsl_h;
    const GridResult res =
        grid_search(ds, split.fitting_indices, split.gzsl_val_indices, split.val_seen_classes,
                    c.hp, c.grid, c.tc, objective, metric_of(c));
    fs::create_directories(c.out_dir);
    write_score_table(out_path(c, c.scores_file), res.table, objective,
                      "config: " + c.raw.dump());

    // The best-config file is a full runnable config with the chosen
    // lambda, proto_dim and threshold substituted in.
    json best = c.raw;
    best["model"]["lambda_pl"] = res.best_hp.lambda_pl;
    best["model"]["proto_dim"] = res.best_hp.proto_dim;
    if (objective == Objective::gzsl_h) {
        best["thresholds"]["delta_g"] = res.best_thresholds.delta_g;
    } else {
        best["thresholds"]["delta_o"] = res.best_thresholds.delta_o;
    }
    std::ofstream out(out_path(c, c.best_config_file));
    out << best.dump(2) << '\n';
    echo_config(c, "gridsearch");

    json summary;
    summary["lambda"] = res.best_row.lambda;
    summary["proto_dim"] = res.best_row.proto_dim;
    summary["threshold"] = res.best_row.threshold;
    summary["score"] = res.best_score;
    std::cout << summary.dump() << "\n";
    return 0;
}

json metrics_json(const GzslMetrics& m) {
    json out;
    out["mode"] = "gzsl";
    out["ts"] = m.unseen_present ? json(m.ts) : json();
    out["tr"] = m.seen_present ? json(m.tr) : json();
    out["h"] = m.h;
    if (!m.seen_present || !m.unseen_present) out["warning"] = "one side of the split is empty";
    return out;
}

json metrics_json(const GosrMetrics& m) {
    json out;
    out["mode"] = "gosr";
    out["known_acc"] = m.known_present ? json(m.known_acc) : json();
    out["unknown_rej"] = m.unknown_present ? json(m.unknown_rej) : json();
    out["h"] = m.h;
    if (!m.known_present || !m.unknown_present) out["warning"] = "one side of the split is empty";
    return out;
}

std::vector<GatedPrediction> load_predictions_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::vector<GatedPrediction> preds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        GatedPrediction p;
        const std::string domain = j.at("domain").get<std::string>();
        p.domain = domain == "seen"     ? Domain::seen
                   : domain == "unseen" ? Domain::unseen
                                        : Domain::unknown;
        if (j.contains("label") && !j.at("label").is_null()) {
            p.label = j.at("label").get<std::string>();
        }
        p.entropy = j.value("entropy", 0.0);
        preds.push_back(std::move(p));
    }
    return preds;
}

int cmd_eval(const RunConfig& c) {
    const Dataset ds = load_configured_dataset(c);
    const SplitSpec split = load_split(out_path(c, c.split_file));
    json out;
    if (!c.predictions_in.empty()) {
        const auto preds = load_predictions_file(c.predictions_in);
        if (c.mode == "gosr") {
            out = metrics_json(gosr_metrics_from_predictions(ds, split.test_indices, preds));
        } else {
            out = metrics_json(gzsl_metrics_from_predictions(ds, split.test_indices, preds));
        }
    } else {
        const auto [params, hp] = load_checkpoint(out_path(c, c.checkpoint_file));
        if (params.feature_dim() != ds.feature_dim()) {
            throw IoError("checkpoint feature width does not match the dataset");
        }
        if (c.mode == "gosr") {
            out = metrics_json(eval_gosr(ds, split.test_indices, params, hp,
                                         c.thresholds.delta_o, metric_of(c)));
        } else {
            out = metrics_json(eval_gzsl(ds, split.test_indices, params, hp,
                                         c.thresholds.delta_g, metric_of(c)));
        }
    }
    out["config"] = c.raw;
    fs::create_directories(c.out_dir);
    std::ofstream file(out_path(c, c.metrics_file));
    file << out.dump(2) << '\n';
    echo_config(c, "eval");
    json stdout_view = out;
    stdout_view.erase("config");
    std::cout << stdout_view.dump() << "\n";
    return 0;
}

Matrix read_input_rows(const fs::path& path, std::size_t expected_width) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (start <= line.size()) {
            const auto comma = line.find(',', start);
            const std::string field =
                line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc{} || ptr != field.data() + field.size()) {
                throw IoError(path.string() + ":" + std::to_string(line_no) +
                              ": cannot parse number '" + field + "'");
            }
            row.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (row.size() != expected_width) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(expected_width) + " columns, got " +
                          std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    Matrix m(rows.size(), expected_width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

int cmd_predict(const RunConfig& c) {
    const Dataset ds = load_configured_dataset(c);
    const auto [params, hp] = load_checkpoint(out_path(c, c.checkpoint_file));
    if (c.input_file.empty()) throw ConfigError("files.input is not set");
    const Matrix input = read_input_rows(c.input_file, params.feature_dim());

    const GateContext ctx = make_gate_context(ds.attr_table, ds.unseen_ids(), metric_of(c));
    std::vector<std::size_t> rows(input.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;

    std::vector<GatedPrediction> preds;
    if (!rows.empty()) {
        preds = c.mode == "gosr"
                    ? predict_gosr_batch(input, rows, params, ctx, hp, c.thresholds.delta_o)
                    : predict_gzsl_batch(input, rows, params, ctx, hp, c.thresholds.delta_g);
    }

    fs::create_directories(c.out_dir);
    std::ofstream out(out_path(c, c.predictions_file));
    if (!out) throw IoError("cannot write file: " + out_path(c, c.predictions_file).string());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const GatedPrediction& p = preds[i];
        json rec;
        rec["index"] = i;
        rec["entropy"] = p.entropy;
        rec["domain"] = to_string(p.domain);
        rec["label"] = p.label ? json(*p.label) : json();
        if (!p.semantic_vector.empty()) rec["semantic_vector"] = p.semantic_vector;
        if (c.mode == "gosr" && p.domain == Domain::unknown && ds.attr_table.centered) {
            json readings = json::array();
            for (const auto& r : describe_unknown(p.semantic_vector, ds.attr_names, true)) {
                readings.push_back({{"name", r.name}, {"value", r.value}, {"has", r.has}});
            }
            rec["attributes"] = readings;
        }
        const std::string line = rec.dump();
        out << line << '\n';
        std::cout << line << "\n";
    }
    echo_config(c, "predict");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"entropy-gated visual/semantic prototype classifier"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> mode_override;
    std::optional<std::string> out_override;
    int jobs = 0;
    std::vector<std::string> sets;

    app.add_option("--config", config_path, "JSON config file")->required();
    app.add_option("--seed", seed_override, "override config seed");
    app.add_option("--mode", mode_override, "override mode (gzsl|gosr)")
        ->check(CLI::IsMember({"gzsl", "gosr"}));
    app.add_option("--out", out_override, "override output directory");
    app.add_option("--jobs", jobs, "worker threads (0 = library default)");
    app.add_option("--set", sets, "override any config key, e.g. --set train.epochs=50");

    for (const char* name : {"synthesize", "split", "train", "gridsearch", "eval", "predict"}) {
        app.add_subcommand(name);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open config file: " + config_path);
        json user;
        try {
            in >> user;
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        json effective = default_config_json();
        merge_overlay(effective, user, "");
        for (const std::string& s : sets) apply_set(effective, s);
        if (seed_override) effective["seed"] = *seed_override;
        if (mode_override) effective["mode"] = *mode_override;
        if (out_override) effective["out_dir"] = *out_override;

        const RunConfig cfg = materialize(effective);
#ifdef _OPENMP
        if (jobs > 0) omp_set_num_threads(jobs);
#endif
        if (app.got_subcommand("synthesize")) return cmd_synthesize(cfg);
        if (app.got_subcommand("split")) return cmd_split(cfg);
        if (app.got_subcommand("train")) return cmd_train(cfg);
        if (app.got_subcommand("gridsearch")) return cmd_gridsearch(cfg);
        if (app.got_subcommand("eval")) return cmd_eval(cfg);
        if (app.got_subcommand("predict")) return cmd_predict(cfg);
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
