#include "protogate/model_io.hpp"

#include <fstream>

#include <json.hpp>

#include "protogate/errors.hpp"

namespace protogate {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "protogate-model-v1";

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) throw IoError("checkpoint: matrix shape/data mismatch");
    std::copy(data.begin(), data.end(), m.values().begin());
    return m;
}

json head_to_json(const Head& h) {
    json j;
    j["w1"] = matrix_to_json(h.w1);
    j["b1"] = h.b1;
    if (h.has_hidden()) {
        j["w2"] = matrix_to_json(h.w2);
        j["b2"] = h.b2;
    }
    return j;
}

Head head_from_json(const json& j) {
    Head h;
    h.w1 = matrix_from_json(j.at("w1"));
    h.b1 = j.at("b1").get<Vector>();
    if (j.contains("w2")) {
        h.w2 = matrix_from_json(j.at("w2"));
        h.b2 = j.at("b2").get<Vector>();
    }
    return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const Hyperparams& hp) {
    json j;
    j["format"] = kFormatTag;
    j["hyperparams"] = {{"gamma", hp.gamma},
                        {"lambda_pl", hp.lambda_pl},
                        {"proto_dim", hp.proto_dim},
                        {"hidden_dim", hp.hidden_dim},
                        {"semantic_weight", hp.semantic_weight}};
    j["class_ids"] = params.class_ids;
    j["visual_head"] = head_to_json(params.visual_head);
    j["semantic_head"] = head_to_json(params.semantic_head);
    j["visual_prototypes"] = matrix_to_json(params.visual_prototypes);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path.string());
    out << j.dump(2) << '\n';
}

std::pair<ModelParams, Hyperparams> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": invalid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormatTag) {
            throw IoError(path.string() + ": unsupported checkpoint format");
        }
        ModelParams params;
        params.class_ids = j.at("class_ids").get<std::vector<std::string>>();
        params.visual_head = head_from_json(j.at("visual_head"));
        params.semantic_head = head_from_json(j.at("semantic_head"));
        params.visual_prototypes = matrix_from_json(j.at("visual_prototypes"));
        const json& h = j.at("hyperparams");
        Hyperparams hp;
        hp.gamma = h.at("gamma").get<double>();
        hp.lambda_pl = h.at("lambda_pl").get<double>();
        hp.proto_dim = h.at("proto_dim").get<int>();
        hp.hidden_dim = h.at("hidden_dim").get<int>();
        hp.semantic_weight = h.at("semantic_weight").get<double>();
        if (params.visual_prototypes.rows() != params.class_ids.size()) {
            throw IoError(path.string() + ": prototype rows do not match class count");
        }
        if (!params.all_finite()) {
            throw IoError(path.string() + ": checkpoint contains non-finite values");
        }
        return {std::move(params), hp};
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": malformed checkpoint: " + e.what());
    }
}

}  // namespace protogate
