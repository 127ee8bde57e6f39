#include "protogate/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "protogate/errors.hpp"
#include "protogate/rng.hpp"

namespace protogate {

namespace {

using nlohmann::json;

std::string trim(std::string s) {
    const auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && is_space(s.back())) s.pop_back();
    std::size_t start = 0;
    while (start < s.size() && is_space(s[start])) ++start;
    return s.substr(start);
}

double parse_double(const std::string& field, const std::string& file, std::size_t line_no) {
    const std::string t = trim(field);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
        throw IoError(file + ":" + std::to_string(line_no) + ": cannot parse number '" + t + "'");
    }
    return value;
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": invalid JSON: " + e.what());
    }
    return j;
}

}  // namespace

int ClassAttributeTable::row_of(const std::string& class_id) const {
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        if (class_ids[i] == class_id) return static_cast<int>(i);
    }
    return -1;
}

void ClassAttributeTable::validate() const {
    if (attributes.rows() != class_ids.size()) {
        throw IoError("attribute table: row count does not match class id count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : class_ids) {
        if (!seen.insert(id).second) throw IoError("attribute table: duplicate class '" + id + "'");
    }
    for (std::size_t r = 0; r < attributes.rows(); ++r) {
        for (double v : attributes.row(r)) {
            if (!std::isfinite(v)) {
                throw IoError("attribute table: non-finite value in row for class '" +
                              class_ids[r] + "'");
            }
        }
    }
}

std::vector<std::string> Dataset::seen_ids() const {
    return {class_ids.begin(), class_ids.begin() + static_cast<std::ptrdiff_t>(num_seen)};
}

std::vector<std::string> Dataset::unseen_ids() const {
    return {class_ids.begin() + static_cast<std::ptrdiff_t>(num_seen), class_ids.end()};
}

int Dataset::class_index_of(const std::string& id) const {
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        if (class_ids[i] == id) return static_cast<int>(i);
    }
    return -1;
}

std::span<const double> Dataset::attr_row(int class_index) const {
    const int row = attr_table.row_of(class_ids.at(static_cast<std::size_t>(class_index)));
    if (row < 0) throw IoError("class without attribute row: " + class_ids[class_index]);
    return attr_table.attributes.row(static_cast<std::size_t>(row));
}

void Dataset::validate() const {
    if (num_instances() == 0) throw IoError("dataset has no instances");
    if (feature_dim() == 0) throw IoError("dataset has zero feature dimension");
    if (features.rows() != labels.size()) {
        throw IoError("feature row count does not match label count");
    }
    if (num_seen == 0 || num_seen > class_ids.size()) {
        throw IoError("dataset needs at least one seen class");
    }
    std::unordered_set<std::string> ids;
    for (const auto& id : class_ids) {
        if (!ids.insert(id).second) throw IoError("duplicate class id '" + id + "'");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_ids.size()) {
            throw IoError("label out of range at row " + std::to_string(i + 1));
        }
    }
    for (std::size_t r = 0; r < features.rows(); ++r) {
        for (double v : features.row(r)) {
            if (!std::isfinite(v)) {
                throw IoError("non-finite feature value at row " + std::to_string(r + 1));
            }
        }
    }
    attr_table.validate();
    for (const auto& id : class_ids) {
        if (attr_table.row_of(id) < 0) throw IoError("class without attribute row: " + id);
    }
    if (!attr_names.empty() && attr_names.size() != attr_dim()) {
        throw IoError("attribute name count does not match attribute dimension");
    }
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    const json manifest = load_json_file(manifest_path);
    const auto base = manifest_path.parent_path();
    auto require_key = [&](const char* key) {
        if (!manifest.contains(key)) {
            throw IoError(manifest_path.string() + ": manifest missing key '" + key + "'");
        }
    };
    for (const char* key : {"features", "labels", "attributes", "seen_classes", "unseen_classes"}) {
        require_key(key);
    }
    std::string delim_str = manifest.value("delimiter", ",");
    if (delim_str.size() != 1) {
        throw IoError(manifest_path.string() + ": delimiter must be a single character");
    }
    const char delim = delim_str[0];

    Dataset ds;
    const std::vector<std::string> seen = manifest.at("seen_classes").get<std::vector<std::string>>();
    const std::vector<std::string> unseen =
        manifest.at("unseen_classes").get<std::vector<std::string>>();
    ds.class_ids = seen;
    ds.class_ids.insert(ds.class_ids.end(), unseen.begin(), unseen.end());
    ds.num_seen = seen.size();

    std::unordered_map<std::string, int> class_index;
    for (std::size_t i = 0; i < ds.class_ids.size(); ++i) {
        if (!class_index.emplace(ds.class_ids[i], static_cast<int>(i)).second) {
            throw IoError(manifest_path.string() + ": class '" + ds.class_ids[i] +
                          "' listed more than once");
        }
    }

    // Features.
    const auto feat_path = base / manifest.at("features").get<std::string>();
    const auto feat_lines = read_lines(feat_path);
    if (feat_lines.empty()) throw IoError(feat_path.string() + ": empty feature file");
    std::size_t dim = 0;
    for (std::size_t ln = 0; ln < feat_lines.size(); ++ln) {
        const auto fields = split_fields(feat_lines[ln], delim);
        if (ln == 0) {
            dim = fields.size();
            ds.features = Matrix(feat_lines.size(), dim);
        } else if (fields.size() != dim) {
            throw IoError(feat_path.string() + ":" + std::to_string(ln + 1) +
                          ": expected " + std::to_string(dim) + " columns, got " +
                          std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < dim; ++c) {
            const double v = parse_double(fields[c], feat_path.string(), ln + 1);
            if (!std::isfinite(v)) {
                throw IoError(feat_path.string() + ":" + std::to_string(ln + 1) +
                              ": non-finite feature value in column " + std::to_string(c + 1));
            }
            ds.features(ln, c) = v;
        }
    }

    // Labels.
    const auto label_path = base / manifest.at("labels").get<std::string>();
    const auto label_lines = read_lines(label_path);
    if (label_lines.size() != feat_lines.size()) {
        throw IoError(label_path.string() + ": " + std::to_string(label_lines.size()) +
                      " labels for " + std::to_string(feat_lines.size()) + " feature rows");
    }
    ds.labels.reserve(label_lines.size());
    for (std::size_t ln = 0; ln < label_lines.size(); ++ln) {
        const std::string id = trim(label_lines[ln]);
        const auto it = class_index.find(id);
        if (it == class_index.end()) {
            throw IoError(label_path.string() + ":" + std::to_string(ln + 1) +
                          ": label references unknown class '" + id + "'");
        }
        ds.labels.push_back(it->second);
    }

    // Attributes: first column class id, remaining columns values.
    const auto attr_path = base / manifest.at("attributes").get<std::string>();
    const auto attr_lines = read_lines(attr_path);
    if (attr_lines.empty()) throw IoError(attr_path.string() + ": empty attribute file");
    std::size_t attr_dim = 0;
    std::vector<std::string> attr_ids;
    std::vector<double> attr_values;
    for (std::size_t ln = 0; ln < attr_lines.size(); ++ln) {
        const auto fields = split_fields(attr_lines[ln], delim);
        if (fields.size() < 2) {
            throw IoError(attr_path.string() + ":" + std::to_string(ln + 1) +
                          ": expected class id plus at least one attribute value");
        }
        if (ln == 0) {
            attr_dim = fields.size() - 1;
        } else if (fields.size() - 1 != attr_dim) {
            throw IoError(attr_path.string() + ":" + std::to_string(ln + 1) +
                          ": inconsistent attribute width");
        }
        const std::string id = trim(fields[0]);
        if (!class_index.contains(id)) {
            throw IoError(attr_path.string() + ":" + std::to_string(ln + 1) +
                          ": attribute row for unknown class '" + id + "'");
        }
        attr_ids.push_back(id);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const double v = parse_double(fields[c], attr_path.string(), ln + 1);
            if (!std::isfinite(v)) {
                throw IoError(attr_path.string() + ":" + std::to_string(ln + 1) +
                              ": non-finite attribute value");
            }
            attr_values.push_back(v);
        }
    }
    ds.attr_table.class_ids = std::move(attr_ids);
    ds.attr_table.attributes = Matrix(ds.attr_table.class_ids.size(), attr_dim);
    std::copy(attr_values.begin(), attr_values.end(), ds.attr_table.attributes.data());
    ds.attr_table.centered = manifest.value("attributes_centered", false);

    for (const auto& id : ds.class_ids) {
        if (ds.attr_table.row_of(id) < 0) {
            throw IoError(attr_path.string() + ": class without attribute row: '" + id + "'");
        }
    }

    if (manifest.contains("attribute_names")) {
        ds.attr_names = manifest.at("attribute_names").get<std::vector<std::string>>();
    } else {
        for (std::size_t i = 0; i < attr_dim; ++i) ds.attr_names.push_back("a" + std::to_string(i));
    }

    ds.validate();
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::string feat_name = name + "_features.csv";
    const std::string label_name = name + "_labels.csv";
    const std::string attr_name = name + "_attributes.csv";

    auto open = [&](const std::string& fname) {
        std::ofstream out(dir / fname);
        if (!out) throw IoError("cannot write file: " + (dir / fname).string());
        return out;
    };

    {
        std::ofstream out = open(feat_name);
        for (std::size_t r = 0; r < ds.features.rows(); ++r) {
            for (std::size_t c = 0; c < ds.features.cols(); ++c) {
                if (c) out << ',';
                out << format_double(ds.features(r, c));
            }
            out << '\n';
        }
    }
    {
        std::ofstream out = open(label_name);
        for (int label : ds.labels) out << ds.class_ids[static_cast<std::size_t>(label)] << '\n';
    }
    {
        std::ofstream out = open(attr_name);
        for (std::size_t r = 0; r < ds.attr_table.attributes.rows(); ++r) {
            out << ds.attr_table.class_ids[r];
            for (double v : ds.attr_table.attributes.row(r)) out << ',' << format_double(v);
            out << '\n';
        }
    }

    json manifest;
    manifest["features"] = feat_name;
    manifest["labels"] = label_name;
    manifest["attributes"] = attr_name;
    manifest["delimiter"] = ",";
    manifest["seen_classes"] = ds.seen_ids();
    manifest["unseen_classes"] = ds.unseen_ids();
    manifest["attribute_names"] = ds.attr_names;
    manifest["attributes_centered"] = ds.attr_table.centered;
    std::ofstream out = open(name + "_manifest.json");
    out << manifest.dump(2) << '\n';
}

Dataset center_attributes(const Dataset& ds, bool force) {
    if (ds.attr_table.centered && !force) {
        throw ConfigError("attributes already centered");
    }
    Dataset out = ds;
    Matrix& attrs = out.attr_table.attributes;
    const std::size_t dim = attrs.cols();
    Vector mean(dim, 0.0);
    std::size_t seen_rows = 0;
    for (std::size_t r = 0; r < attrs.rows(); ++r) {
        const int cls = ds.class_index_of(out.attr_table.class_ids[r]);
        if (cls >= 0 && ds.is_seen_class(cls)) {
            for (std::size_t c = 0; c < dim; ++c) mean[c] += attrs(r, c);
            ++seen_rows;
        }
    }
    for (std::size_t c = 0; c < dim; ++c) mean[c] /= static_cast<double>(seen_rows);
    for (std::size_t r = 0; r < attrs.rows(); ++r) {
        for (std::size_t c = 0; c < dim; ++c) attrs(r, c) -= mean[c];
    }
    out.attr_table.centered = true;
    return out;
}

Dataset l2_normalize_attributes(const Dataset& ds) {
    Dataset out = ds;
    Matrix& attrs = out.attr_table.attributes;
    for (std::size_t r = 0; r < attrs.rows(); ++r) {
        double norm = 0.0;
        for (double v : attrs.row(r)) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t c = 0; c < attrs.cols(); ++c) attrs(r, c) /= norm;
        }
    }
    return out;
}

namespace {

std::size_t rounded_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

SplitSpec make_gzsl_val_split(const Dataset& ds, double val_class_fraction,
                              double holdout_fraction, std::uint64_t seed,
                              double test_fraction) {
    if (!(val_class_fraction > 0.0 && val_class_fraction < 1.0)) {
        throw ConfigError("val_class_fraction must lie in (0, 1)");
    }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout_fraction must lie in (0, 1)");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie in [0, 1)");
    }
    if (ds.num_seen < 2) {
        throw ConfigError("need at least two seen classes to form a validation class set");
    }

    rng::Engine eng(rng::derive_seed(seed, "split"));
    const std::size_t n_seen = ds.num_seen;
    std::size_t n_val = rounded_count(val_class_fraction, n_seen);
    n_val = std::clamp<std::size_t>(n_val, 1, n_seen - 1);

    const std::vector<std::size_t> class_perm = rng::permutation(eng, n_seen);
    std::vector<bool> is_val_class(ds.class_ids.size(), false);
    SplitSpec split;
    for (std::size_t i = 0; i < n_val; ++i) is_val_class[class_perm[i]] = true;
    for (std::size_t c = 0; c < n_seen; ++c) {
        if (is_val_class[c]) split.val_seen_classes.push_back(ds.class_ids[c]);
    }

    std::vector<std::vector<std::size_t>> by_class(ds.class_ids.size());
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }

    for (std::size_t c = 0; c < n_seen; ++c) {
        const auto& idx = by_class[c];
        if (idx.empty()) continue;
        const std::vector<std::size_t> perm = rng::permutation(eng, idx.size());
        std::size_t n_test = rounded_count(test_fraction, idx.size());
        n_test = std::min(n_test, idx.size() - 1);
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < n_test) {
                split.test_indices.push_back(idx[perm[i]]);
            } else {
                pool.push_back(idx[perm[i]]);
            }
        }
        if (is_val_class[c]) {
            split.gzsl_val_indices.insert(split.gzsl_val_indices.end(), pool.begin(), pool.end());
        } else {
            std::size_t n_hold = rounded_count(holdout_fraction, pool.size());
            n_hold = std::min(n_hold, pool.size() - 1);
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (i < n_hold) {
                    split.gzsl_val_indices.push_back(pool[i]);
                } else {
                    split.fitting_indices.push_back(pool[i]);
                }
            }
        }
    }
    for (std::size_t c = n_seen; c < ds.class_ids.size(); ++c) {
        split.test_indices.insert(split.test_indices.end(), by_class[c].begin(),
                                  by_class[c].end());
    }

    std::sort(split.fitting_indices.begin(), split.fitting_indices.end());
    std::sort(split.gzsl_val_indices.begin(), split.gzsl_val_indices.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    split.train_indices = split.fitting_indices;
    split.train_indices.insert(split.train_indices.end(), split.gzsl_val_indices.begin(),
                               split.gzsl_val_indices.end());
    std::sort(split.train_indices.begin(), split.train_indices.end());
    return split;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
    json j;
    j["format"] = "protogate-split-v1";
    j["fitting_indices"] = split.fitting_indices;
    j["gzsl_val_indices"] = split.gzsl_val_indices;
    j["train_indices"] = split.train_indices;
    j["test_indices"] = split.test_indices;
    j["val_seen_classes"] = split.val_seen_classes;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path.string());
    out << j.dump(2) << '\n';
}

SplitSpec load_split(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    SplitSpec split;
    try {
        split.fitting_indices = j.at("fitting_indices").get<std::vector<std::size_t>>();
        split.gzsl_val_indices = j.at("gzsl_val_indices").get<std::vector<std::size_t>>();
        split.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
        split.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
        split.val_seen_classes = j.at("val_seen_classes").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": invalid split file: " + e.what());
    }
    return split;
}

}  // namespace protogate
