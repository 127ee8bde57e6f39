#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protogate/matrix.hpp"

namespace protogate {

/// Per-class semantic prototypes, one row per class. Every instance of a
/// class shares that class's single row.
struct ClassAttributeTable {
    Matrix attributes;                  // num_classes x attr_dim
    std::vector<std::string> class_ids; // row order
    bool centered = false;

    int row_of(const std::string& class_id) const;  // -1 when absent
    void validate() const;
};

/// Instances, labels, per-class attributes and the seen/unseen partition.
/// Immutable after construction; safe to share across threads.
struct Dataset {
    Matrix features;                    // N x d
    std::vector<int> labels;            // canonical class indices, length N
    std::vector<std::string> class_ids; // canonical order: seen classes first
    std::size_t num_seen = 0;           // class_ids[0..num_seen) are seen
    ClassAttributeTable attr_table;
    std::vector<std::string> attr_names;

    std::size_t num_instances() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols(); }
    std::size_t attr_dim() const { return attr_table.attributes.cols(); }
    bool is_seen_class(int class_index) const {
        return class_index >= 0 && static_cast<std::size_t>(class_index) < num_seen;
    }
    std::vector<std::string> seen_ids() const;
    std::vector<std::string> unseen_ids() const;
    int class_index_of(const std::string& id) const;  // -1 when absent
    /// Attribute row for a canonical class index.
    std::span<const double> attr_row(int class_index) const;

    void validate() const;
};

/// Index lists into a Dataset. `fitting` and `gzsl_val` partition the
/// training pool for parameter selection: gzsl_val holds the per-class
/// holdout of the fitting classes plus every pool instance of the
/// `val_seen_classes` (seen classes playing the unseen role during
/// validation). `train` is the whole pool (fitting + gzsl_val), used to
/// refit the model once parameters are chosen; `test` is disjoint from it
/// and holds the held-out seen instances plus all unseen-class instances.
struct SplitSpec {
    std::vector<std::size_t> fitting_indices;
    std::vector<std::size_t> gzsl_val_indices;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::vector<std::string> val_seen_classes;
};

struct SyntheticConfig {
    int seen_classes = 8;
    int unseen_classes = 4;
    int instances_per_class = 100;
    int feature_dim = 16;
    int attr_dim = 8;
    double sigma = 1.0;       ///< isotropic cluster spread
    double separation = 6.0;  ///< minimum distance between any two class centers
};

/// Reads a JSON manifest naming the feature/label/attribute files and the
/// class partition. Paths are resolved relative to the manifest directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest + matrix files under `dir`. Values survive a
/// write/load round trip bit-exactly.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                   const std::string& name = "dataset");

/// Mean-centers every attribute dimension over the seen-class rows and
/// applies the same shift to unseen rows, enabling the signed has/has-not
/// reading of attribute vectors. Errors when already centered unless
/// `force` (the force path exists for idempotence tests).
Dataset center_attributes(const Dataset& ds, bool force = false);

/// Scales every attribute row to unit L2 norm. Optional preprocessing,
/// off by default.
Dataset l2_normalize_attributes(const Dataset& ds);

/// Deterministic synthetic benchmark: each class is an isotropic Gaussian
/// cluster; attributes are a fixed linear image of the class centers, so
/// attribute similarity tracks center proximity and the feature->attribute
/// map is exactly learnable. Unseen-class centers sit equidistant between
/// pairs of seen centers, which is what makes them detectable by the
/// entropy gate.
Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Builds the validation split: designates `val_class_fraction` of the seen
/// classes as val_seen_classes, holds out `test_fraction` of every seen
/// class's instances into `test` (together with all unseen instances), and
/// splits the remaining pool per class into fitting (1 - holdout_fraction)
/// and gzsl_val (holdout_fraction, plus all pool instances of val classes).
SplitSpec make_gzsl_val_split(const Dataset& ds, double val_class_fraction,
                              double holdout_fraction, std::uint64_t seed,
                              double test_fraction = 0.2);

void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

}  // namespace protogate
