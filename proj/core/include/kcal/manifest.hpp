#pragma once

// Dataset manifests: a CSV with header
//   image_path,calories,mass,class_label,annotation_path
// where mass, class_label and annotation_path may be empty. Relative paths
// resolve against the directory the manifest was loaded from.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kcal {

struct ManifestRecord {
    std::string image_path;
    double calories = 0.0;
    std::optional<double> mass;
    std::optional<std::string> class_label;
    std::optional<std::string> annotation_path;
};

struct Manifest {
    std::filesystem::path base_dir; // anchor for relative paths
    std::vector<ManifestRecord> records;

    std::size_t size() const { return records.size(); }
    std::filesystem::path resolve(const std::string& p) const;
    std::filesystem::path image_file(std::size_t i) const { return resolve(records[i].image_path); }
};

// Parses and validates; record order matches file order. Every image_path
// must resolve to a readable file.
Manifest load_manifest(const std::filesystem::path& path);

// Inverse of load_manifest: load(save(load(x))) == load(x). Floats are
// written with shortest round-trip formatting.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SplitResult {
    Manifest train;
    Manifest validation;
    bool empty_train = false; // warning flag: floor(fraction * N) was 0
};

// Deterministic partition: Fisher-Yates shuffle driven by SplitMix64(seed),
// train takes the first floor(train_fraction * N) shuffled entries. Records
// keep their original file order within each side.
SplitResult split_dataset(const Manifest& manifest, const SplitSpec& spec);

// Closed label set: sorted unique class labels across the given manifests.
std::vector<std::string> collect_class_labels(const std::vector<const Manifest*>& manifests);

} // namespace kcal
