#pragma once

#include "harstack/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace harstack {

inline constexpr Index kHarFeatureCount = 561;
inline constexpr int kHarClassCount = 6;

/// Canonical class order: walking=0 ... laying=5.
const std::vector<std::string>& har_class_names();

struct Dataset {
  Matrix X;
  Labels y;
  std::vector<std::string> class_names;

  std::size_t size() const { return y.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }
};

enum class HarSplit { train, test };

std::string to_string(HarSplit split);

/// Reads X_<split>.txt, y_<split>.txt and activity_labels.txt from `dir`.
/// Labels 1..6 in the files map to ids 0..5.
Dataset load_har_split(const std::filesystem::path& dir, HarSplit split,
                       Index expected_features = kHarFeatureCount);

/// Writes a dataset in the same layout (features at 15 significant digits).
void save_har_split(const std::filesystem::path& dir, HarSplit split, const Dataset& data);

struct SplitPair {
  Dataset part_a;
  Dataset part_b;
  /// Parent row ids of each part, in part order.
  std::vector<std::size_t> rows_a;
  std::vector<std::size_t> rows_b;
};

/// Per-class index partition: part a receives round(fraction_a * class count)
/// of every class.
void stratified_partition(std::span<const ClassLabel> y, int n_classes, double fraction_a, RngSeed seed,
                          std::vector<std::size_t>& rows_a, std::vector<std::size_t>& rows_b);

SplitPair stratified_split(const Dataset& d, double fraction_a, RngSeed seed);

Dataset subset(const Dataset& d, std::span<const std::size_t> rows);

}  // namespace harstack
