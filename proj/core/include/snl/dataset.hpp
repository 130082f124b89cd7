#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "snl/tensor.hpp"

namespace snl {

// Labelled samples. `x` has shape [N, sample_shape...].
struct Dataset {
  Tensor x;
  std::vector<int> y;
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  Shape sample_shape() const;
  // Gathers the given rows into a batch.
  Tensor batch_x(std::span<const std::size_t> rows) const;
  std::vector<int> batch_y(std::span<const std::size_t> rows) const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

enum class DatasetKind { two_gaussians, concentric_rings, xor_grid, oriented_bars, file };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view text);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::two_gaussians;
  std::size_t n = 1000;  // total samples before the split
  double noise = 0.3;
  std::uint64_t seed = 7;
  double test_fraction = 0.25;
  // file kind: train and test containers
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  // file kind: expected class count (0 = take it from the file)
  std::size_t classes = 0;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DatasetFormatError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class DatasetClassMismatchError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

// Synthetic generators. Samples are drawn in one stream from `seed`; the
// last round(n * test_fraction) samples form the test split.
Dataset two_gaussians(std::size_t n, double sigma, std::uint64_t seed);
Dataset concentric_rings(std::size_t n, double noise, std::uint64_t seed);
Dataset xor_grid(std::size_t n, double noise, std::uint64_t seed);
// 1x8x8 images holding one horizontal (class 0) or vertical (class 1) bar of
// random position and sign plus Gaussian pixel noise.
Dataset oriented_bars(std::size_t n, double noise, std::uint64_t seed);

DatasetSplit split_dataset(const Dataset& all, double test_fraction);
DatasetSplit load_dataset(const DatasetSpec& spec);

// Container: "SNLD" | u32 version | u64 count | u32 rank | u64 dims[rank] |
// u32 classes | f64 features[count*prod(dims)] | u32 labels[count].
std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::size_t expected_classes = 0);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path, std::size_t expected_classes = 0);

}  // namespace snl
