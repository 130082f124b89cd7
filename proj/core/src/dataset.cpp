#include "snl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "snl/bytes.hpp"

namespace snl {

namespace {

constexpr std::string_view kMagic = "SNLD";
constexpr std::uint32_t kVersion = 1;

Dataset make_2d(std::size_t n) {
  Dataset d;
  d.x = Tensor({n, 2}, 0.0);
  d.y.assign(n, 0);
  d.classes = 2;
  return d;
}

}  // namespace

Shape Dataset::sample_shape() const {
  const Shape& s = x.shape();
  return Shape(s.begin() + 1, s.end());
}

Tensor Dataset::batch_x(std::span<const std::size_t> rows) const {
  Shape s = x.shape();
  const std::size_t per = x.numel() / s[0];
  s[0] = rows.size();
  Tensor out(s, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw std::out_of_range("dataset row out of range");
    std::copy_n(x.data() + rows[i] * per, per, out.data() + i * per);
  }
  return out;
}

std::vector<int> Dataset::batch_y(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y.at(r));
  return out;
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::two_gaussians: return "two-gaussians";
    case DatasetKind::concentric_rings: return "concentric-rings";
    case DatasetKind::xor_grid: return "xor-grid";
    case DatasetKind::oriented_bars: return "oriented-bars";
    case DatasetKind::file: return "file";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view text) {
  for (DatasetKind k : {DatasetKind::two_gaussians, DatasetKind::concentric_rings,
                        DatasetKind::xor_grid, DatasetKind::oriented_bars, DatasetKind::file}) {
    if (text == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown dataset kind '" + std::string(text) + "'");
}

Dataset two_gaussians(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Dataset d = make_2d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label == 0 ? -1.0 : 1.0;
    d.x[2 * i] = cx + noise(rng);
    d.x[2 * i + 1] = noise(rng);
    d.y[i] = label;
  }
  return d;
}

Dataset concentric_rings(std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  Dataset d = make_2d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double r = (label == 0 ? 1.0 : 2.0) + jitter(rng);
    const double a = angle(rng);
    d.x[2 * i] = r * std::cos(a);
    d.x[2 * i + 1] = r * std::sin(a);
    d.y[i] = label;
  }
  return d;
}

Dataset xor_grid(std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset d = make_2d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int q = static_cast<int>(i % 4);
    const double cx = (q & 1) ? 1.0 : -1.0;
    const double cy = (q & 2) ? 1.0 : -1.0;
    d.x[2 * i] = cx + jitter(rng);
    d.x[2 * i + 1] = cy + jitter(rng);
    d.y[i] = ((q & 1) != 0) != ((q & 2) != 0) ? 1 : 0;
  }
  return d;
}

Dataset oriented_bars(std::size_t n, double noise, std::uint64_t seed) {
  constexpr std::size_t side = 8;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  std::uniform_int_distribution<std::size_t> pos(0, side - 1);
  std::bernoulli_distribution flip(0.5);
  Dataset d;
  d.x = Tensor({n, 1, side, side}, 0.0);
  d.y.assign(n, 0);
  d.classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const std::size_t p = pos(rng);
    const double sign = flip(rng) ? 1.0 : -1.0;
    double* img = d.x.data() + i * side * side;
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        const bool on = label == 0 ? r == p : c == p;
        img[r * side + c] = (on ? sign : 0.0) + jitter(rng);
      }
    d.y[i] = label;
  }
  return d;
}

DatasetSplit split_dataset(const Dataset& all, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in (0,1)");
  const std::size_t n = all.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) throw std::invalid_argument("split leaves an empty side");
  std::vector<std::size_t> train_rows(n - n_test), test_rows(n_test);
  for (std::size_t i = 0; i < n - n_test; ++i) train_rows[i] = i;
  for (std::size_t i = 0; i < n_test; ++i) test_rows[i] = n - n_test + i;
  DatasetSplit s;
  s.train = {all.batch_x(train_rows), all.batch_y(train_rows), all.classes};
  s.test = {all.batch_x(test_rows), all.batch_y(test_rows), all.classes};
  return s;
}

DatasetSplit load_dataset(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::two_gaussians:
      return split_dataset(two_gaussians(spec.n, spec.noise, spec.seed), spec.test_fraction);
    case DatasetKind::concentric_rings:
      return split_dataset(concentric_rings(spec.n, spec.noise, spec.seed), spec.test_fraction);
    case DatasetKind::xor_grid:
      return split_dataset(xor_grid(spec.n, spec.noise, spec.seed), spec.test_fraction);
    case DatasetKind::oriented_bars:
      return split_dataset(oriented_bars(spec.n, spec.noise, spec.seed), spec.test_fraction);
    case DatasetKind::file: {
      DatasetSplit s;
      s.train = read_dataset(spec.train_path, spec.classes);
      s.test = read_dataset(spec.test_path, spec.classes ? spec.classes : s.train.classes);
      if (s.train.sample_shape() != s.test.sample_shape())
        throw DatasetFormatError("train and test sample shapes differ");
      return s;
    }
  }
  throw std::invalid_argument("bad dataset kind");
}

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u64(d.size());
  const Shape dims = d.sample_shape();
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (std::size_t v : dims) w.u64(v);
  w.u32(static_cast<std::uint32_t>(d.classes));
  for (double v : d.x.values()) w.f64(v);
  for (int label : d.y) w.u32(static_cast<std::uint32_t>(label));
  return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::size_t expected_classes) {
  ByteReader r(bytes.data(), bytes.size());
  try {
    if (r.str(kMagic.size()) != kMagic) throw DatasetFormatError("bad dataset magic");
    if (r.u32() != kVersion) throw DatasetFormatError("unsupported dataset version");
    const std::uint64_t count = r.u64();
    if (count == 0 || count > r.remaining()) throw DatasetFormatError("bad sample count");
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw DatasetFormatError("bad sample rank");
    Shape shape{static_cast<std::size_t>(count)};
    std::uint64_t per = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t dim = r.u64();
      if (dim == 0 || dim > (1u << 20)) throw DatasetFormatError("bad sample dimension");
      per *= dim;
      shape.push_back(static_cast<std::size_t>(dim));
    }
    Dataset d;
    d.classes = r.u32();
    if (d.classes < 2) throw DatasetFormatError("dataset needs at least two classes");
    if (expected_classes != 0 && d.classes != expected_classes)
      throw DatasetClassMismatchError("dataset has " + std::to_string(d.classes) +
                                      " classes, expected " + std::to_string(expected_classes));
    if (count * (per * 8 + 4) != r.remaining())
      throw DatasetFormatError("dataset body size does not match header");
    d.x = Tensor(shape, 0.0);
    for (double& v : d.x.values()) v = r.f64();
    d.y.resize(count);
    for (int& label : d.y) {
      const std::uint32_t l = r.u32();
      if (l >= d.classes) throw DatasetClassMismatchError("label exceeds class count");
      label = static_cast<int>(l);
    }
    return d;
  } catch (const TruncatedInput& e) {
    throw DatasetFormatError(std::string("truncated dataset: ") + e.what());
  }
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(d));
}

Dataset read_dataset(const std::filesystem::path& path, std::size_t expected_classes) {
  const auto bytes = read_file_bytes(path);
  return decode_dataset(bytes, expected_classes);
}

}  // namespace snl
