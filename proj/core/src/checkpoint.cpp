#include "snl/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>

#include "snl/bytes.hpp"

namespace snl {

namespace {

constexpr std::string_view kMagic{"SNLCKPT\0", 8};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, data, static_cast<uInt>(n)));
}

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u64(t.numel());
  for (double v : t.values()) w.f64(v);
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<std::uint8_t> encode_checkpoint(const GatedNetwork& net, const CheckpointMeta& meta) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  const std::string desc = net.arch().to_string();
  w.u32(static_cast<std::uint32_t>(desc.size()));
  w.raw(desc);
  w.u64(meta.seed);
  w.u64(meta.epoch);
  w.f64(meta.lambda);
  w.u32(static_cast<std::uint32_t>(net.weights().size()));
  for (const Parameter& p : net.weights()) {
    write_tensor(w, p.value);
    w.u8(p.masked() ? 1 : 0);
    if (p.masked()) {
      for (double v : p.mask.values()) w.f64(v);
    }
  }
  w.u32(static_cast<std::uint32_t>(net.gates().size()));
  for (const GateVector& g : net.gates()) {
    w.u8(g.granularity == GateGranularity::per_unit ? 0 : 1);
    w.u8(g.mode == GateMode::identity ? 0 : 1);
    w.u8(g.frozen ? 1 : 0);
    w.f64(g.epsilon);
    write_tensor(w, g.values);
  }
  auto& bytes = w.bytes();
  const std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
  w.u32(crc);
  return std::move(bytes);
}

namespace {

struct RawWeight {
  std::vector<double> values;
  std::vector<double> mask;
  bool has_mask = false;
};

struct RawGate {
  std::uint8_t granularity = 0, mode = 0, frozen = 0;
  double epsilon = 0.0;
  std::vector<double> values;
};

std::vector<double> read_doubles(ByteReader& r) {
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw TruncatedInput("buffer of " + std::to_string(n) + " values");
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

void copy_into(Tensor& t, const std::vector<double>& v, const std::string& what) {
  if (v.size() != t.numel()) {
    throw CheckpointFormatError("checkpoint " + what + " has " + std::to_string(v.size()) +
                                " values, architecture expects " + std::to_string(t.numel()));
  }
  std::copy(v.begin(), v.end(), t.values().begin());
}

}  // namespace

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagic.size() ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
    throw CheckpointFormatError("not a checkpoint: bad magic bytes");
  }
  std::string desc;
  CheckpointMeta meta;
  std::vector<RawWeight> weights;
  std::vector<RawGate> gates;
  try {
    ByteReader r(bytes.data(), bytes.size());
    r.str(kMagic.size());
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                   " unsupported (expected " +
                                   std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t len = r.u32();
    desc = r.str(len);
    meta.seed = r.u64();
    meta.epoch = r.u64();
    meta.lambda = r.f64();
    const std::uint32_t nw = r.u32();
    for (std::uint32_t i = 0; i < nw; ++i) {
      RawWeight w;
      w.values = read_doubles(r);
      w.has_mask = r.u8() != 0;
      if (w.has_mask) {
        if (w.values.size() > r.remaining() / 8) throw TruncatedInput("mask");
        w.mask.resize(w.values.size());
        for (double& x : w.mask) x = r.f64();
      }
      weights.push_back(std::move(w));
    }
    const std::uint32_t ng = r.u32();
    for (std::uint32_t i = 0; i < ng; ++i) {
      RawGate g;
      g.granularity = r.u8();
      g.mode = r.u8();
      g.frozen = r.u8();
      g.epsilon = r.f64();
      g.values = read_doubles(r);
      gates.push_back(std::move(g));
    }
    if (r.remaining() < 4) throw TruncatedInput("missing CRC32");
    if (r.remaining() > 4) {
      throw CheckpointFormatError(std::to_string(r.remaining() - 4) +
                                  " unexpected bytes before CRC32");
    }
    const std::size_t body = r.position();
    if (r.u32() != crc32_of(bytes.data(), body)) {
      throw CheckpointChecksumError("checkpoint CRC32 mismatch");
    }
  } catch (const TruncatedInput& e) {
    throw CheckpointTruncatedError(std::string("truncated checkpoint: ") + e.what());
  }

  ArchSpec arch;
  try {
    arch = ArchSpec::parse(desc);
  } catch (const std::invalid_argument& e) {
    throw CheckpointFormatError(std::string("bad architecture descriptor: ") + e.what());
  }
  Checkpoint ck{GatedNetwork(arch), meta};
  if (weights.size() != ck.net.weights().size() || gates.size() != ck.net.gates().size()) {
    throw CheckpointFormatError("checkpoint buffers do not match architecture '" + desc + "'");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Parameter& p = ck.net.weights()[i];
    copy_into(p.value, weights[i].values, "weight " + std::to_string(i));
    if (weights[i].has_mask) {
      p.mask = Tensor(p.value.shape());
      copy_into(p.mask, weights[i].mask, "mask " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < gates.size(); ++i) {
    GateVector& g = ck.net.gates()[i];
    const RawGate& raw = gates[i];
    if (raw.granularity > 1 || raw.mode > 1 || raw.frozen > 1) {
      throw CheckpointFormatError("bad gate metadata for gate vector " + std::to_string(i));
    }
    if ((raw.granularity == 0) != (g.granularity == GateGranularity::per_unit)) {
      throw CheckpointFormatError("gate granularity disagrees with descriptor");
    }
    g.mode = raw.mode == 0 ? GateMode::identity : GateMode::zero_out;
    g.frozen = raw.frozen == 1;
    g.epsilon = raw.epsilon;
    copy_into(g.values, raw.values, "gate vector " + std::to_string(i));
  }
  return ck;
}

void save_checkpoint(const GatedNetwork& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta) {
  write_file_bytes(path, encode_checkpoint(net, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace snl
