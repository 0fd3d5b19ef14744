#include "svgan/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>

namespace svgan {
namespace {

constexpr char kMagic[6] = {'S', 'V', 'G', 'A', 'N', '1'};
constexpr std::uint64_t kMaxStringBytes = 1ull << 24;
constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxValues = 1ull << 31;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void put_f32(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void need(std::istream& in, char* dst, std::size_t n, const std::string& context) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError("checkpoint truncated while reading " + context);
  }
}

std::uint64_t get_u64(std::istream& in, const std::string& context) {
  std::array<char, 8> b;
  need(in, b.data(), b.size(), context);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

float get_f32(std::istream& in, const std::string& context) {
  std::array<char, 4> b;
  need(in, b.data(), b.size(), context);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)]))
            << (8 * i);
  }
  return std::bit_cast<float>(bits);
}

std::string get_string(std::istream& in, const std::string& context) {
  const std::uint64_t len = get_u64(in, context + " length");
  if (len > kMaxStringBytes) {
    throw IoError("checkpoint " + context + " length " + std::to_string(len) + " is implausible");
  }
  std::string s(len, '\0');
  if (len > 0) need(in, s.data(), s.size(), context);
  return s;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  for (const ParamBlock& block : ckpt.blocks) {
    if (block.values.size() != shape_size(block.shape)) {
      throw ValidationError("checkpoint block '" + block.name + "' has " +
                            std::to_string(block.values.size()) + " values for shape " +
                            shape_str(block.shape));
    }
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    put_string(out, ckpt.descriptor);
    put_u64(out, ckpt.blocks.size());
    for (const ParamBlock& block : ckpt.blocks) {
      put_string(out, block.name);
      put_u64(out, block.shape.size());
      for (std::size_t d : block.shape) put_u64(out, d);
      for (float v : block.values) put_f32(out, v);
    }
    out.flush();
    if (!out.good()) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing checkpoint to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("failed to rename '" + tmp.string() + "' to '" + path.string() + "': " +
                  ec.message());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");

  char magic[sizeof(kMagic)];
  need(in, magic, sizeof(magic), "magic");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw IoError("'" + path.string() + "' is not a checkpoint file (bad magic)");
  }

  Checkpoint ckpt;
  ckpt.descriptor = get_string(in, "config descriptor");

  const std::uint64_t count = get_u64(in, "block count");
  if (count > kMaxValues) {
    throw IoError("checkpoint block count " + std::to_string(count) + " is implausible");
  }
  ckpt.blocks.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ParamBlock block;
    block.name = get_string(in, "name of parameter block " + std::to_string(i));
    const std::string context = "parameter '" + block.name + "'";
    const std::uint64_t rank = get_u64(in, "rank of " + context);
    if (rank > kMaxRank) {
      throw IoError("checkpoint " + context + " has implausible rank " + std::to_string(rank));
    }
    block.shape.resize(rank);
    for (std::uint64_t d = 0; d < rank; ++d) {
      block.shape[d] = static_cast<std::size_t>(get_u64(in, "shape of " + context));
    }
    const std::size_t n = shape_size(block.shape);
    if (n > kMaxValues) {
      throw IoError("checkpoint " + context + " has implausible size " + std::to_string(n));
    }
    block.values.resize(n);
    for (std::size_t v = 0; v < n; ++v) block.values[v] = get_f32(in, context);
    ckpt.blocks.push_back(std::move(block));
  }
  return ckpt;
}

}  // namespace svgan
