#include "rdsgan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "rdsgan/crc32.hpp"
#include "rdsgan/errors.hpp"

namespace rdsgan {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size()) throw DataError(std::string("checkpoint: truncated ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void write_checkpoint_file(const std::string& path, const std::vector<NamedTensorF32>& tensors) {
  std::string body;
  body.append(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put_u32(body, kCheckpointVersion);
  for (const auto& t : tensors) {
    put_u32(body, static_cast<std::uint32_t>(t.name.size()));
    body.append(t.name);
    put_u32(body, static_cast<std::uint32_t>(t.rank));
    std::uint64_t count = 1;
    for (std::uint64_t e : t.extents) {
      put_u64(body, e);
      count *= e;
    }
    if (count != t.values.size()) {
      throw DataError("checkpoint: tensor " + t.name + " extents do not match value count");
    }
    for (float v : t.values) put_f32(body, v);
  }
  put_u32(body, crc32(body.data(), body.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw DataError("checkpoint write failed: " + path);
}

std::vector<NamedTensorF32> read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
  if (buf.size() < magic_len + 4 + 4) throw DataError("checkpoint: file too short");

  // Verify the trailing CRC before trusting any of the structure.
  const std::size_t body_len = buf.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= std::uint32_t(std::uint8_t(buf[body_len + i])) << (8 * i);
  if (crc32(buf.data(), body_len) != stored) {
    throw DataError("checkpoint: checksum mismatch (file corrupt or truncated)");
  }

  Reader r{buf};
  if (r.bytes(magic_len, "magic") != kCheckpointMagic) {
    throw DataError("checkpoint: bad magic, not a checkpoint file");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }

  std::vector<NamedTensorF32> tensors;
  while (r.pos < body_len) {
    NamedTensorF32 t;
    const std::uint32_t name_len = r.u32("tensor name length");
    t.name = r.bytes(name_len, "tensor name");
    t.rank = static_cast<int>(r.u32("tensor rank"));
    if (t.rank < 1 || t.rank > 2) {
      throw DataError("checkpoint: tensor " + t.name + " has unsupported rank " +
                      std::to_string(t.rank));
    }
    std::uint64_t count = 1;
    for (int i = 0; i < t.rank; ++i) {
      t.extents.push_back(r.u64("tensor extents"));
      count *= t.extents.back();
    }
    t.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) t.values[i] = r.f32("tensor values");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace rdsgan
