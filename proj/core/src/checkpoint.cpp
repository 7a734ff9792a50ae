#include "cadmr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace cadmr {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'M', 'R', 'C', 'K', '1'};

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string take_bytes(const std::string& in, std::size_t& pos, std::size_t n) {
  if (pos + n > in.size()) throw CheckpointError("checkpoint truncated");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}

}  // namespace

const CheckpointBlob* CheckpointFile::find(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return &b;
  return nullptr;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  std::string payload;
  payload.append(kMagic, sizeof(kMagic));
  put(payload, file.version);
  put(payload, static_cast<std::uint64_t>(file.json_header.size()));
  payload.append(file.json_header);
  put(payload, static_cast<std::uint64_t>(file.blobs.size()));
  for (const auto& b : file.blobs) {
    put(payload, static_cast<std::uint32_t>(b.name.size()));
    payload.append(b.name);
    put(payload, static_cast<std::uint64_t>(b.data.rows()));
    put(payload, static_cast<std::uint64_t>(b.data.cols()));
    // Row-major storage, so the buffer is already in row, column order.
    payload.append(reinterpret_cast<const char*>(b.data.data()),
                   static_cast<std::size_t>(b.data.size()) * sizeof(double));
  }
  const std::uint64_t checksum = fnv1a64(payload);
  put(payload, checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t))
    throw CheckpointError("checkpoint truncated: " + path.string());
  const std::string body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::size_t tail = bytes.size() - sizeof(std::uint64_t);
  const auto stored = take<std::uint64_t>(bytes, tail);
  if (fnv1a64(body) != stored)
    throw CheckpointError("checkpoint checksum mismatch (corrupt or truncated): " + path.string());

  std::size_t pos = 0;
  const std::string magic = take_bytes(body, pos, sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path.string());

  CheckpointFile file;
  file.version = take<std::uint32_t>(body, pos);
  if (file.version != 1)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(file.version));
  const auto header_len = take<std::uint64_t>(body, pos);
  file.json_header = take_bytes(body, pos, header_len);
  const auto blob_count = take<std::uint64_t>(body, pos);
  file.blobs.reserve(blob_count);
  for (std::uint64_t i = 0; i < blob_count; ++i) {
    CheckpointBlob blob;
    const auto name_len = take<std::uint32_t>(body, pos);
    blob.name = take_bytes(body, pos, name_len);
    const auto rows = take<std::uint64_t>(body, pos);
    const auto cols = take<std::uint64_t>(body, pos);
    blob.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const std::string raw = take_bytes(body, pos, rows * cols * sizeof(double));
    std::memcpy(blob.data.data(), raw.data(), raw.size());
    file.blobs.push_back(std::move(blob));
  }
  if (pos != body.size()) throw CheckpointError("trailing bytes in checkpoint: " + path.string());
  return file;
}

}  // namespace cadmr
