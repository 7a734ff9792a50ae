#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cadmr/matrix.hpp"

namespace cadmr {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Versioned binary container: magic, version, JSON header, named f64 blobs,
// FNV-1a checksum over everything preceding it. Parameters are always
// stored at 64 bits regardless of the engine's compute precision.
struct CheckpointBlob {
  std::string name;
  Matd data;
};

struct CheckpointFile {
  std::uint32_t version = 1;
  std::string json_header;
  std::vector<CheckpointBlob> blobs;

  const CheckpointBlob* find(const std::string& name) const;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

}  // namespace cadmr
