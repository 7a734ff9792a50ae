#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadmr/datasets.hpp"

namespace cadmr {

// FNV-1a over a file's bytes; used for run manifests and reproducibility
// checks.
std::uint64_t hash_file(const std::filesystem::path& path);

std::string hash_file_hex(const std::filesystem::path& path);

void save_interactions_csv(const std::filesystem::path& path,
                           const std::vector<InteractionRecord>& records);

// Run manifest: config snapshot, seed, and input/output artifact hashes.
// Enough to reproduce the run bitwise; no timestamps, so identical runs
// write identical manifests.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed) : command_(std::move(command)), seed_(seed) {}

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void add_note(const std::string& key, nlohmann::json value) { notes_[key] = std::move(value); }

  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::uint64_t seed_;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  nlohmann::json outputs_ = nlohmann::json::object();
  nlohmann::json notes_ = nlohmann::json::object();
};

// Write/read a whole prepared dataset directory: interactions, features,
// catalog sidecars, split, stats.
void save_dataset_dir(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset_dir(const std::filesystem::path& dir);

}  // namespace cadmr
