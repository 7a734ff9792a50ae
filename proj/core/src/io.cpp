#include "cadmr/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace cadmr {

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::string hash_file_hex(const std::filesystem::path& path) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << hash_file(path);
  return ss.str();
}

void save_interactions_csv(const std::filesystem::path& path,
                           const std::vector<InteractionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write interactions file: " + path.string());
  out << "user,item,weight\n";
  for (const auto& r : records) out << r.user_id << ',' << r.item_id << ',' << r.weight << '\n';
}

void Manifest::add_input(const std::filesystem::path& path) {
  inputs_[path.filename().string()] = hash_file_hex(path);
}

void Manifest::add_output(const std::filesystem::path& path) {
  outputs_[path.filename().string()] = hash_file_hex(path);
}

void Manifest::write(const std::filesystem::path& path) const {
  nlohmann::json j{{"command", command_}, {"seed", seed_},     {"config", config_},
                   {"inputs", inputs_},   {"outputs", outputs_}};
  if (!notes_.empty()) j["notes"] = notes_;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
}

void save_dataset_dir(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  // Interactions as user,item rows of the observed entries.
  std::vector<InteractionRecord> records;
  for (Eigen::Index i = 0; i < ds.matrix.values.rows(); ++i)
    for (Eigen::Index u = 0; u < ds.matrix.values.cols(); ++u)
      if (ds.matrix.values(i, u) != 0.0)
        records.push_back({ds.catalog.user_token(static_cast<std::size_t>(u)),
                           ds.catalog.item_token(static_cast<std::size_t>(i)), 1.0});
  save_interactions_csv(dir / "interactions.csv", records);
  save_features_binary(dir / "text_features.bin", ds.text.matrix);
  save_features_binary(dir / "visual_features.bin", ds.visual.matrix);
  save_token_index(dir / "items.idx", ds.catalog.item_tokens());
  save_token_index(dir / "users.idx", ds.catalog.user_tokens());
  save_split_csv(dir / "split.csv", ds.split, ds.catalog);
  save_stats_json(dir / "stats.json", ds.stats());
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
  Dataset ds;
  ds.catalog = Catalog::from_tokens(load_token_index(dir / "users.idx"),
                                    load_token_index(dir / "items.idx"));
  auto records = load_interactions(dir / "interactions.csv", InteractionFormat::kCsv,
                                   /*has_header=*/true);
  ds.matrix = build_rating_matrix(records, ds.catalog);
  const DatasetStats stats = load_stats_json(dir / "stats.json");
  if (stats.users != ds.matrix.users || stats.items != ds.matrix.items ||
      stats.interactions != ds.matrix.observed_count())
    throw DataError("dataset stats disagree with interactions in " + dir.string());
  // Feature dims come from the binary headers themselves.
  {
    std::ifstream text_in(dir / "text_features.bin", std::ios::binary);
    std::ifstream vis_in(dir / "visual_features.bin", std::ios::binary);
    if (!text_in || !vis_in) throw DataError("missing feature files in " + dir.string());
    std::uint32_t rows = 0, text_dim = 0, vis_dim = 0;
    text_in.read(reinterpret_cast<char*>(&rows), 4);
    text_in.read(reinterpret_cast<char*>(&text_dim), 4);
    vis_in.read(reinterpret_cast<char*>(&rows), 4);
    vis_in.read(reinterpret_cast<char*>(&vis_dim), 4);
    ds.text = load_features(dir / "text_features.bin", ds.matrix.items, text_dim,
                            ModalityTag::kText);
    ds.visual = load_features(dir / "visual_features.bin", ds.matrix.items, vis_dim,
                              ModalityTag::kVisual);
  }
  ds.split = load_split_csv(dir / "split.csv", ds.catalog);
  return ds;
}

}  // namespace cadmr
