#include "cadmr/datasets.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cadmr/rng.hpp"

namespace cadmr {
namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

const char* fold_name(Fold f) {
  switch (f) {
    case Fold::kTrain: return "train";
    case Fold::kValidation: return "validation";
    case Fold::kTest: return "test";
  }
  return "?";
}

Fold fold_from_name(const std::string& name) {
  if (name == "train") return Fold::kTrain;
  if (name == "validation" || name == "val") return Fold::kValidation;
  if (name == "test") return Fold::kTest;
  throw DataError("unknown fold name: '" + name + "'");
}

Catalog Catalog::from_records(const std::vector<InteractionRecord>& records) {
  std::set<std::string> users, items;
  for (const auto& r : records) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }
  return from_tokens(std::vector<std::string>(users.begin(), users.end()),
                     std::vector<std::string>(items.begin(), items.end()));
}

Catalog Catalog::from_tokens(std::vector<std::string> users, std::vector<std::string> items) {
  std::sort(users.begin(), users.end());
  std::sort(items.begin(), items.end());
  Catalog c;
  c.user_tokens_ = std::move(users);
  c.item_tokens_ = std::move(items);
  for (std::size_t i = 0; i < c.user_tokens_.size(); ++i) c.user_index_[c.user_tokens_[i]] = i;
  for (std::size_t i = 0; i < c.item_tokens_.size(); ++i) c.item_index_[c.item_tokens_[i]] = i;
  if (c.user_index_.size() != c.user_tokens_.size() || c.item_index_.size() != c.item_tokens_.size())
    throw DataError("catalog tokens are not unique");
  return c;
}

std::size_t Catalog::user_index(const std::string& token) const {
  auto it = user_index_.find(token);
  if (it == user_index_.end()) throw DataError("unknown user token: '" + token + "'");
  return it->second;
}

std::size_t Catalog::item_index(const std::string& token) const {
  auto it = item_index_.find(token);
  if (it == item_index_.end()) throw DataError("unknown item token: '" + token + "'");
  return it->second;
}

std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path,
                                                 InteractionFormat format, bool has_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path.string());
  const char delim = format == InteractionFormat::kCsv ? ',' : '\t';

  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && has_header) continue;
    if (trim(line).empty()) continue;
    auto fields = split_line(line, delim);
    if (fields.size() < 2 || fields.size() > 3)
      throw DataError("malformed row at line " + std::to_string(line_no) + ": expected user" +
                      delim + "item[" + delim + "weight], got '" + line + "'");
    InteractionRecord rec;
    rec.user_id = trim(fields[0]);
    rec.item_id = trim(fields[1]);
    if (rec.user_id.empty())
      throw DataError("empty user token at line " + std::to_string(line_no));
    if (rec.item_id.empty())
      throw DataError("empty item token at line " + std::to_string(line_no));
    if (fields.size() == 3) {
      try {
        rec.weight = std::stod(fields[2]);
      } catch (const std::exception&) {
        throw DataError("bad weight at line " + std::to_string(line_no) + ": '" + fields[2] + "'");
      }
      if (rec.weight < 0.0)
        throw DataError("negative weight at line " + std::to_string(line_no));
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError("interactions file is empty: " + path.string());
  return records;
}

std::vector<InteractionRecord> k_core_filter(const std::vector<InteractionRecord>& records,
                                             std::size_t k) {
  check(k >= 1, "k_core_filter: k must be >= 1");
  // Degrees count distinct partners. The k-core is unique, so any removal
  // order reaches the same fixed point; we iterate to convergence.
  std::unordered_map<std::string, std::unordered_set<std::string>> user_items, item_users;
  for (const auto& r : records) {
    user_items[r.user_id].insert(r.item_id);
    item_users[r.item_id].insert(r.user_id);
  }
  std::unordered_set<std::string> dead_users, dead_items;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& [user, items] : user_items) {
      if (dead_users.count(user)) continue;
      std::size_t deg = 0;
      for (const auto& it : items)
        if (!dead_items.count(it)) ++deg;
      if (deg < k) {
        dead_users.insert(user);
        changed = true;
      }
    }
    for (auto& [item, users] : item_users) {
      if (dead_items.count(item)) continue;
      std::size_t deg = 0;
      for (const auto& u : users)
        if (!dead_users.count(u)) ++deg;
      if (deg < k) {
        dead_items.insert(item);
        changed = true;
      }
    }
  }
  std::vector<InteractionRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    if (!dead_users.count(r.user_id) && !dead_items.count(r.item_id)) out.push_back(r);
  return out;
}

RatingMatrix build_rating_matrix(const std::vector<InteractionRecord>& records,
                                 const Catalog& catalog) {
  RatingMatrix m;
  m.items = catalog.item_count();
  m.users = catalog.user_count();
  m.values = Matd::Zero(static_cast<Eigen::Index>(m.items), static_cast<Eigen::Index>(m.users));
  for (const auto& r : records) {
    const auto i = static_cast<Eigen::Index>(catalog.item_index(r.item_id));
    const auto u = static_cast<Eigen::Index>(catalog.user_index(r.user_id));
    m.values(i, u) = 1.0;  // duplicates collapse
  }
  return m;
}

SplitAssignment split_interactions(const RatingMatrix& matrix, const SplitRatio& ratio,
                                   std::uint64_t seed) {
  const double sum = ratio.train + ratio.validation + ratio.test;
  check(ratio.train > 0.0 && ratio.validation > 0.0 && ratio.test > 0.0,
        "split: ratio components must be positive");
  check(std::abs(sum - 1.0) < 1e-9, "split: ratio must sum to 1");

  SplitAssignment split;
  split.seed = seed;
  const double parts[3] = {ratio.train, ratio.validation, ratio.test};

  for (std::size_t u = 0; u < matrix.users; ++u) {
    std::vector<std::size_t> items;
    for (std::size_t i = 0; i < matrix.items; ++i)
      if (matrix.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) != 0.0)
        items.push_back(i);
    if (items.empty()) continue;
    const std::size_t n = items.size();

    // Per-user stream so user order never perturbs another user's shuffle.
    RngStream rng = derive_stream(seed, "split/user/" + std::to_string(u));
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(items[i - 1], items[j]);
    }

    // Largest-remainder rounding; remainder ties go to the earlier fold
    // (train, then validation, then test).
    std::size_t counts[3];
    double remainders[3];
    std::size_t assigned = 0;
    for (int f = 0; f < 3; ++f) {
      const double quota = parts[f] * static_cast<double>(n);
      counts[f] = static_cast<std::size_t>(quota);
      remainders[f] = quota - static_cast<double>(counts[f]);
      assigned += counts[f];
    }
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return remainders[a] > remainders[b]; });
    for (std::size_t leftover = n - assigned, idx = 0; leftover > 0; --leftover, ++idx)
      ++counts[order[idx % 3]];

    // A user with any observed item always keeps at least one in train.
    if (counts[0] == 0) {
      if (counts[1] >= counts[2]) {
        --counts[1];
      } else {
        --counts[2];
      }
      ++counts[0];
    }

    std::size_t pos = 0;
    for (int f = 0; f < 3; ++f) {
      for (std::size_t c = 0; c < counts[f]; ++c, ++pos) {
        split.entries.push_back({items[pos], u, static_cast<Fold>(f)});
      }
    }
  }
  return split;
}

Matd SplitAssignment::fold_matrix(Fold f, std::size_t items, std::size_t users) const {
  Matd m = Matd::Zero(static_cast<Eigen::Index>(items), static_cast<Eigen::Index>(users));
  for (const auto& e : entries)
    if (e.fold == f)
      m(static_cast<Eigen::Index>(e.item), static_cast<Eigen::Index>(e.user)) = 1.0;
  return m;
}

std::vector<std::vector<std::size_t>> SplitAssignment::per_user_items(Fold f,
                                                                      std::size_t users) const {
  std::vector<std::vector<std::size_t>> out(users);
  for (const auto& e : entries)
    if (e.fold == f) out[e.user].push_back(e.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

namespace {

ModalityFeatures load_features_csv(const std::filesystem::path& path, std::size_t expected_items,
                                   std::size_t expected_dim, ModalityTag tag) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file: " + path.string());
  Matd m(static_cast<Eigen::Index>(expected_items), static_cast<Eigen::Index>(expected_dim));
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (row >= expected_items)
      throw DataError("features file has more than " + std::to_string(expected_items) + " rows");
    auto fields = split_line(line, ',');
    if (fields.size() != expected_dim)
      throw DataError("feature dim mismatch at row " + std::to_string(row + 1) + ": expected " +
                      std::to_string(expected_dim) + ", got " + std::to_string(fields.size()));
    for (std::size_t d = 0; d < expected_dim; ++d) {
      double v = 0.0;
      try {
        v = std::stod(fields[d]);
      } catch (const std::exception&) {
        throw DataError("bad feature value at row " + std::to_string(row + 1) + ", column " +
                        std::to_string(d + 1));
      }
      if (!std::isfinite(v))
        throw DataError("non-finite feature at row " + std::to_string(row + 1));
      m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d)) = v;
    }
    ++row;
  }
  if (row != expected_items)
    throw DataError("feature row mismatch: expected " + std::to_string(expected_items) +
                    ", got " + std::to_string(row));
  return ModalityFeatures{tag, std::move(m)};
}

// Raw little-endian layout: u32 item count, u32 dim, then I*D float32.
ModalityFeatures load_features_binary(const std::filesystem::path& path,
                                      std::size_t expected_items, std::size_t expected_dim,
                                      ModalityTag tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open features file: " + path.string());
  std::uint32_t rows32 = 0, cols32 = 0;
  in.read(reinterpret_cast<char*>(&rows32), 4);
  in.read(reinterpret_cast<char*>(&cols32), 4);
  if (!in) throw DataError("features file truncated in header: " + path.string());
  if (rows32 != expected_items || cols32 != expected_dim)
    throw DataError("feature shape mismatch: file says " + std::to_string(rows32) + "x" +
                    std::to_string(cols32) + ", expected " + std::to_string(expected_items) + "x" +
                    std::to_string(expected_dim));
  Matd m(static_cast<Eigen::Index>(rows32), static_cast<Eigen::Index>(cols32));
  std::vector<float> buf(cols32);
  for (std::uint32_t i = 0; i < rows32; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(cols32 * 4));
    if (!in) throw DataError("features file truncated at row " + std::to_string(i));
    for (std::uint32_t d = 0; d < cols32; ++d) {
      if (!std::isfinite(buf[d]))
        throw DataError("non-finite feature at row " + std::to_string(i));
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = static_cast<double>(buf[d]);
    }
  }
  return ModalityFeatures{tag, std::move(m)};
}

}  // namespace

ModalityFeatures load_features(const std::filesystem::path& path, std::size_t expected_items,
                               std::size_t expected_dim, ModalityTag tag) {
  const auto ext = path.extension().string();
  if (ext == ".csv" || ext == ".tsv" || ext == ".txt")
    return load_features_csv(path, expected_items, expected_dim, tag);
  return load_features_binary(path, expected_items, expected_dim, tag);
}

void save_features_binary(const std::filesystem::path& path, const Matd& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write features file: " + path.string());
  const auto rows32 = static_cast<std::uint32_t>(features.rows());
  const auto cols32 = static_cast<std::uint32_t>(features.cols());
  out.write(reinterpret_cast<const char*>(&rows32), 4);
  out.write(reinterpret_cast<const char*>(&cols32), 4);
  std::vector<float> buf(cols32);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index d = 0; d < features.cols(); ++d)
      buf[static_cast<std::size_t>(d)] = static_cast<float>(features(i, d));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(cols32 * 4));
  }
}

void save_split_csv(const std::filesystem::path& path, const SplitAssignment& split,
                    const Catalog& catalog) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file: " + path.string());
  out << "user,item,fold\n";
  for (const auto& e : split.entries)
    out << catalog.user_token(e.user) << ',' << catalog.item_token(e.item) << ','
        << fold_name(e.fold) << '\n';
}

SplitAssignment load_split_csv(const std::filesystem::path& path, const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file: " + path.string());
  SplitAssignment split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || trim(line).empty()) continue;  // header
    auto fields = split_line(line, ',');
    if (fields.size() != 3)
      throw DataError("malformed split row at line " + std::to_string(line_no));
    split.entries.push_back({catalog.item_index(trim(fields[1])),
                             catalog.user_index(trim(fields[0])),
                             fold_from_name(trim(fields[2]))});
  }
  return split;
}

void save_token_index(const std::filesystem::path& path, const std::vector<std::string>& tokens) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write token index: " + path.string());
  for (const auto& t : tokens) out << t << '\n';
}

std::vector<std::string> load_token_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open token index: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return tokens;
}

void save_stats_json(const std::filesystem::path& path, const DatasetStats& stats) {
  nlohmann::json j{{"users", stats.users}, {"items", stats.items},
                   {"interactions", stats.interactions}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write stats file: " + path.string());
  out << j.dump(2) << '\n';
}

DatasetStats load_stats_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stats file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad stats file " + path.string() + ": " + e.what());
  }
  DatasetStats s;
  s.users = j.at("users").get<std::size_t>();
  s.items = j.at("items").get<std::size_t>();
  s.interactions = j.at("interactions").get<std::size_t>();
  return s;
}

}  // namespace cadmr
