#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cadmr/matrix.hpp"

namespace cadmr {

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// One interaction event; duplicates are preserved here and collapse to a
// single binary entry at matrix build time.
struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  double weight = 1.0;
};

// Bijective token -> dense index maps, assigned in lexicographic token
// order so the same records always produce the same indexing.
class Catalog {
 public:
  Catalog() = default;
  static Catalog from_records(const std::vector<InteractionRecord>& records);
  static Catalog from_tokens(std::vector<std::string> users, std::vector<std::string> items);

  std::size_t user_count() const { return user_tokens_.size(); }
  std::size_t item_count() const { return item_tokens_.size(); }

  std::size_t user_index(const std::string& token) const;
  std::size_t item_index(const std::string& token) const;
  const std::string& user_token(std::size_t idx) const { return user_tokens_.at(idx); }
  const std::string& item_token(std::size_t idx) const { return item_tokens_.at(idx); }
  const std::vector<std::string>& user_tokens() const { return user_tokens_; }
  const std::vector<std::string>& item_tokens() const { return item_tokens_; }

 private:
  std::vector<std::string> user_tokens_;
  std::vector<std::string> item_tokens_;
  std::map<std::string, std::size_t> user_index_;
  std::map<std::string, std::size_t> item_index_;
};

// Binarized items x users interaction matrix. Implicit feedback: an entry
// is 1 exactly when the interaction was observed, so the observation mask
// coincides with the values.
struct RatingMatrix {
  Matd values;  // I x U in {0,1}
  std::size_t items = 0;
  std::size_t users = 0;

  const Matd& mask() const { return values; }
  std::size_t observed_count() const { return static_cast<std::size_t>(values.sum()); }
};

enum class ModalityTag { kText, kVisual };

struct ModalityFeatures {
  ModalityTag tag = ModalityTag::kText;
  Matd matrix;  // I x D, row order equals catalog item order
  std::size_t dim() const { return static_cast<std::size_t>(matrix.cols()); }
};

enum class Fold : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

const char* fold_name(Fold f);
Fold fold_from_name(const std::string& name);

struct SplitEntry {
  std::size_t item = 0;
  std::size_t user = 0;
  Fold fold = Fold::kTrain;
};

// Exhaustive, disjoint fold assignment over the observed entries.
struct SplitAssignment {
  std::vector<SplitEntry> entries;
  std::uint64_t seed = 0;

  Matd fold_matrix(Fold f, std::size_t items, std::size_t users) const;
  // Per-user item index lists for a fold, each list in ascending item order.
  std::vector<std::vector<std::size_t>> per_user_items(Fold f, std::size_t users) const;
};

struct SplitRatio {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Headline counts of a prepared dataset (users / items / interactions).
struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;

  bool operator==(const DatasetStats&) const = default;
};

enum class InteractionFormat { kCsv, kTsv };

// A fully prepared dataset: binarized matrix, item-aligned features, fold
// assignment, and the token catalog behind the indices.
struct Dataset {
  RatingMatrix matrix;
  ModalityFeatures text;
  ModalityFeatures visual;
  SplitAssignment split;
  Catalog catalog;

  DatasetStats stats() const {
    return DatasetStats{matrix.users, matrix.items, matrix.observed_count()};
  }
};

// --- operations -----------------------------------------------------------

std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path,
                                                 InteractionFormat format,
                                                 bool has_header = false);

std::vector<InteractionRecord> k_core_filter(const std::vector<InteractionRecord>& records,
                                             std::size_t k);

RatingMatrix build_rating_matrix(const std::vector<InteractionRecord>& records,
                                 const Catalog& catalog);

SplitAssignment split_interactions(const RatingMatrix& matrix, const SplitRatio& ratio,
                                   std::uint64_t seed);

ModalityFeatures load_features(const std::filesystem::path& path, std::size_t expected_items,
                               std::size_t expected_dim, ModalityTag tag);

void save_features_binary(const std::filesystem::path& path, const Matd& features);

void save_split_csv(const std::filesystem::path& path, const SplitAssignment& split,
                    const Catalog& catalog);
SplitAssignment load_split_csv(const std::filesystem::path& path, const Catalog& catalog);

void save_token_index(const std::filesystem::path& path, const std::vector<std::string>& tokens);
std::vector<std::string> load_token_index(const std::filesystem::path& path);

void save_stats_json(const std::filesystem::path& path, const DatasetStats& stats);
DatasetStats load_stats_json(const std::filesystem::path& path);

}  // namespace cadmr
