#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emde {

// All embeddings of one modality; row i of `vectors` belongs to ids[i].
struct EmbeddingTable {
  std::string modality;
  std::vector<std::string> ids;
  Eigen::MatrixXd vectors;
  std::unordered_map<std::string, Eigen::Index> index;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
  std::optional<Eigen::Index> find(std::string_view id) const;

  // Builds the table from parallel id/row lists, rejecting duplicates and
  // non-finite values.
  static EmbeddingTable from_rows(std::string modality, std::vector<std::string> ids,
                                  Eigen::MatrixXd vectors);
};

// TSV `entity_id<TAB>f1<TAB>...<TAB>fk`. Dimension is taken from the first row.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::string modality);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

struct Interaction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

inline constexpr double kMinRating = 0.5;
inline constexpr double kMaxRating = 5.0;
inline constexpr double kDefaultLikeThreshold = 4.0;

// MovieLens ratings CSV with header `userId,movieId,rating,timestamp`.
std::vector<Interaction> load_interactions(const std::filesystem::path& path);
void save_interactions(const std::filesystem::path& path, const std::vector<Interaction>& log);

// Per-user item lists, each ordered by timestamp (ties keep file order).
struct SplitHistories {
  std::map<std::string, std::vector<std::string>> liked;
  std::map<std::string, std::vector<std::string>> disliked;
};

// rating >= threshold goes to liked, everything else to disliked.
SplitHistories split_interactions(const std::vector<Interaction>& log,
                                  double threshold = kDefaultLikeThreshold);

// item -> ordered entity list (plot tokens, cast members) for one modality.
struct EntityMap {
  std::string modality;
  std::unordered_map<std::string, std::vector<std::string>> entities;
};

// Keyed by modality name. A modality without an entry is an identity
// modality: every item expands to itself.
using EntityMapSet = std::map<std::string, EntityMap, std::less<>>;

// TSV `item_id<TAB>entity1,entity2,...`. Entities may repeat.
EntityMap load_entity_map(const std::filesystem::path& path, std::string modality);
void save_entity_map(const std::filesystem::path& path, const EntityMap& map);

std::vector<std::string> expand_entities(std::string_view item_id, std::string_view modality,
                                         const EntityMapSet& maps);

// Throws MissingMetadataError naming the entities of `map` that have no row in
// `table`.
void check_entity_coverage(const EntityMap& map, const EmbeddingTable& table);

}  // namespace emde
