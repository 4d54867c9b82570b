#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emde/emb_io.hpp"

namespace emde {

using Buckets = Eigen::VectorXi;

struct CodecParams {
  int n_sketches = 8;
  int sketch_dim = 128;  // power of two, >= 2
  std::uint64_t seed = 0;

  // Hyperplanes per sketch row: log2(sketch_dim).
  int bits() const;
  void validate() const;
};

// Seed of one modality's hyperplane family: derive_seed(seed, fnv1a64(name)).
std::uint64_t modality_seed(std::uint64_t seed, std::string_view modality);

// Sign-random-projection planes. Row (k * bits + j) of `planes` is plane j of
// sketch row k.
struct Hyperplanes {
  int n_sketches = 0;
  int bits = 0;
  Eigen::MatrixXd planes;

  Eigen::Index dim() const { return planes.cols(); }
  auto plane(int row, int j) const { return planes.row(static_cast<Eigen::Index>(row) * bits + j); }
};

// Entries are standard normals; each plane (k, j) owns the Rng stream seeded
// with derive_seed(derive_seed(modality_seed, k), j) and takes its `dim`
// coordinates from it in order.
Hyperplanes make_hyperplanes(const CodecParams& params, std::string_view modality, Eigen::Index dim);

// Bucket of row k = sum_j bit_j * 2^j, bit_j = 1 iff dot(v, plane(k, j)) >= 0.
Buckets assign_buckets(const Eigen::Ref<const Eigen::VectorXd>& v, const Hyperplanes& planes);

struct ItemCodes {
  std::string entity_id;
  std::string modality;
  Buckets buckets;
};

// Bucket codes of every entity of one modality, one row per entity.
class CodeBook {
 public:
  CodeBook() = default;
  CodeBook(std::string modality, int n_sketches, int sketch_dim);

  const std::string& modality() const { return modality_; }
  int n_sketches() const { return n_sketches_; }
  int sketch_dim() const { return sketch_dim_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }

  void add(std::string entity_id, const Eigen::Ref<const Buckets>& buckets);

  std::optional<Eigen::Index> find(std::string_view entity_id) const;
  // Throws MissingMetadataError if the entity has no codes.
  Eigen::Index require(std::string_view entity_id) const;
  Eigen::Map<const Buckets> buckets(Eigen::Index i) const {
    return Eigen::Map<const Buckets>(codes_.data() + i * n_sketches_, n_sketches_);
  }
  ItemCodes record(Eigen::Index i) const;

  bool operator==(const CodeBook& other) const;

 private:
  std::string modality_;
  int n_sketches_ = 0;
  int sketch_dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<int> codes_;  // row-major, size() x n_sketches
  std::unordered_map<std::string, Eigen::Index> index_;
};

CodeBook encode_all(const EmbeddingTable& embeddings, const CodecParams& params);

// Codes of all configured modalities, in modality order.
struct CodeSet {
  CodecParams params;
  std::vector<CodeBook> books;

  const CodeBook& at(std::string_view modality) const;
  std::size_t total_codes() const;
};

// Binary layout (little endian):
//   char[8] "EMDECODE"; u32 version (=1); u32 n_sketches; u32 sketch_dim;
//   u32 modality_count; u64 seed;
//   per modality: u32 name_len, name bytes, u64 entity_count,
//     per entity: u32 id_len, id bytes, n_sketches x u32 bucket.
void save_codes(const std::filesystem::path& path, const CodeSet& codes);
CodeSet load_codes(const std::filesystem::path& path);

}  // namespace emde
