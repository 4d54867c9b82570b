#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "emde/emb_io.hpp"
#include "emde/lsh_codec.hpp"

namespace emde {

// n_sketches x sketch_dim, row-major so that the flat view of row k, bucket b
// sits at k * sketch_dim + b.
template <typename Scalar>
using SketchT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Sketch = SketchT<double>;

// Count-min aggregate of a multiset: values(k, b) is the number of entities
// (with multiplicity) whose row-k bucket is b.
Sketch build_sketch(std::span<const std::string> entities, const CodeBook& codes);

// Standard CMS point query: min over rows of values(k, buckets(k)).
double query_count(const Sketch& sketch, const Eigen::Ref<const Buckets>& buckets);

// Scales each nonzero row to unit L2 norm; zero rows stay zero.
template <typename Derived>
void normalize_rows(Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const auto norm = m.row(k).norm();
    if (norm > 0) m.row(k) /= norm;
  }
}

struct SketchLayout {
  int n_modalities = 0;
  int n_sketches = 0;
  int sketch_dim = 0;

  Eigen::Index block_size() const { return static_cast<Eigen::Index>(n_sketches) * sketch_dim; }
  Eigen::Index flat_size() const { return n_modalities * block_size(); }
  Eigen::Index flat_index(int modality, int row, int bucket) const {
    return (static_cast<Eigen::Index>(modality) * n_sketches + row) * sketch_dim + bucket;
  }
};

// Per-modality sketches stored back to back in one flat vector.
class MultiSketch {
 public:
  explicit MultiSketch(SketchLayout layout)
      : layout_(layout), flat_(Eigen::VectorXd::Zero(layout.flat_size())) {}
  MultiSketch(SketchLayout layout, Eigen::VectorXd flat);
  static MultiSketch from_blocks(std::span<const Sketch> blocks);

  const SketchLayout& layout() const { return layout_; }
  const Eigen::VectorXd& flat() const { return flat_; }

  using BlockMap = Eigen::Map<Sketch>;
  using ConstBlockMap = Eigen::Map<const Sketch>;
  BlockMap block(int modality);
  ConstBlockMap block(int modality) const;
  std::vector<Sketch> blocks() const;

 private:
  SketchLayout layout_;
  Eigen::VectorXd flat_;
};

enum class HistorySource { liked, disliked };

// One input channel. `source` picks the user history the channel draws items
// from; `mapped` channels expand each item through an entity map (cast, plot
// tokens), others use the item itself (interactions, posters).
struct ModalitySpec {
  std::string name;
  HistorySource source = HistorySource::liked;
  bool mapped = false;
};

struct UserHistory {
  std::string user_id;
  std::vector<std::string> liked;     // timestamp order
  std::vector<std::string> disliked;  // timestamp order

  const std::vector<std::string>& items(HistorySource s) const {
    return s == HistorySource::liked ? liked : disliked;
  }
  bool empty() const { return liked.empty() && disliked.empty(); }
};

// Entity multiset per modality, in modality order.
std::vector<std::vector<std::string>> user_input_entities(const UserHistory& user,
                                                          std::span<const ModalitySpec> modalities,
                                                          const EntityMapSet& maps);

// Flattened input sketch with per-row L2 normalization.
MultiSketch build_user_input(const UserHistory& user, std::span<const ModalitySpec> modalities,
                             const EntityMapSet& maps, const CodeSet& codes);

// Raw counts over the held-out items of the output modality.
Sketch build_user_target(std::span<const std::string> items, const CodeBook& codes);

}  // namespace emde
