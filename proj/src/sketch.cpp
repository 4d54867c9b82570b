#include "emde/sketch.hpp"

#include "emde/error.hpp"

namespace emde {

Sketch build_sketch(std::span<const std::string> entities, const CodeBook& codes) {
  Sketch s = Sketch::Zero(codes.n_sketches(), codes.sketch_dim());
  for (const auto& e : entities) {
    const auto b = codes.buckets(codes.require(e));
    for (int k = 0; k < codes.n_sketches(); ++k) s(k, b(k)) += 1.0;
  }
  return s;
}

double query_count(const Sketch& sketch, const Eigen::Ref<const Buckets>& buckets) {
  if (buckets.size() != sketch.rows()) throw ContractError("bucket count != sketch rows");
  double best = sketch(0, buckets(0));
  for (Eigen::Index k = 1; k < sketch.rows(); ++k) best = std::min(best, sketch(k, buckets(k)));
  return best;
}

MultiSketch::MultiSketch(SketchLayout layout, Eigen::VectorXd flat) : layout_(layout), flat_(std::move(flat)) {
  if (flat_.size() != layout_.flat_size()) throw ContractError("flat sketch length does not match layout");
}

MultiSketch MultiSketch::from_blocks(std::span<const Sketch> blocks) {
  if (blocks.empty()) throw ContractError("no modality blocks");
  const SketchLayout layout{static_cast<int>(blocks.size()), static_cast<int>(blocks[0].rows()),
                            static_cast<int>(blocks[0].cols())};
  MultiSketch ms(layout);
  for (int m = 0; m < layout.n_modalities; ++m) {
    if (blocks[m].rows() != layout.n_sketches || blocks[m].cols() != layout.sketch_dim)
      throw ContractError("modality blocks differ in shape");
    ms.block(m) = blocks[m];
  }
  return ms;
}

MultiSketch::BlockMap MultiSketch::block(int modality) {
  return BlockMap(flat_.data() + modality * layout_.block_size(), layout_.n_sketches, layout_.sketch_dim);
}

MultiSketch::ConstBlockMap MultiSketch::block(int modality) const {
  return ConstBlockMap(flat_.data() + modality * layout_.block_size(), layout_.n_sketches, layout_.sketch_dim);
}

std::vector<Sketch> MultiSketch::blocks() const {
  std::vector<Sketch> out;
  for (int m = 0; m < layout_.n_modalities; ++m) out.emplace_back(block(m));
  return out;
}

std::vector<std::vector<std::string>> user_input_entities(const UserHistory& user,
                                                          std::span<const ModalitySpec> modalities,
                                                          const EntityMapSet& maps) {
  std::vector<std::vector<std::string>> out;
  out.reserve(modalities.size());
  for (const auto& spec : modalities) {
    std::vector<std::string> entities;
    for (const auto& item : user.items(spec.source)) {
      if (spec.mapped) {
        if (!maps.contains(spec.name))
          throw MissingMetadataError("modality '" + spec.name + "' has no entity map");
        auto e = expand_entities(item, spec.name, maps);
        entities.insert(entities.end(), e.begin(), e.end());
      } else {
        entities.push_back(item);
      }
    }
    out.push_back(std::move(entities));
  }
  return out;
}

MultiSketch build_user_input(const UserHistory& user, std::span<const ModalitySpec> modalities,
                             const EntityMapSet& maps, const CodeSet& codes) {
  const auto entities = user_input_entities(user, modalities, maps);
  const SketchLayout layout{static_cast<int>(modalities.size()), codes.params.n_sketches,
                            codes.params.sketch_dim};
  MultiSketch ms(layout);
  for (int m = 0; m < layout.n_modalities; ++m) {
    auto block = ms.block(m);
    block = build_sketch(entities[m], codes.at(modalities[m].name));
    normalize_rows(block);
  }
  return ms;
}

Sketch build_user_target(std::span<const std::string> items, const CodeBook& codes) {
  if (items.empty()) throw ContractError("target needs at least one held-out item");
  return build_sketch(items, codes);
}

}  // namespace emde
