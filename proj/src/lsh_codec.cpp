#include "emde/lsh_codec.hpp"

#include <bit>
#include <fstream>

#include "emde/binary_io.hpp"
#include "emde/error.hpp"
#include "emde/random.hpp"

namespace emde {

int CodecParams::bits() const { return std::countr_zero(static_cast<unsigned>(sketch_dim)); }

void CodecParams::validate() const {
  if (n_sketches < 1) throw ConfigError("n_sketches must be >= 1");
  if (sketch_dim < 2 || !std::has_single_bit(static_cast<unsigned>(sketch_dim)))
    throw ConfigError("sketch_dim must be a power of two >= 2");
}

std::uint64_t modality_seed(std::uint64_t seed, std::string_view modality) {
  return derive_seed(seed, fnv1a64(modality));
}

Hyperplanes make_hyperplanes(const CodecParams& params, std::string_view modality, Eigen::Index dim) {
  params.validate();
  if (dim < 1) throw ContractError("embedding dimension must be >= 1");
  Hyperplanes h;
  h.n_sketches = params.n_sketches;
  h.bits = params.bits();
  h.planes.resize(static_cast<Eigen::Index>(h.n_sketches) * h.bits, dim);
  const auto base = modality_seed(params.seed, modality);
  for (int k = 0; k < h.n_sketches; ++k) {
    const auto row_seed = derive_seed(base, static_cast<std::uint64_t>(k));
    for (int j = 0; j < h.bits; ++j) {
      Rng rng(derive_seed(row_seed, static_cast<std::uint64_t>(j)));
      auto p = h.planes.row(static_cast<Eigen::Index>(k) * h.bits + j);
      for (Eigen::Index c = 0; c < dim; ++c) p(c) = rng.normal();
    }
  }
  return h;
}

Buckets assign_buckets(const Eigen::Ref<const Eigen::VectorXd>& v, const Hyperplanes& planes) {
  if (v.size() != planes.dim())
    throw ContractError("vector length " + std::to_string(v.size()) + " != plane dimension " +
                        std::to_string(planes.dim()));
  const Eigen::VectorXd dots = planes.planes * v;
  Buckets out(planes.n_sketches);
  for (int k = 0; k < planes.n_sketches; ++k) {
    int bucket = 0;
    for (int j = 0; j < planes.bits; ++j)
      if (dots(static_cast<Eigen::Index>(k) * planes.bits + j) >= 0.0) bucket |= 1 << j;
    out(k) = bucket;
  }
  return out;
}

CodeBook::CodeBook(std::string modality, int n_sketches, int sketch_dim)
    : modality_(std::move(modality)), n_sketches_(n_sketches), sketch_dim_(sketch_dim) {}

void CodeBook::add(std::string entity_id, const Eigen::Ref<const Buckets>& buckets) {
  if (buckets.size() != n_sketches_) throw ContractError("bucket count != n_sketches");
  for (Eigen::Index k = 0; k < buckets.size(); ++k)
    if (buckets(k) < 0 || buckets(k) >= sketch_dim_) throw ContractError("bucket index out of range");
  const auto i = size();
  if (!index_.emplace(entity_id, i).second)
    throw DataError("duplicate entity '" + entity_id + "' in " + modality_ + " codes");
  ids_.push_back(std::move(entity_id));
  codes_.insert(codes_.end(), buckets.data(), buckets.data() + buckets.size());
}

std::optional<Eigen::Index> CodeBook::find(std::string_view entity_id) const {
  const auto it = index_.find(std::string(entity_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index CodeBook::require(std::string_view entity_id) const {
  if (const auto i = find(entity_id)) return *i;
  throw MissingMetadataError("no " + modality_ + " codes for entity '" + std::string(entity_id) + "'");
}

ItemCodes CodeBook::record(Eigen::Index i) const { return {ids_[i], modality_, buckets(i)}; }

bool CodeBook::operator==(const CodeBook& other) const {
  return modality_ == other.modality_ && n_sketches_ == other.n_sketches_ &&
         sketch_dim_ == other.sketch_dim_ && ids_ == other.ids_ && codes_ == other.codes_;
}

CodeBook encode_all(const EmbeddingTable& embeddings, const CodecParams& params) {
  CodeBook book(embeddings.modality, params.n_sketches, params.sketch_dim);
  if (embeddings.size() == 0) return book;
  const auto planes = make_hyperplanes(params, embeddings.modality, embeddings.dim());
  for (Eigen::Index i = 0; i < embeddings.size(); ++i)
    book.add(embeddings.ids[i], assign_buckets(embeddings.vectors.row(i).transpose(), planes));
  return book;
}

const CodeBook& CodeSet::at(std::string_view modality) const {
  for (const auto& b : books)
    if (b.modality() == modality) return b;
  throw MissingMetadataError("no codes for modality '" + std::string(modality) + "'");
}

std::size_t CodeSet::total_codes() const {
  std::size_t n = 0;
  for (const auto& b : books) n += static_cast<std::size_t>(b.size());
  return n;
}

void save_codes(const std::filesystem::path& path, const CodeSet& codes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("EMDECODE", 8);
  binary::write<std::uint32_t>(out, 1);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(codes.params.n_sketches));
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(codes.params.sketch_dim));
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(codes.books.size()));
  binary::write<std::uint64_t>(out, codes.params.seed);
  for (const auto& book : codes.books) {
    binary::write_string(out, book.modality());
    binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(book.size()));
    for (Eigen::Index i = 0; i < book.size(); ++i) {
      binary::write_string(out, book.ids()[i]);
      const Buckets b = book.buckets(i);
      for (Eigen::Index k = 0; k < b.size(); ++k) binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(b(k)));
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

CodeSet load_codes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binary::expect_magic(in, "EMDECODE");
  if (binary::read<std::uint32_t>(in) != 1) throw DataError("unsupported codes version");
  CodeSet codes;
  codes.params.n_sketches = static_cast<int>(binary::read<std::uint32_t>(in));
  codes.params.sketch_dim = static_cast<int>(binary::read<std::uint32_t>(in));
  const auto n_modalities = binary::read<std::uint32_t>(in);
  codes.params.seed = binary::read<std::uint64_t>(in);
  codes.params.validate();
  for (std::uint32_t m = 0; m < n_modalities; ++m) {
    CodeBook book(binary::read_string(in), codes.params.n_sketches, codes.params.sketch_dim);
    const auto count = binary::read<std::uint64_t>(in);
    Buckets b(codes.params.n_sketches);
    for (std::uint64_t i = 0; i < count; ++i) {
      auto id = binary::read_string(in);
      for (int k = 0; k < codes.params.n_sketches; ++k) b(k) = static_cast<int>(binary::read<std::uint32_t>(in));
      book.add(std::move(id), b);
    }
    codes.books.push_back(std::move(book));
  }
  return codes;
}

}  // namespace emde
