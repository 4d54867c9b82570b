#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "emde/emb_io.hpp"

namespace emde {

struct SynthConfig {
  int n_items = 500;
  int n_users = 2000;
  int n_clusters = 8;
  int embed_dim = 32;
  int tokens_per_item = 8;
  int cast_pool = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

// Desk-scale stand-in for a MovieLens-style corpus. Items sit around cluster
// centroids; every user likes items from one or two preferred clusters and
// dislikes items from the others. Cast, plot-token and poster embeddings are
// drawn around per-cluster centroids of their own, so every modality carries
// the cluster signal.
struct SynthCorpus {
  EmbeddingTable items;    // interaction embeddings (liked and disliked channels)
  EmbeddingTable posters;  // one per item
  EmbeddingTable cast;     // one per cast member
  EmbeddingTable tokens;   // one per plot token
  EntityMap cast_map;      // item -> cast members
  EntityMap plot_map;      // item -> plot tokens, with repeats
  std::vector<Interaction> interactions;

  std::vector<int> item_cluster;                          // by item row
  std::map<std::string, std::vector<int>> user_clusters;  // preferred clusters
};

SynthCorpus generate(const SynthConfig& config);

// File names written by write_corpus, relative to its directory.
struct SynthFiles {
  static constexpr const char* ratings = "ratings.csv";
  static constexpr const char* items = "items.tsv";
  static constexpr const char* posters = "posters.tsv";
  static constexpr const char* cast = "cast.tsv";
  static constexpr const char* tokens = "tokens.tsv";
  static constexpr const char* cast_map = "cast_map.tsv";
  static constexpr const char* plot_map = "plot_map.tsv";
};

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);

}  // namespace emde
