#include "emde/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emde/error.hpp"
#include "emde/random.hpp"

namespace emde {

namespace {

Eigen::MatrixXd unit_centroids(Rng& rng, int n, int dim) {
  Eigen::MatrixXd c(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) c(i, j) = rng.normal();
    c.row(i).normalize();
  }
  return c;
}

// Centroid plus isotropic noise with expected norm `spread`.
Eigen::RowVectorXd around(Rng& rng, const Eigen::MatrixXd& centroids, int cluster, double spread) {
  const auto dim = centroids.cols();
  Eigen::RowVectorXd v(dim);
  const double sigma = spread / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) v(j) = rng.normal() * sigma;
  if (cluster >= 0) v += centroids.row(cluster);
  return v;
}

std::string numbered(char prefix, int i) { return std::string(1, prefix) + std::to_string(i); }

// Weighted draw without replacement from `pool`, at most `count` picks.
std::vector<int> draw_weighted(Rng& rng, std::vector<int> pool, const std::vector<double>& weight, int count) {
  std::vector<int> picked;
  while (!pool.empty() && static_cast<int>(picked.size()) < count) {
    double total = 0.0;
    for (int i : pool) total += weight[static_cast<std::size_t>(i)];
    double r = rng.uniform() * total;
    std::size_t k = 0;
    for (; k + 1 < pool.size(); ++k) {
      r -= weight[static_cast<std::size_t>(pool[k])];
      if (r < 0) break;
    }
    picked.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return picked;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_items < 1 || n_users < 1 || n_clusters < 1 || embed_dim < 1 || tokens_per_item < 1 || cast_pool < 1)
    throw ConfigError("synth sizes must be positive");
  if (n_clusters > n_items) throw ConfigError("n_clusters must not exceed n_items");
}

SynthCorpus generate(const SynthConfig& config) {
  config.validate();
  const int C = config.n_clusters;
  const int dim = config.embed_dim;
  Rng geometry(derive_seed(config.seed, 1));
  const auto item_centroids = unit_centroids(geometry, C, dim);
  const auto poster_centroids = unit_centroids(geometry, C, dim);
  const auto cast_centroids = unit_centroids(geometry, C, dim);
  const auto token_centroids = unit_centroids(geometry, C, dim);

  SynthCorpus corpus;
  Rng rng(derive_seed(config.seed, 2));

  // Items, cluster = index mod C; popularity decays with rank inside the cluster.
  std::vector<std::string> item_ids;
  Eigen::MatrixXd item_vecs(config.n_items, dim), poster_vecs(config.n_items, dim);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(C));
  std::vector<double> popularity(static_cast<std::size_t>(config.n_items));
  for (int i = 0; i < config.n_items; ++i) {
    const int c = i % C;
    const int rank = i / C;
    item_ids.push_back(numbered('m', i + 1));
    corpus.item_cluster.push_back(c);
    members[static_cast<std::size_t>(c)].push_back(i);
    popularity[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(1.0 + rank);
    item_vecs.row(i) = around(rng, item_centroids, c, 0.6);
    poster_vecs.row(i) = around(rng, poster_centroids, c, 0.8);
  }
  corpus.items = EmbeddingTable::from_rows("items", item_ids, item_vecs);
  corpus.posters = EmbeddingTable::from_rows("posters", item_ids, poster_vecs);

  // Cast members belong to cluster j mod C.
  std::vector<std::string> cast_ids;
  Eigen::MatrixXd cast_vecs(config.cast_pool, dim);
  std::vector<std::vector<int>> cast_by_cluster(static_cast<std::size_t>(C));
  for (int j = 0; j < config.cast_pool; ++j) {
    cast_ids.push_back(numbered('a', j + 1));
    cast_by_cluster[static_cast<std::size_t>(j % C)].push_back(j);
    cast_vecs.row(j) = around(rng, cast_centroids, j % C, 0.7);
  }
  corpus.cast = EmbeddingTable::from_rows("cast", cast_ids, cast_vecs);

  // Plot vocabulary: a topical pool per cluster plus generic tokens.
  const int per_cluster = std::max(2 * config.tokens_per_item, 10);
  const int generic = 20;
  std::vector<std::string> token_ids;
  Eigen::MatrixXd token_vecs(C * per_cluster + generic, dim);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < per_cluster; ++j) {
      token_vecs.row(static_cast<Eigen::Index>(token_ids.size())) = around(rng, token_centroids, c, 0.7);
      token_ids.push_back("w" + std::to_string(c) + "_" + std::to_string(j));
    }
  for (int j = 0; j < generic; ++j) {
    token_vecs.row(static_cast<Eigen::Index>(token_ids.size())) = around(rng, token_centroids, -1, 1.0);
    token_ids.push_back(numbered('g', j));
  }
  corpus.tokens = EmbeddingTable::from_rows("tokens", token_ids, token_vecs);

  corpus.cast_map.modality = "cast";
  corpus.plot_map.modality = "plot";
  const int cast_per_item = std::min(3, config.cast_pool);
  for (int i = 0; i < config.n_items; ++i) {
    const auto c = static_cast<std::size_t>(corpus.item_cluster[static_cast<std::size_t>(i)]);
    std::vector<std::string> plot;
    for (int t = 0; t < config.tokens_per_item; ++t) {
      if (rng.uniform() < 0.8)
        plot.push_back(token_ids[c * static_cast<std::size_t>(per_cluster) + rng.below(static_cast<std::uint64_t>(per_cluster))]);
      else
        plot.push_back(token_ids[static_cast<std::size_t>(C * per_cluster) + rng.below(generic)]);
    }
    std::vector<std::string> cast;
    while (static_cast<int>(cast.size()) < cast_per_item) {
      const auto& own = cast_by_cluster[c];
      const int actor = (!own.empty() && rng.uniform() < 0.85)
                            ? own[rng.below(own.size())]
                            : static_cast<int>(rng.below(static_cast<std::uint64_t>(config.cast_pool)));
      const auto& id = cast_ids[static_cast<std::size_t>(actor)];
      if (std::find(cast.begin(), cast.end(), id) == cast.end()) cast.push_back(id);
    }
    corpus.plot_map.entities.emplace(item_ids[static_cast<std::size_t>(i)], std::move(plot));
    corpus.cast_map.entities.emplace(item_ids[static_cast<std::size_t>(i)], std::move(cast));
  }

  // Users.
  Rng users(derive_seed(config.seed, 3));
  std::int64_t clock = 1'000'000'000;
  for (int u = 0; u < config.n_users; ++u) {
    const auto user_id = numbered('u', u + 1);
    std::vector<int> clusters(static_cast<std::size_t>(C));
    std::iota(clusters.begin(), clusters.end(), 0);
    users.shuffle(clusters.begin(), clusters.end());
    const int n_pref = (C >= 2 && users.uniform() < 0.5) ? 2 : 1;
    std::vector<int> preferred(clusters.begin(), clusters.begin() + n_pref);
    std::sort(preferred.begin(), preferred.end());
    corpus.user_clusters[user_id] = preferred;

    std::vector<int> liked_pool, disliked_pool;
    for (int i = 0; i < config.n_items; ++i) {
      const bool in = std::binary_search(preferred.begin(), preferred.end(), corpus.item_cluster[static_cast<std::size_t>(i)]);
      (in ? liked_pool : disliked_pool).push_back(i);
    }
    const int n_like = 6 + static_cast<int>(users.below(15));
    const int n_dislike = 2 + static_cast<int>(users.below(5));
    struct Event {
      int item;
      double rating;
    };
    std::vector<Event> events;
    for (int i : draw_weighted(users, liked_pool, popularity, n_like))
      events.push_back({i, 4.0 + 0.5 * static_cast<double>(users.below(3))});
    for (int i : draw_weighted(users, disliked_pool, popularity, n_dislike))
      events.push_back({i, 1.0 + 0.5 * static_cast<double>(users.below(5))});
    users.shuffle(events.begin(), events.end());
    for (const auto& e : events) {
      clock += 1 + static_cast<std::int64_t>(users.below(1000));
      corpus.interactions.push_back({user_id, item_ids[static_cast<std::size_t>(e.item)], e.rating, clock});
    }
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir);
  save_interactions(dir / SynthFiles::ratings, corpus.interactions);
  save_embeddings(dir / SynthFiles::items, corpus.items);
  save_embeddings(dir / SynthFiles::posters, corpus.posters);
  save_embeddings(dir / SynthFiles::cast, corpus.cast);
  save_embeddings(dir / SynthFiles::tokens, corpus.tokens);
  save_entity_map(dir / SynthFiles::cast_map, corpus.cast_map);
  save_entity_map(dir / SynthFiles::plot_map, corpus.plot_map);
}

}  // namespace emde
