#include <algorithm>

#include "doctest.h"
#include "emde/error.hpp"
#include "emde/random.hpp"
#include "emde/sketch.hpp"
#include "oracles.hpp"

using namespace emde;

namespace {

CodeBook random_codes(const std::string& modality, int n, int n_sketches, int sketch_dim, std::uint64_t seed) {
  Rng rng(seed);
  CodeBook book(modality, n_sketches, sketch_dim);
  for (int i = 0; i < n; ++i) {
    Buckets b(n_sketches);
    for (int k = 0; k < n_sketches; ++k) b(k) = static_cast<int>(rng.below(static_cast<std::uint64_t>(sketch_dim)));
    book.add(modality + std::to_string(i), b);
  }
  return book;
}

CodeBook fixed_codes(const std::string& modality = "liked") {
  CodeBook book(modality, 2, 4);
  book.add("a", Buckets{{0, 1}});
  book.add("b", Buckets{{0, 2}});
  book.add("c", Buckets{{3, 3}});
  return book;
}

}  // namespace

TEST_CASE("empty multiset gives the zero sketch") {
  const auto s = build_sketch({}, fixed_codes());
  CHECK(s.rows() == 2);
  CHECK(s.cols() == 4);
  CHECK(s.isZero());
}

TEST_CASE("single entity gives one-hot rows") {
  const std::vector<std::string> e{"b"};
  const auto s = build_sketch(e, fixed_codes());
  CHECK(s.sum() == 2);
  CHECK(s(0, 0) == 1);
  CHECK(s(1, 2) == 1);
}

TEST_CASE("collisions and repeats add up") {
  const std::vector<std::string> e{"a", "b", "a"};
  const auto s = build_sketch(e, fixed_codes());
  CHECK(s(0, 0) == 3);
  CHECK(s(1, 1) == 2);
  CHECK(s(1, 2) == 1);
  CHECK(query_count(s, fixed_codes().buckets(0)) == 2);
  CHECK(query_count(s, fixed_codes().buckets(1)) == 1);
  CHECK(query_count(s, fixed_codes().buckets(2)) == 0);
  const std::vector<std::string> unknown{"zzz"};
  CHECK_THROWS_AS(build_sketch(unknown, fixed_codes()), MissingMetadataError);
}

TEST_CASE("build_sketch matches brute-force histograms") {
  const auto codes = random_codes("m", 60, 4, 16, 3);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::string> e;
    const auto n = rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) e.push_back("m" + std::to_string(rng.below(60)));
    const auto s = build_sketch(e, codes);
    const auto h = oracle::histogram(e, codes);
    for (int k = 0; k < 4; ++k)
      for (int b = 0; b < 16; ++b) CHECK(s(k, b) == h[k][b]);
  }
}

TEST_CASE("sketches are additive and order-free") {
  const auto codes = random_codes("m", 30, 3, 8, 5);
  Rng rng(2);
  std::vector<std::string> a, b;
  for (int i = 0; i < 12; ++i) a.push_back("m" + std::to_string(rng.below(30)));
  for (int i = 0; i < 7; ++i) b.push_back("m" + std::to_string(rng.below(30)));
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  CHECK(build_sketch(ab, codes) == build_sketch(a, codes) + build_sketch(b, codes));
  auto shuffled = ab;
  rng.shuffle(shuffled.begin(), shuffled.end());
  CHECK(build_sketch(shuffled, codes) == build_sketch(ab, codes));
}

TEST_CASE("query_count never undercounts and is mostly exact on sparse sketches") {
  const auto codes = random_codes("m", 2000, 8, 256, 17);
  Rng rng(6);
  std::size_t exact = 0, total = 0;
  for (int t = 0; t < 100; ++t) {
    std::map<std::string, int> truth;
    std::vector<std::string> e;
    for (int i = 0; i < 10; ++i) {
      e.push_back("m" + std::to_string(rng.below(2000)));
      ++truth[e.back()];
    }
    const auto s = build_sketch(e, codes);
    for (const auto& [id, n] : truth) {
      const double q = query_count(s, codes.buckets(*codes.find(id)));
      CHECK(q >= n);
      exact += q == n;
      ++total;
    }
  }
  CHECK(static_cast<double>(exact) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("normalize_rows") {
  Sketch s(2, 3);
  s << 3, 0, 4, 0, 0, 0;
  normalize_rows(s);
  CHECK(s(0, 0) == doctest::Approx(0.6));
  CHECK(s(0, 2) == doctest::Approx(0.8));
  CHECK(s.row(1).isZero());
}

TEST_CASE("flat layout and block round trip") {
  const SketchLayout layout{5, 8, 128};
  CHECK(layout.flat_size() == 5120);
  CHECK(layout.flat_index(2, 3, 7) == (2 * 8 + 3) * 128 + 7);

  Rng rng(1);
  std::vector<Sketch> blocks;
  for (int m = 0; m < 3; ++m) {
    Sketch s(2, 4);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
    blocks.push_back(s);
  }
  const auto multi = MultiSketch::from_blocks(blocks);
  CHECK(multi.flat().size() == 24);
  CHECK(multi.blocks() == blocks);
  for (int m = 0; m < 3; ++m)
    for (int k = 0; k < 2; ++k)
      for (int b = 0; b < 4; ++b) CHECK(multi.flat()(multi.layout().flat_index(m, k, b)) == blocks[m](k, b));
}

TEST_CASE("user input sketch") {
  CodeSet codes{CodecParams{2, 4, 0}, {}};
  auto liked = fixed_codes();
  CodeBook disliked = fixed_codes("disliked");
  CodeBook cast("cast", 2, 4);
  cast.add("x", Buckets{{1, 1}});
  cast.add("y", Buckets{{2, 1}});
  codes.books = {liked, disliked, cast};
  EntityMapSet maps;
  maps["cast"] = EntityMap{"cast", {{"a", {"x", "y"}}, {"b", {"x"}}}};
  const std::vector<ModalitySpec> specs{{"liked", HistorySource::liked, false},
                                        {"disliked", HistorySource::disliked, false},
                                        {"cast", HistorySource::liked, true}};
  const UserHistory user{"u", {"a", "b"}, {}};

  const auto entities = user_input_entities(user, specs, maps);
  CHECK(entities[2] == std::vector<std::string>{"x", "y", "x"});

  const auto in = build_user_input(user, specs, maps, codes);
  CHECK(in.flat().size() == 24);
  CHECK(in.block(1).isZero());
  for (int m : {0, 2})
    for (int k = 0; k < 2; ++k) CHECK(in.block(m).row(k).norm() == doctest::Approx(1.0));
  // cast row 1: x twice, y once, both in bucket 1.
  CHECK(in.block(2)(1, 1) == doctest::Approx(1.0));
  CHECK(in.block(2)(0, 1) == doctest::Approx(2 / std::sqrt(5.0)));
}

TEST_CASE("user target sketch") {
  const std::vector<std::string> one{"c"};
  const auto t = build_user_target(one, fixed_codes());
  CHECK(t(0, 3) == 1);
  CHECK(t(1, 3) == 1);
  CHECK(t.sum() == 2);
  const std::vector<std::string> three{"a", "b", "c"};
  CHECK(build_user_target(three, fixed_codes()).sum() == 6);
  CHECK_THROWS_AS(build_user_target({}, fixed_codes()), ContractError);
}
