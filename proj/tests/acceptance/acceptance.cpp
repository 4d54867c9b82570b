// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "../fixtures.hpp"
#include "../oracles.hpp"
#include "../test_util.hpp"
#include "emde/attribution.hpp"
#include "emde/pipeline.hpp"
#include "emde/random.hpp"

using namespace emde;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr std::uint64_t kSeed = 20240601;

SynthConfig acceptance_corpus() {
  SynthConfig c;
  c.n_items = 500;
  c.n_users = 2000;
  c.n_clusters = 8;
  c.seed = kSeed;
  return c;
}

struct PipelineRun {
  PipelineConfig cfg;
  std::vector<EvalRow> eval;
  std::vector<double> loss_curve;
  double train_seconds = 0.0;
  std::vector<std::filesystem::path> reports;
};

// synth -> prepare -> train -> attribute -> aggregate -> eval in `dir`.
PipelineRun run_pipeline(const std::filesystem::path& dir) {
  PipelineRun run;
  run.cfg = load_config(cmd_synth(dir, acceptance_corpus()));
  cmd_prepare(run.cfg);
  const auto t0 = Clock::now();
  run.loss_curve = cmd_train(run.cfg).loss_curve;
  run.train_seconds = seconds_since(t0);
  cmd_attribute(run.cfg, {}, std::nullopt);
  run.reports.push_back(cmd_aggregate(run.cfg, std::nullopt));
  run.eval = cmd_eval(run.cfg, {10, 20});
  return run;
}

// 1: completeness on the trained model.
void ig_completeness(const PipelineConfig& cfg) {
  const auto t0 = Clock::now();
  const auto data = load_prepared(cfg);
  const auto model = load_model(Workdir{cfg.workdir}.model());
  const auto specs = cfg.specs();
  std::vector<std::string> users;
  for (const auto& [u, role] : data.split) users.push_back(u);
  std::sort(users.begin(), users.end());
  Rng rng(derive_seed(kSeed, 1));
  rng.shuffle(users.begin(), users.end());
  users.resize(100);

  const auto& output = data.codes.books.front();
  int within = 0, doublings = 0, reduced = 0;
  double worst_rel = 0.0;
  std::vector<double> mean_gap(6, 0.0);
  for (const auto& u : users) {
    const auto h = data.history(u);
    const auto input = build_user_input(h, specs, data.maps, data.codes);
    std::unordered_set<std::string> exclude(h.liked.begin(), h.liked.end());
    exclude.insert(h.disliked.begin(), h.disliked.end());
    const auto top = recommend(model, input, output, exclude, 1).items.front();
    const auto units = select_output_buckets(output.buckets(output.require(top.item_id)));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(input.flat().size());
    double prev = -1.0;
    for (int m = 32, level = 0; m <= 1024; m *= 2, ++level) {
      const auto a = integrated_gradients(model, input.flat(), zero, units, m);
      const double scale = std::abs(a.target_at_input - a.target_at_baseline);
      mean_gap[static_cast<std::size_t>(level)] += a.completeness_gap / 100;
      if (m == 512) {
        within += a.completeness_gap <= 1e-3 * scale + 1e-6;
        worst_rel = std::max(worst_rel, a.completeness_gap / std::max(scale, 1e-300));
      }
      if (prev >= 0) {
        ++doublings;
        reduced += a.completeness_gap < prev;
      }
      prev = a.completeness_gap;
    }
  }
  const double secs = seconds_since(t0);
  const double frac = static_cast<double>(reduced) / doublings;
  std::string curve;
  for (double g : mean_gap) curve += fmt("%s%.2e", curve.empty() ? "" : " ", g);
  report(1, "IG completeness", within == 100 && frac >= 0.8 && secs < 60,
         fmt("%d/100 users within 1e-3*|dG|+1e-6 at m=512 (worst relative gap %.3g); "
             "%d/%d per-user doublings 32->1024 reduce the gap (%.1f%%, need >= 80%%); "
             "mean gap over users at m=32..1024: %s; %.1f s",
             within, worst_rel, reduced, doublings, 100 * frac, curve.c_str(), secs));
}

// 2: analytic gradients against central differences.
void gradient_oracle() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(kSeed, 2));
  const int draws = 100;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int draw = 0; draw < draws; ++draw) {
    const int n_sketches = 1 << rng.below(3);
    const int sketch_dim = 2 << rng.below(3);
    const auto in_dim = static_cast<Eigen::Index>(2 + rng.below(12));
    std::vector<Eigen::Index> widths{in_dim};
    const auto hidden_layers = rng.below(3) + 1;
    for (std::uint64_t l = 0; l < hidden_layers; ++l) widths.push_back(static_cast<Eigen::Index>(3 + rng.below(10)));
    widths.push_back(n_sketches * sketch_dim);
    auto m = oracle::random_model(widths, n_sketches, rng.next_u64());
    const auto x = oracle::random_vector(rng, in_dim);
    Eigen::VectorXd t = Eigen::VectorXd::Zero(n_sketches * sketch_dim);
    for (int k = 0; k < n_sketches; ++k)
      for (int r = 0; r < 2; ++r) t(k * sketch_dim + static_cast<Eigen::Index>(rng.below(sketch_dim))) += 1.0;
    const std::vector<double> xs(x.data(), x.data() + x.size()), ts(t.data(), t.data() + t.size());
    const auto g = loss_and_grad(m, x, t).grads;

    const auto check = [&](double analytic, double& slot) {
      const double at = slot;
      const double fd = oracle::central_difference(
          [&](double v) {
            slot = v;
            const double f = oracle::loss(m, xs, ts);
            slot = at;
            return f;
          },
          at);
      worst = std::max(worst, oracle::rel_err(analytic, fd));
      ++checked;
    };
    for (Eigen::Index i = 0; i < in_dim; ++i) {
      auto xp = xs;
      const double at = xp[static_cast<std::size_t>(i)];
      const double fd = oracle::central_difference(
          [&](double v) {
            xp[static_cast<std::size_t>(i)] = v;
            return oracle::loss(m, xp, ts);
          },
          at);
      worst = std::max(worst, oracle::rel_err(g.input(i), fd));
      ++checked;
    }
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
      for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j)
        for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) check(g.weights[l](i, j), m.weights[l](i, j));
      for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) check(g.biases[l](i), m.biases[l](i));
    }
  }
  const double secs = seconds_since(t0);
  report(2, "gradient oracle", worst <= 1e-4 && secs < 60,
         fmt("%d model/input draws, %zu input and parameter gradients, max relative error %.3g (<= 1e-4); %.1f s",
             draws, checked, worst, secs));
}

// 3: sign-random-projection collision law at sketch_dim 16.
void lsh_collision_law() {
  const int samples = 100000, dim = 32;
  const CodecParams params{1, 16, 0};
  const int d = params.bits();
  Rng rng(derive_seed(kSeed, 3));
  bool ok = true;
  std::string detail;
  for (double deg : {15.0, 45.0, 90.0}) {
    const double theta = deg * std::numbers::pi / 180;
    int same = 0;
    for (int s = 0; s < samples; ++s) {
      Eigen::VectorXd u(dim), w(dim);
      for (int i = 0; i < dim; ++i) {
        u(i) = rng.normal();
        w(i) = rng.normal();
      }
      u.normalize();
      w -= w.dot(u) * u;
      w.normalize();
      const Eigen::VectorXd v = std::cos(theta) * u + std::sin(theta) * w;
      const auto planes = make_hyperplanes(CodecParams{1, 16, rng.next_u64()}, "acceptance", dim);
      same += assign_buckets(u, planes)(0) == assign_buckets(v, planes)(0);
    }
    const double rate = static_cast<double>(same) / samples;
    const double law = std::pow(1 - theta / std::numbers::pi, d);
    ok = ok && std::abs(rate - law) <= 0.02;
    detail += fmt("%s%g deg: %.4f vs %.4f", detail.empty() ? "" : "; ", deg, rate, law);
  }
  report(3, "LSH collision law", ok, detail + fmt(" (d=%d, %d samples each, tolerance 0.02)", d, samples));
}

CodeBook random_book(Rng& rng, const std::string& modality, int n, int n_sketches, int sketch_dim) {
  CodeBook book(modality, n_sketches, sketch_dim);
  for (int i = 0; i < n; ++i) {
    Buckets b(n_sketches);
    for (int k = 0; k < n_sketches; ++k) b(k) = static_cast<int>(rng.below(static_cast<std::uint64_t>(sketch_dim)));
    book.add(modality + "_" + std::to_string(i), b);
  }
  return book;
}

// 4: build_sketch vs brute-force histograms; count-min never undercounts.
void sketch_oracle() {
  Rng rng(derive_seed(kSeed, 4));
  const auto codes = random_book(rng, "m", 300, 8, 32);
  int exact = 0, undercounts = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::string> e;
    std::map<std::string, int> truth;
    const auto n = rng.below(60);
    for (std::uint64_t i = 0; i < n; ++i) {
      e.push_back("m_" + std::to_string(rng.below(300)));
      ++truth[e.back()];
    }
    const auto s = build_sketch(e, codes);
    const auto h = oracle::histogram(e, codes);
    bool same = true;
    for (int k = 0; k < 8; ++k)
      for (int b = 0; b < 32; ++b) same = same && s(k, b) == h[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
    exact += same;
    for (Eigen::Index i = 0; i < codes.size(); ++i) {
      const auto it = truth.find(codes.ids()[static_cast<std::size_t>(i)]);
      undercounts += query_count(s, codes.buckets(i)) < (it == truth.end() ? 0 : it->second);
    }
  }
  report(4, "sketch oracle", exact == 1000 && undercounts == 0,
         fmt("%d/1000 multisets equal the brute-force histogram; %d undercounting queries out of 300000", exact,
             undercounts));
}

// 5: decode against lookup-and-average.
void decode_oracle() {
  Rng rng(derive_seed(kSeed, 5));
  const int n_sketches = 8, sketch_dim = 64;
  const std::vector<ModalitySpec> specs{
      {"liked", HistorySource::liked, false}, {"disliked", HistorySource::disliked, false},
      {"cast", HistorySource::liked, true}};
  CodeSet codes{CodecParams{n_sketches, sketch_dim, 0}, {}};
  for (const auto& s : specs) codes.books.push_back(random_book(rng, s.name, 100, n_sketches, sketch_dim));
  const SketchLayout layout{3, n_sketches, sketch_dim};
  int equal = 0;
  std::size_t entities_checked = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::vector<std::string>> entities(3);
    for (int m = 0; m < 3; ++m)
      for (int i = 0, n = static_cast<int>(rng.below(15)); i < n; ++i)
        entities[static_cast<std::size_t>(m)].push_back(specs[static_cast<std::size_t>(m)].name + "_" +
                                                        std::to_string(rng.below(100)));
    std::vector<double> raw(static_cast<std::size_t>(layout.flat_size()));
    for (auto& v : raw) v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(7)) - 3);
    const Eigen::Map<const Eigen::VectorXd> a(raw.data(), static_cast<Eigen::Index>(raw.size()));
    const auto decoded = decode_entity_attributions(a, specs, entities, codes);
    bool all = true;
    std::size_t expected = 0;
    for (int m = 0; m < 3; ++m) expected += std::set<std::string>(entities[m].begin(), entities[m].end()).size();
    all = decoded.size() == expected;
    for (const auto& e : decoded) {
      const auto mi = e.modality == "liked" ? 0 : e.modality == "disliked" ? 1 : 2;
      const auto& book = codes.at(e.modality);
      const auto b = book.buckets(*book.find(e.id));
      const std::vector<int> buckets(b.data(), b.data() + b.size());
      all = all && e.score == oracle::decode_one(raw, mi, buckets, n_sketches, sketch_dim);
      ++entities_checked;
    }
    equal += all;
  }
  report(5, "decode oracle", equal == 1000,
         fmt("%d/1000 attribution vectors decode bitwise equal to lookup-and-average (%zu entity scores)", equal,
             entities_checked));
}

// 6: summed-target IG equals the sum of per-unit IG.
void linearity(const PipelineConfig& cfg) {
  const auto data = load_prepared(cfg);
  const auto model = load_model(Workdir{cfg.workdir}.model());
  const auto specs = cfg.specs();
  const auto& output = data.codes.books.front();
  double worst = 0.0;
  int cases = 0;
  for (const auto& u : data.users(SplitRole::test)) {
    if (cases == 10) break;
    const auto h = data.history(u);
    const auto x = build_user_input(h, specs, data.maps, data.codes).flat();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(x.size());
    const auto units = select_output_buckets(output.buckets(static_cast<Eigen::Index>(cases)));
    for (auto mode : {TargetMode::logit, TargetMode::prob}) {
      const auto joint = integrated_gradients(model, x, zero, units, 128, mode).values;
      Eigen::VectorXd parts = Eigen::VectorXd::Zero(x.size());
      for (const auto& unit : units)
        parts += integrated_gradients(model, x, zero, std::vector<OutputUnit>{unit}, 128, mode).values;
      worst = std::max(worst, (joint - parts).cwiseAbs().maxCoeff());
    }
    ++cases;
  }
  report(6, "linearity identity", worst <= 1e-10,
         fmt("%d users x {logit, prob} on the trained model, max |IG(sum) - sum IG(unit)| = %.3g (<= 1e-10)", cases,
             worst));
}

// 7: learning beats popularity.
void end_to_end(const PipelineRun& run) {
  const auto& r20 = run.eval.back();
  const double reduction = 1 - run.loss_curve.back() / run.loss_curve.front();
  report(7, "end-to-end learning", r20.recall >= 2 * r20.popularity_recall && run.train_seconds < 300,
         fmt("Recall@20 %.4f vs popularity %.4f (ratio %.2f, need >= 2); Recall@10 %.4f vs %.4f; "
             "loss %.4f -> %.4f (%.0f%% lower); training %.1f s (< 300 s)",
             r20.recall, r20.popularity_recall, r20.recall / std::max(r20.popularity_recall, 1e-12),
             run.eval.front().recall, run.eval.front().popularity_recall, run.loss_curve.front(),
             run.loss_curve.back(), 100 * reduction, run.train_seconds));
}

// 8: metric oracles on the constructed fixture.
void metric_oracles() {
  const auto users = fixture::agreement_users();
  const double agreement = modality_agreement(users, "liked", "poster");
  const double liked = mean_top_attribution(users, "liked");
  const double poster = mean_top_attribution(users, "poster");
  const bool ok = std::abs(agreement - fixture::kAgreement) <= 1e-12 &&
                  std::abs(liked - fixture::kLikedMeanTop) <= 1e-12 &&
                  std::abs(poster - fixture::kPosterMeanTop) <= 1e-12;
  report(8, "metric oracles", ok,
         fmt("10-user fixture: agreement %.6g (hand count 0.1), mean top attribution liked %.6g (0.029), "
             "poster %.6g (0.48)",
             agreement, liked, poster));
}

// 9: a second full run reproduces every report byte for byte.
void determinism(const PipelineRun& a, const PipelineRun& b) {
  bool ok = a.reports.size() == b.reports.size();
  std::size_t bytes = 0;
  for (std::size_t i = 0; ok && i < a.reports.size(); ++i) {
    const auto x = testing::read_file(a.reports[i]);
    const auto y = testing::read_file(b.reports[i]);
    ok = a.reports[i].filename() == b.reports[i].filename() && x == y && !x.empty();
    bytes += x.size();
  }
  const Workdir wa{a.cfg.workdir}, wb{b.cfg.workdir};
  const bool model_same = testing::read_file(wa.model()) == testing::read_file(wb.model());
  const bool metrics_same = testing::read_file(wa.metrics()) == testing::read_file(wb.metrics());
  report(9, "determinism", ok && model_same,
         fmt("report %s (%zu bytes) %s; model.bin %s; metrics.csv %s",
             a.reports.empty() ? "-" : a.reports.front().filename().string().c_str(), bytes,
             ok ? "identical" : "DIFFERS", model_same ? "identical" : "DIFFERS",
             metrics_same ? "identical" : "DIFFERS"));
}

void guarded(int id, const std::string& name, const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  std::printf("emde acceptance suite\n");
  guarded(2, "gradient oracle", gradient_oracle);
  guarded(3, "LSH collision law", lsh_collision_law);
  guarded(4, "sketch oracle", sketch_oracle);
  guarded(5, "decode oracle", decode_oracle);
  guarded(8, "metric oracles", metric_oracles);

  testing::TempDir first("accept_a"), second("accept_b");
  std::optional<PipelineRun> a, b;
  try {
    a = run_pipeline(first.path());
  } catch (const std::exception& e) {
    for (int id : {1, 6, 7, 9}) report(id, "pipeline", false, std::string("pipeline failed: ") + e.what());
  }
  if (a) {
    guarded(7, "end-to-end learning", [&] { end_to_end(*a); });
    guarded(1, "IG completeness", [&] { ig_completeness(a->cfg); });
    guarded(6, "linearity identity", [&] { linearity(a->cfg); });
    guarded(9, "determinism", [&] {
      b = run_pipeline(second.path());
      determinism(*a, *b);
    });
  }
  std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
