#include "emde/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "emde/error.hpp"
#include "emde/format.hpp"
#include "emde/random.hpp"

namespace emde {

namespace {

void log(const std::string& msg) { std::cerr << "[emde] " << msg << '\n'; }

std::string_view role_name(SplitRole r) {
  switch (r) {
    case SplitRole::train: return "train";
    case SplitRole::valid: return "valid";
    case SplitRole::test: return "test";
  }
  return "train";
}

SplitRole parse_role(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  if (s == "train") return SplitRole::train;
  if (s == "valid") return SplitRole::valid;
  if (s == "test") return SplitRole::test;
  throw FormatError(path.string(), line, "unknown split role '" + s + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

EntityMapSet load_maps(const PipelineConfig& cfg) {
  EntityMapSet maps;
  for (const auto& m : cfg.modalities)
    if (m.entity_map) maps.emplace(m.spec.name, load_entity_map(*m.entity_map, m.spec.name));
  return maps;
}

// Every item a user can feed into a modality has to resolve to codes there.
void check_history_coverage(const SplitHistories& h, const PipelineConfig& cfg, const EntityMapSet& maps,
                            const std::function<bool(const std::string&, const std::string&)>& has_entity) {
  std::set<std::string> missing;
  for (const auto& m : cfg.modalities) {
    const auto& lists = m.spec.source == HistorySource::liked ? h.liked : h.disliked;
    std::set<std::string> items;
    for (const auto& [_, l] : lists) items.insert(l.begin(), l.end());
    for (const auto& item : items) {
      if (m.spec.mapped) {
        const auto& map = maps.at(m.spec.name);
        if (!map.entities.contains(item)) missing.insert(m.spec.name + ":" + item);
      } else if (!has_entity(m.spec.name, item)) {
        missing.insert(m.spec.name + ":" + item);
      }
    }
  }
  if (missing.empty()) return;
  std::ostringstream msg;
  msg << missing.size() << " unresolvable entities:";
  std::size_t shown = 0;
  for (const auto& e : missing) {
    if (shown++ == 20) {
      msg << " ...";
      break;
    }
    msg << ' ' << e;
  }
  throw MissingMetadataError(msg.str());
}

std::vector<std::pair<std::string, SplitRole>> read_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing " + path.string() + "; run `emde prepare` first");
  std::vector<std::pair<std::string, SplitRole>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(path.string(), line_no, "expected user_id<TAB>role");
    out.emplace_back(line.substr(0, tab), parse_role(line.substr(tab + 1), path, line_no));
  }
  return out;
}

SketchModel load_trained(const PipelineConfig& cfg) {
  const Workdir wd{cfg.workdir};
  if (!std::filesystem::exists(wd.model())) throw DataError("missing " + wd.model().string() + "; run `emde train` first");
  return load_model(wd.model());
}

std::unordered_set<std::string> history_items(const UserHistory& u) {
  std::unordered_set<std::string> s(u.liked.begin(), u.liked.end());
  s.insert(u.disliked.begin(), u.disliked.end());
  return s;
}

std::vector<std::string> default_users(const PipelineData& data, const std::vector<std::string>& users) {
  return users.empty() ? data.users(SplitRole::test) : users;
}

}  // namespace

std::filesystem::path Workdir::report(const std::string& target) const {
  return root / ("report_" + safe_file_name(target) + ".txt");
}

std::string safe_file_name(std::string_view id) {
  std::string out(id);
  for (auto& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) c = '_';
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

UserHistory PipelineData::history(const std::string& user_id) const {
  UserHistory u;
  u.user_id = user_id;
  if (const auto it = histories.liked.find(user_id); it != histories.liked.end()) u.liked = it->second;
  if (const auto it = histories.disliked.find(user_id); it != histories.disliked.end()) u.disliked = it->second;
  return u;
}

std::vector<std::string> PipelineData::users(SplitRole role) const {
  std::vector<std::string> out;
  for (const auto& [u, r] : split)
    if (r == role) out.push_back(u);
  return out;
}

std::optional<HeldOutUser> leave_last_out(const UserHistory& user) {
  if (user.liked.size() < 2) return std::nullopt;
  HeldOutUser h;
  h.input = user;
  h.target = h.input.liked.back();
  h.input.liked.pop_back();
  return h;
}

std::vector<std::string> eligible_users(const SplitHistories& histories) {
  std::vector<std::string> out;
  for (const auto& [u, items] : histories.liked)
    if (items.size() >= 2) out.push_back(u);
  return out;
}

std::vector<std::pair<std::string, SplitRole>> split_users(const std::vector<std::string>& eligible, std::size_t n_train,
                                                           std::size_t n_valid, std::size_t n_test, std::uint64_t seed) {
  const auto needed = n_valid + n_test + n_train;
  if (needed > eligible.size())
    throw DataError("split needs " + std::to_string(needed) + " users but only " + std::to_string(eligible.size()) +
                    " have two or more liked items");
  std::vector<std::string> order = eligible;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const auto train_end = n_train ? n_test + n_valid + n_train : order.size();
  std::vector<std::pair<std::string, SplitRole>> out;
  for (std::size_t i = 0; i < train_end; ++i) {
    const auto role = i < n_test ? SplitRole::test : i < n_test + n_valid ? SplitRole::valid : SplitRole::train;
    out.emplace_back(order[i], role);
  }
  return out;
}

PrepareSummary cmd_prepare(const PipelineConfig& cfg) {
  cfg.check_paths();
  const auto histories = split_interactions(load_interactions(cfg.ratings), cfg.like_threshold);
  const auto maps = load_maps(cfg);

  CodeSet codes;
  codes.params = cfg.codec;
  std::map<std::string, EmbeddingTable> tables;
  for (const auto& m : cfg.modalities) {
    auto table = load_embeddings(m.embeddings, m.spec.name);
    if (m.entity_map) check_entity_coverage(maps.at(m.spec.name), table);
    tables.emplace(m.spec.name, std::move(table));
  }
  check_history_coverage(histories, cfg, maps, [&](const std::string& modality, const std::string& id) {
    return tables.at(modality).find(id).has_value();
  });
  for (const auto& m : cfg.modalities) codes.books.push_back(encode_all(tables.at(m.spec.name), cfg.codec));

  const auto split = split_users(eligible_users(histories), cfg.n_train, cfg.n_valid, cfg.n_test, cfg.split_seed);

  std::filesystem::create_directories(cfg.workdir);
  const Workdir wd{cfg.workdir};
  save_codes(wd.codes(), codes);
  auto out = open_out(wd.split());
  PrepareSummary summary;
  summary.codes = codes.total_codes();
  for (const auto& [u, r] : split) {
    out << u << '\t' << role_name(r) << '\n';
    (r == SplitRole::train ? summary.train : r == SplitRole::valid ? summary.valid : summary.test)++;
  }
  log("prepare: " + std::to_string(summary.codes) + " codes, users train/valid/test " + std::to_string(summary.train) +
      "/" + std::to_string(summary.valid) + "/" + std::to_string(summary.test));
  return summary;
}

PipelineData load_prepared(const PipelineConfig& cfg) {
  cfg.check_paths();
  const Workdir wd{cfg.workdir};
  if (!std::filesystem::exists(wd.codes())) throw DataError("missing " + wd.codes().string() + "; run `emde prepare` first");
  PipelineData data;
  data.codes = load_codes(wd.codes());
  const auto& p = data.codes.params;
  if (p.n_sketches != cfg.codec.n_sketches || p.sketch_dim != cfg.codec.sketch_dim || p.seed != cfg.codec.seed ||
      data.codes.books.size() != cfg.modalities.size())
    throw DataError(wd.codes().string() + " does not match the config; rerun `emde prepare`");
  for (std::size_t m = 0; m < cfg.modalities.size(); ++m)
    if (data.codes.books[m].modality() != cfg.modalities[m].spec.name)
      throw DataError(wd.codes().string() + " has a different modality order; rerun `emde prepare`");
  data.histories = split_interactions(load_interactions(cfg.ratings), cfg.like_threshold);
  data.maps = load_maps(cfg);
  data.split = read_split(wd.split());
  return data;
}

TrainingSet build_training_set(const PipelineData& data, const PipelineConfig& cfg) {
  const auto specs = cfg.specs();
  const auto train_users = data.users(SplitRole::train);
  const SketchLayout layout{static_cast<int>(specs.size()), cfg.codec.n_sketches, cfg.codec.sketch_dim};
  TrainingSet set;
  set.inputs.resize(layout.flat_size(), static_cast<Eigen::Index>(train_users.size()));
  set.targets.resize(layout.block_size(), static_cast<Eigen::Index>(train_users.size()));
  Eigen::Index col = 0;
  for (const auto& u : train_users) {
    const auto held = leave_last_out(data.history(u));
    if (!held) continue;
    set.inputs.col(col) = build_user_input(held->input, specs, data.maps, data.codes).flat();
    const auto target = build_user_target(std::span(&held->target, 1), data.codes.books.front());
    set.targets.col(col) = Eigen::Map<const Eigen::VectorXd>(target.data(), target.size());
    ++col;
  }
  set.inputs.conservativeResize(Eigen::NoChange, col);
  set.targets.conservativeResize(Eigen::NoChange, col);
  return set;
}

TrainResult cmd_train(const PipelineConfig& cfg) {
  const auto data = load_prepared(cfg);
  const auto set = build_training_set(data, cfg);
  if (set.size() == 0) throw DataError("no training users");
  const SketchLayout layout{static_cast<int>(cfg.modalities.size()), cfg.codec.n_sketches, cfg.codec.sketch_dim};
  const auto init = SketchModel::initialize(layer_widths(layout.flat_size(), cfg.hidden, cfg.hidden_layers,
                                                         layout.block_size()),
                                            cfg.codec.n_sketches, derive_seed(cfg.train.seed, 0x1417),
                                            cfg.activation, cfg.leaky_slope);
  const Workdir wd{cfg.workdir};
  save_model(wd.model(), init);
  auto loss_csv = open_out(wd.loss());
  loss_csv << "epoch,loss\n";
  loss_csv << "0," << format_double(mean_loss(init, set.inputs, set.targets)) << '\n';
  log("train: " + std::to_string(set.size()) + " examples, " + std::to_string(cfg.train.epochs) + " epochs");
  const auto result = train(init, set, cfg.train, [&](int epoch, double loss, const SketchModel& model) {
    loss_csv << epoch << ',' << format_double(loss) << '\n' << std::flush;
    save_model(wd.model(), model);
    log("epoch " + std::to_string(epoch) + " loss " + format_double(loss));
  });
  return result;
}

std::vector<Ranking> cmd_recommend(const PipelineConfig& cfg, const std::vector<std::string>& users, int n) {
  const auto data = load_prepared(cfg);
  const auto model = load_trained(cfg);
  const auto specs = cfg.specs();
  const auto& output = data.codes.books.front();
  std::vector<Ranking> rankings;
  const Workdir wd{cfg.workdir};
  auto out = open_out(wd.recommendations());
  out << "user_id,rank,item_id,score\n";
  for (const auto& u : default_users(data, users)) {
    const auto h = data.history(u);
    if (h.empty()) {
      log("recommend: user '" + u + "' has no history, skipped");
      continue;
    }
    const auto exclude = cfg.attribution.exclude_history ? history_items(h) : std::unordered_set<std::string>{};
    auto r = recommend(model, build_user_input(h, specs, data.maps, data.codes), output, exclude, n,
                       cfg.attribution.decode);
    r.user_id = u;
    for (std::size_t i = 0; i < r.items.size(); ++i)
      out << u << ',' << i + 1 << ',' << r.items[i].item_id << ',' << format_double(r.items[i].score) << '\n';
    rankings.push_back(std::move(r));
  }
  return rankings;
}

std::size_t cmd_attribute(const PipelineConfig& cfg, const std::vector<std::string>& users,
                          std::optional<std::size_t> max_users) {
  const auto data = load_prepared(cfg);
  const auto model = load_trained(cfg);
  const auto specs = cfg.specs();
  auto chosen = default_users(data, users);
  if (max_users && chosen.size() > *max_users) chosen.resize(*max_users);

  const Workdir wd{cfg.workdir};
  std::filesystem::remove_all(wd.attributions());
  std::filesystem::create_directories(wd.attributions());
  std::size_t written = 0;
  for (const auto& u : chosen) {
    const auto h = data.history(u);
    if (h.empty()) {
      log("attribute: user '" + u + "' has no input history, skipped");
      continue;
    }
    const auto a = attribute_user(model, h, specs, data.maps, data.codes, cfg.attribution);
    write_user_attribution(wd.attributions() / (safe_file_name(u) + ".tsv"), a);
    log("attribute: user " + u + " -> " + a.target_item + ", completeness gap " + format_double(a.completeness_gap) +
        " (G(x) - G(0) = " + format_double(a.target_at_input - a.target_at_baseline) + ")");
    ++written;
  }
  return written;
}

std::filesystem::path cmd_aggregate(const PipelineConfig& cfg, const std::optional<std::string>& target) {
  const Workdir wd{cfg.workdir};
  if (!std::filesystem::is_directory(wd.attributions()))
    throw DataError("missing " + wd.attributions().string() + "; run `emde attribute` first");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(wd.attributions()))
    if (entry.path().extension() == ".tsv") files.push_back(entry.path());
  std::vector<UserAttribution> users;
  for (const auto& f : files) users.push_back(read_user_attribution(f));
  std::sort(users.begin(), users.end(),
            [](const UserAttribution& a, const UserAttribution& b) { return a.user_id < b.user_id; });
  if (users.empty()) throw DataError("no attribution files in " + wd.attributions().string());

  std::string chosen;
  if (target) {
    chosen = *target;
  } else {
    std::map<std::string, std::size_t> counts;
    for (const auto& u : users) ++counts[u.target_item];
    std::size_t best = 0;
    for (const auto& [item, c] : counts)
      if (c > best) {
        best = c;
        chosen = item;
      }
  }
  if (std::none_of(users.begin(), users.end(), [&](const UserAttribution& u) { return u.target_item == chosen; }))
    throw DataError("no attributed user has target item '" + chosen + "'");

  std::vector<std::string> names;
  for (const auto& m : cfg.modalities) names.push_back(m.spec.name);
  const auto report = aggregate_over_users(users, chosen);
  const auto metrics = report_metrics(users, chosen, names);
  const auto path = wd.report(chosen);
  write_report(path, report, metrics);
  log("aggregate: " + std::to_string(report.user_count) + " users recommended " + chosen + " -> " + path.string());
  return path;
}

std::vector<EvalRow> cmd_eval(const PipelineConfig& cfg, const std::vector<int>& ns) {
  if (ns.empty()) throw ConfigError("eval needs at least one N");
  for (int n : ns)
    if (n < 1) throw ConfigError("eval N must be >= 1");
  const auto data = load_prepared(cfg);
  const auto model = load_trained(cfg);
  const auto specs = cfg.specs();
  const auto& output = data.codes.books.front();
  const int max_n = *std::max_element(ns.begin(), ns.end());

  std::map<std::string, double> popularity;
  for (const auto& id : output.ids()) popularity[id] = 0.0;
  for (const auto& u : data.users(SplitRole::train))
    for (const auto& item : data.history(u).liked) popularity[item] += 1.0;

  std::vector<Ranking> model_rankings, pop_rankings;
  std::map<std::string, std::set<std::string>> held_out;
  for (const auto& u : data.users(SplitRole::test)) {
    const auto held = leave_last_out(data.history(u));
    if (!held) continue;
    const auto exclude = cfg.attribution.exclude_history ? history_items(held->input) : std::unordered_set<std::string>{};
    auto r = recommend(model, build_user_input(held->input, specs, data.maps, data.codes), output, exclude, max_n,
                       cfg.attribution.decode);
    r.user_id = u;
    model_rankings.push_back(std::move(r));
    pop_rankings.push_back(rank_scores(u, popularity, exclude, max_n));
    held_out[u] = {held->target};
  }
  std::vector<EvalRow> rows;
  const Workdir wd{cfg.workdir};
  auto out = open_out(wd.metrics());
  out << "n,recall,popularity_recall\n";
  for (int n : ns) {
    EvalRow row{n, recall_at_n(model_rankings, held_out, n), recall_at_n(pop_rankings, held_out, n)};
    out << n << ',' << format_double(row.recall) << ',' << format_double(row.popularity_recall) << '\n';
    log("eval: Recall@" + std::to_string(n) + " = " + format_double(row.recall) + " (popularity " +
        format_double(row.popularity_recall) + ")");
    rows.push_back(row);
  }
  return rows;
}

std::filesystem::path cmd_synth(const std::filesystem::path& dir, const SynthConfig& synth) {
  const auto corpus = generate(synth);
  write_corpus(dir, corpus);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(synth.n_users) / 10);
  const auto n_valid = static_cast<std::size_t>(synth.n_users) / 20;
  const auto path = dir / "pipeline.cfg";
  auto out = open_out(path);
  out << "# generated by `emde synth`\n"
      << "[paths]\nratings = " << SynthFiles::ratings << "\nworkdir = work\n\n"
      << "[data]\nlike_threshold = 4.0\nsplit_seed = " << synth.seed << "\nn_valid = " << n_valid
      << "\nn_test = " << n_test << "\n\n"
      << "[codec]\nn_sketches = 8\nsketch_dim = 128\nseed = " << synth.seed << "\n\n"
      << "[net]\nhidden = 256\nhidden_layers = 3\nactivation = leaky_relu\nleaky_slope = 0.01\n"
      << "epochs = 5\nbatch = 64\nlr = 0.001\nseed = " << synth.seed << "\nprecision = float64\n\n"
      << "[attribution]\nig_steps = 128\ntarget = logit\nbaseline = zero\n\n"
      << "[recommend]\nn = 20\ndecode = mean-log\nexclude_history = true\n\n"
      << "[modalities]\norder = liked, disliked, cast, plot, poster\n\n"
      << "[modality liked]\nsource = liked\nembeddings = " << SynthFiles::items << "\n\n"
      << "[modality disliked]\nsource = disliked\nembeddings = " << SynthFiles::items << "\n\n"
      << "[modality cast]\nsource = liked\nembeddings = " << SynthFiles::cast << "\nentity_map = "
      << SynthFiles::cast_map << "\n\n"
      << "[modality plot]\nsource = liked\nembeddings = " << SynthFiles::tokens << "\nentity_map = "
      << SynthFiles::plot_map << "\n\n"
      << "[modality poster]\nsource = liked\nembeddings = " << SynthFiles::posters << "\n";
  return path;
}

std::vector<std::string> read_user_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open user list " + path.string());
  std::vector<std::string> users;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (!line.empty() && line[0] != '#') users.push_back(line);
  }
  return users;
}

}  // namespace emde
