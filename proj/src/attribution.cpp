#include "emde/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "emde/error.hpp"

namespace emde {

namespace {

void check_units(const SketchModel& model, std::span<const OutputUnit> selected) {
  for (const auto& u : selected)
    if (u.row < 0 || u.row >= model.n_sketches || u.bucket < 0 || u.bucket >= model.sketch_dim())
      throw ContractError("selected output unit outside the output sketch");
}

// d G / d logits for every column of `logits`.
Eigen::MatrixXd target_logit_grad(const SketchModel& model, const Eigen::MatrixXd& logits,
                                  std::span<const OutputUnit> selected, TargetMode mode) {
  const auto d = model.sketch_dim();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  if (mode == TargetMode::logit) {
    for (const auto& u : selected) g.row(u.row * d + u.bucket).array() += 1.0;
    return g;
  }
  const Eigen::MatrixXd p = row_softmax(logits, model.n_sketches);
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (const auto& u : selected) {
      const auto off = u.row * d;
      const double pb = p(off + u.bucket, c);
      g.col(c).segment(off, d) -= pb * p.col(c).segment(off, d);
      g(off + u.bucket, c) += pb;
    }
  }
  return g;
}

double target_value(const SketchModel& model, const ForwardResult<double>& out, std::span<const OutputUnit> selected,
                    TargetMode mode) {
  double g = 0.0;
  for (const auto& u : selected)
    g += mode == TargetMode::logit ? out.logits(u.row * model.sketch_dim() + u.bucket) : out.probs(u.row, u.bucket);
  return g;
}

bool ranks_before(const RankedEntity& a, const RankedEntity& b) {
  if (a.mean_score != b.mean_score) return a.mean_score > b.mean_score;
  return a.id < b.id;
}

std::vector<RankedEntity> rank_means(const std::map<std::string, std::pair<double, std::size_t>>& sums) {
  std::vector<RankedEntity> out;
  out.reserve(sums.size());
  for (const auto& [id, s] : sums) out.push_back({id, s.first / static_cast<double>(s.second), s.second});
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

}  // namespace

std::vector<OutputUnit> select_output_buckets(const Eigen::Ref<const Buckets>& item_buckets) {
  std::vector<OutputUnit> units;
  units.reserve(static_cast<std::size_t>(item_buckets.size()));
  for (Eigen::Index k = 0; k < item_buckets.size(); ++k) units.push_back({static_cast<int>(k), item_buckets(k)});
  return units;
}

TargetValue target_scalar(const SketchModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          std::span<const OutputUnit> selected, TargetMode mode) {
  check_units(model, selected);
  const auto out = forward_one(model, x);
  const Eigen::MatrixXd logits = out.logits;
  const auto grads = backward(model, out.trace, target_logit_grad(model, logits, selected, mode), false);
  return {target_value(model, out, selected, mode), grads.input.col(0)};
}

AttributionVector integrated_gradients(const SketchModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& baseline,
                                       std::span<const OutputUnit> selected, int steps, TargetMode mode) {
  if (x.size() != baseline.size()) throw ContractError("input and baseline differ in length");
  if (x.size() != model.input_dim()) throw ContractError("input length does not match the model");
  if (steps < 1) throw ContractError("integrated gradients needs at least one step");
  check_units(model, selected);

  const Eigen::VectorXd delta = x - baseline;
  const Eigen::VectorXd along = model.weights[0] * delta;
  const Eigen::VectorXd origin = model.weights[0] * baseline + model.biases[0];

  constexpr Eigen::Index kChunk = 256;
  Eigen::VectorXd delta_sum = Eigen::VectorXd::Zero(model.widths[1]);
  for (Eigen::Index t0 = 0; t0 < steps; t0 += kChunk) {
    const auto n = std::min<Eigen::Index>(kChunk, steps - t0);
    Eigen::RowVectorXd alpha(n);
    for (Eigen::Index t = 0; t < n; ++t) alpha(t) = (static_cast<double>(t0 + t) + 0.5) / steps;
    Eigen::MatrixXd first = along * alpha;
    first.colwise() += origin;
    const auto trace = forward_from_first(model, std::move(first));
    const auto g = target_logit_grad(model, trace.logits(), selected, mode);
    delta_sum += first_layer_delta(model, trace, g).rowwise().sum();
  }
  const Eigen::VectorXd grad_sum = model.weights[0].transpose() * delta_sum;

  AttributionVector a;
  a.values = delta.cwiseProduct(grad_sum) / static_cast<double>(steps);
  if (!a.values.allFinite()) throw NumericError("non-finite integrated gradient");
  a.ig_steps = steps;
  a.mode = mode;
  a.target_at_input = target_scalar(model, x, selected, mode).value;
  a.target_at_baseline = target_scalar(model, baseline, selected, mode).value;
  a.completeness_gap = std::abs(a.values.sum() - (a.target_at_input - a.target_at_baseline));
  return a;
}

std::vector<ItemAttribution> decode_entity_attributions(const Eigen::Ref<const Eigen::VectorXd>& attribution,
                                                        std::span<const ModalitySpec> modalities,
                                                        std::span<const std::vector<std::string>> entities,
                                                        const CodeSet& codes) {
  if (entities.size() != modalities.size()) throw ContractError("one entity list per modality expected");
  const SketchLayout layout{static_cast<int>(modalities.size()), codes.params.n_sketches, codes.params.sketch_dim};
  if (attribution.size() != layout.flat_size())
    throw ContractError("attribution length does not match the input sketch layout");
  std::vector<ItemAttribution> out;
  for (int m = 0; m < layout.n_modalities; ++m) {
    const auto& book = codes.at(modalities[m].name);
    const std::set<std::string> distinct(entities[m].begin(), entities[m].end());
    for (const auto& e : distinct) {
      const auto b = book.buckets(book.require(e));
      double sum = 0.0;
      for (int k = 0; k < layout.n_sketches; ++k) sum += attribution(layout.flat_index(m, k, b(k)));
      out.push_back({modalities[m].name, e, sum / layout.n_sketches});
    }
  }
  return out;
}

std::vector<ItemAttribution> rollup_to_items(std::span<const ItemAttribution> entity_scores, const UserHistory& user,
                                             std::span<const ModalitySpec> modalities, const EntityMapSet& maps) {
  std::map<std::pair<std::string, std::string>, double> score;
  for (const auto& e : entity_scores) score[{e.modality, e.id}] = e.score;
  std::vector<ItemAttribution> out;
  for (const auto& spec : modalities) {
    const auto& items = user.items(spec.source);
    const std::set<std::string> distinct(items.begin(), items.end());
    for (const auto& item : distinct) {
      const auto ents = spec.mapped ? expand_entities(item, spec.name, maps) : std::vector<std::string>{item};
      const std::set<std::string> distinct_ents(ents.begin(), ents.end());
      double total = 0.0;
      for (const auto& e : distinct_ents) {
        const auto it = score.find({spec.name, e});
        if (it == score.end())
          throw ContractError("entity '" + e + "' of item '" + item + "' has no attribution in " + spec.name);
        total += it->second;
      }
      out.push_back({spec.name, item, total});
    }
  }
  return out;
}

UserAttribution attribute_user(const SketchModel& model, const UserHistory& user,
                               std::span<const ModalitySpec> modalities, const EntityMapSet& maps,
                               const CodeSet& codes, const AttributionOptions& options) {
  if (user.empty()) throw ContractError("user '" + user.user_id + "' has no input history");
  const auto entities = user_input_entities(user, modalities, maps);
  const auto input = build_user_input(user, modalities, maps, codes);
  const auto& output_book = codes.at(modalities.front().name);

  std::unordered_set<std::string> exclude;
  if (options.exclude_history) {
    exclude.insert(user.liked.begin(), user.liked.end());
    exclude.insert(user.disliked.begin(), user.disliked.end());
  }
  const auto ranking = recommend(model, input, output_book, exclude, 1, options.decode);
  const auto& top = ranking.items.front();
  const auto units = select_output_buckets(output_book.buckets(output_book.require(top.item_id)));

  const Eigen::VectorXd baseline = Eigen::VectorXd::Zero(input.flat().size());
  const auto ig = integrated_gradients(model, input.flat(), baseline, units, options.ig_steps, options.mode);

  UserAttribution out;
  out.user_id = user.user_id;
  out.target_item = top.item_id;
  out.target_score = top.score;
  out.ig_steps = ig.ig_steps;
  out.mode = ig.mode;
  out.target_at_input = ig.target_at_input;
  out.target_at_baseline = ig.target_at_baseline;
  out.completeness_gap = ig.completeness_gap;
  for (const auto& m : modalities) out.modalities.push_back(m.name);
  out.entities = decode_entity_attributions(ig.values, modalities, entities, codes);
  out.items = rollup_to_items(out.entities, user, modalities, maps);
  return out;
}

AggregateReport aggregate_over_users(std::span<const UserAttribution> users, std::string_view target_item) {
  AggregateReport report;
  report.target_item = std::string(target_item);
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>, std::less<>> ent_sums, item_sums;
  for (const auto& u : users) {
    if (u.target_item != target_item) continue;
    ++report.user_count;
    for (const auto& m : u.modalities)
      if (std::find(order.begin(), order.end(), m) == order.end()) order.push_back(m);
    for (const auto& e : u.entities) {
      auto& s = ent_sums[e.modality][e.id];
      s.first += e.score;
      ++s.second;
    }
    for (const auto& e : u.items) {
      auto& s = item_sums[e.modality][e.id];
      s.first += e.score;
      ++s.second;
    }
  }
  if (report.user_count == 0)
    throw ContractError("no attributed users with target item '" + std::string(target_item) + "'");
  for (const auto& m : order) {
    ModalityTable table;
    table.modality = m;
    if (const auto it = ent_sums.find(m); it != ent_sums.end()) table.entities = rank_means(it->second);
    if (const auto it = item_sums.find(m); it != item_sums.end()) table.items = rank_means(it->second);
    report.modalities.push_back(std::move(table));
  }
  return report;
}

std::optional<ItemAttribution> top_influencer(const UserAttribution& user, std::string_view modality) {
  std::optional<ItemAttribution> best;
  for (const auto& it : user.items) {
    if (it.modality != modality) continue;
    if (!best || it.score > best->score || (it.score == best->score && it.id < best->id)) best = it;
  }
  return best;
}

std::size_t agreement_population(std::span<const UserAttribution> users, std::string_view main,
                                 std::string_view supporting) {
  std::size_t n = 0;
  for (const auto& u : users)
    if (top_influencer(u, main) && top_influencer(u, supporting)) ++n;
  return n;
}

double modality_agreement(std::span<const UserAttribution> users, std::string_view main,
                          std::string_view supporting) {
  std::size_t n = 0, same = 0;
  for (const auto& u : users) {
    const auto a = top_influencer(u, main);
    const auto b = top_influencer(u, supporting);
    if (!a || !b) continue;
    ++n;
    if (a->id == b->id) ++same;
  }
  return n ? static_cast<double>(same) / static_cast<double>(n) : 0.0;
}

double mean_top_attribution(std::span<const UserAttribution> users, std::string_view modality) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& u : users) {
    if (const auto top = top_influencer(u, modality)) {
      total += top->score;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

std::string_view to_string(TargetMode mode) { return mode == TargetMode::logit ? "logit" : "prob"; }

TargetMode parse_target_mode(std::string_view s) {
  if (s == "logit") return TargetMode::logit;
  if (s == "prob") return TargetMode::prob;
  throw ConfigError("unknown attribution target mode '" + std::string(s) + "' (logit|prob)");
}

ReportMetrics report_metrics(std::span<const UserAttribution> all_users, std::string_view target_item,
                             std::span<const std::string> modalities) {
  ReportMetrics m;
  if (modalities.empty()) throw ContractError("no modalities to report");
  m.main_modality = modalities.front();
  m.modalities.assign(modalities.begin(), modalities.end());
  m.all_user_count = all_users.size();
  std::vector<UserAttribution> target_users;
  for (const auto& u : all_users)
    if (u.target_item == target_item) target_users.push_back(u);
  for (std::size_t i = 1; i < modalities.size(); ++i) {
    m.agreement.emplace_back(modality_agreement(target_users, m.main_modality, modalities[i]),
                             modality_agreement(all_users, m.main_modality, modalities[i]));
    m.agreement_users.emplace_back(agreement_population(target_users, m.main_modality, modalities[i]),
                                   agreement_population(all_users, m.main_modality, modalities[i]));
  }
  for (const auto& mod : modalities)
    m.mean_top.emplace_back(mean_top_attribution(target_users, mod), mean_top_attribution(all_users, mod));
  return m;
}

}  // namespace emde
