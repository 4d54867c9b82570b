#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emde/emb_io.hpp"
#include "emde/lsh_codec.hpp"
#include "emde/net.hpp"
#include "emde/recommender.hpp"
#include "emde/sketch.hpp"

namespace emde {

// One output logit: sketch row and bucket.
struct OutputUnit {
  int row = 0;
  int bucket = 0;

  bool operator==(const OutputUnit&) const = default;
};

// The units an item occupies in the output sketch: pair k is (k, buckets(k)).
std::vector<OutputUnit> select_output_buckets(const Eigen::Ref<const Buckets>& item_buckets);

enum class TargetMode {
  logit,  // sum of the selected pre-softmax logits
  prob,   // sum of the selected softmax probabilities
};

struct TargetValue {
  double value = 0.0;
  Eigen::VectorXd input_gradient;
};

// G(x) = sum of the selected outputs, with dG/dx from one backward pass.
TargetValue target_scalar(const SketchModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          std::span<const OutputUnit> selected, TargetMode mode = TargetMode::logit);

struct AttributionVector {
  Eigen::VectorXd values;
  std::string user_id;
  std::string target_item_id;
  int ig_steps = 0;
  TargetMode mode = TargetMode::logit;
  double target_at_input = 0.0;     // G(x)
  double target_at_baseline = 0.0;  // G(baseline)
  double completeness_gap = 0.0;    // |sum(values) - (G(x) - G(baseline))|
};

inline constexpr int kDefaultIgSteps = 128;

// Integrated gradients with the midpoint rule:
//   A_i = (x_i - x'_i) / m * sum_{t=1..m} dG/dx_i (x' + (t - 0.5) / m * (x - x')).
// The first layer is affine along the path, so its product with the input is
// taken once and the per-step work starts at the first hidden layer.
AttributionVector integrated_gradients(const SketchModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& baseline,
                                       std::span<const OutputUnit> selected, int steps = kDefaultIgSteps,
                                       TargetMode mode = TargetMode::logit);

// Signed influence of one input entity (or, after rollup, one input item).
struct ItemAttribution {
  std::string modality;
  std::string id;
  double score = 0.0;

  bool operator==(const ItemAttribution&) const = default;
};

// Mean of the attribution mass at an entity's n_sketches input slots, for
// every distinct entity of every modality (modality order, then id).
std::vector<ItemAttribution> decode_entity_attributions(const Eigen::Ref<const Eigen::VectorXd>& attribution,
                                                        std::span<const ModalitySpec> modalities,
                                                        std::span<const std::vector<std::string>> entities,
                                                        const CodeSet& codes);

// Per modality, every distinct input item of the user scores the sum of its
// distinct entities' scores. A token shared by two items counts fully for each.
std::vector<ItemAttribution> rollup_to_items(std::span<const ItemAttribution> entity_scores, const UserHistory& user,
                                             std::span<const ModalitySpec> modalities, const EntityMapSet& maps);

struct UserAttribution {
  std::string user_id;
  std::string target_item;
  double target_score = 0.0;  // recommendation score of target_item
  int ig_steps = 0;
  TargetMode mode = TargetMode::logit;
  double target_at_input = 0.0;
  double target_at_baseline = 0.0;
  double completeness_gap = 0.0;
  std::vector<std::string> modalities;
  std::vector<ItemAttribution> entities;
  std::vector<ItemAttribution> items;
};

struct AttributionOptions {
  int ig_steps = kDefaultIgSteps;
  TargetMode mode = TargetMode::logit;
  Decode decode = Decode::mean_log;
  bool exclude_history = true;
};

// Full per-user procedure: top-1 recommendation from the output modality
// (modalities[0]), integrated gradients on its output buckets against the
// zero sketch, decode to entities, rollup to input items.
UserAttribution attribute_user(const SketchModel& model, const UserHistory& user,
                               std::span<const ModalitySpec> modalities, const EntityMapSet& maps,
                               const CodeSet& codes, const AttributionOptions& options = {});

struct RankedEntity {
  std::string id;
  double mean_score = 0.0;
  std::size_t users = 0;  // users whose input contained the entity

  bool operator==(const RankedEntity&) const = default;
};

struct ModalityTable {
  std::string modality;
  std::vector<RankedEntity> entities;  // descending mean score, ties by id
  std::vector<RankedEntity> items;
};

struct AggregateReport {
  std::string target_item;
  std::size_t user_count = 0;
  std::vector<ModalityTable> modalities;
};

// Means over the users whose target is `target_item`, taken per entity over
// the users that had it in their input.
AggregateReport aggregate_over_users(std::span<const UserAttribution> users, std::string_view target_item);

// Highest rolled-up item of a modality; ties go to the smaller id.
std::optional<ItemAttribution> top_influencer(const UserAttribution& user, std::string_view modality);

// Fraction of users whose top influencer is the same item under both
// modalities. Users lacking either modality are left out; 0 when none remain.
double modality_agreement(std::span<const UserAttribution> users, std::string_view main,
                          std::string_view supporting);
std::size_t agreement_population(std::span<const UserAttribution> users, std::string_view main,
                                 std::string_view supporting);

// Mean over users of the top rolled-up item score in `modality`; users
// without that modality are left out, 0 when none remain.
double mean_top_attribution(std::span<const UserAttribution> users, std::string_view modality);

std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view s);

// Structured text formats; see docs/formats.md.
void write_user_attribution(const std::filesystem::path& path, const UserAttribution& attribution);
UserAttribution read_user_attribution(const std::filesystem::path& path);

struct ReportMetrics {
  std::string main_modality;
  std::vector<std::string> modalities;
  std::size_t all_user_count = 0;
  // Per supporting modality: agreement over target users and over all users.
  std::vector<std::pair<double, double>> agreement;
  std::vector<std::pair<std::size_t, std::size_t>> agreement_users;
  // Per modality: mean top attribution over target users and over all users.
  std::vector<std::pair<double, double>> mean_top;
};

ReportMetrics report_metrics(std::span<const UserAttribution> all_users, std::string_view target_item,
                             std::span<const std::string> modalities);

void write_report(const std::filesystem::path& path, const AggregateReport& report, const ReportMetrics& metrics);

}  // namespace emde
