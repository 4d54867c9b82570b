#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emde/attribution.hpp"
#include "emde/config.hpp"
#include "emde/synth.hpp"

namespace emde {

// Files a pipeline run keeps under its workdir.
struct Workdir {
  std::filesystem::path root;

  std::filesystem::path codes() const { return root / "codes.bin"; }
  std::filesystem::path split() const { return root / "split.tsv"; }
  std::filesystem::path model() const { return root / "model.bin"; }
  std::filesystem::path loss() const { return root / "loss.csv"; }
  std::filesystem::path recommendations() const { return root / "recommendations.csv"; }
  std::filesystem::path attributions() const { return root / "attributions"; }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path report(const std::string& target) const;
};

// Filesystem-safe version of an id: anything outside [A-Za-z0-9._-] -> '_'.
std::string safe_file_name(std::string_view id);

enum class SplitRole { train, valid, test };

// Everything downstream stages need besides the model.
struct PipelineData {
  SplitHistories histories;
  EntityMapSet maps;
  CodeSet codes;
  std::vector<std::pair<std::string, SplitRole>> split;  // split-file order

  UserHistory history(const std::string& user_id) const;
  // Users of a role in split-file order.
  std::vector<std::string> users(SplitRole role) const;
};

// Leave-one-out view of a user: the last liked item is held out.
struct HeldOutUser {
  UserHistory input;
  std::string target;
};
std::optional<HeldOutUser> leave_last_out(const UserHistory& user);

// Users with at least two liked items, in id order.
std::vector<std::string> eligible_users(const SplitHistories& histories);

// Seeded shuffle of the eligible users; the first n_test become test users,
// the next n_valid validation users, then n_train (0: all the rest) train users.
std::vector<std::pair<std::string, SplitRole>> split_users(const std::vector<std::string>& eligible, std::size_t n_train,
                                             std::size_t n_valid, std::size_t n_test, std::uint64_t seed);

TrainingSet build_training_set(const PipelineData& data, const PipelineConfig& cfg);

PipelineData load_prepared(const PipelineConfig& cfg);

struct PrepareSummary {
  std::size_t codes = 0;
  std::size_t train = 0, valid = 0, test = 0;
};

PrepareSummary cmd_prepare(const PipelineConfig& cfg);
TrainResult cmd_train(const PipelineConfig& cfg);
std::vector<Ranking> cmd_recommend(const PipelineConfig& cfg, const std::vector<std::string>& users, int n);
// Returns the number of attribution files written.
std::size_t cmd_attribute(const PipelineConfig& cfg, const std::vector<std::string>& users,
                          std::optional<std::size_t> max_users);
std::filesystem::path cmd_aggregate(const PipelineConfig& cfg, const std::optional<std::string>& target);

struct EvalRow {
  int n = 0;
  double recall = 0.0;
  double popularity_recall = 0.0;
};
std::vector<EvalRow> cmd_eval(const PipelineConfig& cfg, const std::vector<int>& ns);

// Writes the corpus plus a ready-to-run pipeline.cfg into `dir`; returns the
// config path.
std::filesystem::path cmd_synth(const std::filesystem::path& dir, const SynthConfig& synth);

std::vector<std::string> read_user_list(const std::filesystem::path& path);

}  // namespace emde
