// emde: command-line driver for the sketch recommender and its attribution
// pipeline. Data goes to files under the configured workdir, logs to stderr.
//
//   emde synth --out DIR [--seed S] [--items N --users-count N --clusters N ...]
//   emde prepare   --config PATH [--seed S]
//   emde train     --config PATH [--seed S]
//   emde recommend --config PATH [--users FILE] [--n N]
//   emde attribute --config PATH [--users FILE] [--n N]
//   emde aggregate --config PATH [--target ITEM]
//   emde eval      --config PATH [--n N ...]
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.

#include <iostream>

#include "CLI11.hpp"
#include "emde/error.hpp"
#include "emde/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-based multimodal recommender with integrated-gradients attribution"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string users_file;
  std::string target;
  std::vector<int> ns;
  std::string out_dir;
  emde::SynthConfig synth;

  const auto add_common = [&](CLI::App* sub, bool with_seed) {
    sub->add_option("--config", config_path, "Pipeline config file")->required()->check(CLI::ExistingFile);
    if (with_seed) sub->add_option("--seed", seed, "Override every seed in the config");
  };

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus and a matching config");
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--items", synth.n_items, "Number of items");
  synth_cmd->add_option("--users-count", synth.n_users, "Number of users");
  synth_cmd->add_option("--clusters", synth.n_clusters, "Number of item clusters");
  synth_cmd->add_option("--dim", synth.embed_dim, "Embedding dimension");
  synth_cmd->add_option("--tokens-per-item", synth.tokens_per_item, "Plot tokens per item");
  synth_cmd->add_option("--cast-pool", synth.cast_pool, "Number of cast members");

  auto* prepare_cmd = app.add_subcommand("prepare", "Encode entities into bucket codes and split users");
  add_common(prepare_cmd, true);
  auto* train_cmd = app.add_subcommand("train", "Train the sketch network");
  add_common(train_cmd, true);
  auto* recommend_cmd = app.add_subcommand("recommend", "Write top-N recommendations");
  add_common(recommend_cmd, true);
  recommend_cmd->add_option("--users", users_file, "File with one user id per line (default: test users)");
  recommend_cmd->add_option("--n", ns, "Ranking length")->expected(0, 1);
  auto* attribute_cmd = app.add_subcommand("attribute", "Attribute each user's top recommendation to input entities");
  add_common(attribute_cmd, true);
  attribute_cmd->add_option("--users", users_file, "File with one user id per line (default: test users)");
  attribute_cmd->add_option("--n", ns, "Attribute at most N users")->expected(0, 1);
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Aggregate per-user attributions for one target item");
  add_common(aggregate_cmd, true);
  aggregate_cmd->add_option("--target", target, "Target item (default: most frequent top recommendation)");
  auto* eval_cmd = app.add_subcommand("eval", "Recall@N on test users against a popularity baseline");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--n", ns, "Cutoffs, repeatable or comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto path = emde::cmd_synth(out_dir, synth);
      std::cerr << "[emde] synth: corpus and config written, run with --config " << path.string() << '\n';
      return kOk;
    }
    auto cfg = emde::load_config(config_path);
    if (app.get_subcommands().front()->count("--seed")) cfg.override_seed(seed);
    const auto users = users_file.empty() ? std::vector<std::string>{} : emde::read_user_list(users_file);

    if (prepare_cmd->parsed()) {
      emde::cmd_prepare(cfg);
    } else if (train_cmd->parsed()) {
      emde::cmd_train(cfg);
    } else if (recommend_cmd->parsed()) {
      emde::cmd_recommend(cfg, users, ns.empty() ? cfg.recommend_n : ns.front());
    } else if (attribute_cmd->parsed()) {
      std::optional<std::size_t> limit;
      if (!ns.empty()) {
        if (ns.front() < 1) throw emde::ConfigError("--n must be >= 1");
        limit = static_cast<std::size_t>(ns.front());
      }
      emde::cmd_attribute(cfg, users, limit);
    } else if (aggregate_cmd->parsed()) {
      emde::cmd_aggregate(cfg, target.empty() ? std::nullopt : std::optional<std::string>(target));
    } else if (eval_cmd->parsed()) {
      emde::cmd_eval(cfg, ns.empty() ? std::vector<int>{cfg.recommend_n} : ns);
    }
    return kOk;
  } catch (const emde::ConfigError& e) {
    std::cerr << "[emde] config error: " << e.what() << '\n';
    return kConfig;
  } catch (const emde::NumericError& e) {
    std::cerr << "[emde] numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const emde::Error& e) {
    std::cerr << "[emde] data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "[emde] error: " << e.what() << '\n';
    return kData;
  }
}
