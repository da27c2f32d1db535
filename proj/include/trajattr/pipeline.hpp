#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajattr/attribution.hpp"
#include "trajattr/clustering.hpp"
#include "trajattr/data_embedding.hpp"
#include "trajattr/dataset.hpp"
#include "trajattr/encoder.hpp"
#include "trajattr/gridworld.hpp"
#include "trajattr/offline_rl.hpp"

namespace trajattr {

/// Every parameter of a pipeline run. Loaded from a flat `key = value` file;
/// '#' starts a comment.
struct RunConfig {
  std::string layout = "default";  // "default" or a path to a layout file
  int n_traj = 60;
  int max_len = kDefaultMaxLen;
  std::string mix = BehaviorMix::default_mix().to_string();
  std::uint64_t data_seed = 7;

  EncoderConfig encoder;

  int k_min = 2;
  int k_max = 0;  // 0 selects min(16, n_traj / 3)
  std::uint64_t cluster_seed = 11;

  double normalizer = 0.0;  // M; 0 selects n_traj
  double temperature = 1.0;
  SimplexDistance distance = SimplexDistance::Wasserstein;

  RlConfig rl;

  std::string eval_states = "reachable";  // "reachable" or "starts"
  int top_n = 3;

  std::string out = "run";

  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::string& path);
  std::string to_text() const;
  /// Throws ConfigError when a parameter is out of its documented range.
  void validate() const;
  /// Replaces every stage seed.
  void override_seeds(std::uint64_t seed);

  int effective_k_max() const;
  double effective_normalizer() const;
  GridLayout load_layout() const;
  std::string fingerprint() const;
};

/// Pipeline stages in execution order.
enum class Stage { GenData, TrainEncoder, Encode, Cluster, Embed, TrainPolicies, Attribute, Report };

inline constexpr Stage kAllStages[] = {Stage::GenData, Stage::TrainEncoder, Stage::Encode,
                                       Stage::Cluster, Stage::Embed,        Stage::TrainPolicies,
                                       Stage::Attribute, Stage::Report};

std::string_view stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view name);

/// Cache key of each stage: its own parameters plus the keys of its inputs.
std::string stage_fingerprint(const RunConfig& cfg, Stage s);

/// Raised when a stage fails; names the stage and its artifacts.
class PipelineError : public Error {
 public:
  PipelineError(Stage stage, const std::string& what);
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

struct StageOutcome {
  Stage stage;
  bool cached = false;
};

/// Artifact paths inside a run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path layout() const { return root / "layout.txt"; }
  std::filesystem::path dataset() const { return root / "dataset.jsonl"; }
  std::filesystem::path encoder() const { return root / "encoder.ckpt"; }
  std::filesystem::path encoder_loss() const { return root / "encoder_loss.csv"; }
  std::filesystem::path embeddings() const { return root / "embeddings.csv"; }
  std::filesystem::path clusters() const { return root / "clusters.csv"; }
  std::filesystem::path centroids() const { return root / "clusters_centroids.csv"; }
  std::filesystem::path data_embeddings() const { return root / "data_embeddings.csv"; }
  std::filesystem::path policies() const { return root / "policies"; }
  std::filesystem::path original_policy() const { return policies() / "orig.json"; }
  std::filesystem::path cluster_policy(int j) const;
  std::filesystem::path attributions() const { return root / "attributions.json"; }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path config() const { return root / "config.txt"; }
  std::filesystem::path stamp(Stage s) const;

  std::vector<std::filesystem::path> outputs(Stage s) const;
};

/// Runs every stage up to and including `last`, reusing cached artifacts
/// whose fingerprints still match.
std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, Stage last = Stage::Report);

void write_embeddings_csv(const std::vector<TrajectoryEmbedding>& embs, const std::string& path);
std::vector<TrajectoryEmbedding> read_embeddings_csv(const std::string& path);

/// Rebuilds the explanation suite from a run directory's artifacts.
ExplanationSuite load_suite(const RunPaths& paths, SimplexDistance distance);

/// Evaluation states selected by `cfg.eval_states`, as cell indices.
std::vector<int> select_eval_states(const GridLayout& layout, std::string_view selector);

}  // namespace trajattr
