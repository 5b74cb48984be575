#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "masim/attention.hpp"
#include "masim/env.hpp"
#include "masim/nn.hpp"
#include "masim/policy.hpp"
#include "masim/rng.hpp"

namespace masim {

// Observation layout: 9 own features, then 5 opposite-gender slots and 1
// same-gender slot of 6 features each (presence, label, distance, sin, cos,
// paired). All normalized entries live in [-1, 1].
inline constexpr int kOppositeSlots = 5;
inline constexpr int kSameSlots = 1;
inline constexpr int kOwnFeatures = 9;
inline constexpr int kSlotFeatures = 6;
inline constexpr std::size_t kFeatureDim =
    kOwnFeatures + (kOppositeSlots + kSameSlots) * kSlotFeatures;  // 45

// Discrete action catalogue. Index 0 reproduces the baseline agent exactly so
// an untrained greedy policy (zeroed final layer, argmax ties broken low)
// degenerates to control behavior.
//   0      TowardTarget, baseline offer rule
//   1      FollowBestSameSex
//   2..9   fixed compass heading k*pi/4 for k = index-2
//   10     accept the pending incoming offer (no offer: falls back to 0)
//   11     decline the pending incoming offer (no offer: falls back to 0)
inline constexpr int kActionCount = 12;

struct Observation {
  std::vector<double> raw;
  std::vector<double> normalized;
};

// Throws StateError for a paired agent.
Observation encode_observation(const World& world, int agent_id);

AgentAction catalog_to_action(const World& world, int agent_id, int action_index);

struct Hyperparams {
  double gamma = 0.99;
  double lr = 1e-4;
  int rollout_len = 20;  // K
  double entropy_coeff = 0.01;
  double value_coeff = 0.5;
  int workers = 4;
  int episodes = 1000;
  double grad_clip = 5.0;

  void validate() const;
};

struct ModelConfig {
  std::size_t feature_dim = kFeatureDim;
  std::size_t head_count = 4;
  std::vector<int> hidden = {64, 64};
  std::size_t action_count = kActionCount;
};

// One shared parameter set: attention enhancement plus policy/value heads
// reading the concatenated H*m vector.
struct ModelParams {
  AttentionParams attention;
  MLPParams policy;
  MLPParams value;

  // Policy final layer starts at zero: the initial distribution is exactly
  // uniform and greedy evaluation collapses to action 0 (baseline behavior).
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  void validate() const;
  ModelConfig config() const;
  std::vector<ParamTensor*> tensors();
  std::vector<const ParamTensor*> tensors() const;
};

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // of the full action distribution
  std::vector<std::vector<double>> head_weights;  // per-head beta
};

// Plain numeric forward: enhance, policy softmax, sample (or argmax), value.
ActResult act(const ModelParams& params, const Observation& obs, Rng& rng,
              bool greedy = false);

struct RolloutBuffer {
  struct StepRecord {
    Observation obs;
    int action = 0;
    double log_prob = 0.0;
    double reward = 0.0;
    double value = 0.0;
    double entropy = 0.0;
  };
  std::vector<StepRecord> steps;
  double bootstrap_value = 0.0;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

// G_t = R_t + gamma * G_{t+1}, seeded with the bootstrap value.
std::vector<double> discounted_returns(const RolloutBuffer& buffer, double gamma);

std::vector<double> advantages(const std::vector<double>& returns,
                               const std::vector<double>& values);

// Builds the Eq. 7 loss over one buffer into `graph` and returns the scalar
// node: -(1/T) sum logpi * A + value_coeff*(1/T) sum (G-V)^2
//       - entropy_coeff*(1/T) sum entropy. A is treated as a constant.
Graph::NodeId buffer_loss(Graph& graph, ModelParams& params, const RolloutBuffer& buffer,
                          const std::vector<double>& returns, const std::vector<double>& adv,
                          double entropy_coeff, double value_coeff);

// Mean per-decision entropy of the buffer's recorded policies, for traces.
struct ChunkStats {
  double loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

// Runs <= K ticks on `world`, driving every unpaired experimental agent from
// `params` (sampling via `rng`) and control agents from the baseline rules.
// Returns one buffer per experimental agent that acted, keyed by agent id.
// Throws StateError if the world is already terminal.
std::map<int, RolloutBuffer> worker_rollout(const ModelParams& params, World& world, int k,
                                            Rng& rng);

// Master copies plus shared Adam state. Snapshot reads and gradient
// applications are serialized; the version counts applications.
class GlobalStore {
 public:
  GlobalStore(ModelParams initial, const Hyperparams& hp);

  struct Snapshot {
    ModelParams params;
    std::uint64_t version = 0;
  };
  Snapshot snapshot() const;
  std::uint64_t version() const;

  // grads[i] matches tensors()[i] of the model; returns the new version.
  std::uint64_t apply_gradients(const std::vector<std::vector<double>>& grads);

  long adam_step_count() const;
  AdamState adam() const;
  const Hyperparams& hyperparams() const { return hp_; }

  // Serializes params + Adam state to the checkpoint format.
  void save(const std::string& path) const;

 private:
  mutable std::mutex mu_;
  ModelParams params_;
  AdamState adam_;
  Hyperparams hp_;
  std::uint64_t version_ = 0;
  double last_grad_norm_ = 0.0;
};

struct EpisodeTrace {
  int episode = 0;
  int worker = 0;
  std::uint64_t version = 0;  // snapshot version the episode ran with
  double mean_loss = 0.0;
  double mean_entropy = 0.0;
  double egr_avg_diff = 0.0;  // combined, matched experimental agents
  double avg_abs_diff = 0.0;  // all matched pairs
  int matches = 0;
};

struct TrainResult {
  ModelParams params;
  AdamState adam;
  std::vector<EpisodeTrace> trace;  // sorted by episode index
  std::uint64_t final_version = 0;
};

// W workers pull a snapshot per episode and push gradients every K steps.
// Episode worlds are seeded from (seed, episode) alone, so the schedule of
// worlds is identical regardless of worker count; workers == 1 is the
// deterministic mode.
TrainResult train(const WorldConfig& world_config, const Hyperparams& hp, std::uint64_t seed,
                  std::optional<ModelParams> initial = std::nullopt);

void write_trace_csv(const std::string& path, const std::vector<EpisodeTrace>& trace);

// Checkpoint helpers built on the nn format. The manifest records the model
// geometry, activation tags, Adam hyperparameters and step count.
void save_model(const std::string& path, const ModelParams& params, const AdamState& adam);

struct LoadedModel {
  ModelParams params;
  AdamState adam;
};
LoadedModel load_model(const std::string& path);

}  // namespace masim
