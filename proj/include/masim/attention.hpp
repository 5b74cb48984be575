#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "masim/nn.hpp"

namespace masim {

// One attention head over the feature vector: square weight plus bias.
struct AttentionHead {
  ParamTensor weight;  // (m, m)
  ParamTensor bias;    // (1, m)
};

struct AttentionParams {
  std::vector<AttentionHead> heads;

  std::size_t head_count() const { return heads.size(); }
  std::size_t feature_dim() const { return heads.empty() ? 0 : heads.front().weight.rows; }
  void validate() const;

  static AttentionParams init(std::size_t head_count, std::size_t feature_dim,
                              std::uint64_t seed);
};

// Per-head attention weights plus the concatenated weighted features.
struct EnhancedState {
  std::vector<std::vector<double>> per_head_weights;  // H vectors, each length m, each sums to 1
  std::vector<double> combined;                       // length H * m
};

// Raw scores for one head: s * W + b.
std::vector<double> head_scores(std::span<const double> s, const AttentionHead& head);

// Softmax normalization of raw scores.
std::vector<double> normalize_scores(std::span<const double> alpha);

// Elementwise feature weighting: z[j] = beta[j] * s[j].
std::vector<double> weight_features(std::span<const double> beta, std::span<const double> s);

EnhancedState enhance_state(std::span<const double> s, const AttentionParams& params);

// Graph-recorded version of the same computation, for end-to-end gradients.
struct AttentionBinding {
  std::vector<std::pair<Graph::NodeId, Graph::NodeId>> head_params;  // (weight, bias)
};
AttentionBinding bind_attention(Graph& g, AttentionParams& params);

struct AttentionNodes {
  std::vector<Graph::NodeId> head_weights;  // softmax outputs per head
  Graph::NodeId combined;
};
AttentionNodes attach_attention(Graph& g, Graph::NodeId state, const AttentionBinding& binding);

}  // namespace masim
