#include "masim/attention.hpp"

namespace masim {

void AttentionParams::validate() const {
  if (heads.empty()) throw ShapeError("attention needs at least one head");
  const std::size_t m = heads.front().weight.rows;
  for (const AttentionHead& h : heads) {
    if (h.weight.rows != m || h.weight.cols != m) {
      throw ShapeError("attention head weight must be square and shared across heads");
    }
    if (h.bias.rows != 1 || h.bias.cols != m) {
      throw ShapeError("attention head bias length must equal the feature count");
    }
  }
}

AttentionParams AttentionParams::init(std::size_t head_count, std::size_t feature_dim,
                                      std::uint64_t seed) {
  if (head_count == 0) throw ConfigError("attention head count must be >= 1");
  AttentionParams p;
  for (std::size_t h = 0; h < head_count; ++h) {
    AttentionHead head;
    head.weight = init_params(feature_dim, feature_dim, derive_seed(seed, 0xA77, h));
    head.bias = ParamTensor(1, feature_dim);
    p.heads.push_back(std::move(head));
  }
  return p;
}

std::vector<double> head_scores(std::span<const double> s, const AttentionHead& head) {
  const std::size_t m = head.weight.rows;
  if (s.size() != m) throw ShapeError("head_scores: state length does not match head");
  std::vector<double> alpha(head.bias.values);
  for (std::size_t i = 0; i < m; ++i) {
    const double si = s[i];
    const double* wrow = &head.weight.values[i * m];
    for (std::size_t j = 0; j < m; ++j) alpha[j] += si * wrow[j];
  }
  return alpha;
}

std::vector<double> normalize_scores(std::span<const double> alpha) {
  return softmax_stable(alpha);
}

std::vector<double> weight_features(std::span<const double> beta, std::span<const double> s) {
  if (beta.size() != s.size()) throw ShapeError("weight_features: length mismatch");
  std::vector<double> z(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) z[j] = beta[j] * s[j];
  return z;
}

EnhancedState enhance_state(std::span<const double> s, const AttentionParams& params) {
  params.validate();
  if (s.size() != params.feature_dim()) {
    throw ShapeError("enhance_state: state length does not match feature count");
  }
  EnhancedState out;
  out.combined.reserve(params.head_count() * s.size());
  for (const AttentionHead& head : params.heads) {
    std::vector<double> beta = normalize_scores(head_scores(s, head));
    std::vector<double> z = weight_features(beta, s);
    out.combined.insert(out.combined.end(), z.begin(), z.end());
    out.per_head_weights.push_back(std::move(beta));
  }
  return out;
}

AttentionBinding bind_attention(Graph& g, AttentionParams& params) {
  params.validate();
  AttentionBinding b;
  for (AttentionHead& head : params.heads) {
    b.head_params.emplace_back(g.param(head.weight), g.param(head.bias));
  }
  return b;
}

AttentionNodes attach_attention(Graph& g, Graph::NodeId state, const AttentionBinding& binding) {
  AttentionNodes nodes;
  std::vector<Graph::NodeId> weighted;
  for (const auto& [w, b] : binding.head_params) {
    const Graph::NodeId alpha = g.linear(state, w, b);
    const Graph::NodeId beta = g.softmax(alpha);
    nodes.head_weights.push_back(beta);
    weighted.push_back(g.mul(beta, state));
  }
  nodes.combined = g.concat(weighted);
  return nodes;
}

}  // namespace masim
