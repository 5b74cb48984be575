#include "masim/a3c.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <thread>

#include "json.hpp"

namespace masim {

namespace {

// Top visible agents of one gender by descending label, paired or not. The
// per-slot paired flag keeps the distinction visible to the policy, which the
// unpaired-only visible_candidates list would erase.
std::vector<int> visible_by_label(const World& world, const Agent& self, Gender gender) {
  std::vector<int> out;
  for (const Agent& other : world.agents()) {
    if (other.id == self.id || other.gender != gender) continue;
    if (distance(self.pos, other.pos) <= world.config().view_range) out.push_back(other.id);
  }
  std::sort(out.begin(), out.end(), [&world](int lhs, int rhs) {
    const Agent& a = world.agent(lhs);
    const Agent& b = world.agent(rhs);
    if (a.label != b.label) return a.label > b.label;
    return a.id < b.id;
  });
  return out;
}

}  // namespace

Observation encode_observation(const World& world, int agent_id) {
  const Agent& self = world.agent(agent_id);
  if (self.paired()) throw StateError("encode_observation: agent is already paired");
  const WorldConfig& cfg = world.config();
  const double L = static_cast<double>(cfg.agents_per_gender);
  const double label_cap = std::max(1.0, L - 1.0);

  Observation obs;
  obs.raw.reserve(kFeatureDim);
  obs.normalized.reserve(kFeatureDim);
  auto push = [&obs](double raw, double norm) {
    obs.raw.push_back(raw);
    obs.normalized.push_back(norm);
  };

  push(self.label, self.label / label_cap);
  push(self.pos.x, self.pos.x / cfg.side);
  push(self.pos.y, self.pos.y / cfg.side);
  push(world.step_count(), static_cast<double>(world.step_count()) / cfg.max_steps);
  push(self.first_decline_n, std::min(1.0, self.first_decline_n / L));
  const double max_decl = static_cast<double>(self.max_declined().value_or(0));
  push(max_decl, max_decl / label_cap);
  push(self.offers_received, std::min(1.0, self.offers_received / L));
  const auto incoming = world.incoming_offer(agent_id);
  push(incoming ? 1.0 : 0.0, incoming ? 1.0 : 0.0);
  const double sender_label =
      incoming ? static_cast<double>(world.agent(incoming->sender_id).label) : 0.0;
  push(sender_label, incoming ? sender_label / label_cap : 0.0);

  auto push_slots = [&](Gender gender, int slots) {
    const std::vector<int> ids = visible_by_label(world, self, gender);
    for (int s = 0; s < slots; ++s) {
      if (s >= static_cast<int>(ids.size())) {
        for (int f = 0; f < kSlotFeatures; ++f) push(0.0, 0.0);
        continue;
      }
      const Agent& other = world.agent(ids[static_cast<size_t>(s)]);
      const double d = distance(self.pos, other.pos);
      const double bearing = std::atan2(other.pos.y - self.pos.y, other.pos.x - self.pos.x);
      push(1.0, 1.0);
      push(other.label, other.label / label_cap);
      push(d, d / cfg.view_range);
      push(std::sin(bearing), std::sin(bearing));
      push(std::cos(bearing), std::cos(bearing));
      push(other.paired() ? 1.0 : 0.0, other.paired() ? 1.0 : 0.0);
    }
  };
  push_slots(opposite(self.gender), kOppositeSlots);
  push_slots(self.gender, kSameSlots);
  return obs;
}

AgentAction catalog_to_action(const World& world, int agent_id, int action_index) {
  if (action_index < 0 || action_index >= kActionCount)
    throw ConfigError("catalog_to_action: index out of range");
  AgentAction action;  // defaults: TowardTarget, UseBaselineRule
  if (action_index == 1) {
    action.movement = MovementKind::FollowBestSameSex;
  } else if (action_index >= 2 && action_index <= 9) {
    action.movement = MovementKind::RandomHeading;
    action.heading = (action_index - 2) * std::numbers::pi / 4.0;
  } else if (action_index == 10 || action_index == 11) {
    // Meaningful only with an incoming offer; otherwise masked to action 0.
    if (world.incoming_offer(agent_id)) {
      action.offer_response = action_index == 10 ? OfferResponse::ForceAccept
                                                 : OfferResponse::ForceDecline;
    }
  }
  return action;
}

void Hyperparams::validate() const {
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("Hyperparams.gamma must be in [0, 1)");
  if (lr <= 0.0) throw ConfigError("Hyperparams.lr must be positive");
  if (rollout_len <= 0) throw ConfigError("Hyperparams.rollout_len must be positive");
  if (entropy_coeff < 0.0) throw ConfigError("Hyperparams.entropy_coeff must be >= 0");
  if (value_coeff < 0.0) throw ConfigError("Hyperparams.value_coeff must be >= 0");
  if (workers < 1) throw ConfigError("Hyperparams.workers must be >= 1");
  if (episodes < 0) throw ConfigError("Hyperparams.episodes must be >= 0");
  if (grad_clip <= 0.0) throw ConfigError("Hyperparams.grad_clip must be positive");
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.feature_dim == 0 || cfg.head_count == 0 || cfg.action_count == 0)
    throw ConfigError("ModelConfig dimensions must be positive");
  ModelParams p;
  p.attention = AttentionParams::init(cfg.head_count, cfg.feature_dim, derive_seed(seed, 1));
  const std::size_t combined = cfg.head_count * cfg.feature_dim;
  p.policy = MLPParams::make(combined, cfg.hidden, cfg.action_count, derive_seed(seed, 2),
                             /*zero_final=*/true);
  p.value = MLPParams::make(combined, cfg.hidden, 1, derive_seed(seed, 3));
  return p;
}

void ModelParams::validate() const {
  attention.validate();
  policy.validate();
  value.validate();
  const std::size_t combined = attention.head_count() * attention.feature_dim();
  if (policy.input_dim() != combined || value.input_dim() != combined)
    throw ShapeError("ModelParams: head input width must equal H*m");
  if (value.output_dim() != 1) throw ShapeError("ModelParams: value head must be scalar");
}

ModelConfig ModelParams::config() const {
  ModelConfig cfg;
  cfg.feature_dim = attention.feature_dim();
  cfg.head_count = attention.head_count();
  cfg.action_count = policy.output_dim();
  cfg.hidden.clear();
  for (std::size_t i = 0; i + 1 < policy.layers.size(); ++i)
    cfg.hidden.push_back(static_cast<int>(policy.layers[i].weight.cols));
  return cfg;
}

std::vector<ParamTensor*> ModelParams::tensors() {
  std::vector<ParamTensor*> out;
  for (AttentionHead& h : attention.heads) {
    out.push_back(&h.weight);
    out.push_back(&h.bias);
  }
  for (MLPParams* mlp : {&policy, &value}) {
    for (MLPParams::Layer& l : mlp->layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<const ParamTensor*> ModelParams::tensors() const {
  std::vector<const ParamTensor*> out;
  for (ParamTensor* t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t);
  return out;
}

namespace {

double state_value(const ModelParams& params, const Observation& obs) {
  const EnhancedState es = enhance_state(obs.normalized, params.attention);
  return mlp_forward(params.value, es.combined)[0];
}

}  // namespace

ActResult act(const ModelParams& params, const Observation& obs, Rng& rng, bool greedy) {
  EnhancedState es = enhance_state(obs.normalized, params.attention);
  const std::vector<double> logits = mlp_forward(params.policy, es.combined);
  const std::vector<double> probs = softmax_stable(logits);

  ActResult result;
  result.value = mlp_forward(params.value, es.combined)[0];
  result.head_weights = std::move(es.per_head_weights);
  for (double p : probs) result.entropy -= p * std::log(p);

  if (greedy) {
    result.action = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    result.action = static_cast<int>(probs.size()) - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        result.action = static_cast<int>(i);
        break;
      }
    }
  }
  result.log_prob = std::log(probs[static_cast<size_t>(result.action)]);
  return result;
}

std::vector<double> discounted_returns(const RolloutBuffer& buffer, double gamma) {
  if (buffer.empty()) throw StateError("discounted_returns: empty buffer");
  std::vector<double> g(buffer.size());
  double next = buffer.bootstrap_value;
  for (std::size_t i = buffer.size(); i-- > 0;) {
    next = buffer.steps[i].reward + gamma * next;
    g[i] = next;
  }
  return g;
}

std::vector<double> advantages(const std::vector<double>& returns,
                               const std::vector<double>& values) {
  if (returns.size() != values.size()) throw ShapeError("advantages: length mismatch");
  std::vector<double> a(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) a[i] = returns[i] - values[i];
  return a;
}

namespace {

using LayerNodes = std::vector<std::pair<Graph::NodeId, Graph::NodeId>>;

LayerNodes bind_mlp(Graph& g, MLPParams& mlp) {
  LayerNodes ids;
  ids.reserve(mlp.layers.size());
  for (MLPParams::Layer& l : mlp.layers) ids.emplace_back(g.param(l.weight), g.param(l.bias));
  return ids;
}

Graph::NodeId attach_mlp(Graph& g, const LayerNodes& ids, const MLPParams& mlp,
                         Graph::NodeId x) {
  Graph::NodeId cur = x;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    cur = g.linear(cur, ids[i].first, ids[i].second);
    if (mlp.layers[i].act != Activation::Identity) cur = g.activation(cur, mlp.layers[i].act);
  }
  return cur;
}

}  // namespace

Graph::NodeId buffer_loss(Graph& graph, ModelParams& params, const RolloutBuffer& buffer,
                          const std::vector<double>& returns, const std::vector<double>& adv,
                          double entropy_coeff, double value_coeff) {
  if (buffer.empty()) throw StateError("buffer_loss: empty buffer");
  if (returns.size() != buffer.size() || adv.size() != buffer.size())
    throw ShapeError("buffer_loss: returns/advantages length mismatch");

  const AttentionBinding att = bind_attention(graph, params.attention);
  const LayerNodes policy_ids = bind_mlp(graph, params.policy);
  const LayerNodes value_ids = bind_mlp(graph, params.value);

  std::optional<Graph::NodeId> policy_sum, value_sum, entropy_sum;
  auto accumulate = [&graph](std::optional<Graph::NodeId>& acc, Graph::NodeId term) {
    acc = acc ? graph.add(*acc, term) : term;
  };

  for (std::size_t t = 0; t < buffer.size(); ++t) {
    const RolloutBuffer::StepRecord& rec = buffer.steps[t];
    const Graph::NodeId x = graph.input(rec.obs.normalized);
    const AttentionNodes att_nodes = attach_attention(graph, x, att);

    const Graph::NodeId logits = attach_mlp(graph, policy_ids, params.policy, att_nodes.combined);
    const Graph::NodeId probs = graph.softmax(logits);
    const Graph::NodeId logp = graph.log(probs);
    const Graph::NodeId logp_a = graph.pick(logp, static_cast<std::size_t>(rec.action));
    accumulate(policy_sum, graph.scale(logp_a, adv[t]));
    accumulate(entropy_sum, graph.scale(graph.sum(graph.mul(probs, logp)), -1.0));

    const Graph::NodeId v = attach_mlp(graph, value_ids, params.value, att_nodes.combined);
    const Graph::NodeId diff = graph.sub(graph.input({returns[t]}), v);
    accumulate(value_sum, graph.mul(diff, diff));
  }

  const double inv_t = 1.0 / static_cast<double>(buffer.size());
  Graph::NodeId loss = graph.scale(*policy_sum, -inv_t);
  loss = graph.add(loss, graph.scale(*value_sum, value_coeff * inv_t));
  loss = graph.add(loss, graph.scale(*entropy_sum, -entropy_coeff * inv_t));
  return loss;
}

std::map<int, RolloutBuffer> worker_rollout(const ModelParams& params, World& world, int k,
                                            Rng& rng) {
  if (world.is_terminal()) throw StateError("worker_rollout: world is terminal");
  std::map<int, RolloutBuffer> buffers;
  std::vector<int> acted;
  for (int t = 0; t < k && !world.is_terminal(); ++t) {
    std::map<int, AgentAction> overrides;
    acted.clear();
    for (const Agent& a : world.agents()) {
      if (a.group != Group::Experimental || a.paired()) continue;
      Observation obs = encode_observation(world, a.id);
      const ActResult res = act(params, obs, rng);
      overrides[a.id] = catalog_to_action(world, a.id, res.action);
      RolloutBuffer::StepRecord rec;
      rec.obs = std::move(obs);
      rec.action = res.action;
      rec.log_prob = res.log_prob;
      rec.value = res.value;
      rec.entropy = res.entropy;
      buffers[a.id].steps.push_back(std::move(rec));
      acted.push_back(a.id);
    }
    world.step(overrides);
    for (int id : acted) {
      const Agent& a = world.agent(id);
      if (a.paired())
        buffers[id].steps.back().reward =
            (a.label + world.agent(*a.paired_with).label) / 2.0;
    }
  }
  for (auto& [id, buffer] : buffers) {
    const Agent& a = world.agent(id);
    buffer.bootstrap_value = (a.paired() || world.is_terminal())
                                 ? 0.0
                                 : state_value(params, encode_observation(world, id));
  }
  return buffers;
}

GlobalStore::GlobalStore(ModelParams initial, const Hyperparams& hp)
    : params_(std::move(initial)), hp_(hp) {
  hp_.validate();
  params_.validate();
  adam_.lr = hp_.lr;
  adam_.init_like(params_.tensors());
}

GlobalStore::Snapshot GlobalStore::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return Snapshot{params_, version_};
}

std::uint64_t GlobalStore::version() const {
  std::lock_guard<std::mutex> lock(mu_);
  return version_;
}

std::uint64_t GlobalStore::apply_gradients(const std::vector<std::vector<double>>& grads) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::vector<ParamTensor*> ts = params_.tensors();
  if (grads.size() != ts.size()) throw ShapeError("apply_gradients: tensor count mismatch");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (grads[i].size() != ts[i]->size())
      throw ShapeError("apply_gradients: gradient shape mismatch");
    ts[i]->grad = grads[i];
  }
  last_grad_norm_ = clip_grad_norm(ts, hp_.grad_clip);
  adam_step(ts, adam_);
  version_ += 1;
  return version_;
}

long GlobalStore::adam_step_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return adam_.step_count;
}

AdamState GlobalStore::adam() const {
  std::lock_guard<std::mutex> lock(mu_);
  return adam_;
}

void GlobalStore::save(const std::string& path) const {
  std::lock_guard<std::mutex> lock(mu_);
  save_model(path, params_, adam_);
}

namespace {

double episode_egr_avg_diff(const World& world, bool* any) {
  double sum = 0.0;
  int count = 0;
  for (const MatchRecord& r : world.match_log()) {
    if (r.female_group == Group::Experimental) {
      sum += r.male_label - r.female_label;
      count += 1;
    }
    if (r.male_group == Group::Experimental) {
      sum += r.female_label - r.male_label;
      count += 1;
    }
  }
  if (any) *any = count > 0;
  return count > 0 ? sum / count : 0.0;
}

double episode_avg_abs_diff(const World& world) {
  if (world.match_log().empty()) return 0.0;
  double sum = 0.0;
  for (const MatchRecord& r : world.match_log()) sum += std::abs(r.female_label - r.male_label);
  return sum / static_cast<double>(world.match_log().size());
}

}  // namespace

TrainResult train(const WorldConfig& world_config, const Hyperparams& hp, std::uint64_t seed,
                  std::optional<ModelParams> initial) {
  world_config.validate();
  hp.validate();

  ModelParams start = initial ? std::move(*initial)
                              : ModelParams::init(ModelConfig{}, derive_seed(seed, 0x1111));
  start.validate();
  GlobalStore global(std::move(start), hp);

  std::vector<EpisodeTrace> trace(static_cast<std::size_t>(hp.episodes));
  std::atomic<int> next_episode{0};

  auto run_worker = [&](int worker_id) {
    int episode;
    while ((episode = next_episode.fetch_add(1)) < hp.episodes) {
      const GlobalStore::Snapshot snap = global.snapshot();
      ModelParams local = snap.params;
      for (ParamTensor* t : local.tensors()) t->zero_grad();

      WorldConfig cfg = world_config;
      cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(episode), 1);
      World world(cfg);
      Rng policy_rng(derive_seed(seed, static_cast<std::uint64_t>(episode), 2));

      double loss_sum = 0.0;
      int loss_chunks = 0;
      double entropy_sum = 0.0;
      long entropy_steps = 0;
      Graph graph;

      while (!world.is_terminal()) {
        const std::map<int, RolloutBuffer> buffers =
            worker_rollout(local, world, hp.rollout_len, policy_rng);

        graph.clear();
        std::optional<Graph::NodeId> total;
        for (const auto& [id, buffer] : buffers) {
          if (buffer.empty()) continue;
          for (const auto& rec : buffer.steps) {
            entropy_sum += rec.entropy;
            entropy_steps += 1;
          }
          std::vector<double> values(buffer.size());
          for (std::size_t i = 0; i < buffer.size(); ++i) values[i] = buffer.steps[i].value;
          const std::vector<double> g = discounted_returns(buffer, hp.gamma);
          const std::vector<double> a = advantages(g, values);
          const Graph::NodeId l =
              buffer_loss(graph, local, buffer, g, a, hp.entropy_coeff, hp.value_coeff);
          total = total ? graph.add(*total, l) : l;
        }
        if (!total) continue;

        graph.backward(*total);
        loss_sum += graph.value(*total)[0];
        loss_chunks += 1;

        const std::vector<ParamTensor*> ts = local.tensors();
        std::vector<std::vector<double>> grads;
        grads.reserve(ts.size());
        for (ParamTensor* t : ts) {
          grads.push_back(t->grad);
          t->zero_grad();
        }
        global.apply_gradients(grads);
      }

      EpisodeTrace row;
      row.episode = episode;
      row.worker = worker_id;
      row.version = snap.version;
      row.mean_loss = loss_chunks > 0 ? loss_sum / loss_chunks : 0.0;
      row.mean_entropy = entropy_steps > 0 ? entropy_sum / entropy_steps : 0.0;
      row.egr_avg_diff = episode_egr_avg_diff(world, nullptr);
      row.avg_abs_diff = episode_avg_abs_diff(world);
      row.matches = static_cast<int>(world.match_log().size());
      trace[static_cast<std::size_t>(episode)] = row;
    }
  };

  if (hp.workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(hp.workers));
    for (int w = 0; w < hp.workers; ++w) threads.emplace_back(run_worker, w);
    for (std::thread& t : threads) t.join();
  }

  TrainResult result;
  result.params = global.snapshot().params;
  result.adam = global.adam();
  result.trace = std::move(trace);
  result.final_version = global.version();
  return result;
}

void write_trace_csv(const std::string& path, const std::vector<EpisodeTrace>& trace) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot open for writing: " + path);
  out << "episode,worker,version,mean_loss,mean_entropy,egr_avg_diff,avg_abs_diff,matches\n";
  char buffer[96];
  for (const EpisodeTrace& row : trace) {
    out << row.episode << ',' << row.worker << ',' << row.version << ',';
    std::snprintf(buffer, sizeof(buffer), "%.17g,%.17g,%.17g,%.17g", row.mean_loss,
                  row.mean_entropy, row.egr_avg_diff, row.avg_abs_diff);
    out << buffer << ',' << row.matches << '\n';
  }
  if (!out.flush()) throw StateError("write failed: " + path);
}

void save_model(const std::string& path, const ModelParams& params, const AdamState& adam) {
  params.validate();
  const ModelConfig cfg = params.config();

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = "masim-a3c";
  manifest["model"] = {{"feature_dim", cfg.feature_dim},
                       {"head_count", cfg.head_count},
                       {"hidden", cfg.hidden},
                       {"action_count", cfg.action_count}};
  auto acts = [](const MLPParams& mlp) {
    std::vector<std::string> names;
    for (const auto& l : mlp.layers) names.push_back(activation_name(l.act));
    return names;
  };
  manifest["activations"] = {{"policy", acts(params.policy)}, {"value", acts(params.value)}};
  manifest["adam"] = {{"lr", adam.lr},
                      {"beta1", adam.beta1},
                      {"beta2", adam.beta2},
                      {"epsilon", adam.epsilon},
                      {"step_count", adam.step_count}};

  const std::vector<const ParamTensor*> ts = params.tensors();
  nlohmann::json tensor_list = nlohmann::json::array();
  for (const ParamTensor* t : ts)
    tensor_list.push_back({{"rows", t->rows}, {"cols", t->cols}});
  manifest["tensors"] = std::move(tensor_list);

  write_checkpoint(path, manifest.dump(), ts);
}

LoadedModel load_model(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  const nlohmann::json manifest = nlohmann::json::parse(data.manifest_json);
  if (manifest.value("kind", "") != "masim-a3c")
    throw ConfigError("checkpoint is not a model checkpoint: " + path);

  const auto& model = manifest.at("model");
  ModelConfig cfg;
  cfg.feature_dim = model.at("feature_dim").get<std::size_t>();
  cfg.head_count = model.at("head_count").get<std::size_t>();
  cfg.hidden = model.at("hidden").get<std::vector<int>>();
  cfg.action_count = model.at("action_count").get<std::size_t>();

  LoadedModel loaded;
  loaded.params = ModelParams::init(cfg, 0);
  const std::vector<ParamTensor*> ts = loaded.params.tensors();
  if (ts.size() != data.tensors.size())
    throw ConfigError("checkpoint tensor count does not match model geometry");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i]->rows != data.tensors[i].rows || ts[i]->cols != data.tensors[i].cols)
      throw ShapeError("checkpoint tensor shape does not match model geometry");
    ts[i]->values = std::move(data.tensors[i].values);
    ts[i]->zero_grad();
  }

  const auto pol_names = manifest.at("activations").at("policy").get<std::vector<std::string>>();
  const auto val_names = manifest.at("activations").at("value").get<std::vector<std::string>>();
  if (pol_names.size() != loaded.params.policy.layers.size() ||
      val_names.size() != loaded.params.value.layers.size())
    throw ConfigError("checkpoint activation list does not match model geometry");
  for (std::size_t i = 0; i < pol_names.size(); ++i)
    loaded.params.policy.layers[i].act = activation_from_name(pol_names[i]);
  for (std::size_t i = 0; i < val_names.size(); ++i)
    loaded.params.value.layers[i].act = activation_from_name(val_names[i]);

  const auto& adam = manifest.at("adam");
  loaded.adam.lr = adam.at("lr").get<double>();
  loaded.adam.beta1 = adam.at("beta1").get<double>();
  loaded.adam.beta2 = adam.at("beta2").get<double>();
  loaded.adam.epsilon = adam.at("epsilon").get<double>();
  loaded.adam.step_count = adam.at("step_count").get<long>();

  loaded.params.validate();
  return loaded;
}

}  // namespace masim
