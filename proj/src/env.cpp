#include "masim/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "masim/policy.hpp"

namespace masim {

double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

std::optional<int> Agent::max_declined() const {
  if (decline_list.empty()) return std::nullopt;
  return *std::max_element(decline_list.begin(), decline_list.end());
}

void WorldConfig::validate() const {
  if (side <= 0) throw ConfigError("WorldConfig.side must be > 0");
  if (agents_per_gender <= 0) throw ConfigError("WorldConfig.agents_per_gender must be > 0");
  if (view_range <= 0.0) throw ConfigError("WorldConfig.view_range must be positive");
  if (view_range > side * std::numbers::sqrt2)
    throw ConfigError("WorldConfig.view_range must be <= side*sqrt(2)");
  if (offer_distance <= 0.0) throw ConfigError("WorldConfig.offer_distance must be positive");
  if (offer_distance > view_range)
    throw ConfigError("WorldConfig.offer_distance must be <= view_range");
  if (max_steps <= 0) throw ConfigError("WorldConfig.max_steps must be > 0");
  if (initial_n < 0) throw ConfigError("WorldConfig.initial_n must be >= 0");
  if (move_speed <= 0.0) throw ConfigError("WorldConfig.move_speed must be positive");
  if (deadlock_patience <= 0) throw ConfigError("WorldConfig.deadlock_patience must be > 0");
  for (int label : experimental_labels) {
    if (label < 0 || label >= agents_per_gender)
      throw ConfigError("WorldConfig.experimental_labels entries must lie in [0, L-1]");
  }
}

World::World(WorldConfig config) {
  config.validate();
  config_ = std::move(config);
  rng_ = Rng(config_.seed);

  const int L = config_.agents_per_gender;
  agents_.reserve(static_cast<size_t>(2 * L));
  for (int g = 0; g < 2; ++g) {
    std::vector<int> labels(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) labels[static_cast<size_t>(i)] = i;
    rng_.shuffle(labels);
    for (int i = 0; i < L; ++i) {
      Agent a;
      a.id = g * L + i;
      a.gender = g == 0 ? Gender::Female : Gender::Male;
      a.label = labels[static_cast<size_t>(i)];
      a.pos.x = rng_.uniform(0.0, static_cast<double>(config_.side));
      a.pos.y = rng_.uniform(0.0, static_cast<double>(config_.side));
      a.first_decline_n = config_.initial_n;
      const auto& ex = config_.experimental_labels;
      a.group = std::find(ex.begin(), ex.end(), a.label) != ex.end() ? Group::Experimental
                                                                     : Group::Control;
      agents_.push_back(std::move(a));
    }
  }
}

World World::from_agents(WorldConfig config, std::vector<Agent> agents) {
  config.validate();
  World w;
  w.config_ = std::move(config);
  w.rng_ = Rng(w.config_.seed);
  w.agents_ = std::move(agents);

  std::vector<bool> seen_label[2];
  seen_label[0].assign(static_cast<size_t>(w.config_.agents_per_gender), false);
  seen_label[1].assign(static_cast<size_t>(w.config_.agents_per_gender), false);
  for (size_t i = 0; i < w.agents_.size(); ++i) {
    const Agent& a = w.agents_[i];
    if (a.id != static_cast<int>(i))
      throw ConfigError("from_agents: agent ids must be dense and ordered");
    if (a.label < 0 || a.label >= w.config_.agents_per_gender)
      throw ConfigError("from_agents: label out of range");
    auto& seen = seen_label[a.gender == Gender::Female ? 0 : 1];
    if (seen[static_cast<size_t>(a.label)])
      throw ConfigError("from_agents: duplicate label within a gender");
    seen[static_cast<size_t>(a.label)] = true;
    if (a.pos.x < 0 || a.pos.x >= w.config_.side || a.pos.y < 0 || a.pos.y >= w.config_.side)
      throw ConfigError("from_agents: position outside [0, side)");
    if (a.paired_with) {
      const Agent& b = w.agents_.at(static_cast<size_t>(*a.paired_with));
      if (!b.paired_with || *b.paired_with != a.id)
        throw ConfigError("from_agents: pairing not symmetric");
      if (b.gender == a.gender) throw ConfigError("from_agents: same-gender pairing");
    }
  }
  return w;
}

const Agent& World::agent(int id) const {
  return agents_.at(static_cast<size_t>(id));
}

Agent& World::agent_mut(int id) {
  return agents_.at(static_cast<size_t>(id));
}

bool World::has_pending_offer(int agent_id) const {
  for (const Offer& o : pending_offers_) {
    if (o.sender_id == agent_id || o.recipient_id == agent_id) return true;
  }
  return false;
}

std::optional<Offer> World::incoming_offer(int agent_id) const {
  for (const Offer& o : pending_offers_) {
    if (o.recipient_id == agent_id) return o;
  }
  return std::nullopt;
}

std::vector<int> World::visible_candidates(int agent_id) const {
  const Agent& self = agent(agent_id);
  std::vector<int> out;
  for (const Agent& other : agents_) {
    if (other.gender == self.gender || other.paired()) continue;
    if (distance(self.pos, other.pos) <= config_.view_range) out.push_back(other.id);
  }
  std::sort(out.begin(), out.end(), [this](int lhs, int rhs) {
    const Agent& a = agent(lhs);
    const Agent& b = agent(rhs);
    if (a.label != b.label) return a.label > b.label;
    return a.id < b.id;
  });
  return out;
}

std::optional<int> World::best_same_gender(int agent_id) const {
  const Agent& self = agent(agent_id);
  std::optional<int> best;
  for (const Agent& other : agents_) {
    if (other.id == self.id || other.gender != self.gender || other.paired()) continue;
    if (distance(self.pos, other.pos) > config_.view_range) continue;
    if (!best || other.label > agent(*best).label) best = other.id;
  }
  return best;
}

SubmitResult World::submit_offer(int sender_id, int recipient_id) {
  const Agent& sender = agent(sender_id);
  const Agent& recipient = agent(recipient_id);
  if (sender.gender == recipient.gender) return SubmitResult::SameGender;
  if (sender.paired() || recipient.paired()) return SubmitResult::AlreadyPaired;
  if (distance(sender.pos, recipient.pos) > config_.offer_distance) return SubmitResult::TooFar;
  if (has_pending_offer(sender_id) || has_pending_offer(recipient_id)) return SubmitResult::Busy;

  pending_offers_.push_back(Offer{sender_id, recipient_id, step_});
  agent_mut(sender_id).paused = true;
  agent_mut(recipient_id).paused = true;
  return SubmitResult::Ok;
}

void World::apply_resolution(const Offer& offer, Decision decision, std::vector<Event>& events) {
  Agent& sender = agent_mut(offer.sender_id);
  Agent& recipient = agent_mut(offer.recipient_id);
  recipient.offers_received += 1;

  Event ev;
  ev.step = step_;
  ev.type = EventType::Resolve;
  ev.a_id = sender.id;
  ev.b_id = recipient.id;
  ev.a_label = sender.label;
  ev.b_label = recipient.label;
  ev.decision = decision;

  if (decision == Decision::Decline) {
    recipient.decline_list.push_back(sender.label);
    sender.being_declined_list.push_back(recipient.label);
    sender.paused = false;
    recipient.paused = false;
  } else {
    sender.paired_with = recipient.id;
    recipient.paired_with = sender.id;
    sender.paused = true;
    recipient.paused = true;
    MatchRecord rec;
    rec.step = step_;
    const Agent& female = sender.gender == Gender::Female ? sender : recipient;
    const Agent& male = sender.gender == Gender::Male ? sender : recipient;
    rec.female_label = female.label;
    rec.male_label = male.label;
    rec.female_group = female.group;
    rec.male_group = male.group;
    rec.reward_each = (female.label + male.label) / 2.0;
    ev.reward_each = rec.reward_each;
    match_log_.push_back(rec);
    steps_since_match_ = -1;  // step() increments to 0 after the match tick
    breaker_streak_ = 0;
  }
  events.push_back(ev);
}

void World::resolve_offer(const Offer& offer, Decision decision, std::vector<Event>* events) {
  auto it = std::find_if(pending_offers_.begin(), pending_offers_.end(), [&](const Offer& o) {
    return o.sender_id == offer.sender_id && o.recipient_id == offer.recipient_id &&
           o.issued_step == offer.issued_step;
  });
  if (it == pending_offers_.end()) throw StateError("resolve_offer: offer is not pending");
  Offer pending = *it;
  pending_offers_.erase(it);
  std::vector<Event> local;
  apply_resolution(pending, decision, events ? *events : local);
}

void World::move_agent(Agent& a, double heading) {
  a.pos.x = std::clamp(a.pos.x + config_.move_speed * std::cos(heading), 0.0,
                       std::nextafter(static_cast<double>(config_.side), 0.0));
  a.pos.y = std::clamp(a.pos.y + config_.move_speed * std::sin(heading), 0.0,
                       std::nextafter(static_cast<double>(config_.side), 0.0));
}

void World::move_toward(Agent& a, const Position& target) {
  const double d = distance(a.pos, target);
  if (d <= 0.0) return;
  const double scale = std::min(config_.move_speed, d) / d;
  a.pos.x = std::clamp(a.pos.x + (target.x - a.pos.x) * scale, 0.0,
                       std::nextafter(static_cast<double>(config_.side), 0.0));
  a.pos.y = std::clamp(a.pos.y + (target.y - a.pos.y) * scale, 0.0,
                       std::nextafter(static_cast<double>(config_.side), 0.0));
}

std::vector<Event> World::step(const std::map<int, AgentAction>& overrides) {
  if (step_ >= config_.max_steps) throw StateError("step: episode already at max_steps");
  std::vector<Event> events;

  // n adjustments land before anything else this tick.
  for (const auto& [id, action] : overrides) {
    Agent& a = agent_mut(id);
    a.first_decline_n = std::max(0, a.first_decline_n + action.n_adjust);
  }

  // Phase 1: target selection on tick-start state, then movement. Every
  // mover also records its baseline offer target for phase 2, whatever its
  // movement override says.
  struct MovePlan {
    int id = -1;
    MovementKind kind = MovementKind::Hold;
    std::optional<Position> toward;
    std::optional<double> heading;
    std::optional<int> offer_target;
  };
  std::vector<MovePlan> plans;
  for (const Agent& a : agents_) {
    if (a.paired() || a.paused) continue;
    MovePlan plan;
    plan.id = a.id;
    plan.offer_target = select_target(*this, a.id);

    AgentAction action;
    if (auto it = overrides.find(a.id); it != overrides.end()) {
      action = it->second;
      if (action.movement == MovementKind::Hold) action.movement = MovementKind::TowardTarget;
    } else {
      action = choose_move(*this, a.id, plan.offer_target);
    }

    plan.kind = action.movement;
    switch (action.movement) {
      case MovementKind::TowardTarget:
        if (plan.offer_target) {
          plan.toward = agent(*plan.offer_target).pos;
        } else {
          plan.kind = MovementKind::RandomHeading;
          plan.heading = rng_.uniform(0.0, 2.0 * std::numbers::pi);
        }
        break;
      case MovementKind::RandomHeading:
        plan.heading = action.heading ? *action.heading : rng_.uniform(0.0, 2.0 * std::numbers::pi);
        break;
      case MovementKind::FollowBestSameSex:
        if (auto peer = best_same_gender(a.id)) {
          plan.toward = agent(*peer).pos;
        } else {
          plan.kind = MovementKind::RandomHeading;
          plan.heading = rng_.uniform(0.0, 2.0 * std::numbers::pi);
        }
        break;
      case MovementKind::Hold:
        break;
    }
    plans.push_back(plan);
  }
  for (const MovePlan& plan : plans) {
    Agent& a = agent_mut(plan.id);
    const Position before = a.pos;
    if (plan.toward)
      move_toward(a, *plan.toward);
    else if (plan.heading)
      move_agent(a, *plan.heading);
    if (a.pos.x != before.x || a.pos.y != before.y) {
      Event ev;
      ev.step = step_;
      ev.type = EventType::Move;
      ev.a_id = a.id;
      ev.a_label = a.label;
      events.push_back(ev);
    }
  }

  // Phase 2: offers, serialized in seeded-random order. An agent whose
  // earlier-drawn peer already engaged it (or its target) drops out via the
  // Busy rule.
  std::vector<const MovePlan*> senders;
  for (const MovePlan& plan : plans) {
    if (plan.offer_target && should_offer(*this, plan.id, *plan.offer_target))
      senders.push_back(&plan);
  }
  rng_.shuffle(senders);
  for (const MovePlan* plan : senders) {
    if (submit_offer(plan->id, *plan->offer_target) == SubmitResult::Ok) {
      Event ev;
      ev.step = step_;
      ev.type = EventType::Offer;
      ev.a_id = plan->id;
      ev.b_id = *plan->offer_target;
      ev.a_label = agent(plan->id).label;
      ev.b_label = agent(*plan->offer_target).label;
      events.push_back(ev);
    }
  }

  // Phase 3: resolve offers issued on an earlier tick, in submission order.
  // Offers created this tick stay pending so the recipient can observe and
  // answer them next tick.
  std::vector<Offer> due;
  for (const Offer& o : pending_offers_) {
    if (o.issued_step < step_) due.push_back(o);
  }
  for (const Offer& o : due) {
    Agent& recipient = agent_mut(o.recipient_id);
    Decision decision;
    OfferResponse response = OfferResponse::UseBaselineRule;
    if (auto it = overrides.find(o.recipient_id); it != overrides.end())
      response = it->second.offer_response;
    switch (response) {
      case OfferResponse::ForceAccept:
        recipient.first_decline_n = recipient.offers_received;
        decision = Decision::Accept;
        break;
      case OfferResponse::ForceDecline:
        if (recipient.offers_received < recipient.first_decline_n)
          recipient.first_decline_n += 1;
        decision = Decision::Decline;
        break;
      case OfferResponse::UseBaselineRule:
      default:
        decision = respond_to_offer(recipient, agent(o.sender_id).label);
        break;
    }
    resolve_offer(o, decision, &events);
  }

  // Phase 4: deadlock breaker. After deadlock_patience matchless ticks every
  // unmatched agent relaxes all three blocking mechanisms at once:
  //  - drops the top of its decline_list (lowers the acceptance threshold);
  //    repeated firings with no match in between escalate, dropping one more
  //    element per firing, so a deeply locked endgame drains in a few windows
  //    instead of one element per window;
  //  - forgets past rejections (re-enables excluded targets; forgetting only
  //    the latest is not enough, since each failed re-approach re-appends the
  //    decliner and a final mutually-excluded pair would stall at 24/25);
  //  - if at most one candidate is left in view, closes its sampling phase:
  //    with nobody else to sample, every further unconditional decline can
  //    only hit that same candidate, and the last pair left would otherwise
  //    need one full patience window per remaining quota.
  steps_since_match_ += 1;
  if (steps_since_match_ >= config_.deadlock_patience) {
    breaker_streak_ += 1;
    for (Agent& a : agents_) {
      if (a.paired()) continue;
      for (int pops = 0; pops < breaker_streak_ && !a.decline_list.empty(); ++pops) {
        auto it = std::max_element(a.decline_list.begin(), a.decline_list.end());
        a.decline_list.erase(it);
      }
      a.being_declined_list.clear();
      if (visible_candidates(a.id).size() <= 1)
        a.first_decline_n = std::min(a.first_decline_n, a.offers_received);
    }
    steps_since_match_ = 0;
  }

  step_ += 1;
  return events;
}

bool World::all_paired() const {
  return std::all_of(agents_.begin(), agents_.end(),
                     [](const Agent& a) { return a.paired(); });
}

int World::matched_agents() const {
  return static_cast<int>(
      std::count_if(agents_.begin(), agents_.end(), [](const Agent& a) { return a.paired(); }));
}

bool World::is_terminal() const {
  return all_paired() || step_ >= config_.max_steps;
}

std::string to_string(Gender g) { return g == Gender::Female ? "female" : "male"; }
std::string to_string(Group g) { return g == Group::Control ? "control" : "experimental"; }

std::string to_string(EventType t) {
  switch (t) {
    case EventType::Move: return "move";
    case EventType::Offer: return "offer";
    case EventType::Resolve: return "resolve";
  }
  return "unknown";
}

std::string to_string(Decision d) { return d == Decision::Accept ? "accept" : "decline"; }

std::string to_string(SubmitResult r) {
  switch (r) {
    case SubmitResult::Ok: return "ok";
    case SubmitResult::TooFar: return "too_far";
    case SubmitResult::AlreadyPaired: return "already_paired";
    case SubmitResult::Busy: return "busy";
    case SubmitResult::SameGender: return "same_gender";
  }
  return "unknown";
}

void write_events_csv(const std::string& path, const std::vector<Event>& events,
                      bool include_moves) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot open for writing: " + path);
  out << "step,event_type,sender_label,recipient_label,decision,reward_each\n";
  char buffer[64];
  for (const Event& ev : events) {
    if (!include_moves && ev.type == EventType::Move) continue;
    out << ev.step << ',' << to_string(ev.type) << ',' << ev.a_label << ','
        << (ev.b_id >= 0 ? std::to_string(ev.b_label) : std::string()) << ','
        << (ev.decision ? to_string(*ev.decision) : std::string()) << ',';
    std::snprintf(buffer, sizeof(buffer), "%.17g", ev.reward_each);
    out << buffer << '\n';
  }
  if (!out.flush()) throw StateError("write failed: " + path);
}

void write_matches_csv(const std::string& path, int trial,
                       const std::vector<MatchRecord>& records) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot open for writing: " + path);
  out << "trial,step,female_label,male_label,female_group,male_group\n";
  for (const MatchRecord& r : records) {
    out << trial << ',' << r.step << ',' << r.female_label << ',' << r.male_label << ','
        << to_string(r.female_group) << ',' << to_string(r.male_group) << '\n';
  }
  if (!out.flush()) throw StateError("write failed: " + path);
}

}  // namespace masim
