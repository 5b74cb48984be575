#include "masim/policy.hpp"

#include <numbers>

namespace masim {

std::optional<int> select_target(const World& world, int agent_id) {
  const Agent& self = world.agent(agent_id);
  const auto last = self.last_decliner_label();
  for (int id : world.visible_candidates(agent_id)) {
    if (last && world.agent(id).label == *last) continue;
    return id;
  }
  return std::nullopt;
}

AgentAction choose_move(World& world, int agent_id, std::optional<int> target) {
  const Agent& self = world.agent(agent_id);
  AgentAction action;
  if (self.paired() || self.paused) {
    action.movement = MovementKind::Hold;
    return action;
  }
  if (target) {
    action.movement = MovementKind::TowardTarget;
  } else {
    action.movement = MovementKind::RandomHeading;
    action.heading = world.rng().uniform(0.0, 2.0 * std::numbers::pi);
  }
  return action;
}

bool should_offer(const World& world, int agent_id, int target_id) {
  const Agent& self = world.agent(agent_id);
  const Agent& target = world.agent(target_id);
  if (self.paired() || target.paired()) return false;
  if (distance(self.pos, target.pos) > world.config().offer_distance) return false;
  return !world.has_pending_offer(agent_id) && !world.has_pending_offer(target_id);
}

Decision respond_to_offer(const Agent& agent, int sender_label) {
  if (agent.offers_received < agent.first_decline_n) return Decision::Decline;
  const auto threshold = agent.max_declined();
  if (!threshold || sender_label >= *threshold) return Decision::Accept;
  return Decision::Decline;
}

}  // namespace masim
