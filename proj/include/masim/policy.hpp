#pragma once

#include <optional>

#include "masim/action.hpp"
#include "masim/env.hpp"

namespace masim {

// Hand-written control-group strategies. All pure except choose_move, which
// draws a heading from the world RNG when the agent has nobody to chase.

// Highest-label visible unpaired opposite-gender agent, skipping the most
// recent decliner's label. Absent when nothing qualifies.
std::optional<int> select_target(const World& world, int agent_id);

// TowardTarget when a target exists, otherwise RandomHeading with a uniform
// angle in [0, 2pi). Paused agents Hold.
AgentAction choose_move(World& world, int agent_id, std::optional<int> target);

// True iff target within offer_distance and neither party has a pending offer.
bool should_offer(const World& world, int agent_id, int target_id);

// First first_decline_n resolved offers: Decline unconditionally. After that:
// Accept iff sender_label >= max(decline_list). Empty decline_list accepts.
Decision respond_to_offer(const Agent& agent, int sender_label);

}  // namespace masim
