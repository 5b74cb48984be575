#pragma once

#include <optional>

namespace masim {

enum class MovementKind { TowardTarget, RandomHeading, FollowBestSameSex, Hold };

enum class OfferResponse { UseBaselineRule, ForceAccept, ForceDecline };

// Per-tick control surface for one agent. Baseline agents derive one of these
// from the hand-written rules; the RL side supplies them as overrides.
//
// Forced responses carry the first-decline bookkeeping: a ForceDecline that
// lands during the unconditional-decline phase raises first_decline_n by one;
// a ForceAccept closes that phase (n := offers resolved so far).
struct AgentAction {
  MovementKind movement = MovementKind::TowardTarget;
  std::optional<double> heading;  // radians, used by RandomHeading when set
  OfferResponse offer_response = OfferResponse::UseBaselineRule;
  int n_adjust = 0;  // in {-1, 0, +1}; never drives first_decline_n below 0
};

}  // namespace masim
