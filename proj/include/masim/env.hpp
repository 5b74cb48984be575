#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "masim/action.hpp"
#include "masim/errors.hpp"
#include "masim/rng.hpp"

namespace masim {

enum class Gender { Female, Male };
enum class Group { Control, Experimental };

inline Gender opposite(Gender g) { return g == Gender::Female ? Gender::Male : Gender::Female; }

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Position& a, const Position& b);

struct Agent {
  int id = -1;
  Gender gender = Gender::Female;
  int label = 0;
  Position pos;
  std::optional<int> paired_with;
  bool paused = false;
  std::vector<int> decline_list;
  std::vector<int> being_declined_list;  // most recent last
  int offers_received = 0;               // resolved offers only
  int first_decline_n = 0;
  Group group = Group::Control;

  bool paired() const { return paired_with.has_value(); }
  std::optional<int> max_declined() const;
  std::optional<int> last_decliner_label() const {
    return being_declined_list.empty() ? std::nullopt
                                       : std::optional<int>(being_declined_list.back());
  }
};

struct WorldConfig {
  int side = 50;
  int agents_per_gender = 25;
  double view_range = 25.0;
  double offer_distance = 3.0;
  int max_steps = 500;
  int initial_n = 3;
  double move_speed = 1.0;
  int deadlock_patience = 50;
  std::uint64_t seed = 0;
  std::vector<int> experimental_labels = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

  void validate() const;  // throws ConfigError naming the violated constraint
};

struct Offer {
  int sender_id = -1;
  int recipient_id = -1;
  int issued_step = 0;
};

struct MatchRecord {
  int step = 0;
  int female_label = 0;
  int male_label = 0;
  Group female_group = Group::Control;
  Group male_group = Group::Control;
  double reward_each = 0.0;
};

enum class Decision { Accept, Decline };

enum class EventType { Move, Offer, Resolve };

struct Event {
  int step = 0;
  EventType type = EventType::Move;
  int a_id = -1;  // mover / offer sender
  int b_id = -1;  // offer recipient
  int a_label = -1;
  int b_label = -1;
  std::optional<Decision> decision;
  double reward_each = 0.0;
};

enum class SubmitResult { Ok, TooFar, AlreadyPaired, Busy, SameGender };

// The matching world. Single-threaded by construction; copyable so tests and
// workers can fork snapshots. All randomness flows through the owned stream.
class World {
 public:
  explicit World(WorldConfig config);

  // Scenario/replay constructor with explicit agents; validates invariants.
  static World from_agents(WorldConfig config, std::vector<Agent> agents);

  const WorldConfig& config() const { return config_; }
  int step_count() const { return step_; }
  const std::vector<Agent>& agents() const { return agents_; }
  const Agent& agent(int id) const;
  Agent& agent_mut(int id);
  const std::vector<Offer>& pending_offers() const { return pending_offers_; }
  const std::vector<MatchRecord>& match_log() const { return match_log_; }
  Rng& rng() { return rng_; }

  bool has_pending_offer(int agent_id) const;  // as sender or recipient
  std::optional<Offer> incoming_offer(int agent_id) const;

  // Unpaired opposite-gender agents within view_range, label-descending
  // (ties broken by lower id). Throws std::out_of_range on unknown id.
  std::vector<int> visible_candidates(int agent_id) const;

  // Highest-label unpaired same-gender agent within view, excluding self.
  std::optional<int> best_same_gender(int agent_id) const;

  SubmitResult submit_offer(int sender_id, int recipient_id);

  // Applies the recipient's decision. Throws StateError on a stale offer.
  void resolve_offer(const Offer& offer, Decision decision,
                     std::vector<Event>* events = nullptr);

  // One tick: move, submit offers, resolve offers, deadlock bookkeeping,
  // step increment. Agents present in `overrides` follow the given action,
  // everyone else follows the baseline rules. Throws StateError once
  // step >= max_steps; an all-paired world just advances its step counter.
  std::vector<Event> step(const std::map<int, AgentAction>& overrides = {});

  bool all_paired() const;
  int matched_agents() const;
  bool is_terminal() const;

 private:
  World() = default;
  void move_agent(Agent& a, double heading);
  void move_toward(Agent& a, const Position& target);
  void apply_resolution(const Offer& offer, Decision decision, std::vector<Event>& events);

  WorldConfig config_;
  std::vector<Agent> agents_;
  std::vector<Offer> pending_offers_;
  std::vector<MatchRecord> match_log_;
  int step_ = 0;
  int steps_since_match_ = 0;
  int breaker_streak_ = 0;  // consecutive firings with no match in between
  Rng rng_{0};
};

std::string to_string(Gender g);
std::string to_string(Group g);
std::string to_string(EventType t);
std::string to_string(Decision d);
std::string to_string(SubmitResult r);

// CSV export. Events: step,event_type,sender_label,recipient_label,decision,
// reward_each. Matches: trial,step,female_label,male_label,female_group,
// male_group.
void write_events_csv(const std::string& path, const std::vector<Event>& events,
                      bool include_moves = false);
void write_matches_csv(const std::string& path, int trial,
                       const std::vector<MatchRecord>& records);

}  // namespace masim
