#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <numbers>
#include <vector>

#include "doctest.h"
#include "masim/env.hpp"
#include "masim/policy.hpp"
#include "masim/rng.hpp"

using namespace masim;

namespace {

Agent make_agent(int id, Gender g, int label, double x, double y) {
  Agent a;
  a.id = id;
  a.gender = g;
  a.label = label;
  a.pos = {x, y};
  return a;
}

WorldConfig small_config() {
  WorldConfig cfg;
  cfg.side = 10;
  cfg.agents_per_gender = 25;
  cfg.view_range = 14.0;
  cfg.offer_distance = 3.0;
  cfg.max_steps = 100;
  cfg.initial_n = 0;
  cfg.seed = 9;
  cfg.experimental_labels = {};
  return cfg;
}

Agent responder(int offers_received, int n, std::vector<int> declined) {
  Agent a;
  a.offers_received = offers_received;
  a.first_decline_n = n;
  a.decline_list = std::move(declined);
  return a;
}

}  // namespace

TEST_CASE("sampling phase declines unconditionally") {
  CHECK(respond_to_offer(responder(2, 3, {}), 24) == Decision::Decline);
  // Opaque to the sender's quality: even the top label is refused.
  for (int label = 0; label < 25; ++label)
    CHECK(respond_to_offer(responder(0, 1, {20}), label) == Decision::Decline);
}

TEST_CASE("after sampling, the max declined label is the acceptance bar") {
  CHECK(respond_to_offer(responder(3, 3, {14, 8, 2}), 14) == Decision::Accept);  // 14 >= max 14
  CHECK(respond_to_offer(responder(5, 3, {20, 1}), 19) == Decision::Decline);    // 19 < max 20
  CHECK(respond_to_offer(responder(5, 3, {20, 1}), 20) == Decision::Accept);
  CHECK(respond_to_offer(responder(4, 0, {}), 0) == Decision::Accept);  // empty list accepts all
}

TEST_CASE("acceptance is upward-closed in the sender label") {
  Rng rng(71);
  for (int it = 0; it < 200; ++it) {
    std::vector<int> declined;
    const std::size_t k = rng.uniform_index(6);
    for (std::size_t i = 0; i < k; ++i)
      declined.push_back(static_cast<int>(rng.uniform_index(25)));
    const Agent a = responder(5, static_cast<int>(rng.uniform_index(5)), declined);

    bool accepted_below = false;
    for (int label = 0; label < 25; ++label) {
      const bool accepts = respond_to_offer(a, label) == Decision::Accept;
      if (accepted_below) CHECK(accepts);  // once accepting, higher labels accept too
      accepted_below |= accepts;
    }
  }
}

TEST_CASE("select_target wants the best visible label") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  agents.push_back(make_agent(1, Gender::Male, 7, 5.0, 6.0));
  agents.push_back(make_agent(2, Gender::Male, 21, 6.0, 5.0));
  agents.push_back(make_agent(3, Gender::Male, 13, 4.0, 4.0));
  World w = World::from_agents(cfg, agents);
  auto target = select_target(w, 0);
  REQUIRE(target.has_value());
  CHECK(w.agent(*target).label == 21);
}

TEST_CASE("select_target skips only the most recent decliner") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  agents.push_back(make_agent(1, Gender::Male, 7, 5.0, 6.0));
  agents.push_back(make_agent(2, Gender::Male, 21, 6.0, 5.0));
  agents[0].being_declined_list = {7, 21};  // 21 refused most recently

  World w = World::from_agents(cfg, agents);
  auto target = select_target(w, 0);
  REQUIRE(target.has_value());
  CHECK(w.agent(*target).label == 7);  // 21 excluded; the earlier refusal by 7 is forgotten

  agents[0].being_declined_list = {21, 7};
  World w2 = World::from_agents(cfg, agents);
  auto target2 = select_target(w2, 0);
  REQUIRE(target2.has_value());
  CHECK(w2.agent(*target2).label == 21);
}

TEST_CASE("select_target is empty when nothing qualifies") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  agents.push_back(make_agent(1, Gender::Male, 7, 5.0, 6.0));
  agents[0].being_declined_list = {7};  // sole candidate is the last decliner
  World w = World::from_agents(cfg, agents);
  CHECK(select_target(w, 0) == std::nullopt);

  std::vector<Agent> alone;
  alone.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  World w2 = World::from_agents(cfg, alone);
  CHECK(select_target(w2, 0) == std::nullopt);
}

TEST_CASE("choose_move chases a target and wanders without one") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  agents.push_back(make_agent(1, Gender::Male, 7, 5.0, 6.0));
  World w = World::from_agents(cfg, agents);

  const AgentAction chase = choose_move(w, 0, 1);
  CHECK(chase.movement == MovementKind::TowardTarget);
  CHECK(!chase.heading.has_value());

  const AgentAction wander = choose_move(w, 0, std::nullopt);
  CHECK(wander.movement == MovementKind::RandomHeading);
  REQUIRE(wander.heading.has_value());
  CHECK(*wander.heading >= 0.0);
  CHECK(*wander.heading < 2.0 * std::numbers::pi);
}

TEST_CASE("wander headings come from the world stream: copies reproduce, originals advance") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  World w = World::from_agents(cfg, agents);
  World copy = w;
  const AgentAction a = choose_move(w, 0, std::nullopt);
  const AgentAction b = choose_move(copy, 0, std::nullopt);
  CHECK(*a.heading == *b.heading);
  const AgentAction c = choose_move(w, 0, std::nullopt);  // same world: stream moved on
  CHECK(*c.heading != *a.heading);
}

TEST_CASE("paused or paired agents hold position") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 5.0, 5.0));
  agents.push_back(make_agent(1, Gender::Male, 7, 5.0, 6.0));
  agents[0].paused = true;
  World w = World::from_agents(cfg, agents);
  CHECK(choose_move(w, 0, 1).movement == MovementKind::Hold);

  agents[0].paused = false;
  agents[0].paired_with = 1;
  agents[1].paired_with = 0;
  World w2 = World::from_agents(cfg, agents);
  CHECK(choose_move(w2, 0, std::nullopt).movement == MovementKind::Hold);
}

TEST_CASE("should_offer gates on distance and engagement") {
  WorldConfig cfg = small_config();
  std::vector<Agent> agents;
  agents.push_back(make_agent(0, Gender::Female, 3, 1.0, 1.0));
  agents.push_back(make_agent(1, Gender::Male, 7, 3.5, 1.0));
  agents.push_back(make_agent(2, Gender::Male, 9, 8.0, 1.0));
  agents.push_back(make_agent(3, Gender::Female, 5, 8.0, 2.0));
  World w = World::from_agents(cfg, agents);

  CHECK(should_offer(w, 0, 1));      // distance 2.5 <= 3.0
  CHECK(!should_offer(w, 0, 2));     // distance 7.0
  REQUIRE(w.submit_offer(3, 2) == SubmitResult::Ok);
  CHECK(!should_offer(w, 3, 2));     // sender engaged
  CHECK(should_offer(w, 0, 1));      // unrelated pair unaffected
  REQUIRE(w.submit_offer(0, 1) == SubmitResult::Ok);
  CHECK(!should_offer(w, 0, 1));     // now both engaged
}

TEST_CASE("a target the policy proposes is always a legal offer recipient") {
  // Property tie-in: on live worlds, select_target only ever yields unpaired
  // opposite-gender agents inside the view range.
  WorldConfig cfg;
  cfg.seed = 17;
  World w(cfg);
  for (int tick = 0; tick < 60; ++tick) {
    for (const Agent& a : w.agents()) {
      if (a.paired() || a.paused) continue;
      if (auto t = select_target(w, a.id)) {
        const Agent& target = w.agent(*t);
        CHECK(target.gender != a.gender);
        CHECK(!target.paired());
        CHECK(distance(a.pos, target.pos) <= cfg.view_range + 1e-12);
        if (auto last = a.last_decliner_label()) CHECK(target.label != *last);
      }
    }
    w.step();
  }
}
