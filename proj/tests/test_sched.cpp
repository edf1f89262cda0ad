#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <vector>

#include "doctest.h"
#include "fq/sched.hpp"
#include "fq/simrng.hpp"

using namespace fq;

namespace {

Ecdf quad_dist() {
  Ecdf e;
  for (Ms s : {100, 200, 300, 400}) e.insert(s);
  return e;
}

// One Ok response plus one still-pending dispatch from t=0, clock at 150.
TaskState worked_state() {
  TaskState s;
  s.target = 2;
  s.now = 150;
  s.ledger.push_back({"d1", 0, TaskOutcome::Ok, 120});
  s.ledger.push_back({"d2", 0, TaskOutcome::Pending, -1});
  return s;
}

LedgerEntry entry(Ms at, TaskOutcome o) { return {"d", at, o, o == TaskOutcome::Ok ? at : -1}; }

// Independent 1 ms scan: the smallest t in (now, deadline] with E(t) >= z.
FinishTime scan_solve(const TaskState& s, const Ecdf& dist, int k, int z, Ms deadline) {
  if (s.returned_ok() >= z) return {false, s.now};
  for (Ms t = s.now + 1; t <= deadline; t++) {
    if (expected_results(s, dist, t, k) >= static_cast<double>(z)) return {false, t};
  }
  return {true, deadline};
}

// Exhaustive candidate scan with no early exit: the decision oracle.
std::pair<int, DispatchReason> scan_choose_k(const TaskState& s, const Ecdf& dist, int z,
                                             Ms deadline, double eta, int k_max) {
  FinishTime t0 = scan_solve(s, dist, 0, z, deadline);
  int best_eta = 0, k_floor = 0;
  for (int k = 1; k <= k_max; k++) {
    FinishTime tk = scan_solve(s, dist, k, z, deadline);
    double theta =
        (static_cast<double>(t0.t) - static_cast<double>(tk.t)) / static_cast<double>(k);
    if (theta >= eta) best_eta = k;
    if (t0.horizon && !tk.horizon && k_floor == 0) k_floor = k;
  }
  int k = std::max(best_eta, k_floor);
  DispatchReason r = k == 0 ? DispatchReason::None
                     : best_eta >= k_floor ? DispatchReason::EtaRule
                                           : DispatchReason::DeficitFloor;
  return {k, r};
}

TaskState random_state(Rng& rng) {
  TaskState s;
  s.target = 1 + static_cast<int>(rng.below(6));
  s.now = rng.uniform_int(0, 500);
  int n = static_cast<int>(rng.below(10));
  for (int i = 0; i < n; i++) {
    Ms at = rng.uniform_int(0, s.now);
    TaskOutcome o;
    switch (rng.below(5)) {
      case 0: o = TaskOutcome::Ok; break;
      case 1: o = TaskOutcome::Violation; break;
      case 2: o = TaskOutcome::Error; break;
      case 3: o = TaskOutcome::TimedOut; break;
      default: o = TaskOutcome::Pending; break;
    }
    s.ledger.push_back(entry(at, o));
  }
  return s;
}

Ecdf random_dist(Rng& rng) {
  Ecdf e;
  int n = 5 + static_cast<int>(rng.below(36));
  for (int i = 0; i < n; i++) e.insert(rng.uniform_int(1, 2000));
  return e;
}

}  // namespace

TEST_CASE("ledger counters split outcomes correctly") {
  TaskState s;
  s.target = 5;
  s.now = 1000;
  s.ledger = {entry(0, TaskOutcome::Ok),      entry(10, TaskOutcome::Ok),
              entry(20, TaskOutcome::Violation), entry(30, TaskOutcome::Error),
              entry(40, TaskOutcome::TimedOut),  entry(50, TaskOutcome::Pending),
              entry(60, TaskOutcome::Pending),   entry(70, TaskOutcome::Canceled)};
  CHECK(s.returned_ok() == 2);
  CHECK(s.responses() == 4);  // ok + violation + error
  CHECK(s.pending_count() == 2);
  CHECK(s.dispatched() == 8);
  CHECK(s.pending_times() == std::vector<Ms>{50, 60});
}

TEST_CASE("expire_pending times out only sufficiently old pending entries") {
  TaskState s;
  s.now = 1000;
  s.ledger = {entry(0, TaskOutcome::Pending), entry(950, TaskOutcome::Pending),
              entry(0, TaskOutcome::Ok)};
  s.expire_pending(500);
  CHECK(s.ledger[0].outcome == TaskOutcome::TimedOut);
  CHECK(s.ledger[1].outcome == TaskOutcome::Pending);
  CHECK(s.ledger[2].outcome == TaskOutcome::Ok);
}

TEST_CASE("expected count at the hand-frozen point: E(350) = 1.9") {
  // 1 returned + conditional 0.5 for the pending task + 1 * F(200) = 0.4
  TaskState s = worked_state();
  Ecdf dist = quad_dist();
  CHECK(expected_results(s, dist, 350, 1) == doctest::Approx(1.9));
  // dropping the extra device leaves 1.5; with no pending it's R + k*F
  CHECK(expected_results(s, dist, 350, 0) == doctest::Approx(1.5));
  TaskState done;
  done.now = 150;
  done.ledger = {entry(0, TaskOutcome::Ok)};
  CHECK(expected_results(done, dist, 350, 0) == doctest::Approx(1.0));
  // t_fut == now: both dynamic terms vanish
  CHECK(expected_results(s, dist, 150, 3) == doctest::Approx(1.0));
}

TEST_CASE("minimal finish time lands exactly on the step: solve = 400 ms") {
  TaskState s = worked_state();
  Ecdf dist = quad_dist();
  FinishTime t = solve_finish_time(s, dist, 1, 2, 1000);
  CHECK(!t.horizon);
  CHECK(t.t == 400);  // E steps from 1.9 to 2.15 at t_fut = 400
  // already satisfied -> now, not horizon
  FinishTime met = solve_finish_time(s, dist, 0, 1, 1000);
  CHECK(!met.horizon);
  CHECK(met.t == 150);
  // unreachable -> horizon pinned to the deadline: E(inf) = 1.75 < 3
  FinishTime hz = solve_finish_time(s, dist, 0, 3, 1000);
  CHECK(hz.horizon);
  CHECK(hz.t == 1000);
}

TEST_CASE("binary search equals the 1 ms linear scan on 500 random states") {
  Rng rng(60301);
  for (int i = 0; i < 500; i++) {
    TaskState s = random_state(rng);
    Ecdf dist = random_dist(rng);
    int k = static_cast<int>(rng.below(5));
    int z = 1 + static_cast<int>(rng.below(6));
    Ms deadline = s.now + rng.uniform_int(50, 2500);
    FinishTime got = solve_finish_time(s, dist, k, z, deadline);
    FinishTime want = scan_solve(s, dist, k, z, deadline);
    REQUIRE(got.horizon == want.horizon);
    REQUIRE(got.t == want.t);
  }
}

TEST_CASE("worked dispatch decision: deficit floor and eta agree on k = 2") {
  // Z=3 is infeasible for k<=1 (E caps at 2.55), so t0 pins to the horizon.
  // t2 = 550 (theta 225), t3 = 450 (theta ~183.3); eta = 200 keeps k=2 and
  // the smallest feasible k is also 2.
  TaskState s = worked_state();
  Ecdf dist = quad_dist();
  DispatchDecision d = choose_k(s, dist, 3, 1000, 200.0, 3);
  CHECK(d.t0.horizon);
  CHECK(d.t0.t == 1000);
  REQUIRE(d.candidates.size() == 3);
  CHECK(d.candidates[0].k == 1);
  CHECK(d.candidates[0].t_k.horizon);
  CHECK(d.candidates[1].t_k.t == 550);
  CHECK(d.candidates[1].theta == doctest::Approx(225.0));
  CHECK(d.candidates[2].t_k.t == 450);
  CHECK(d.candidates[2].theta == doctest::Approx(183.333333).epsilon(1e-6));
  CHECK(d.k == 2);
  CHECK(d.reason == DispatchReason::EtaRule);  // best_eta == k_floor: eta wins ties

  // With eta above every theta the deficit floor alone forces k = 2.
  DispatchDecision floor_only = choose_k(s, dist, 3, 1000, 500.0, 3);
  CHECK(floor_only.k == 2);
  CHECK(floor_only.reason == DispatchReason::DeficitFloor);

  // Feasible target and eta too expensive -> no extra devices.
  DispatchDecision none = choose_k(s, dist, 2, 1000, 100000.0, 3);
  CHECK(none.k == 0);
  CHECK(none.reason == DispatchReason::None);
}

TEST_CASE("early exit never changes the decision: 400 random states vs full scan") {
  Rng rng(417);
  const double etas[] = {0.0, 10.0, 50.0, 200.0, 1000.0};
  for (int i = 0; i < 400; i++) {
    TaskState s = random_state(rng);
    Ecdf dist = random_dist(rng);
    int z = 1 + static_cast<int>(rng.below(6));
    Ms deadline = s.now + rng.uniform_int(50, 2500);
    double eta = etas[rng.below(5)];
    int k_max = static_cast<int>(rng.below(9));
    DispatchDecision got = choose_k(s, dist, z, deadline, eta, k_max);
    auto [want_k, want_reason] = scan_choose_k(s, dist, z, deadline, eta, k_max);
    REQUIRE(got.k == want_k);
    REQUIRE(got.reason == want_reason);
    // every candidate the truncated scan did produce matches the oracle
    for (const auto& c : got.candidates) {
      FinishTime tk = scan_solve(s, dist, c.k, z, deadline);
      REQUIRE(c.t_k.t == tk.t);
      REQUIRE(c.t_k.horizon == tk.horizon);
    }
  }
}

TEST_CASE("expected count is monotone in t_fut and in k") {
  Rng rng(515);
  for (int i = 0; i < 100; i++) {
    TaskState s = random_state(rng);
    Ecdf dist = random_dist(rng);
    Ms t1 = s.now + rng.uniform_int(0, 1500);
    Ms t2 = t1 + rng.uniform_int(0, 1500);
    CHECK(expected_results(s, dist, t2, 2) >= expected_results(s, dist, t1, 2));
    CHECK(expected_results(s, dist, t1, 3) >= expected_results(s, dist, t1, 2));
  }
}

TEST_CASE("one-shot redundancy count rounds up but never off a one-ulp excess") {
  CHECK(once_initial_count(100, 0.2) == 120);
  CHECK(once_initial_count(100, 0.1) == 110);
  CHECK(once_initial_count(50, 0.0) == 50);
  CHECK(once_initial_count(1, 0.1) == 2);    // 1.1 -> 2
  CHECK(once_initial_count(3, 0.05) == 4);   // 3.15 -> 4
  CHECK(once_initial_count(10, 0.25) == 13); // 12.5 -> 13
}

TEST_CASE("gap-filling round count") {
  TaskState s;
  s.target = 5;
  s.now = 100;
  s.ledger = {entry(0, TaskOutcome::Ok), entry(0, TaskOutcome::Ok),
              entry(0, TaskOutcome::Pending), entry(0, TaskOutcome::Error)};
  // 5 - 2 ok - 1 pending = 2  (the error slot gets refilled)
  CHECK(incre_round_count(s, 5) == 2);
  s.ledger.push_back(entry(50, TaskOutcome::Pending));
  s.ledger.push_back(entry(50, TaskOutcome::Pending));
  s.ledger.push_back(entry(50, TaskOutcome::Pending));
  CHECK(incre_round_count(s, 5) == 0);  // clamped, never negative
}

TEST_CASE("first planning round dispatches the plain target (or the padded one-shot)") {
  TaskState s;
  s.target = 50;
  s.now = 0;
  Ecdf dist = quad_dist();
  for (Policy p : {Policy::Deck, Policy::Incre}) {
    TickPlan plan = plan_tick(s, dist, 50, 100000, 50.0, 50, p, 0.1);
    CHECK(plan.first_round);
    CHECK(plan.dispatch == 50);
    CHECK(!plan.complete);
  }
  TickPlan once = plan_tick(s, dist, 50, 100000, 50.0, 50, Policy::Once, 0.1);
  CHECK(once.first_round);
  CHECK(once.dispatch == 55);
}

TEST_CASE("later rounds follow the policy rule") {
  TaskState s = worked_state();  // 1 ok, 1 pending
  Ecdf dist = quad_dist();

  // Deck defers to the decision procedure.
  TickPlan deck = plan_tick(s, dist, 3, 1000, 200.0, 3, Policy::Deck, 0.1);
  CHECK(!deck.first_round);
  CHECK(deck.dispatch == 2);
  CHECK(deck.decision.k == 2);
  CHECK(deck.decision.reason == DispatchReason::EtaRule);

  // Once never dispatches again.
  TickPlan once = plan_tick(s, dist, 3, 1000, 200.0, 3, Policy::Once, 0.1);
  CHECK(once.dispatch == 0);

  // Incre fills the gap: 3 - 1 ok - 1 pending = 1.
  TickPlan incre = plan_tick(s, dist, 3, 1000, 200.0, 3, Policy::Incre, 0.1);
  CHECK(incre.dispatch == 1);

  // Target met -> complete, no dispatch, for every policy.
  TaskState done;
  done.target = 1;
  done.now = 500;
  done.ledger = {entry(0, TaskOutcome::Ok)};
  for (Policy p : {Policy::Deck, Policy::Once, Policy::Incre}) {
    TickPlan plan = plan_tick(done, dist, 1, 1000, 50.0, 5, p, 0.1);
    CHECK(plan.complete);
    CHECK(plan.dispatch == 0);
  }
}

TEST_CASE("policy and reason names round-trip") {
  CHECK(policy_from_name("deck") == Policy::Deck);
  CHECK(policy_from_name("once") == Policy::Once);
  CHECK(policy_from_name("incre") == Policy::Incre);
  CHECK_THROWS_AS(policy_from_name("eager"), Error);
  CHECK(std::string(policy_name(Policy::Deck)) == "deck");
  CHECK(std::string(reason_name(DispatchReason::None)) == "none");
  CHECK(std::string(reason_name(DispatchReason::EtaRule)) == "eta_rule");
  CHECK(std::string(reason_name(DispatchReason::DeficitFloor)) == "deficit_floor");
  CHECK(std::string(outcome_name(TaskOutcome::TimedOut)) == "timed_out");
}
