#include "fq/sched.hpp"

#include <algorithm>
#include <cmath>

namespace fq {

const char* outcome_name(TaskOutcome o) {
  switch (o) {
    case TaskOutcome::Pending: return "pending";
    case TaskOutcome::Ok: return "ok";
    case TaskOutcome::Violation: return "violation";
    case TaskOutcome::Error: return "error";
    case TaskOutcome::TimedOut: return "timed_out";
    case TaskOutcome::Canceled: return "canceled";
  }
  return "?";
}

int TaskState::returned_ok() const {
  int n = 0;
  for (const auto& e : ledger)
    if (e.outcome == TaskOutcome::Ok) ++n;
  return n;
}

int TaskState::responses() const {
  int n = 0;
  for (const auto& e : ledger)
    if (e.outcome == TaskOutcome::Ok || e.outcome == TaskOutcome::Violation ||
        e.outcome == TaskOutcome::Error)
      ++n;
  return n;
}

int TaskState::pending_count() const {
  int n = 0;
  for (const auto& e : ledger)
    if (e.outcome == TaskOutcome::Pending) ++n;
  return n;
}

std::vector<Ms> TaskState::pending_times() const {
  std::vector<Ms> out;
  for (const auto& e : ledger)
    if (e.outcome == TaskOutcome::Pending) out.push_back(e.dispatched_at);
  return out;
}

void TaskState::expire_pending(Ms timeout_ms) {
  for (auto& e : ledger)
    if (e.outcome == TaskOutcome::Pending && now - e.dispatched_at > timeout_ms)
      e.outcome = TaskOutcome::TimedOut;
}

double expected_results(const TaskState& s, const Ecdf& dist, Ms t_fut, int k) {
  double e = static_cast<double>(s.returned_ok());
  for (const auto& entry : s.ledger) {
    if (entry.outcome != TaskOutcome::Pending) continue;
    e += conditional_return_prob(dist, s.now, t_fut, entry.dispatched_at);
  }
  e += static_cast<double>(k) * dist.cdf(t_fut - s.now);
  return e;
}

FinishTime solve_finish_time(const TaskState& s, const Ecdf& dist, int k, int z,
                             Ms deadline) {
  int ok = s.returned_ok();
  if (ok >= z) return {false, s.now};
  // Hoist the ledger scan out of the search loop: the expectation at any
  // candidate time only needs the Ok count and the pending dispatch times.
  std::vector<Ms> pending = s.pending_times();
  auto expect = [&](Ms t_fut) {
    double e = static_cast<double>(ok);
    for (Ms t_d : pending) e += conditional_return_prob(dist, s.now, t_fut, t_d);
    e += static_cast<double>(k) * dist.cdf(t_fut - s.now);
    return e;
  };
  double target = static_cast<double>(z);
  if (expect(deadline) < target) return {true, deadline};
  Ms lo = s.now + 1, hi = deadline;
  while (lo < hi) {
    Ms mid = lo + (hi - lo) / 2;
    if (expect(mid) >= target)
      hi = mid;
    else
      lo = mid + 1;
  }
  return {false, lo};
}

const char* reason_name(DispatchReason r) {
  switch (r) {
    case DispatchReason::None: return "none";
    case DispatchReason::EtaRule: return "eta_rule";
    case DispatchReason::DeficitFloor: return "deficit_floor";
  }
  return "?";
}

DispatchDecision choose_k(const TaskState& s, const Ecdf& dist, int z, Ms deadline,
                          double eta, int k_max) {
  DispatchDecision d;
  d.t0 = solve_finish_time(s, dist, 0, z, deadline);
  double t0 = static_cast<double>(d.t0.t);  // horizon already pins t0 to the deadline
  int best_eta = 0;
  int k_floor = 0;
  for (int k = 1; k <= k_max; ++k) {
    KCandidate c;
    c.k = k;
    c.t_k = solve_finish_time(s, dist, k, z, deadline);
    c.theta = (t0 - static_cast<double>(c.t_k.t)) / static_cast<double>(k);
    if (c.theta >= eta) best_eta = k;
    if (d.t0.horizon && !c.t_k.horizon && k_floor == 0) k_floor = k;
    d.candidates.push_back(c);
    // Early exit that cannot change the decision: every later candidate k'
    // has t_k' > now, so theta_k' < (t0 - now - 1) / k', a bound that only
    // shrinks as k' grows. Once it falls below eta no later k can win the
    // per-device-value rule, and if the deficit floor is settled (no horizon
    // gap, or its smallest fix already found) the remaining scan is moot.
    bool floor_settled = !d.t0.horizon || k_floor > 0;
    if (eta > 0 && floor_settled &&
        (t0 - static_cast<double>(s.now + 1)) / static_cast<double>(k + 1) < eta)
      break;
  }
  d.k = std::max(best_eta, k_floor);
  if (d.k == 0)
    d.reason = DispatchReason::None;
  else if (best_eta >= k_floor)
    d.reason = DispatchReason::EtaRule;
  else
    d.reason = DispatchReason::DeficitFloor;
  return d;
}

Policy policy_from_name(const std::string& name) {
  if (name == "deck") return Policy::Deck;
  if (name == "once") return Policy::Once;
  if (name == "incre") return Policy::Incre;
  throw Error("BadPolicy", "unknown policy: " + name);
}

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::Deck: return "deck";
    case Policy::Once: return "once";
    case Policy::Incre: return "incre";
  }
  return "?";
}

int once_initial_count(int z, double redundancy) {
  // Epsilon guard so exact products like 100 * 1.2 do not round up an extra
  // device off a one-ulp excess.
  return static_cast<int>(std::ceil(static_cast<double>(z) * (1.0 + redundancy) - 1e-9));
}

int incre_round_count(const TaskState& s, int z) {
  int gap = z - s.returned_ok() - s.pending_count();
  return gap > 0 ? gap : 0;
}

TickPlan plan_tick(const TaskState& s, const Ecdf& dist, int z, Ms deadline,
                   double eta, int k_max, Policy policy, double once_redundancy) {
  TickPlan plan;
  if (s.returned_ok() >= z) {
    plan.complete = true;
    return plan;
  }
  if (s.ledger.empty()) {
    plan.first_round = true;
    plan.dispatch = policy == Policy::Once ? once_initial_count(z, once_redundancy) : z;
    return plan;
  }
  switch (policy) {
    case Policy::Deck:
      plan.decision = choose_k(s, dist, z, deadline, eta, k_max);
      plan.dispatch = plan.decision.k;
      break;
    case Policy::Once:
      plan.dispatch = 0;
      break;
    case Policy::Incre:
      plan.dispatch = incre_round_count(s, z);
      break;
  }
  return plan;
}

}  // namespace fq
