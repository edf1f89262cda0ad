#pragma once
// Statistical dispatch planning.
//
// The planner is zero-knowledge: decisions read only the query's own ledger
// (who was dispatched when, who answered) and a response-time distribution.
// No per-device attributes exist anywhere in this interface; device identity
// is opaque and selection among candidates is uniform-random at the caller.
//
// Core model, per round at clock t with target Z and deadline H:
//   E(t_fut) = R(t) + sum over pending of conditional_return_prob(...)
//            + k * F(t_fut - t)
// solve_finish_time finds the minimal t_fut in (t, H] with E >= Z (binary
// search; E is nondecreasing and piecewise-constant).  choose_k compares the
// speedup theta_k = (t0 - t_k)/k against the cost knob eta (ms of expected
// delay reduction that justifies one extra device) and takes the largest
// qualifying k; when even k=0 cannot meet Z by H (t0 := H), a deficit floor
// forces the smallest k that restores feasibility, when one exists.

#include <cstdint>
#include <string>
#include <vector>

#include "fq/common.hpp"
#include "fq/ecdf.hpp"

namespace fq {

enum class TaskOutcome { Pending, Ok, Violation, Error, TimedOut, Canceled };

const char* outcome_name(TaskOutcome o);

struct LedgerEntry {
  std::string device;
  Ms dispatched_at = 0;
  TaskOutcome outcome = TaskOutcome::Pending;
  Ms returned_at = -1;
};

// Per-query dispatch ledger plus the query clock.  R(t) counts only Ok
// results: a violation or error response settles its ledger entry (it is no
// longer pending) but contributes nothing toward the target, so the planner
// keeps dispatching until Z usable results exist.
struct TaskState {
  int target = 0;  // Z
  Ms now = 0;
  std::vector<LedgerEntry> ledger;

  int returned_ok() const;
  int responses() const;  // Ok + Violation + Error
  int pending_count() const;
  int dispatched() const { return static_cast<int>(ledger.size()); }
  std::vector<Ms> pending_times() const;  // dispatch timestamps of pending entries

  // Pending entries in flight longer than timeout_ms become TimedOut so
  // permanently lost devices stop inflating the expectation.
  void expire_pending(Ms timeout_ms);
};

double expected_results(const TaskState& s, const Ecdf& dist, Ms t_fut, int k);

struct FinishTime {
  bool horizon = false;  // expectation cannot reach the target by the deadline
  Ms t = 0;              // minimal finish time; equals the deadline when horizon
};

// Minimal t_fut in (state.now, deadline] with expected_results >= z, to 1 ms.
// Returns {horizon=true, t=deadline} when E(deadline) < z, and state.now when
// the target is already met.
FinishTime solve_finish_time(const TaskState& s, const Ecdf& dist, int k, int z,
                             Ms deadline);

struct KCandidate {
  int k = 0;
  FinishTime t_k;
  double theta = 0.0;  // (t0 - t_k)/k
};

enum class DispatchReason { None, EtaRule, DeficitFloor };

const char* reason_name(DispatchReason r);

struct DispatchDecision {
  int k = 0;
  FinishTime t0;
  std::vector<KCandidate> candidates;
  DispatchReason reason = DispatchReason::None;
};

// eta: ms of expected delay reduction required per extra device.
// k_max: largest candidate count considered (callers default it to z).
DispatchDecision choose_k(const TaskState& s, const Ecdf& dist, int z, Ms deadline,
                          double eta, int k_max);

enum class Policy { Deck, Once, Incre };

Policy policy_from_name(const std::string& name);
const char* policy_name(Policy p);

struct TickPlan {
  bool complete = false;
  int dispatch = 0;
  bool first_round = false;
  DispatchDecision decision;  // populated for Policy::Deck after round one
};

// One-shot baseline: ceil(z * (1 + redundancy)) devices in a single round.
int once_initial_count(int z, double redundancy);

// Gap-filling baseline: (z - R(t) - |pending|)+ each round.
int incre_round_count(const TaskState& s, int z);

// Per-round planning for all policies.  Round one always dispatches the
// plain target (Deck/Incre) or the fixed-redundancy count (Once); later
// rounds follow the policy's rule.  The caller clamps to pool availability.
TickPlan plan_tick(const TaskState& s, const Ecdf& dist, int z, Ms deadline,
                   double eta, int k_max, Policy policy, double once_redundancy);

}  // namespace fq
