#pragma once
// Mergeable aggregation partials.
//
// Every aggregate the system releases is the fold of per-device partials
// under an associative, commutative merge with an identity, so arrival order
// and grouping never change the result. Raw rows never appear here.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fq/value.hpp"

namespace fq {

enum class AggKind { Count, Sum, Mean, Min, Max, GroupBy, FedAvg };

const char* agg_kind_name(AggKind k);
AggKind agg_kind_from_name(const std::string& s);

// One scalar combiner. `int_domain` tracks whether sum/min/max run over an
// int column (kept exact, overflow-checked) or a float column.
struct ScalarPartial {
  AggKind kind = AggKind::Count;
  bool int_domain = false;
  std::int64_t n = 0;        // count; mean denominator
  std::int64_t i_acc = 0;    // int sum
  double f_acc = 0.0;        // float sum; mean numerator
  bool has_extreme = false;  // min/max: any row folded yet
  Value extreme;
};

struct Partial {
  AggKind kind = AggKind::Count;
  ScalarPartial scalar;                         // Count..Max
  AggKind group_inner = AggKind::Count;         // GroupBy
  std::map<std::string, ScalarPartial> groups;  // GroupBy, canonical string keys
  double wsum = 0.0;                            // FedAvg: sum of weights
  std::vector<double> wmodel;                   // FedAvg: sum of weight*model
};

Partial identity_partial(AggKind kind, bool int_domain, AggKind group_inner,
                         bool group_inner_int, size_t fedavg_dim);

// Associative + commutative; identity_partial is the unit. Throws
// Error{MergeMismatch|Overflow} on incompatible shapes or int overflow.
Partial merge(const Partial& a, const Partial& b);

// Finalized result rendered as structured text:
//   count/sum -> number; mean/min/max -> number or null when no rows fed in;
//   groupby -> object key -> finalized inner; fedavg -> array of floats.
std::string finalize_text(const Partial& p);

// One federated averaging round: weighted mean of member models,
// weight = sample count. Equals merge-then-finalize of FedAvg partials.
std::vector<double> fl_round(const std::vector<std::pair<double, std::vector<double>>>& members);

// Wire form (canonical structured text), round-trip exact for int domains.
std::string partial_to_text(const Partial& p);
Partial partial_from_text(const std::string& text);

}  // namespace fq
