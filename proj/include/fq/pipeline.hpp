#pragma once
// The declarative query pipeline: what actually ships to devices.
//
// source -> stages (filter | project | map) -> one local aggregate, plus the
// cross-device aggregate the coordinator applies to returned partials. The
// document is canonical structured text; its bytes are what get hashed into
// the artifact identity.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fq/agg.hpp"
#include "fq/expr.hpp"
#include "fq/table.hpp"

namespace fq {

struct DatasetRef {
  enum class Kind { Literal, Computed } kind = Kind::Literal;
  std::string name;    // Literal
  ExprPtr name_expr;   // Computed: string-typed, evaluated on device
  bool guarded = false;  // set by privacy instrumentation on Computed refs

  DatasetRef clone() const;
};

struct Stage {
  enum class Op { Filter, Project, Map } op = Op::Filter;
  ExprPtr expr;                      // Filter predicate / Map value
  std::vector<std::string> columns;  // Project
  std::string column;                // Map target column

  Stage clone() const;
};

struct AggSpec {
  AggKind kind = AggKind::Count;
  ExprPtr target;                  // sum/mean/min/max value, groupby inner value
  ExprPtr key;                     // groupby key (int or string typed)
  AggKind group_inner = AggKind::Count;
  size_t fedavg_dim = 0;

  AggSpec clone() const;
};

struct Pipeline {
  DatasetRef source;
  std::vector<Stage> stages;
  AggSpec local_agg;
  // Absence is representable so the permission check can report it as a
  // violation instead of a parse failure.
  bool has_final_agg = false;
  AggKind final_agg = AggKind::Count;

  Pipeline clone() const;
};

Pipeline parse_pipeline_text(const std::string& json_text);
std::string pipeline_to_text(const Pipeline& p);

// Static validation against the source schema and dispatch parameters.
// Returns the post-stage schema; throws Error on any typing defect, so a
// validated pipeline cannot hit UnknownColumn/TypeMismatch at run time.
Schema validate_pipeline(const Pipeline& p, const Schema& source_schema,
                         const ParamMap& params);

// FedAvg inputs carried in dispatch params rather than the artifact, so one
// cached artifact serves every round of a training campaign.
struct FlParams {
  std::vector<double> model;
  double lr = 0.1;
  int epochs = 1;
};

// Reads fl_model (JSON array text), fl_lr, fl_epochs out of dispatch params;
// absent keys fall back to a zero model of the given dimension, lr 0.1, 1 epoch.
FlParams fl_params_from(const ParamMap& params, size_t dim);

struct ExecLimits {
  size_t groupby_cap = 1024;
};

// Evaluates the source dataset name (literal or computed). When an inspector
// is installed the resolved name is privacy-checked before it is returned.
std::string resolve_source_name(const Pipeline& p, const ParamMap& params,
                                const DeviceEnv* env, RuntimeInspector* inspector);

// Streaming fold over the resolved table. Throws Error for execution faults
// (overflow, division by zero, group cardinality over the cap) and lets
// ViolationAbort from injected checks propagate.
Partial execute_local(const Pipeline& p, const Table& table, const ParamMap& params,
                      const FlParams* fl, const DeviceEnv* env,
                      RuntimeInspector* inspector, const ExecLimits& limits = {});

}  // namespace fq
