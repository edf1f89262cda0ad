#include "fq/privacy.hpp"

#include <algorithm>

#include "json.hpp"

namespace fq {

using nlohmann::json;

const char* violation_name(int code) {
  switch (code) {
    case V_DATASET_UNDECLARED: return "DATASET_UNDECLARED";
    case V_DATASET_UNGRANTED: return "DATASET_UNGRANTED";
    case V_RESTRICTED_BUILTIN: return "RESTRICTED_BUILTIN";
    case V_MISSING_AGGREGATION: return "MISSING_AGGREGATION";
    case V_MIN_DEVICES: return "MIN_DEVICES";
    case V_RUNTIME_DATASET_VIOLATION: return "RUNTIME_DATASET_VIOLATION";
    case V_RUNTIME_DYNCALL_VIOLATION: return "RUNTIME_DYNCALL_VIOLATION";
  }
  return "UNKNOWN";
}

std::string Verdict::to_text() const {
  json vs = json::array();
  for (auto& v : violations)
    vs.push_back({{"code", v.code},
                  {"name", violation_name(v.code)},
                  {"detail", v.detail},
                  {"path", v.path}});
  return json{{"pass", pass}, {"violations", vs}}.dump();
}

Verdict verdict_from_text(const std::string& text) {
  json j = json::parse(text);
  Verdict v;
  v.pass = j.at("pass").get<bool>();
  for (auto& e : j.at("violations"))
    v.violations.push_back({e.at("code").get<int>(), e.at("detail").get<std::string>(),
                            e.at("path").get<std::string>()});
  return v;
}

// Collects expression roots in pipeline document order.
static void each_expr(const Pipeline& p,
                      const std::function<void(const Expr&)>& fn) {
  if (p.source.kind == DatasetRef::Kind::Computed && p.source.name_expr)
    walk_expr(*p.source.name_expr, fn);
  for (auto& s : p.stages)
    if (s.expr) walk_expr(*s.expr, fn);
  if (p.local_agg.key) walk_expr(*p.local_agg.key, fn);
  if (p.local_agg.target) walk_expr(*p.local_agg.target, fn);
}

Verdict static_check(const Pipeline& p, const std::vector<std::string>& declared,
                     const GrantSet& grants, int target_devices,
                     const PrivacyConfig& cfg) {
  Verdict out;

  // (a) every declared dataset is covered by a grant
  for (auto& d : declared)
    if (!grants.datasets.count(d))
      out.violations.push_back({V_DATASET_UNGRANTED, "dataset '" + d + "' not granted", ""});

  // (b) literal source reference appears in the declaration list
  if (p.source.kind == DatasetRef::Kind::Literal) {
    if (std::find(declared.begin(), declared.end(), p.source.name) == declared.end())
      out.violations.push_back({V_DATASET_UNDECLARED,
                                "dataset '" + p.source.name + "' not declared", "source"});
  }

  // (c) statically visible restricted builtins require grants
  each_expr(p, [&](const Expr& e) {
    if (e.kind == ExprKind::Call && is_restricted_builtin(e.name) &&
        !grants.restricted.count(e.name))
      out.violations.push_back({V_RESTRICTED_BUILTIN,
                                "restricted builtin '" + e.name + "' not granted", e.path});
  });

  // (d) a registered cross-device aggregate must be present and must accept
  //     the local partial shape
  if (!p.has_final_agg || p.final_agg != p.local_agg.kind)
    out.violations.push_back({V_MISSING_AGGREGATION,
                              "query releases nothing without a matching registered aggregate",
                              "final_agg"});

  // (e) k-anonymity floor on the device target
  if (target_devices < cfg.min_devices)
    out.violations.push_back({V_MIN_DEVICES,
                              "target of " + std::to_string(target_devices) +
                                  " is below the floor of " + std::to_string(cfg.min_devices),
                              ""});

  out.pass = out.violations.empty();
  return out;
}

static void wrap_dyncalls(ExprPtr& e, InstrumentationReport* report) {
  for (auto& a : e->args) wrap_dyncalls(a, report);
  if (e->kind == ExprKind::Call && e->name == "dyncall") {
    if (report) report->guard_paths.push_back(e->path);
    auto guard = std::make_unique<Expr>();
    guard->kind = ExprKind::DynCheck;
    guard->path = e->path;
    guard->args.push_back(std::move(e));
    e = std::move(guard);
  }
}

Pipeline inject_runtime_checks(const Pipeline& p, InstrumentationReport* report) {
  Pipeline out = p.clone();
  if (out.source.kind == DatasetRef::Kind::Computed) {
    out.source.guarded = true;
    if (report) report->source_guarded = true;
    wrap_dyncalls(out.source.name_expr, report);
  }
  for (auto& s : out.stages)
    if (s.expr) wrap_dyncalls(s.expr, report);
  if (out.local_agg.key) wrap_dyncalls(out.local_agg.key, report);
  if (out.local_agg.target) wrap_dyncalls(out.local_agg.target, report);
  return out;
}

void EnforcingInspector::check_dataset(const std::string& name) {
  trace_.push_back({Access::Kind::Dataset, name});
  if (!declared_.count(name))
    throw ViolationAbort{V_RUNTIME_DATASET_VIOLATION,
                         "dataset '" + name + "' resolved outside the declared set"};
}

void EnforcingInspector::check_dyncall(const std::string& name) {
  trace_.push_back({Access::Kind::Dyncall, name});
  if (blacklist_.count(name))
    throw ViolationAbort{V_RUNTIME_DYNCALL_VIOLATION,
                         "dyncall resolved to blacklisted '" + name + "'"};
  if (is_restricted_builtin(name) && !restricted_grants_.count(name))
    throw ViolationAbort{V_RUNTIME_DYNCALL_VIOLATION,
                         "dyncall resolved to ungranted restricted '" + name + "'"};
}

}  // namespace fq
