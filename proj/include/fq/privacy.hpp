#pragma once
// Hybrid privacy enforcement: a static permission check at submission plus
// injected runtime guards for the two dynamic escape hatches (computed
// dataset names and dyncall). Violation codes are wire-stable integers.

#include <set>
#include <string>
#include <vector>

#include "fq/pipeline.hpp"

namespace fq {

enum ViolationCode : int {
  V_DATASET_UNDECLARED = 1,
  V_DATASET_UNGRANTED = 2,
  V_RESTRICTED_BUILTIN = 3,
  V_MISSING_AGGREGATION = 4,
  V_MIN_DEVICES = 5,
  V_RUNTIME_DATASET_VIOLATION = 6,
  V_RUNTIME_DYNCALL_VIOLATION = 7,
};
const char* violation_name(int code);

struct Violation {
  int code = 0;
  std::string detail;
  std::string path;  // IR location when one applies
};

struct GrantSet {
  std::set<std::string> datasets;
  std::set<std::string> restricted;  // restricted builtins this user may call
};

struct PrivacyConfig {
  std::set<std::string> blacklist;  // names dyncall may never resolve to
  int min_devices = 10;
};

struct Verdict {
  bool pass = true;
  std::vector<Violation> violations;
  std::string to_text() const;  // canonical; equal inputs give equal bytes
};
Verdict verdict_from_text(const std::string& text);

// The static check. Reports every violation found, never just the first:
// declared datasets within grants, literal references within declarations,
// restricted builtins within grants, a registered final aggregate present,
// and the device target meeting the k-anonymity floor.
Verdict static_check(const Pipeline& p, const std::vector<std::string>& declared,
                     const GrantSet& grants, int target_devices,
                     const PrivacyConfig& cfg);

struct InstrumentationReport {
  bool source_guarded = false;
  std::vector<std::string> guard_paths;  // dyncall sites, document order
};

// Rewrites a copy of the pipeline so every dyncall is wrapped in a check node
// and a computed source is flagged as guarded. Literal-only pipelines with no
// dyncalls come back unchanged.
Pipeline inject_runtime_checks(const Pipeline& p, InstrumentationReport* report);

// Device-side enforcement hooks, built from the artifact's embedded policy.
// Records every dataset access and dyncall resolution (the audit trace) and
// throws ViolationAbort on the first denial.
class EnforcingInspector : public RuntimeInspector {
 public:
  EnforcingInspector(std::set<std::string> declared, std::set<std::string> blacklist,
                     std::set<std::string> restricted_grants)
      : declared_(std::move(declared)),
        blacklist_(std::move(blacklist)),
        restricted_grants_(std::move(restricted_grants)) {}

  void check_dataset(const std::string& name) override;
  void check_dyncall(const std::string& name) override;

  struct Access {
    enum class Kind { Dataset, Dyncall } kind;
    std::string name;
  };
  const std::vector<Access>& trace() const { return trace_; }

 private:
  std::set<std::string> declared_;
  std::set<std::string> blacklist_;
  std::set<std::string> restricted_grants_;
  std::vector<Access> trace_;
};

}  // namespace fq
