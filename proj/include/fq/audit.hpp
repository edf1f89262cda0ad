#pragma once
// Append-only audit log: one line per event, so privacy decisions and
// violations can be verified after the fact.

#include <string>
#include <vector>

#include "fq/common.hpp"

namespace fq {

struct AuditRecord {
  Ms at = 0;
  std::string user;
  std::string query;
  std::string event;  // e.g. submit, reject, verdict_cache_hit, runtime_violation
  int code = 0;       // violation or error code when one applies
  std::string detail;
};

class AuditLog {
public:
  // When set, every record is also appended to this file as it arrives.
  void set_sink(const std::string& path) { sink_path_ = path; }

  void append(AuditRecord r);

  const std::vector<AuditRecord>& records() const { return records_; }
  std::vector<AuditRecord> for_query(const std::string& query) const;
  int count_event(const std::string& event) const;
  bool has_event(const std::string& query, const std::string& event) const;

  // Canonical line-delimited form (one JSON object per line).
  std::string to_lines() const;

private:
  std::vector<AuditRecord> records_;
  std::string sink_path_;
};

std::string audit_record_line(const AuditRecord& r);

}  // namespace fq
