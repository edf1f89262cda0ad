#include "fq/audit.hpp"

#include <cstdio>

#include "json.hpp"

using nlohmann::json;

namespace fq {

std::string audit_record_line(const AuditRecord& r) {
  json j;
  j["at"] = r.at;
  j["code"] = r.code;
  j["detail"] = r.detail;
  j["event"] = r.event;
  j["query"] = r.query;
  j["user"] = r.user;
  return j.dump();
}

void AuditLog::append(AuditRecord r) {
  if (!sink_path_.empty()) {
    if (std::FILE* f = std::fopen(sink_path_.c_str(), "a")) {
      std::string line = audit_record_line(r) + "\n";
      std::fwrite(line.data(), 1, line.size(), f);
      std::fclose(f);
    }
  }
  records_.push_back(std::move(r));
}

std::vector<AuditRecord> AuditLog::for_query(const std::string& query) const {
  std::vector<AuditRecord> out;
  for (const auto& r : records_)
    if (r.query == query) out.push_back(r);
  return out;
}

int AuditLog::count_event(const std::string& event) const {
  int n = 0;
  for (const auto& r : records_)
    if (r.event == event) ++n;
  return n;
}

bool AuditLog::has_event(const std::string& query, const std::string& event) const {
  for (const auto& r : records_)
    if (r.query == query && r.event == event) return true;
  return false;
}

std::string AuditLog::to_lines() const {
  std::string out;
  for (const auto& r : records_) {
    out += audit_record_line(r);
    out += '\n';
  }
  return out;
}

}  // namespace fq
