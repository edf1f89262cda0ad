#pragma once
// User accounts: credentials, dataset/builtin grants, and the per-period
// device quantum that caps how many devices one user may query.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fq/privacy.hpp"

namespace fq {

struct UserAccount {
  std::string user;
  std::string secret;
  GrantSet grants;
  std::int64_t quantum_limit = 0;
  std::int64_t quantum_used = 0;
  Ms period_anchor = 0;  // start of the current period
};

// One policy document carries the dyncall blacklist and per-user entries:
// {"blacklist": [...],
//  "grants": {"<user>": {"secret": ..., "datasets": [...], "restricted": [...],
//             "quantum_limit": N}}}
struct PolicyFile {
  std::set<std::string> blacklist;
  std::map<std::string, UserAccount> users;
};

PolicyFile parse_policy_file(const std::string& text);

class AccountStore {
public:
  // Period length for quantum rollover; a calendar-ish month by default.
  explicit AccountStore(Ms period_ms = 30LL * 24 * 3600 * 1000) : period_ms_(period_ms) {}

  void add(UserAccount a) { users_[a.user] = std::move(a); }
  void load(const PolicyFile& pf) {
    for (const auto& [name, acct] : pf.users) users_[name] = acct;
  }

  // Credential format "user:secret". nullptr on unknown user or bad secret.
  const UserAccount* authenticate(const std::string& credential) const;

  UserAccount* find(const std::string& user);
  const UserAccount* find(const std::string& user) const;

  // Advances the period anchor and zeroes usage when a period has elapsed.
  void maybe_rollover(const std::string& user, Ms now);

  // True iff used + z fits the limit (after rollover).
  bool admits(const std::string& user, int z, Ms now);

  // Record devices actually dispatched.
  void debit(const std::string& user, int devices);

  std::vector<std::string> users() const;

  Ms period_ms() const { return period_ms_; }

private:
  Ms period_ms_;
  std::map<std::string, UserAccount> users_;
};

}  // namespace fq
