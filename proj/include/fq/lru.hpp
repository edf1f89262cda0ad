#pragma once
// Content-addressed artifact cache with byte-budget LRU eviction.
// Devices keep fetched artifacts under a fixed budget (20MB by default);
// an artifact larger than the whole budget is used but never cached.

#include <cstddef>
#include <list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fq {

class ArtifactCache {
public:
  explicit ArtifactCache(std::size_t capacity_bytes = 20u * 1024u * 1024u)
      : cap_(capacity_bytes) {}

  // Peek without touching recency.
  bool contains(const std::string& hash) const { return index_.count(hash) > 0; }

  // nullptr when absent; a hit marks the entry most-recently-used.
  const std::string* get(const std::string& hash);

  // Evicts least-recently-used entries until the new entry fits.
  // Returns false (and stores nothing) when the entry alone exceeds capacity.
  bool put(const std::string& hash, std::string bytes);

  std::size_t size_bytes() const { return used_; }
  std::size_t count() const { return order_.size(); }
  std::size_t capacity() const { return cap_; }

  // Hashes ordered least- to most-recently-used (eviction order).
  std::vector<std::string> hashes_lru_first() const;

private:
  using Entry = std::pair<std::string, std::string>;  // hash, bytes
  std::size_t cap_;
  std::size_t used_ = 0;
  std::list<Entry> order_;  // front = most recently used
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

}  // namespace fq
