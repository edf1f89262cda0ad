#include "fq/lru.hpp"

namespace fq {

const std::string* ArtifactCache::get(const std::string& hash) {
  auto it = index_.find(hash);
  if (it == index_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second);
  return &it->second->second;
}

bool ArtifactCache::put(const std::string& hash, std::string bytes) {
  if (bytes.size() > cap_) return false;
  auto it = index_.find(hash);
  if (it != index_.end()) {
    used_ -= it->second->second.size();
    used_ += bytes.size();
    it->second->second = std::move(bytes);
    order_.splice(order_.begin(), order_, it->second);
  } else {
    order_.emplace_front(hash, std::move(bytes));
    index_[hash] = order_.begin();
    used_ += order_.front().second.size();
  }
  while (used_ > cap_) {
    Entry& victim = order_.back();
    used_ -= victim.second.size();
    index_.erase(victim.first);
    order_.pop_back();
  }
  return true;
}

std::vector<std::string> ArtifactCache::hashes_lru_first() const {
  std::vector<std::string> out;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) out.push_back(it->first);
  return out;
}

}  // namespace fq
