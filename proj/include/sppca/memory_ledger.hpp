#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>

namespace sppca {

/// Internal accounting of the floating-point buffers an algorithm keeps alive
/// between phases. Per-iteration scratch (O((m + n) * b) values inside the
/// block loop) is tracked separately as workspace.
class MemoryLedger {
 public:
  void acquire(const std::string& name, std::size_t floats) {
    release(name);
    live_[name] = floats;
    current_ += floats;
    peak_ = std::max(peak_, current_);
  }

  void release(const std::string& name) {
    auto it = live_.find(name);
    if (it == live_.end()) return;
    current_ -= it->second;
    live_.erase(it);
  }

  void note_workspace(std::size_t floats) { peak_workspace_ = std::max(peak_workspace_, floats); }

  std::size_t current() const noexcept { return current_; }
  std::size_t peak() const noexcept { return peak_; }
  std::size_t peak_workspace() const noexcept { return peak_workspace_; }
  const std::map<std::string, std::size_t>& live() const noexcept { return live_; }

 private:
  std::map<std::string, std::size_t> live_;
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
  std::size_t peak_workspace_ = 0;
};

}  // namespace sppca
