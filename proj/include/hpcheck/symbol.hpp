#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

namespace hpcheck {

namespace detail {

// Process-wide name table. Ids are stable for the lifetime of the process.
class SymbolTable {
 public:
  static SymbolTable& instance() {
    static SymbolTable table;
    return table;
  }

  std::uint32_t intern(std::string_view name) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    }
    std::unique_lock lock(mutex_);
    auto [it, inserted] = ids_.try_emplace(std::string(name), static_cast<std::uint32_t>(names_.size()));
    if (inserted) names_.emplace_back(name);
    return it->second;
  }

  const std::string& name(std::uint32_t id) const {
    std::shared_lock lock(mutex_);
    return names_[id];
  }

 private:
  mutable std::shared_mutex mutex_;
  std::deque<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

}  // namespace detail

// Interned variable name.
class Symbol {
 public:
  Symbol() : id_(detail::SymbolTable::instance().intern("")) {}
  explicit Symbol(std::string_view name) : id_(detail::SymbolTable::instance().intern(name)) {}
  Symbol(const char* name) : Symbol(std::string_view(name)) {}

  const std::string& name() const { return detail::SymbolTable::instance().name(id_); }
  std::uint32_t id() const { return id_; }

  friend bool operator==(Symbol a, Symbol b) { return a.id_ == b.id_; }
  // Ordered by name so that sets of symbols iterate deterministically.
  friend std::strong_ordering operator<=>(Symbol a, Symbol b) {
    if (a.id_ == b.id_) return std::strong_ordering::equal;
    return a.name() <=> b.name();
  }

 private:
  std::uint32_t id_;
};

}  // namespace hpcheck

template <>
struct std::hash<hpcheck::Symbol> {
  std::size_t operator()(hpcheck::Symbol s) const noexcept { return s.id(); }
};
