#pragma once

#include <set>
#include <string>
#include <utility>

#include <json.hpp>

#include "hiernet/error.hpp"

namespace hiernet {

/// Reads optional fields from a JSON object and rejects keys nobody asked for.
///
///   StrictObject obj(doc, "dataset");
///   obj.read("seed", spec.seed);
///   obj.finish();  // throws ConfigError on unknown keys
class StrictObject {
 public:
  StrictObject(const nlohmann::json& doc, std::string context)
      : doc_(doc), context_(std::move(context)) {
    if (!doc_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <class T>
  bool read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(context_ + "." + key + ": wrong type (" + std::string(it->type_name()) + ")");
    }
    return true;
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.contains(item.key())) {
        throw ConfigError(context_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

  const std::string& context() const noexcept { return context_; }

 private:
  const nlohmann::json& doc_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace hiernet
