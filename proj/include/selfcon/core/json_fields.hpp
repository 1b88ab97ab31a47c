#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

namespace selfcon {

/// Strict object reading: unknown keys are rejected with the full field path.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& object, std::string path);

  /// Throws kValidation naming the first key not in `allowed`.
  void allow_only(std::initializer_list<std::string_view> allowed) const;
  bool has(std::string_view key) const;
  const nlohmann::json& at(std::string_view key) const;
  std::string path(std::string_view key) const;

  template <typename T>
  void read(std::string_view key, T& out) const {
    if (!has(key)) return;
    try {
      out = at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      bad_type(key);
    }
  }
  JsonFields child(std::string_view key) const;

 private:
  [[noreturn]] void bad_type(std::string_view key) const;
  const nlohmann::json& object_;
  std::string path_;
};

nlohmann::json parse_json(std::string_view text, std::string_view what);

}  // namespace selfcon
