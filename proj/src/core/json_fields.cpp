#include "selfcon/core/json_fields.hpp"

#include <algorithm>

#include "selfcon/core/error.hpp"

namespace selfcon {

JsonFields::JsonFields(const nlohmann::json& object, std::string path) : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) fail(ErrorKind::kValidation, path_ + ": expected an object");
}

void JsonFields::allow_only(std::initializer_list<std::string_view> allowed) const {
  for (const auto& [key, value] : object_.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorKind::kValidation, "unknown key '" + path(key) + "'");
    }
  }
}

bool JsonFields::has(std::string_view key) const { return object_.contains(std::string(key)); }

const nlohmann::json& JsonFields::at(std::string_view key) const {
  if (!has(key)) fail(ErrorKind::kValidation, "missing key '" + path(key) + "'");
  return object_.at(std::string(key));
}

std::string JsonFields::path(std::string_view key) const {
  return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
}

JsonFields JsonFields::child(std::string_view key) const { return JsonFields(at(key), path(key)); }

void JsonFields::bad_type(std::string_view key) const {
  fail(ErrorKind::kValidation, "wrong type for '" + path(key) + "'");
}

nlohmann::json parse_json(std::string_view text, std::string_view what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, std::string(what) + ": " + e.what());
  }
}

}  // namespace selfcon
