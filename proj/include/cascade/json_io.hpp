#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cascade/flatfn.hpp"

namespace cascade {

using Json = nlohmann::ordered_json;

Json to_json(const FlatFn& f);
/// `path` is the JSON pointer of `j`, used in ParseError messages.
FlatFn flatfn_from_json(const Json& j, const std::string& path = "");

/// Parses text, turning syntax errors into ParseError with the byte offset.
Json parse_json_text(std::string_view text);
Json read_json_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames, so a failed run never
/// leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Small typed accessors that raise ParseError with the pointer path.
namespace json_field {
const Json& require(const Json& obj, const char* key, const std::string& path);
std::int64_t as_int(const Json& v, const std::string& path);
double as_number(const Json& v, const std::string& path);
const std::string& as_string(const Json& v, const std::string& path);
}  // namespace json_field

}  // namespace cascade
