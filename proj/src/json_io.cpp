#include "cascade/json_io.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

namespace json_field {

const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError("expected an object", 0, path);
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", 0, path);
  return *it;
}

std::int64_t as_int(const Json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u <= static_cast<std::uint64_t>(INT64_MAX)) return static_cast<std::int64_t>(u);
  }
  throw ParseError("expected a 64-bit integer", 0, path);
}

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError("expected a number", 0, path);
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError("expected a finite number", 0, path);
  return d;
}

const std::string& as_string(const Json& v, const std::string& path) {
  if (!v.is_string()) throw ParseError("expected a string", 0, path);
  return v.get_ref<const std::string&>();
}

}  // namespace json_field

Json to_json(const FlatFn& f) {
  Json terms = Json::array();
  for (const auto& t : f.terms()) {
    Json j;
    j["re"] = t.coeff.real();
    j["im"] = t.coeff.imag();
    j["p"] = t.t_pow;
    j["k_num"] = t.flat_rate.num();
    j["k_den"] = t.flat_rate.den();
    j["theta"] = t.osc;
    terms.push_back(std::move(j));
  }
  Json out;
  out["terms"] = std::move(terms);
  return out;
}

FlatFn flatfn_from_json(const Json& j, const std::string& path) {
  using namespace json_field;
  const Json& terms = require(j, "terms", path);
  if (!terms.is_array()) throw ParseError("'terms' must be an array", 0, path + "/terms");
  std::vector<FlatTerm> out;
  out.reserve(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string tp = path + "/terms/" + std::to_string(i);
    const Json& t = terms[i];
    FlatTerm term;
    term.coeff = {as_number(require(t, "re", tp), tp + "/re"), as_number(require(t, "im", tp), tp + "/im")};
    const std::int64_t p = as_int(require(t, "p", tp), tp + "/p");
    if (p < INT32_MIN || p > INT32_MAX) throw ParseError("t exponent out of range", 0, tp + "/p");
    term.t_pow = static_cast<int>(p);
    const std::int64_t num = as_int(require(t, "k_num", tp), tp + "/k_num");
    const std::int64_t den = as_int(require(t, "k_den", tp), tp + "/k_den");
    if (den <= 0) throw ParseError("k_den must be positive", 0, tp + "/k_den");
    if (std::gcd(num, den) != 1) throw ParseError("flat rate must be a reduced fraction", 0, tp + "/k_num");
    if (num < 0) throw ParseError("flat rate must be nonnegative", 0, tp + "/k_num");
    term.flat_rate = Rational(num, den);
    term.osc = as_int(require(t, "theta", tp), tp + "/theta");
    if (term.flat_rate.is_zero() && term.t_pow < 0)
      throw ParseError("term without flat factor needs p >= 0", 0, tp + "/p");
    out.push_back(term);
  }
  try {
    return FlatFn(std::move(out));
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), 0, path);
  }
}

Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << contents;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw ValidationError("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path);
}

std::string serialize(const FlatFn& f) { return to_json(f).dump(); }

FlatFn parse_flatfn(const std::string& text) { return flatfn_from_json(parse_json_text(text)); }

}  // namespace cascade
