#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cascade/flatfn.hpp"
#include "cascade/json_io.hpp"

namespace cascade {

/// Finitely supported map from Fourier mode n to its coefficient trajectory.
/// Zero entries are never stored.
class ModeFn {
 public:
  ModeFn() = default;
  explicit ModeFn(std::string note) : note_(std::move(note)) {}

  /// Stores f at mode n, or erases the entry when f is zero.
  void set(std::int64_t n, FlatFn f);
  void add(std::int64_t n, const FlatFn& f);
  /// Entry at n, or the zero function.
  const FlatFn& at(std::int64_t n) const;
  bool contains(std::int64_t n) const { return entries_.count(n) != 0; }

  const std::map<std::int64_t, FlatFn>& entries() const noexcept { return entries_; }
  std::vector<std::int64_t> support() const;
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  /// max |n| over the support (0 when empty).
  std::int64_t radius() const;

  const std::string& note() const noexcept { return note_; }
  void set_note(std::string note) { note_ = std::move(note); }

  friend ModeFn operator+(const ModeFn& a, const ModeFn& b);
  friend ModeFn operator-(const ModeFn& a, const ModeFn& b);
  ModeFn scaled(Complex c) const;
  /// Entries compare; notes are ignored.
  friend bool operator==(const ModeFn& a, const ModeFn& b) { return a.entries_ == b.entries_; }

 private:
  std::map<std::int64_t, FlatFn> entries_;
  std::string note_;
};

enum class Variant { cubic_modified, quad_square, quad_conj_square, quad_modulus_centered };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);
inline bool is_quadratic(Variant v) { return v != Variant::cubic_modified; }

struct NonlinearitySpec {
  double omega = 1.0;
  Variant variant = Variant::cubic_modified;

  /// Throws ValidationError when omega is zero or not finite.
  void validate() const;
};

struct NormSpace {
  enum class Kind { l2s, lp };
  enum class Time { C0, Cminus1 };

  Kind kind = Kind::l2s;
  double param = -1.0;  // s for l2s, p for lp
  Time time = Time::C0;

  static NormSpace l2s(double s, Time time = Time::C0) { return {Kind::l2s, s, time}; }
  static NormSpace lp(double p, Time time = Time::C0) { return {Kind::lp, p, time}; }
  NormSpace with_time(Time t) const { return {kind, param, t}; }

  /// Spatial norm of per-mode magnitudes.
  double combine(const std::vector<std::int64_t>& modes, const std::vector<double>& mags) const;
  void validate() const;
  std::string describe() const;
};

/// n^2 - j^2 + k^2 - l^2; throws std::overflow_error if it does not fit 64 bits.
std::int64_t sigma(std::int64_t j, std::int64_t k, std::int64_t l, std::int64_t n);

/// i*omega * sum over j-k+l = n, j != n, l != n of y_j conj(y_k) y_l e^{i sigma t}.
ModeFn n_main(const ModeFn& y, const NonlinearitySpec& spec);
/// -i*omega |y_n|^2 y_n.
ModeFn n_diag(const ModeFn& y, const NonlinearitySpec& spec);
/// Quadratic nonlinearities in y-variables. Throws VariantMismatch for the cubic spec.
ModeFn q_nonlinearity(const ModeFn& y, const NonlinearitySpec& spec);
/// Full nonlinearity of the variant: n_main + n_diag, or q_nonlinearity.
ModeFn nonlinearity(const ModeFn& y, const NonlinearitySpec& spec);
/// dx/dt - nonlinearity(x).
ModeFn residual(const ModeFn& x, const NonlinearitySpec& spec);
ModeFn derivative(const ModeFn& x);

CertifiedValue norm(const ModeFn& v, const NormSpace& space, const Resolution& res = {},
                    const QuadratureOptions& quad = {});

enum class Direction { to_u, to_y };
/// y_n = e^{i n^2 t} u_n: to_u shifts theta by -n^2, to_y by +n^2.
ModeFn u_side(const ModeFn& v, Direction direction);

/// Copy of v with every entry sampled at t.
std::map<std::int64_t, Complex> eval(const ModeFn& v, double t);

Json to_json(const ModeFn& v);
ModeFn modefn_from_json(const Json& j, const std::string& path = "");
std::string serialize(const ModeFn& v);
ModeFn parse_modefn(const std::string& text);

/// Rows t, mode, abs_value over the sample grid.
std::string norms_csv(const ModeFn& v, const std::vector<double>& ts);

}  // namespace cascade
