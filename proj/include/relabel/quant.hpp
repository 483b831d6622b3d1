#pragma once

// Value formats for stored label-map probabilities: IEEE binary32, IEEE
// binary16, and an 8-bit E4M3 minifloat (bias 7, no infinities, max 448,
// only S.1111.111 is NaN). All encoders round to nearest, ties to even.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "relabel/error.hpp"

namespace relabel {

enum class QuantFormat : std::uint8_t { F32 = 0, F16 = 1, F8 = 2 };

inline constexpr std::size_t bytes_per_value(QuantFormat q) {
  switch (q) {
    case QuantFormat::F32: return 4;
    case QuantFormat::F16: return 2;
    case QuantFormat::F8: return 1;
  }
  return 0;
}

inline std::string_view to_string(QuantFormat q) {
  switch (q) {
    case QuantFormat::F32: return "f32";
    case QuantFormat::F16: return "f16";
    case QuantFormat::F8: return "f8";
  }
  return "?";
}

inline QuantFormat parse_quant(std::string_view s) {
  if (s == "f32") return QuantFormat::F32;
  if (s == "f16") return QuantFormat::F16;
  if (s == "f8") return QuantFormat::F8;
  throw InvalidArgument("unknown value format '" + std::string(s) + "' (expected f32, f16 or f8)");
}

namespace detail {

struct MiniFloatLayout {
  int exponent_bits;
  int mantissa_bits;
  int bias;
  bool has_infinity;   // IEEE-style: all-ones exponent is Inf/NaN
  double max_finite;
  std::uint32_t max_finite_code;  // magnitude bits of max_finite
  std::uint32_t nan_code;
};

inline constexpr MiniFloatLayout kHalf{5, 10, 15, true, 65504.0, 0x7BFF, 0x7E00};
inline constexpr MiniFloatLayout kE4M3{4, 3, 7, false, 448.0, 0x7E, 0x7F};

inline std::uint32_t encode_minifloat(double x, const MiniFloatLayout& f) {
  const int total = f.exponent_bits + f.mantissa_bits;
  const std::uint32_t sign = std::signbit(x) ? (1u << total) : 0u;
  if (std::isnan(x)) return f.nan_code;
  const double a = std::fabs(x);
  const std::uint32_t inf_code = ((1u << f.exponent_bits) - 1u) << f.mantissa_bits;
  if (std::isinf(a)) return sign | (f.has_infinity ? inf_code : f.max_finite_code);
  if (a == 0.0) return sign;

  const int emin = 1 - f.bias;
  int e = 0;
  std::frexp(a, &e);
  int exponent = std::max(e - 1, emin);
  double rounded = std::nearbyint(std::ldexp(a, f.mantissa_bits - exponent));
  rounded = std::ldexp(rounded, exponent - f.mantissa_bits);
  if (rounded > f.max_finite) return sign | (f.has_infinity ? inf_code : f.max_finite_code);
  if (rounded == 0.0) return sign;

  std::frexp(rounded, &e);
  exponent = e - 1;
  std::uint32_t field = 0;
  std::uint32_t mantissa = 0;
  if (exponent < emin) {
    mantissa = static_cast<std::uint32_t>(std::ldexp(rounded, f.mantissa_bits - emin));
  } else {
    field = static_cast<std::uint32_t>(exponent + f.bias);
    mantissa = static_cast<std::uint32_t>(std::ldexp(rounded, f.mantissa_bits - exponent)) -
               (1u << f.mantissa_bits);
  }
  return sign | (field << f.mantissa_bits) | mantissa;
}

inline double decode_minifloat(std::uint32_t code, const MiniFloatLayout& f) {
  const int total = f.exponent_bits + f.mantissa_bits;
  const double sign = ((code >> total) & 1u) ? -1.0 : 1.0;
  const std::uint32_t field = (code >> f.mantissa_bits) & ((1u << f.exponent_bits) - 1u);
  const std::uint32_t mantissa = code & ((1u << f.mantissa_bits) - 1u);
  const std::uint32_t field_max = (1u << f.exponent_bits) - 1u;
  if (f.has_infinity && field == field_max) {
    return mantissa == 0 ? sign * INFINITY : NAN;
  }
  if ((code & ((1u << total) - 1u)) == f.nan_code) return NAN;
  if (field == 0) return sign * std::ldexp(static_cast<double>(mantissa), 1 - f.bias - f.mantissa_bits);
  return sign * std::ldexp(static_cast<double>(mantissa + (1u << f.mantissa_bits)),
                           static_cast<int>(field) - f.bias - f.mantissa_bits);
}

}  // namespace detail

/// Code word for x in format q, right-aligned in 32 bits.
inline std::uint32_t encode_value(double x, QuantFormat q) {
  switch (q) {
    case QuantFormat::F32: return std::bit_cast<std::uint32_t>(static_cast<float>(x));
    case QuantFormat::F16: return detail::encode_minifloat(x, detail::kHalf);
    case QuantFormat::F8: return detail::encode_minifloat(x, detail::kE4M3);
  }
  return 0;
}

inline float decode_value(std::uint32_t code, QuantFormat q) {
  switch (q) {
    case QuantFormat::F32: return std::bit_cast<float>(code);
    case QuantFormat::F16: return static_cast<float>(detail::decode_minifloat(code & 0xFFFFu, detail::kHalf));
    case QuantFormat::F8: return static_cast<float>(detail::decode_minifloat(code & 0xFFu, detail::kE4M3));
  }
  return 0.0f;
}

/// Nearest value representable in q. Every result is exactly representable
/// as a float, so quantize(quantize(x)) == quantize(x).
inline float quantize(double x, QuantFormat q) { return decode_value(encode_value(x, q), q); }

}  // namespace relabel
