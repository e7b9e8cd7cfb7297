#pragma once

namespace curlyfm {

/// Forward-mode scalar: a value paired with its derivative along one direction.
struct DualScalar {
  double value = 0.0;
  double tangent = 0.0;

  constexpr DualScalar() = default;
  constexpr DualScalar(double v, double t = 0.0) : value(v), tangent(t) {}

  constexpr DualScalar& operator+=(const DualScalar& o) {
    value += o.value;
    tangent += o.tangent;
    return *this;
  }
};

constexpr DualScalar operator+(DualScalar a, DualScalar b) { return {a.value + b.value, a.tangent + b.tangent}; }
constexpr DualScalar operator-(DualScalar a, DualScalar b) { return {a.value - b.value, a.tangent - b.tangent}; }
constexpr DualScalar operator*(DualScalar a, DualScalar b) {
  return {a.value * b.value, a.value * b.tangent + a.tangent * b.value};
}
constexpr DualScalar operator-(DualScalar a) { return {-a.value, -a.tangent}; }

}  // namespace curlyfm
