#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace coconolab {

// Square r×r map stored row-major; (k, l) is (row, column).
struct Grid {
  std::size_t r = 0;
  std::vector<double> v;

  Grid() = default;
  explicit Grid(std::size_t res, double fill = 0.0) : r(res), v(res * res, fill) {}

  std::size_t cells() const noexcept { return v.size(); }
  double& operator()(std::size_t k, std::size_t l) { return v[k * r + l]; }
  double operator()(std::size_t k, std::size_t l) const { return v[k * r + l]; }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  double sum() const noexcept {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  double max() const noexcept;
  double min() const noexcept;

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct Mask {
  std::size_t r = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  explicit Mask(std::size_t res) : r(res), v(res * res, 0) {}

  std::size_t cells() const noexcept { return v.size(); }
  std::uint8_t& operator[](std::size_t i) { return v[i]; }
  std::uint8_t operator[](std::size_t i) const { return v[i]; }
  std::size_t area() const noexcept {
    std::size_t a = 0;
    for (auto x : v) a += x ? 1 : 0;
    return a;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline double Grid::max() const noexcept {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = x > m ? x : m;
  return m;
}

inline double Grid::min() const noexcept {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = x < m ? x : m;
  return m;
}

}  // namespace coconolab
