#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Straight nested loops in double precision; they share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

// x [n][ci][t][l], w [co][ci][kt][kl] -> [n][co][to][lo]
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& b, std::size_t n, std::size_t ci, std::size_t t,
                                  std::size_t l, std::size_t co, std::size_t kt, std::size_t kl, std::size_t st,
                                  std::size_t sl, std::size_t pt, std::size_t pl, std::size_t& to_out,
                                  std::size_t& lo_out) {
  const std::size_t to = (t + 2 * pt - kt) / st + 1;
  const std::size_t lo = (l + 2 * pl - kl) / sl + 1;
  to_out = to;
  lo_out = lo;
  std::vector<double> out(n * co * to * lo, 0.0);
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < to; ++y)
        for (std::size_t z = 0; z < lo; ++z) {
          double acc = b.empty() ? 0.0 : b[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t a = 0; a < kt; ++a)
              for (std::size_t q = 0; q < kl; ++q) {
                const long ty = static_cast<long>(y * st + a) - static_cast<long>(pt);
                const long lz = static_cast<long>(z * sl + q) - static_cast<long>(pl);
                if (ty < 0 || lz < 0 || ty >= static_cast<long>(t) || lz >= static_cast<long>(l)) continue;
                acc += x[((in * ci + c) * t + ty) * l + lz] * w[((o * ci + c) * kt + a) * kl + q];
              }
          out[((in * co + o) * to + y) * lo + z] = acc;
        }
  return out;
}

inline std::vector<double> matmul_bias(const std::vector<double>& x, const std::vector<double>& w,
                                       const std::vector<double>& b, std::size_t n, std::size_t fin,
                                       std::size_t fout) {
  std::vector<double> out(n * fout);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < fout; ++o) {
      double acc = b[o];
      for (std::size_t f = 0; f < fin; ++f) acc += x[i * fin + f] * w[o * fin + f];
      out[i * fout + o] = acc;
    }
  return out;
}

inline std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j * k % n) / static_cast<double>(n);
      acc += x[k] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[j] = acc;
  }
  return out;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

}  // namespace oracle
