#include <bit>
#include <cmath>
#include <numbers>

#include "seecg/signal.hpp"

namespace seecg {

namespace {

Complex twiddle(std::size_t jk, std::size_t n, double sign) {
  const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(jk % n) / static_cast<double>(n);
  return {std::cos(angle), std::sin(angle)};
}

void fft_radix2(std::vector<Complex>& a, double sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // exact per-index twiddles rather than a running product keep errors at rounding level
  std::vector<Complex> w(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) w[k] = twiddle(k, n, sign);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w[k * step];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

std::vector<Complex> transform(std::vector<Complex> a, double sign) {
  const std::size_t n = a.size();
  if (n == 0) throw ValueError("dft: input is empty");
  if (std::has_single_bit(n)) {
    fft_radix2(a, sign);
    return a;
  }
  std::vector<Complex> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    Complex acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += a[k] * twiddle(j * k, n, sign);
    out[j] = acc;
  }
  return out;
}

}  // namespace

std::vector<Complex> dft(std::span<const double> x) {
  return transform(std::vector<Complex>(x.begin(), x.end()), -1.0);
}

std::vector<Complex> dft(std::span<const Complex> x) { return transform(std::vector<Complex>(x.begin(), x.end()), -1.0); }

std::vector<Complex> idft(std::span<const Complex> spectrum) {
  auto out = transform(std::vector<Complex>(spectrum.begin(), spectrum.end()), 1.0);
  const double inv = 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= inv;
  return out;
}

std::vector<double> fourier_resample(std::span<const double> x, std::size_t target_len) {
  if (target_len < 2) throw ValueError("fourier_resample: target length must be at least 2, got " + std::to_string(target_len));
  if (x.empty()) throw ValueError("fourier_resample: input is empty");
  for (double v : x) {
    if (!std::isfinite(v)) throw ValueError("fourier_resample: input contains a non-finite sample");
  }
  const std::size_t n = x.size(), m = target_len;
  const auto spectrum = dft(x);

  std::vector<Complex> y(m, Complex(0.0));
  const std::size_t keep = std::min(n, m);
  const std::size_t positive = keep / 2 + 1;  // bins 0 .. keep/2
  for (std::size_t k = 0; k < positive; ++k) y[k] = spectrum[k];
  for (std::size_t k = 1; k < keep - positive + 1; ++k) y[m - k] = spectrum[n - k];
  if (keep % 2 == 0) {
    const std::size_t h = keep / 2;
    if (m < n) {
      // the kept Nyquist bin collects both of its aliases
      y[h] = spectrum[h] + spectrum[n - h];
    } else if (m > n) {
      // the source Nyquist bin is shared between +h and -h
      y[h] = 0.5 * spectrum[h];
      y[m - h] = y[h];
    }
  }

  const auto back = idft(y);
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = back[i].real() * scale;
  return out;
}

SignalVector fourier_resample(const SignalVector& x, std::size_t target_len) {
  SignalVector out;
  out.samples = fourier_resample(x.samples, target_len);
  out.sample_rate_hz =
      x.sample_rate_hz * static_cast<double>(target_len) / static_cast<double>(x.samples.size());
  return out;
}

std::size_t default_target_length(std::size_t n) {
  if (n == 0) throw ValueError("default_target_length: length must be positive");
  return std::bit_floor(n);
}

}  // namespace seecg
