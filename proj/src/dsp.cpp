#include "exg/dsp.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "exg/linalg.hpp"

namespace exg::dsp {

namespace {

using cplx = std::complex<double>;

// Evaluate the cascade's frequency response at digital frequency w (rad).
cplx response_at(const Sos& sos, double w) {
  const cplx z1 = std::polar(1.0, -w);
  const cplx z2 = z1 * z1;
  cplx h(1.0, 0.0);
  for (const auto& s : sos)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

}  // namespace

Sos butter_bandpass(int order, double lo_hz, double hi_hz, double fs) {
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("butter_bandpass: prototype order must be even");
  if (!(lo_hz > 0.0) || !(hi_hz > lo_hz) || !(hi_hz < 0.5 * fs))
    throw std::invalid_argument("butter_bandpass: bad band edges");
  const double fs2 = 2.0 * fs;
  const double wlo = fs2 * std::tan(M_PI * lo_hz / fs);
  const double whi = fs2 * std::tan(M_PI * hi_hz / fs);
  const double w0 = std::sqrt(wlo * whi);
  const double bw = whi - wlo;

  // analog lowpass prototype poles (cutoff 1 rad/s), upper half-plane only;
  // conjugates are implied when pairing into biquads
  std::vector<cplx> proto;
  for (int k = 1; k <= order / 2; ++k) {
    const double phi = M_PI * (2.0 * k + order - 1.0) / (2.0 * order);
    proto.push_back(cplx(std::cos(phi), std::sin(phi)));
  }

  // lowpass -> bandpass: each prototype pole yields two s-plane poles
  std::vector<cplx> spoles;
  for (const cplx p : proto) {
    const cplx pb = p * (bw / 2.0);
    const cplx disc = std::sqrt(pb * pb - cplx(w0 * w0, 0.0));
    spoles.push_back(pb + disc);
    spoles.push_back(pb - disc);
  }

  // bilinear transform; each s-pole and its conjugate form one biquad with
  // zeros at z = +1 and z = -1
  Sos sos;
  for (const cplx sp : spoles) {
    const cplx zp = (cplx(fs2, 0.0) + sp) / (cplx(fs2, 0.0) - sp);
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = -2.0 * zp.real();
    s.a2 = std::norm(zp);
    sos.push_back(s);
  }

  // normalize gain to 1 at the digital center frequency
  const double w_center = 2.0 * std::atan(w0 / fs2);
  const double g = std::abs(response_at(sos, w_center));
  const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (auto& s : sos) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

Sos notch_biquad(double f0_hz, double fs, double q) {
  if (!(f0_hz > 0.0) || !(f0_hz < 0.5 * fs))
    throw std::invalid_argument("notch_biquad: frequency outside (0, fs/2)");
  const double w0 = 2.0 * M_PI * f0_hz / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * c / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * c / a0;
  s.a2 = (1.0 - alpha) / a0;
  return {s};
}

void sosfilt(const Sos& sos, const double* x, double* y, std::size_t n,
             std::vector<std::array<double, 2>>* state) {
  std::vector<std::array<double, 2>> local;
  auto& st = state ? *state : local;
  if (st.size() != sos.size()) st.assign(sos.size(), {0.0, 0.0});
  std::copy(x, x + n, y);
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    double s1 = st[k][0], s2 = st[k][1];
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = y[i];
      const double yi = s.b0 * xi + s1;
      s1 = s.b1 * xi - s.a1 * yi + s2;
      s2 = s.b2 * xi - s.a2 * yi;
      y[i] = yi;
    }
    st[k] = {s1, s2};
  }
}

namespace {

// steady-state unit-step state per section (lfilter_zi equivalent)
std::vector<std::array<double, 2>> steady_state(const Sos& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;  // DC gain of the preceding sections
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    const double den = 1.0 + s.a1 + s.a2;
    double s1 = 0.0, s2 = 0.0;
    if (std::abs(den) > 1e-300) {
      s1 = (s.b1 + s.b2 - (s.a1 + s.a2) * s.b0) / den;
      s2 = s.b2 - s.a2 * s.b0 - s.a2 * s1;
    }
    zi[k] = {scale * s1, scale * s2};
    scale *= (s.b0 + s.b1 + s.b2) / den;
  }
  return zi;
}

void one_pass(const Sos& sos, const std::vector<std::array<double, 2>>& zi_unit,
              std::vector<double>& buf) {
  auto st = zi_unit;
  for (auto& z : st) {
    z[0] *= buf[0];
    z[1] *= buf[0];
  }
  std::vector<double> out(buf.size());
  sosfilt(sos, buf.data(), out.data(), buf.size(), &st);
  buf.swap(out);
}

}  // namespace

void filtfilt(const Sos& sos, const double* x, double* y, std::size_t n,
              std::int64_t padlen) {
  if (n == 0) return;
  if (padlen < 0) padlen = 3 * (2 * static_cast<std::int64_t>(sos.size()) + 1);
  padlen = std::min<std::int64_t>(padlen, static_cast<std::int64_t>(n) - 1);
  if (padlen < 0) padlen = 0;

  // symmetric extension: keeps the padding in the signal's own range, so no
  // DC step is created at the junctions (an offset step would pass the
  // filters and ring back into the signal on the reverse pass)
  std::vector<double> ext;
  ext.reserve(n + 2 * static_cast<std::size_t>(padlen));
  for (std::int64_t i = padlen; i >= 1; --i) ext.push_back(x[i]);
  ext.insert(ext.end(), x, x + n);
  for (std::int64_t i = 1; i <= padlen; ++i) ext.push_back(x[n - 1 - i]);

  const auto zi = steady_state(sos);
  one_pass(sos, zi, ext);
  std::reverse(ext.begin(), ext.end());
  one_pass(sos, zi, ext);
  std::reverse(ext.begin(), ext.end());
  std::copy(ext.begin() + padlen, ext.begin() + padlen + static_cast<std::int64_t>(n), y);
}

std::vector<double> resample(const double* x, std::size_t n, double fs,
                             double target_fs) {
  if (fs == target_fs) return std::vector<double>(x, x + n);
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_fs / fs));
  std::vector<double> out(n_out, 0.0);
  // cutoff in cycles per input sample, with anti-alias margin
  const double fc = 0.45 * std::min(1.0, target_fs / fs);
  const std::int64_t half = static_cast<std::int64_t>(std::ceil(6.0 / fc));
  const double step = fs / target_fs;  // input samples per output sample
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) * step;
    const std::int64_t m0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(t)) - half);
    const std::int64_t m1 =
        std::min<std::int64_t>(static_cast<std::int64_t>(n) - 1,
                               static_cast<std::int64_t>(std::floor(t)) + half);
    double acc = 0.0, wsum = 0.0;
    for (std::int64_t m = m0; m <= m1; ++m) {
      const double d = t - static_cast<double>(m);
      const double arg = 2.0 * fc * d;
      const double sinc = (arg == 0.0) ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
      // Blackman window over [-half, half]
      const double u = (d / static_cast<double>(half) + 1.0) * 0.5;  // 0..1
      const double win = 0.42 - 0.5 * std::cos(2.0 * M_PI * u) + 0.08 * std::cos(4.0 * M_PI * u);
      const double k = sinc * win;
      acc += k * x[m];
      wsum += k;
    }
    out[i] = (wsum != 0.0) ? acc / wsum : 0.0;
  }
  return out;
}

std::complex<double> tone_project(const double* x, std::size_t n, double f_hz,
                                  double fs) {
  const double w = 2.0 * M_PI * f_hz / fs;
  double re = 0.0, im = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double ph = w * static_cast<double>(t);
    re += x[t] * std::cos(ph);
    im -= x[t] * std::sin(ph);
  }
  return {re, im};
}

std::vector<std::complex<double>> fft_pow2(const double* x, std::size_t n) {
  std::size_t size = 1;
  while (size < n) size <<= 1;
  std::vector<std::complex<double>> a(size, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) a[i] = {x[i], 0.0};

  // bit reversal
  for (std::size_t i = 1, j = 0; i < size; ++i) {
    std::size_t bit = size >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= size; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < size; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  return a;
}

double band_power(const double* x, std::size_t n, double fs, double lo_hz,
                  double hi_hz) {
  const auto spec = fft_pow2(x, n);
  const double df = fs / static_cast<double>(spec.size());
  double acc = 0.0;
  for (std::size_t k = 0; k <= spec.size() / 2; ++k) {
    const double f = df * static_cast<double>(k);
    if (f >= lo_hz && f <= hi_hz) acc += std::norm(spec[k]);
  }
  return acc;
}

RealDftPlan::RealDftPlan(int w_) : w(w_), n_bins(w_ / 2 + 1) {
  cos_tab.resize(static_cast<std::size_t>(n_bins) * w);
  sin_tab.resize(static_cast<std::size_t>(n_bins) * w);
  for (int k = 0; k < n_bins; ++k) {
    for (int t = 0; t < w; ++t) {
      const double ph = 2.0 * M_PI * static_cast<double>(k) * t / w;
      cos_tab[static_cast<std::size_t>(k) * w + t] = std::cos(ph);
      sin_tab[static_cast<std::size_t>(k) * w + t] = -std::sin(ph);
    }
  }
}

void RealDftPlan::transform(const double* x, double* re, double* im,
                            std::int64_t m) const {
  linalg::matmul_nt(x, cos_tab.data(), nullptr, re, m, w, n_bins);
  linalg::matmul_nt(x, sin_tab.data(), nullptr, im, m, w, n_bins);
}

}  // namespace exg::dsp
