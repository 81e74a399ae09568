#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace exg::dsp {

// One second-order section, direct form II transposed.
struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator (a0 normalized to 1)
};

using Sos = std::vector<Biquad>;

// Butterworth bandpass of analog prototype order `order` (2*order poles
// total), bilinear-transformed with prewarping. Gain normalized to 1 at the
// geometric center of the band.
Sos butter_bandpass(int order, double lo_hz, double hi_hz, double fs);

// RBJ notch at f0 with quality factor q.
Sos notch_biquad(double f0_hz, double fs, double q);

// Single forward pass with given initial state (2 doubles per section).
void sosfilt(const Sos& sos, const double* x, double* y, std::size_t n,
             std::vector<std::array<double, 2>>* state = nullptr);

// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions. padlen <= 0 picks a default from the
// section count; it is clamped to n-1.
void filtfilt(const Sos& sos, const double* x, double* y, std::size_t n,
              std::int64_t padlen = -1);

// Windowed-sinc rate conversion. Returns round(n * target_fs / fs) samples.
std::vector<double> resample(const double* x, std::size_t n, double fs,
                             double target_fs);

// Complex projection of x onto e^{-2pi i f t / fs}; |result|*2/n estimates a
// tone's amplitude at frequency f.
std::complex<double> tone_project(const double* x, std::size_t n, double f_hz,
                                  double fs);

// Radix-2 FFT of x zero-padded to the next power of two. Returns the complex
// spectrum (full length). Bin k maps to frequency k * fs / size().
std::vector<std::complex<double>> fft_pow2(const double* x, std::size_t n);

// Total spectral power (|X|^2 summed) over [lo_hz, hi_hz] via fft_pow2.
double band_power(const double* x, std::size_t n, double fs, double lo_hz,
                  double hi_hz);

// Exact w-point real-input DFT realized as two matrix products against
// precomputed trig tables; used for per-patch spectra.
struct RealDftPlan {
  int w = 0;
  int n_bins = 0;                // w/2 + 1
  std::vector<double> cos_tab;   // [n_bins, w]
  std::vector<double> sin_tab;   // [n_bins, w]
  explicit RealDftPlan(int w);
  // X[m, w] -> re[m, n_bins], im[m, n_bins]
  void transform(const double* x, double* re, double* im, std::int64_t m) const;
};

}  // namespace exg::dsp
