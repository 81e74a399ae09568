#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "exg/dsp.hpp"

using namespace exg;

namespace {

std::vector<double> tone(double f, double fs, std::size_t n, double amp = 1.0,
                         double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = amp * std::sin(2.0 * M_PI * f * static_cast<double>(t) / fs + phase);
  return x;
}

double rms(const std::vector<double>& x, std::size_t begin = 0, std::size_t end = 0) {
  if (end == 0) end = x.size();
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

// steady-state gain of zero-phase filtering measured on the middle half of a
// long tone
double tone_gain(const dsp::Sos& sos, double f, double fs, double dur_s) {
  const std::size_t n = static_cast<std::size_t>(dur_s * fs);
  auto x = tone(f, fs, n);
  std::vector<double> y(n);
  dsp::filtfilt(sos, x.data(), y.data(), n,
                static_cast<std::int64_t>(3.0 * fs / std::max(f * 0.5, 0.02)));
  const std::size_t b = n / 4, e = 3 * n / 4;
  return rms(y, b, e) / rms(x, b, e);
}

}  // namespace

TEST_CASE("butterworth bandpass: unit gain at center, strong two-pass rolloff") {
  const double fs = 200.0;
  auto sos = dsp::butter_bandpass(2, 8.0, 13.0, fs);  // alpha-like band
  const double fc = std::sqrt(8.0 * 13.0);
  CHECK(tone_gain(sos, fc, fs, 30.0) == doctest::Approx(1.0).epsilon(0.02));
  // one octave out on both sides, zero-phase two-pass: >= 20 dB down
  CHECK(tone_gain(sos, 26.0, fs, 30.0) < 0.1);
  CHECK(tone_gain(sos, 4.0, fs, 30.0) < 0.1);
}

TEST_CASE("butterworth bandpass handles a very narrow low band") {
  const double fs = 200.0;
  auto sos = dsp::butter_bandpass(2, 0.03, 0.12, fs);
  const double fc = std::sqrt(0.03 * 0.12);
  CHECK(tone_gain(sos, fc, fs, 600.0) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(tone_gain(sos, 1.0, fs, 600.0) < 0.05);
}

TEST_CASE("filtfilt is zero-phase: peak cross-correlation lag is zero") {
  const double fs = 200.0;
  auto sos = dsp::butter_bandpass(2, 8.0, 13.0, fs);
  const std::size_t n = 4000;
  auto x = tone(10.0, fs, n);
  std::vector<double> y(n);
  dsp::filtfilt(sos, x.data(), y.data(), n);
  // scan lags [-5, 5]
  int best_lag = -99;
  double best = -1e300;
  for (int lag = -5; lag <= 5; ++lag) {
    double acc = 0.0;
    for (std::size_t t = 100; t + 100 < n; ++t)
      acc += x[t] * y[static_cast<std::size_t>(static_cast<std::int64_t>(t) + lag)];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filtfilt on zeros returns zeros") {
  auto sos = dsp::butter_bandpass(2, 4.0, 8.0, 200.0);
  std::vector<double> x(1000, 0.0), y(1000, 1.0);
  dsp::filtfilt(sos, x.data(), y.data(), x.size());
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("notch kills the target tone and passes a distant one") {
  const double fs = 200.0;
  auto sos = dsp::notch_biquad(60.0, fs, 30.0);
  const std::size_t n = 12000;  // 60 s

  // residual measured at the 60 Hz bin (edge transients are broadband and
  // localized; steady-state suppression is what the notch promises)
  auto x60 = tone(60.0, fs, n, 1.0, 0.83);
  std::vector<double> y(n);
  dsp::filtfilt(sos, x60.data(), y.data(), n, static_cast<std::int64_t>(3.0 * fs));
  const double in_bin = std::abs(dsp::tone_project(x60.data(), n, 60.0, fs));
  const double out_bin = std::abs(dsp::tone_project(y.data(), n, 60.0, fs));
  CHECK(out_bin / in_bin < 0.01);
  // middle half is fully settled
  CHECK(rms(y, n / 4, 3 * n / 4) / rms(x60, n / 4, 3 * n / 4) < 1e-4);

  auto x10 = tone(10.0, fs, n);
  dsp::filtfilt(sos, x10.data(), y.data(), n, static_cast<std::int64_t>(3.0 * fs));
  CHECK(rms(y) / rms(x10) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("resample: length arithmetic and waveform fidelity") {
  const double fs = 1000.0;
  const std::size_t n = 4000;
  auto x = tone(5.0, fs, n);
  auto y = dsp::resample(x.data(), n, fs, 200.0);
  REQUIRE(y.size() == 800);

  // correlate against the analytic 5 Hz sine at 200 Hz
  auto ref = tone(5.0, 200.0, y.size());
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += y[i] * ref[i];
    da += y[i] * y[i];
    db += ref[i] * ref[i];
  }
  CHECK(num / std::sqrt(da * db) > 0.999);
}

TEST_CASE("resample at the same rate is the identity") {
  std::vector<double> x = {1.0, -2.0, 3.5, 0.25};
  auto y = dsp::resample(x.data(), x.size(), 200.0, 200.0);
  REQUIRE(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("fft_pow2 and band_power locate tone energy") {
  const double fs = 200.0;
  const std::size_t n = 2048;
  auto x = tone(25.0, fs, n);
  const double inside = dsp::band_power(x.data(), n, fs, 20.0, 30.0);
  const double outside = dsp::band_power(x.data(), n, fs, 40.0, 60.0);
  CHECK(inside > 1e3 * outside);
}

TEST_CASE("tone_project estimates amplitude") {
  const double fs = 200.0;
  const std::size_t n = 800;
  auto x = tone(7.0, fs, n, 2.5);
  const auto c = dsp::tone_project(x.data(), n, 7.0, fs);
  CHECK(std::abs(c) * 2.0 / static_cast<double>(n) == doctest::Approx(2.5).epsilon(0.01));
}

TEST_CASE("RealDftPlan matches the direct DFT definition") {
  const int w = 100;
  dsp::RealDftPlan plan(w);
  REQUIRE(plan.n_bins == 51);

  // one patch: mix of DC, bin 3 cosine, bin 7 sine
  std::vector<double> x(w);
  for (int t = 0; t < w; ++t)
    x[t] = 0.5 + 2.0 * std::cos(2.0 * M_PI * 3.0 * t / w) +
           1.5 * std::sin(2.0 * M_PI * 7.0 * t / w);
  std::vector<double> re(plan.n_bins), im(plan.n_bins);
  plan.transform(x.data(), re.data(), im.data(), 1);

  for (int k = 0; k < plan.n_bins; ++k) {
    std::complex<double> want(0.0, 0.0);
    for (int t = 0; t < w; ++t)
      want += x[t] * std::exp(std::complex<double>(0.0, -2.0 * M_PI * k * t / w));
    CHECK(re[k] == doctest::Approx(want.real()).epsilon(1e-9));
    CHECK(im[k] == doctest::Approx(want.imag()).epsilon(1e-9));
  }
  // expected peaks
  CHECK(std::hypot(re[0], im[0]) == doctest::Approx(50.0).epsilon(1e-9));   // DC: 0.5*w
  CHECK(std::hypot(re[3], im[3]) == doctest::Approx(100.0).epsilon(1e-9));  // 2.0*w/2
  CHECK(std::hypot(re[7], im[7]) == doctest::Approx(75.0).epsilon(1e-9));   // 1.5*w/2
}
