#include "exg/sigproc.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exg/dsp.hpp"
#include "exg/errors.hpp"
#include "exg/rng.hpp"

namespace exg::sigproc {

namespace {
constexpr double kNyquistMargin = 0.45;
constexpr double kStdEpsilon = 1e-8;
constexpr int kBandpassOrder = 2;  // prototype order; 4th-order bandpass
constexpr double kNotchQ = 30.0;
}  // namespace

FilterBank default_filter_bank() {
  FilterBank bank;
  bank.bands = {
      {"EEG-delta", 0.5, 4.0},   {"EEG-theta", 4.0, 8.0},
      {"EEG-alpha", 8.0, 13.0},  {"EEG-beta", 13.0, 30.0},
      {"EEG-gamma", 30.0, 100.0}, {"EMG-LF", 15.0, 45.0},
      {"EMG-MF", 45.0, 95.0},    {"EMG-HF", 95.0, 100.0},
      {"EOG", 0.1, 20.0},        {"ECG-LF", 0.03, 0.12},
      {"ECG-HF", 0.12, 0.488},   {"QRS", 8.0, 50.0},
  };
  return bank;
}

BandDefinition effective_band(const BandDefinition& band, double fs) {
  const double cap = kNyquistMargin * fs;
  BandDefinition eff = band;
  if (eff.hi_hz > cap) eff.hi_hz = cap;
  if (eff.lo_hz >= eff.hi_hz) {
    // clamp emptied the band: shift it down keeping the original width
    eff.lo_hz = eff.hi_hz - (band.hi_hz - band.lo_hz);
    if (eff.lo_hz <= 0.0)
      throw ValidationError("band '" + band.name + "' unrealizable at fs=" +
                            std::to_string(fs) + ": lo >= " +
                            std::to_string(cap) + " Hz and no shift fits");
  }
  return eff;
}

Recording notch(const Recording& rec, double mains_hz) {
  if (!(mains_hz > 0.0) || mains_hz >= 0.5 * rec.fs)
    throw ValidationError("notch frequency must lie in (0, fs/2)");
  const auto sos = dsp::notch_biquad(mains_hz, rec.fs, kNotchQ);
  Recording out = rec;
  const std::int64_t pad = std::llround(3.0 * rec.fs);
  for (std::int64_t c = 0; c < rec.channels; ++c)
    dsp::filtfilt(sos, rec.channel(c), out.channel(c),
                  static_cast<std::size_t>(rec.samples), pad);
  return out;
}

Recording resample(const Recording& rec, double target_fs) {
  if (!(target_fs > 0.0)) throw ValidationError("target_fs must be positive");
  if (target_fs == rec.fs) return rec;
  Recording out;
  out.fs = target_fs;
  out.channels = rec.channels;
  out.subject_id = rec.subject_id;
  out.session_id = rec.session_id;
  out.channel_names = rec.channel_names;
  out.samples = std::llround(static_cast<double>(rec.samples) * target_fs / rec.fs);
  out.data.resize(static_cast<std::size_t>(out.channels * out.samples));
  for (std::int64_t c = 0; c < rec.channels; ++c) {
    auto rs = dsp::resample(rec.channel(c), static_cast<std::size_t>(rec.samples),
                            rec.fs, target_fs);
    std::copy(rs.begin(), rs.end(), out.channel(c));
  }
  return out;
}

Recording zscore_normalize(const Recording& rec) {
  Recording out = rec;
  for (std::int64_t c = 0; c < rec.channels; ++c) {
    const double* x = rec.channel(c);
    double* y = out.channel(c);
    const double n = static_cast<double>(rec.samples);
    double mean = 0.0;
    for (std::int64_t t = 0; t < rec.samples; ++t) mean += x[t];
    mean /= n;
    double var = 0.0;
    for (std::int64_t t = 0; t < rec.samples; ++t) var += (x[t] - mean) * (x[t] - mean);
    const double sd = std::sqrt(var / n);
    if (sd < kStdEpsilon) {
      for (std::int64_t t = 0; t < rec.samples; ++t) y[t] = 0.0;
    } else {
      const double inv = 1.0 / sd;
      for (std::int64_t t = 0; t < rec.samples; ++t) y[t] = (x[t] - mean) * inv;
    }
  }
  return out;
}

Recording preprocess(const Recording& rec, double target_fs) {
  Recording cur = rec;
  for (double mains : {50.0, 60.0})
    if (mains < 0.5 * cur.fs) cur = notch(cur, mains);
  cur = resample(cur, target_fs);
  return zscore_normalize(cur);
}

BandStack decompose(const Recording& rec, const FilterBank& bank) {
  if (bank.bands.empty()) throw ValidationError("decompose: empty filter bank");
  BandStack out;
  out.n_bands = bank.size();
  out.channels = rec.channels;
  out.samples = rec.samples;
  out.fs = rec.fs;
  out.bank = bank;
  out.data.resize(static_cast<std::size_t>(out.n_bands * out.channels * out.samples));

  for (std::int64_t f = 0; f < out.n_bands; ++f) {
    const BandDefinition eff = effective_band(bank.bands[f], rec.fs);
    const auto sos = dsp::butter_bandpass(kBandpassOrder, eff.lo_hz, eff.hi_hz, rec.fs);
    // pad with ~3 periods of the low edge so narrow bands settle
    const std::int64_t pad = std::llround(3.0 * rec.fs / std::max(eff.lo_hz, 0.05));
    for (std::int64_t c = 0; c < rec.channels; ++c)
      dsp::filtfilt(sos, rec.channel(c), out.slice(f, c),
                    static_cast<std::size_t>(rec.samples), pad);
  }
  return out;
}

std::vector<BandStack> window(const BandStack& stack, double win_s) {
  const std::int64_t wlen = std::llround(win_s * stack.fs);
  if (wlen <= 0 || wlen > stack.samples)
    throw ValidationError("window: length " + std::to_string(wlen) +
                          " exceeds recording (" + std::to_string(stack.samples) + ")");
  const std::int64_t n_win = stack.samples / wlen;
  std::vector<BandStack> out;
  out.reserve(static_cast<std::size_t>(n_win));
  for (std::int64_t w = 0; w < n_win; ++w) {
    BandStack win;
    win.n_bands = stack.n_bands;
    win.channels = stack.channels;
    win.samples = wlen;
    win.fs = stack.fs;
    win.bank = stack.bank;
    win.data.resize(static_cast<std::size_t>(win.n_bands * win.channels * wlen));
    for (std::int64_t f = 0; f < stack.n_bands; ++f)
      for (std::int64_t c = 0; c < stack.channels; ++c)
        std::memcpy(win.slice(f, c), stack.slice(f, c) + w * wlen,
                    static_cast<std::size_t>(wlen) * sizeof(double));
    out.push_back(std::move(win));
  }
  return out;
}

BandStack augment_noise(const BandStack& win, double sigma_rel, std::uint64_t seed) {
  if (sigma_rel < 0.0) throw ValidationError("augment_noise: sigma_rel < 0");
  BandStack out = win;
  if (sigma_rel == 0.0) return out;
  Rng rng(seed);
  const double n = static_cast<double>(win.samples);
  for (std::int64_t f = 0; f < win.n_bands; ++f) {
    for (std::int64_t c = 0; c < win.channels; ++c) {
      const double* x = win.slice(f, c);
      double mean = 0.0;
      for (std::int64_t t = 0; t < win.samples; ++t) mean += x[t];
      mean /= n;
      double var = 0.0;
      for (std::int64_t t = 0; t < win.samples; ++t) var += (x[t] - mean) * (x[t] - mean);
      const double sd = std::sqrt(var / n) * sigma_rel;
      double* y = out.slice(f, c);
      for (std::int64_t t = 0; t < win.samples; ++t) y[t] += sd * rng.normal();
    }
  }
  return out;
}

void write_recording(const std::string& dir, const std::string& name,
                     const Recording& rec) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::string raw_path = dir + "/" + name + ".f32";
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot write " + raw_path);
  std::vector<float> buf(rec.data.size());
  for (std::size_t i = 0; i < rec.data.size(); ++i)
    buf[i] = static_cast<float>(rec.data[i]);
  raw.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!raw) throw IoError("short write to " + raw_path);

  std::ofstream meta(dir + "/" + name + ".meta");
  if (!meta) throw IoError("cannot write sidecar for " + name);
  meta << "fs " << rec.fs << "\n";
  meta << "channels " << rec.channels << "\n";
  meta << "samples " << rec.samples << "\n";
  meta << "subject_id " << rec.subject_id << "\n";
  meta << "session_id " << rec.session_id << "\n";
  meta << "channel_names";
  for (std::int64_t c = 0; c < rec.channels; ++c) {
    const std::string nm = c < static_cast<std::int64_t>(rec.channel_names.size())
                               ? rec.channel_names[c]
                               : ("ch" + std::to_string(c));
    meta << (c ? "," : " ") << nm;
  }
  meta << "\n";
}

Recording read_recording(const std::string& base_path) {
  Recording rec;
  std::ifstream meta(base_path + ".meta");
  if (!meta) throw IoError("missing sidecar " + base_path + ".meta");
  std::string key;
  while (meta >> key) {
    if (key == "fs") meta >> rec.fs;
    else if (key == "channels") meta >> rec.channels;
    else if (key == "samples") meta >> rec.samples;
    else if (key == "subject_id") meta >> rec.subject_id;
    else if (key == "session_id") meta >> rec.session_id;
    else if (key == "channel_names") {
      std::string list;
      meta >> list;
      std::stringstream ss(list);
      std::string nm;
      while (std::getline(ss, nm, ',')) rec.channel_names.push_back(nm);
    } else {
      std::string skip;
      std::getline(meta, skip);
    }
  }
  if (rec.channels <= 0 || rec.samples <= 0 || !(rec.fs > 0.0))
    throw IoError("invalid sidecar " + base_path + ".meta");

  const std::string raw_path = base_path + ".f32";
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("missing raw file " + raw_path);
  const std::size_t count = static_cast<std::size_t>(rec.channels * rec.samples);
  std::vector<float> buf(count);
  raw.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(raw.gcount()) != count * sizeof(float))
    throw IoError("truncated raw file " + raw_path);
  rec.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) rec.data[i] = buf[i];
  return rec;
}

}  // namespace exg::sigproc
