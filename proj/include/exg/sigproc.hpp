#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace exg::sigproc {

// Continuous multichannel recording, data laid out [channels, samples].
struct Recording {
  std::int64_t channels = 0;
  std::int64_t samples = 0;
  double fs = 0.0;
  std::string subject_id;
  std::string session_id;
  std::vector<std::string> channel_names;
  std::vector<double> data;

  double* channel(std::int64_t c) { return data.data() + c * samples; }
  const double* channel(std::int64_t c) const { return data.data() + c * samples; }
};

struct BandDefinition {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

struct FilterBank {
  std::vector<BandDefinition> bands;
  std::int64_t size() const { return static_cast<std::int64_t>(bands.size()); }
};

// Band-decomposed signal, [bands, channels, samples].
struct BandStack {
  std::int64_t n_bands = 0;
  std::int64_t channels = 0;
  std::int64_t samples = 0;
  double fs = 0.0;
  FilterBank bank;

  std::vector<double> data;

  double* slice(std::int64_t f, std::int64_t c) {
    return data.data() + (f * channels + c) * samples;
  }
  const double* slice(std::int64_t f, std::int64_t c) const {
    return data.data() + (f * channels + c) * samples;
  }
};

// The 12 canonical sub-bands, in fixed order.
FilterBank default_filter_bank();

// Band edges actually realized at a given rate: hi is clamped to 0.45*fs and
// a band emptied by the clamp is shifted down width-preserving. Throws if no
// positive-frequency placement exists.
BandDefinition effective_band(const BandDefinition& band, double fs);

Recording notch(const Recording& rec, double mains_hz);
Recording resample(const Recording& rec, double target_fs = 200.0);
Recording zscore_normalize(const Recording& rec);

// notch at 50 and 60 Hz (when below Nyquist), resample, z-score.
Recording preprocess(const Recording& rec, double target_fs = 200.0);

BandStack decompose(const Recording& rec, const FilterBank& bank);

std::vector<BandStack> window(const BandStack& stack, double win_s = 4.0);

BandStack augment_noise(const BandStack& win, double sigma_rel, std::uint64_t seed);

// Container format: <name>.f32 holds raw little-endian float32 [C, T]
// row-major; <name>.meta is the text sidecar.
void write_recording(const std::string& dir, const std::string& name,
                     const Recording& rec);
Recording read_recording(const std::string& base_path);  // path without extension

}  // namespace exg::sigproc
