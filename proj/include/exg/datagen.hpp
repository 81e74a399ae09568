#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "exg/dataset.hpp"
#include "exg/sigproc.hpp"

namespace exg::datagen {

// Free-living style background: one band-limited Gaussian process per default
// band with random per-channel gains, sparse burst artifacts, white noise.
sigproc::Recording synth_freeliving(double duration_s, std::int64_t channels,
                                    double fs, std::uint64_t seed);

struct SyntheticTaskSpec {
  std::string kind = "classification";  // | "gaze"
  struct ClassSig {
    std::string label;
    int band_index = 0;      // into the default filter bank
    double power_ratio = 4;  // in-band power multiplier vs background
  };
  std::vector<ClassSig> classes;

  double noise_floor = 1.0;  // background amplitude scale
  std::int64_t channels = 4;
  double fs = 200.0;
  double window_s = 4.0;

  // gaze encoding: the two slow carriers live on these channels
  double gaze_carrier_hz = 0.75;
  double gaze_scale = 0.08;  // signal units per degree
  double gaze_range_deg = 15.0;
  std::int64_t gaze_channel_h = 0;
  std::int64_t gaze_channel_v = 1;

  void validate() const;
};

// One recording = consecutive labeled windows for one (subject, session).
struct TaskRecording {
  sigproc::Recording recording;
  std::vector<int> labels;                      // classification
  std::vector<std::array<double, 2>> gaze;      // regression (degrees)
};

TaskRecording synth_task(const SyntheticTaskSpec& spec, std::int64_t n_windows,
                         std::uint64_t seed);

// ---- manifest -----------------------------------------------------------

struct ManifestEntry {
  std::string path;  // container base path, no extension
  std::string subject_id;
  std::string session_id;
  std::vector<int> labels;
  std::vector<std::array<double, 2>> gaze;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Full ingest pipeline: read container recordings, preprocess (notch 50/60,
// resample, z-score), decompose with the bank, cut windows, align labels.
data::WindowSet load_windows(const DatasetManifest& manifest,
                             const sigproc::FilterBank& bank,
                             double target_fs = 200.0, double win_s = 4.0,
                             bool preprocess = true);

// ---- splits ---------------------------------------------------------------

struct SplitSpec {
  std::string mode = "within-session";  // cross-session | cross-subject | loso
  std::uint64_t seed = 0;
  std::string loso_subject;  // optional explicit LOSO target
};

struct Split {
  std::vector<std::int64_t> train, test;
  std::vector<std::string> pretrain_exclude_subjects;  // LOSO only
};

Split make_splits(const data::WindowSet& ds, const SplitSpec& spec);

}  // namespace exg::datagen
