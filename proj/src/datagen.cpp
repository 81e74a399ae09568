#include "exg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "exg/dsp.hpp"
#include "exg/errors.hpp"
#include "exg/rng.hpp"

namespace exg::datagen {

namespace {

// band-limited Gaussian noise, unit-ish std before scaling
std::vector<double> band_noise(const sigproc::BandDefinition& band, double fs,
                               std::int64_t n, Rng& rng) {
  std::vector<double> white(static_cast<std::size_t>(n));
  for (auto& v : white) v = rng.normal();
  const auto eff = sigproc::effective_band(band, fs);
  const auto sos = dsp::butter_bandpass(2, eff.lo_hz, eff.hi_hz, fs);
  std::vector<double> out(static_cast<std::size_t>(n));
  dsp::filtfilt(sos, white.data(), out.data(), static_cast<std::size_t>(n));
  return out;
}

double rms_of(const double* x, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

sigproc::Recording synth_freeliving(double duration_s, std::int64_t channels,
                                    double fs, std::uint64_t seed) {
  const std::int64_t n = std::llround(duration_s * fs);
  if (n < 1) throw ValidationError("synth_freeliving: duration too short");
  sigproc::Recording rec;
  rec.fs = fs;
  rec.channels = channels;
  rec.samples = n;
  rec.data.assign(static_cast<std::size_t>(channels * n), 0.0);

  Rng rng(seed);
  const auto bank = sigproc::default_filter_bank();
  for (std::int64_t c = 0; c < channels; ++c) {
    double* dst = rec.channel(c);
    for (const auto& band : bank.bands) {
      auto comp = band_noise(band, fs, n, rng);
      // rough 1/f coloring plus per-channel gain jitter
      const double fc = std::sqrt(band.lo_hz * std::min(band.hi_hz, 0.45 * fs));
      const double gain = (0.5 + rng.uniform()) / std::sqrt(std::max(fc, 0.05));
      const double r = rms_of(comp.data(), n);
      const double scale = r > 0.0 ? gain / r : 0.0;
      for (std::int64_t t = 0; t < n; ++t) dst[t] += scale * comp[t];
    }
    // white sensor noise
    for (std::int64_t t = 0; t < n; ++t) dst[t] += 0.1 * rng.normal();

    // sparse EMG-like bursts: 100-300 ms, ~4 per minute, 5x background std
    const double bg_std = rms_of(dst, n);
    const std::int64_t n_bursts = std::llround(4.0 * duration_s / 60.0);
    const auto burst_band = sigproc::BandDefinition{"burst", 30.0, 0.44 * fs};
    for (std::int64_t b = 0; b < n_bursts; ++b) {
      const std::int64_t len = std::llround((0.1 + 0.2 * rng.uniform()) * fs);
      if (len >= n) break;
      const std::int64_t start =
          static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - len)));
      auto burst = band_noise(burst_band, fs, len, rng);
      const double br = rms_of(burst.data(), len);
      const double bscale = br > 0.0 ? 5.0 * bg_std / br : 0.0;
      for (std::int64_t t = 0; t < len; ++t) {
        // Hann envelope
        const double env = 0.5 * (1.0 - std::cos(2.0 * M_PI * t / std::max<std::int64_t>(1, len - 1)));
        dst[start + t] += bscale * env * burst[static_cast<std::size_t>(t)];
      }
    }
  }
  return rec;
}

void SyntheticTaskSpec::validate() const {
  const auto bank = sigproc::default_filter_bank();
  if (kind != "classification" && kind != "gaze")
    throw ValidationError("task kind must be classification or gaze");
  if (kind == "classification") {
    if (classes.size() < 2) throw ValidationError("need at least 2 classes");
    for (const auto& c : classes) {
      if (c.band_index < 0 || c.band_index >= bank.size())
        throw ValidationError("class '" + c.label + "' has invalid band index " +
                              std::to_string(c.band_index));
      if (!(c.power_ratio >= 1.0))
        throw ValidationError("power ratio must be >= 1");
    }
  } else {
    if (channels < 2) throw ValidationError("gaze task needs >= 2 channels");
    if (!(gaze_carrier_hz > 0.0) || gaze_carrier_hz >= 1.0)
      throw ValidationError("gaze carrier must lie in (0, 1) Hz");
  }
}

TaskRecording synth_task(const SyntheticTaskSpec& spec, std::int64_t n_windows,
                         std::uint64_t seed) {
  spec.validate();
  if (spec.kind == "classification" &&
      n_windows < 2 * static_cast<std::int64_t>(spec.classes.size()))
    throw ValidationError("need at least 2 windows per class");

  const std::int64_t wlen = std::llround(spec.window_s * spec.fs);
  const std::int64_t total = n_windows * wlen;
  const auto bank = sigproc::default_filter_bank();

  TaskRecording out;
  out.recording.fs = spec.fs;
  out.recording.channels = spec.channels;
  out.recording.samples = total;
  out.recording.data.assign(static_cast<std::size_t>(spec.channels * total), 0.0);

  Rng rng(seed);

  // background: scaled free-living mixture
  auto bg = synth_freeliving(static_cast<double>(total) / spec.fs, spec.channels,
                             spec.fs, Rng::mix(seed, 0xB6));
  for (std::size_t i = 0; i < bg.data.size(); ++i)
    out.recording.data[i] = spec.noise_floor * bg.data[i];

  if (spec.kind == "classification") {
    for (std::int64_t wi = 0; wi < n_windows; ++wi) {
      const int cls = static_cast<int>(wi % static_cast<std::int64_t>(spec.classes.size()));
      out.labels.push_back(cls);
      const auto& sig = spec.classes[static_cast<std::size_t>(cls)];
      if (sig.power_ratio <= 1.0) continue;  // ratio 1 = no signature
      const auto& band = bank.bands[static_cast<std::size_t>(sig.band_index)];
      for (std::int64_t c = 0; c < spec.channels; ++c) {
        double* dst = out.recording.channel(c) + wi * wlen;
        // background power inside the signature band, measured per window
        const double p_bg = dsp::band_power(dst, static_cast<std::size_t>(wlen),
                                            spec.fs, band.lo_hz,
                                            std::min(band.hi_hz, 0.45 * spec.fs));
        auto extra = band_noise(band, spec.fs, wlen, rng);
        const double p_extra =
            dsp::band_power(extra.data(), static_cast<std::size_t>(wlen), spec.fs,
                            band.lo_hz, std::min(band.hi_hz, 0.45 * spec.fs));
        if (p_extra <= 0.0) continue;
        const double scale = std::sqrt((sig.power_ratio - 1.0) * p_bg / p_extra);
        for (std::int64_t t = 0; t < wlen; ++t) dst[t] += scale * extra[static_cast<std::size_t>(t)];
      }
    }
  } else {
    // the designated channels carry no background below ~2x the carrier, so
    // the injected slow component is unambiguous ground truth
    const auto drift_stop = dsp::butter_bandpass(
        2, 2.0 * spec.gaze_carrier_hz, 0.44 * spec.fs, spec.fs);
    for (std::int64_t ch : {spec.gaze_channel_h, spec.gaze_channel_v}) {
      std::vector<double> cleaned(static_cast<std::size_t>(total));
      dsp::filtfilt(drift_stop, out.recording.channel(ch), cleaned.data(),
                    static_cast<std::size_t>(total));
      std::copy(cleaned.begin(), cleaned.end(), out.recording.channel(ch));
    }
    for (std::int64_t wi = 0; wi < n_windows; ++wi) {
      const double h = rng.uniform(-spec.gaze_range_deg, spec.gaze_range_deg);
      const double v = rng.uniform(-spec.gaze_range_deg, spec.gaze_range_deg);
      out.gaze.push_back({h, v});
      double* ch_h = out.recording.channel(spec.gaze_channel_h) + wi * wlen;
      double* ch_v = out.recording.channel(spec.gaze_channel_v) + wi * wlen;
      for (std::int64_t t = 0; t < wlen; ++t) {
        const double ph = 2.0 * M_PI * spec.gaze_carrier_hz * static_cast<double>(t) / spec.fs;
        ch_h[t] += h * spec.gaze_scale * std::sin(ph);
        ch_v[t] += v * spec.gaze_scale * std::sin(ph);
      }
    }
  }
  return out;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  nlohmann::json j;
  j["recordings"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json row = {{"path", e.path},
                          {"subject_id", e.subject_id},
                          {"session_id", e.session_id}};
    if (!e.labels.empty()) row["labels"] = e.labels;
    if (!e.gaze.empty()) {
      auto& g = row["gaze"] = nlohmann::json::array();
      for (const auto& a : e.gaze) g.push_back({a[0], a[1]});
    }
    j["recordings"].push_back(std::move(row));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  nlohmann::json j;
  in >> j;
  DatasetManifest manifest;
  for (const auto& row : j.at("recordings")) {
    ManifestEntry e;
    e.path = row.at("path").get<std::string>();
    e.subject_id = row.at("subject_id").get<std::string>();
    e.session_id = row.at("session_id").get<std::string>();
    if (row.contains("labels")) e.labels = row.at("labels").get<std::vector<int>>();
    if (row.contains("gaze"))
      for (const auto& g : row.at("gaze"))
        e.gaze.push_back({g.at(0).get<double>(), g.at(1).get<double>()});
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

data::WindowSet load_windows(const DatasetManifest& manifest,
                             const sigproc::FilterBank& bank, double target_fs,
                             double win_s, bool preprocess) {
  data::WindowSet ds;
  std::int64_t rec_index = 0;
  for (const auto& entry : manifest.entries) {
    auto rec = sigproc::read_recording(entry.path);
    rec.subject_id = entry.subject_id;
    rec.session_id = entry.session_id;
    if (preprocess) rec = sigproc::preprocess(rec, target_fs);
    auto stack = sigproc::decompose(rec, bank);
    auto wins = sigproc::window(stack, win_s);

    if (!entry.labels.empty() && entry.labels.size() != wins.size())
      throw ValidationError("manifest entry " + entry.path + ": " +
                            std::to_string(entry.labels.size()) + " labels for " +
                            std::to_string(wins.size()) + " windows");
    if (!entry.gaze.empty() && entry.gaze.size() != wins.size())
      throw ValidationError("manifest entry " + entry.path +
                            ": gaze count does not match windows");

    for (std::size_t w = 0; w < wins.size(); ++w) {
      ds.add(wins[w], {entry.subject_id, entry.session_id, rec_index,
                       static_cast<std::int64_t>(w)});
      if (!entry.labels.empty()) ds.labels.push_back(entry.labels[w]);
      if (!entry.gaze.empty()) ds.gaze.push_back(entry.gaze[w]);
    }
    ++rec_index;
  }
  return ds;
}

Split make_splits(const data::WindowSet& ds, const SplitSpec& spec) {
  Split split;
  if (ds.size() == 0) throw ValidationError("make_splits: empty dataset");
  Rng rng(spec.seed);

  if (spec.mode == "within-session") {
    // group windows by recording, shuffle, hold out 20% of each
    std::map<std::int64_t, std::vector<std::int64_t>> by_rec;
    for (std::int64_t i = 0; i < ds.size(); ++i)
      by_rec[ds.meta[static_cast<std::size_t>(i)].recording].push_back(i);
    for (auto& [rec, idx] : by_rec) {
      rng.shuffle(idx);
      const std::int64_t n_test =
          std::llround(0.2 * static_cast<double>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k)
        (static_cast<std::int64_t>(k) < n_test ? split.test : split.train)
            .push_back(idx[k]);
    }
  } else if (spec.mode == "cross-session") {
    std::map<std::string, std::set<std::string>> sessions_of;
    for (const auto& m : ds.meta) sessions_of[m.subject].insert(m.session);
    bool any_multi = false;
    for (const auto& [s, set] : sessions_of) any_multi |= set.size() >= 2;
    if (!any_multi)
      throw ValidationError("cross-session split needs a subject with >= 2 sessions");
    std::map<std::string, std::string> test_session;
    for (const auto& [subj, set] : sessions_of) {
      if (set.size() < 2) continue;  // single-session subjects go to train
      std::vector<std::string> list(set.begin(), set.end());
      test_session[subj] = list[rng.below(list.size())];
    }
    for (std::int64_t i = 0; i < ds.size(); ++i) {
      const auto& m = ds.meta[static_cast<std::size_t>(i)];
      const auto it = test_session.find(m.subject);
      if (it != test_session.end() && it->second == m.session)
        split.test.push_back(i);
      else
        split.train.push_back(i);
    }
  } else if (spec.mode == "cross-subject" || spec.mode == "loso") {
    std::set<std::string> subject_set;
    for (const auto& m : ds.meta) subject_set.insert(m.subject);
    std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
    if (subjects.size() < 2)
      throw ValidationError(spec.mode + " split needs >= 2 subjects");

    std::set<std::string> test_subjects;
    if (spec.mode == "loso") {
      std::string target = spec.loso_subject;
      if (target.empty())
        target = subjects[rng.below(subjects.size())];
      else if (!subject_set.count(target))
        throw ValidationError("loso subject '" + target + "' not in dataset");
      test_subjects.insert(target);
      split.pretrain_exclude_subjects.push_back(target);
    } else {
      rng.shuffle(subjects);
      const std::size_t n_test = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(subjects.size()))));
      for (std::size_t k = 0; k < n_test; ++k) test_subjects.insert(subjects[k]);
    }
    for (std::int64_t i = 0; i < ds.size(); ++i) {
      const auto& m = ds.meta[static_cast<std::size_t>(i)];
      (test_subjects.count(m.subject) ? split.test : split.train).push_back(i);
    }
  } else {
    throw ValidationError("unknown split mode '" + spec.mode + "'");
  }

  if (split.train.empty() || split.test.empty())
    throw ValidationError("split produced an empty side (mode " + spec.mode + ")");
  return split;
}

}  // namespace exg::datagen
