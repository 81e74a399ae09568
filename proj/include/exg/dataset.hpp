#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "exg/sigproc.hpp"

namespace exg::data {

// In-memory corpus of band-decomposed windows. Tensors are stored as float32
// (they dominate memory); all math upconverts to double per batch.
struct WindowSet {
  std::int64_t F = 0, C = 0, Tw = 0;
  double fs = 0.0;
  sigproc::FilterBank bank;

  std::vector<std::vector<float>> tensors;  // each [F*C*Tw]

  struct Meta {
    std::string subject;
    std::string session;
    std::int64_t recording = 0;
    std::int64_t window = 0;
  };
  std::vector<Meta> meta;

  // task labels; empty when unlabeled
  std::vector<int> labels;
  std::vector<std::array<double, 2>> gaze;

  std::int64_t size() const { return static_cast<std::int64_t>(tensors.size()); }
  bool labeled() const { return !labels.empty() || !gaze.empty(); }

  void add(const sigproc::BandStack& win, Meta m);
  sigproc::BandStack window(std::int64_t i) const;
};

}  // namespace exg::data
