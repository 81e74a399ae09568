#include "exg/dataset.hpp"

#include "exg/errors.hpp"

namespace exg::data {

void WindowSet::add(const sigproc::BandStack& win, Meta m) {
  if (tensors.empty()) {
    F = win.n_bands;
    C = win.channels;
    Tw = win.samples;
    fs = win.fs;
    bank = win.bank;
  } else if (win.n_bands != F || win.channels != C || win.samples != Tw) {
    throw ValidationError("WindowSet: inconsistent window shape");
  }
  std::vector<float> t(win.data.size());
  for (std::size_t i = 0; i < win.data.size(); ++i)
    t[i] = static_cast<float>(win.data[i]);
  tensors.push_back(std::move(t));
  meta.push_back(std::move(m));
}

sigproc::BandStack WindowSet::window(std::int64_t i) const {
  const auto& src = tensors[static_cast<std::size_t>(i)];
  sigproc::BandStack win;
  win.n_bands = F;
  win.channels = C;
  win.samples = Tw;
  win.fs = fs;
  win.bank = bank;
  win.data.resize(src.size());
  for (std::size_t j = 0; j < src.size(); ++j) win.data[j] = src[j];
  return win;
}

}  // namespace exg::data
