#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "exg/encoder.hpp"
#include "exg/nn.hpp"
#include "exg/tensor.hpp"
#include "exg/tokenize.hpp"

namespace exg::ckpt {

// Version-tagged archive: a JSON header (configs + tensor directory) followed
// by raw float64 tensor data. Writes are atomic (temp file + rename).
struct Archive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

void save(const std::string& path, const Archive& ar);
Archive load(const std::string& path);

void put_params(Archive& ar, const nn::ParamSet& ps);
// restores by name; throws on missing tensors or shape mismatch
void restore_params(const Archive& ar, nn::ParamSet& ps);

nlohmann::json encoder_config_to_json(const enc::EncoderConfig& cfg);
enc::EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json tokenizer_config_to_json(const token::TokenizerConfig& cfg);
token::TokenizerConfig tokenizer_config_from_json(const nlohmann::json& j);

}  // namespace exg::ckpt
