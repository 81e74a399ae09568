#include "exg/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "exg/errors.hpp"

namespace exg::ckpt {

namespace {
constexpr char kMagic[8] = {'E', 'X', 'G', 'C', 'K', 'P', 'T', '1'};
}

void save(const std::string& path, const Archive& ar) {
  nlohmann::json header = ar.meta;
  header["format_version"] = 1;
  auto& dir = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ar.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.numel()) * sizeof(double);
  }
  const std::string head = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kMagic, 8);
    const std::uint64_t hlen = head.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& [name, t] : ar.tensors)
      out.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Archive load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string head(hlen, '\0');
  in.read(head.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated checkpoint header: " + path);

  Archive ar;
  ar.meta = nlohmann::json::parse(head);
  for (const auto& entry : ar.meta.at("tensors")) {
    Tensor t;
    t.resize(entry.at("shape").get<std::vector<std::int64_t>>());
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw IoError("truncated tensor data in " + path);
    ar.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  ar.meta.erase("tensors");
  return ar;
}

void put_params(Archive& ar, const nn::ParamSet& ps) {
  for (const auto* p : ps.items) ar.add(p->name, p->value);
}

void restore_params(const Archive& ar, nn::ParamSet& ps) {
  for (auto* p : ps.items) {
    const Tensor* t = ar.find(p->name);
    if (!t) throw ValidationError("checkpoint missing tensor '" + p->name + "'");
    if (t->shape != p->value.shape)
      throw ValidationError("checkpoint tensor '" + p->name + "' has wrong shape");
    p->value = *t;
  }
}

nlohmann::json encoder_config_to_json(const enc::EncoderConfig& cfg) {
  return {{"backbone", cfg.backbone},   {"n_layers", cfg.n_layers},
          {"model_dim", cfg.model_dim}, {"state_dim", cfg.state_dim},
          {"n_heads", cfg.n_heads},     {"ffn_dim", cfg.ffn_dim},
          {"seed", cfg.seed}};
}

enc::EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  enc::EncoderConfig cfg;
  cfg.backbone = j.at("backbone").get<std::string>();
  cfg.n_layers = j.at("n_layers").get<std::int64_t>();
  cfg.model_dim = j.at("model_dim").get<std::int64_t>();
  cfg.state_dim = j.at("state_dim").get<std::int64_t>();
  cfg.n_heads = j.at("n_heads").get<std::int64_t>();
  cfg.ffn_dim = j.at("ffn_dim").get<std::int64_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

nlohmann::json tokenizer_config_to_json(const token::TokenizerConfig& cfg) {
  return {{"patch_samples", cfg.patch_samples},
          {"embed_dim", cfg.embed_dim},
          {"F", cfg.F},
          {"C", cfg.C},
          {"L", cfg.L}};
}

token::TokenizerConfig tokenizer_config_from_json(const nlohmann::json& j) {
  token::TokenizerConfig cfg;
  cfg.patch_samples = j.at("patch_samples").get<std::int64_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::int64_t>();
  cfg.F = j.at("F").get<std::int64_t>();
  cfg.C = j.at("C").get<std::int64_t>();
  cfg.L = j.at("L").get<std::int64_t>();
  return cfg;
}

}  // namespace exg::ckpt
