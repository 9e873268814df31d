// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace postlab {

namespace {
constexpr const char* kMagic = "postlab-checkpoint-v1";

// Parameter payloads are raw IEEE-754 float32 bytes. All supported targets
// are little-endian; refuse to run elsewhere rather than silently corrupt.
static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");
}  // namespace

nlohmann::json config_to_json(const PolicyConfig& cfg) {
  return {{"vocab_size", cfg.vocab_size},   {"context_len", cfg.context_len},
          {"embed_dim", cfg.embed_dim},     {"num_layers", cfg.num_layers},
          {"num_heads", cfg.num_heads},     {"init_seed", cfg.init_seed}};
}

PolicyConfig config_from_json(const nlohmann::json& j) {
  PolicyConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.context_len = j.at("context_len").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.init_seed = j.value("init_seed", uint64_t{0});
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, const PolicyConfig& config,
                     const ParameterSet& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["version"] = 1;
  header["config"] = config_to_json(config);
  auto tensors = nlohmann::json::array();
  for (const auto& t : params) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  }
  header["tensors"] = std::move(tensors);
  header["meta"] = meta;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kMagic << "\n" << header.dump() << "\n";
  for (const auto& t : params) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (!std::getline(in, header_line))
    throw std::runtime_error("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(header_line);

  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& tj : header.at("tensors")) {
    auto& t = ck.params.add(tj.at("name").get<std::string>(),
                            tj.at("shape").get<std::vector<int64_t>>());
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint data: " + path);
  }
  return ck;
}

}  // namespace postlab
