#pragma once

// Checkpoint = FEATPACK of f32 parameters keyed by tensor name ("mlp/W1",
// "gru/U_z", ...) plus a JSON sidecar "<path>.json" holding the scorer and
// aggregation configuration needed to rebuild contexts at inference.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "aqtc/aggregation.hpp"
#include "aqtc/featpack.hpp"
#include "aqtc/scorer.hpp"

namespace aqtc {

struct Checkpoint {
  ScorerConfig scorer;
  AggregationConfig aggregation;
  ScorerParams params;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) {
  auto p = ckpt;
  p += ".json";
  return p;
}

inline nlohmann::json to_json(const ScorerConfig& c) {
  return {{"d_t", c.d_t}, {"d_v", c.d_v}, {"d_hidden", c.d_hidden}, {"d_gru", c.d_gru}, {"seed", c.seed}};
}

inline nlohmann::json to_json(const AggregationConfig& c) {
  return {{"temperature", c.temperature}, {"use_hoi", c.use_hoi}, {"use_global", c.use_global}};
}

inline FeatPack params_to_featpack(const ScorerParams& params) {
  FeatPack pack;
  params.for_each([&](std::string_view name, const auto& t) {
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(static_cast<float>(t(r, c)));
    }
    std::vector<std::uint32_t> shape;
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Mat>) {
      shape = {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())};
    } else {
      shape = {static_cast<std::uint32_t>(t.size())};
    }
    pack.emplace(std::string(name), DenseArray::f32(std::move(shape), std::move(data)));
  });
  return pack;
}

inline ScorerParams params_from_featpack(const FeatPack& pack, const ScorerConfig& cfg) {
  auto params = ScorerParams::zeros(cfg);
  params.for_each([&](std::string_view name, auto& t) {
    auto it = pack.find(std::string(name));
    if (it == pack.end()) throw MissingFeatureError(std::string(name));
    const auto& a = it->second;
    const bool is_matrix = std::is_same_v<std::decay_t<decltype(t)>, Mat>;
    const bool shape_ok = a.dtype() == DType::f32 &&
                          (is_matrix ? (a.shape.size() == 2 && a.shape[0] == t.rows() && a.shape[1] == t.cols())
                                     : (a.shape.size() == 1 && a.shape[0] == t.size()));
    if (!shape_ok) throw ValidationError("checkpoint tensor '" + std::string(name) + "' has the wrong shape");
    const auto& v = a.as_f32();
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = v[static_cast<std::size_t>(r * t.cols() + c)];
    }
  });
  for (const auto& f : params.flat()) {
    if (!f.allFinite()) throw ValidationError("checkpoint contains non-finite parameters");
  }
  return params;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_featpack(params_to_featpack(ckpt.params), path);
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint sidecar for " + path.string());
  const nlohmann::json j = {{"format", "aqtc-checkpoint/1"},
                            {"scorer", to_json(ckpt.scorer)},
                            {"aggregation", to_json(ckpt.aggregation)}};
  out << j.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  {
    std::ifstream in(sidecar_path(path));
    if (!in) throw IoError("cannot open checkpoint sidecar: " + sidecar_path(path).string());
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("checkpoint sidecar is not valid JSON: " + std::string(e.what()));
    }
  }
  Checkpoint ckpt;
  try {
    const auto& s = j.at("scorer");
    ckpt.scorer = {s.at("d_t").get<std::size_t>(), s.at("d_v").get<std::size_t>(), s.at("d_hidden").get<std::size_t>(),
                   s.at("d_gru").get<std::size_t>(), s.at("seed").get<std::uint64_t>()};
    const auto& a = j.at("aggregation");
    ckpt.aggregation = {a.at("temperature").get<double>(), a.at("use_hoi").get<bool>(), a.at("use_global").get<bool>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint sidecar: " + std::string(e.what()));
  }
  ckpt.scorer.validate();
  ckpt.aggregation.validate();
  ckpt.params = params_from_featpack(read_featpack(path), ckpt.scorer);
  return ckpt;
}

}  // namespace aqtc
