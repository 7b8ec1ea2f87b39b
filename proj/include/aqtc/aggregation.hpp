#pragma once

// Interaction-centric pooling of frame features and grounding-weighted
// fusion of function features.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"

namespace aqtc {

struct AggregationConfig {
  double temperature = 1.0;
  bool use_hoi = true;
  // Replace pooled frames with the clip-level embedding when one exists.
  bool use_global = false;

  void validate() const {
    if (!std::isfinite(temperature) || temperature <= 0.0) {
      throw ValidationError("aggregation temperature must be finite and > 0");
    }
  }
};

struct FusedContext {
  Vec text;    // d_t
  Vec visual;  // d_v
};

// Softmax over HOI states scaled by 1/temperature. Interaction frames
// (state 1) receive the largest weight, hand-absent frames (-1) the least.
inline Vec hoi_weights(std::span<const std::int8_t> states, double temperature) {
  if (!std::isfinite(temperature) || temperature <= 0.0) {
    throw ValidationError("hoi_weights: temperature must be finite and > 0");
  }
  if (states.empty()) throw ValidationError("hoi_weights: need at least one frame");
  Vec logits(static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] < -1 || states[i] > 1) throw ValidationError("hoi_weights: state outside {-1,0,1}");
    logits[static_cast<Eigen::Index>(i)] = static_cast<double>(states[i]) / temperature;
  }
  Vec w = (logits.array() - logits.maxCoeff()).exp();
  return w / w.sum();
}

inline Vec aggregate_clip(const Mat& frames, std::span<const std::int8_t> states,
                          const AggregationConfig& cfg) {
  if (static_cast<std::size_t>(frames.rows()) != states.size() || states.empty()) {
    throw ValidationError("aggregate_clip: frame count does not match states length");
  }
  if (!cfg.use_hoi) return frames.colwise().mean().transpose();
  const Vec w = hoi_weights(states, cfg.temperature);
  return frames.transpose() * w;
}

// Sum-normalized grounding weights; falls back to uniform when every score
// is zero.
inline Vec function_weights(const Vec& grounding) {
  const auto n = grounding.size();
  if (n == 0) throw ValidationError("function_weights: empty grounding vector");
  if (!grounding.allFinite()) throw ValidationError("function_weights: non-finite grounding score");
  if ((grounding.array() < 0.0).any()) throw ValidationError("function_weights: negative grounding score");
  const double total = grounding.sum();
  if (total > 0.0) return grounding / total;
  return Vec::Constant(n, 1.0 / static_cast<double>(n));
}

inline Vec function_clip(const FunctionRecord& f, const AggregationConfig& cfg) {
  if (cfg.use_global && f.global_embedding) return *f.global_embedding;
  return aggregate_clip(f.frame_embeddings, f.hoi_states, cfg);
}

inline FusedContext fuse_functions(std::span<const FunctionRecord> functions, const Vec& grounding,
                                   const AggregationConfig& cfg) {
  cfg.validate();
  if (functions.empty()) throw ValidationError("fuse_functions: no functions");
  if (static_cast<std::size_t>(grounding.size()) != functions.size()) {
    throw ValidationError("fuse_functions: grounding length does not match function count");
  }
  for (const auto& f : functions) {
    if (!f.frame_embeddings.allFinite() || !f.text_embedding.allFinite() ||
        (f.global_embedding && !f.global_embedding->allFinite())) {
      throw ValidationError("fuse_functions: NaN in function '" + f.id + "'");
    }
  }
  const Vec g = function_weights(grounding);
  FusedContext ctx{Vec::Zero(functions.front().text_embedding.size()),
                   Vec::Zero(functions.front().frame_embeddings.cols())};
  for (std::size_t j = 0; j < functions.size(); ++j) {
    const auto gj = g[static_cast<Eigen::Index>(j)];
    ctx.text += gj * functions[j].text_embedding;
    ctx.visual += gj * function_clip(functions[j], cfg);
  }
  return ctx;
}

}  // namespace aqtc
