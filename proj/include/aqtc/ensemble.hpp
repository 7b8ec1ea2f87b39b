#pragma once

// Score-level linear ensembling: a convex combination of several models'
// per-candidate probabilities (or, optionally, logits) before ranking.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "aqtc/checkpoint.hpp"
#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"
#include "aqtc/evaluation.hpp"
#include "aqtc/pipeline.hpp"

namespace aqtc {

enum class FusionMode { probabilities, logits };

struct EnsembleMember {
  std::filesystem::path checkpoint;
  double weight = 1.0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  bool normalize = true;
  FusionMode mode = FusionMode::probabilities;

  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& m : members) w.push_back(m.weight);
    return w;
  }
};

inline std::vector<double> checked_weights(std::span<const double> weights, bool normalize) {
  if (weights.empty()) throw ValidationError("ensemble needs at least one member");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("ensemble weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("ensemble weights sum to zero");
  std::vector<double> out(weights.begin(), weights.end());
  if (normalize) {
    for (double& w : out) w /= total;
  } else if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("ensemble weights must sum to 1 when normalization is off");
  }
  return out;
}

// members[m][i] is model m's scores for question i.
inline std::vector<ScoreTensor> combine(std::span<const std::vector<ScoreTensor>> members, std::span<const double> weights,
                                        bool normalize = true, FusionMode mode = FusionMode::probabilities) {
  if (members.size() != weights.size()) throw ValidationError("combine: one weight per member required");
  const auto w = checked_weights(weights, normalize);
  const auto& first = members.front();
  for (const auto& m : members) {
    if (m.size() != first.size()) throw ValidationError("combine: members cover different question counts");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].question_id != first[i].question_id || m[i].probs.size() != first[i].probs.size()) {
        throw ValidationError("combine: members are not aligned at question '" + first[i].question_id + "'");
      }
      for (std::size_t s = 0; s < m[i].probs.size(); ++s) {
        if (m[i].probs[s].size() != first[i].probs[s].size() ||
            (mode == FusionMode::logits && m[i].logits.size() != m[i].probs.size())) {
          throw ValidationError("combine: candidate counts differ at question '" + first[i].question_id + "'");
        }
      }
    }
  }
  std::vector<ScoreTensor> out(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    out[i].question_id = first[i].question_id;
    for (std::size_t s = 0; s < first[i].probs.size(); ++s) {
      Vec acc = Vec::Zero(first[i].probs[s].size());
      for (std::size_t m = 0; m < members.size(); ++m) {
        acc += w[m] * (mode == FusionMode::logits ? members[m][i].logits[s] : members[m][i].probs[s]);
      }
      if (mode == FusionMode::logits) {
        out[i].probs.push_back(softmax(acc));
        out[i].logits.push_back(std::move(acc));
      } else {
        out[i].logits.push_back(acc.array().log().matrix());
        out[i].probs.push_back(std::move(acc));
      }
    }
  }
  return out;
}

struct EnsembleReport {
  EvalResult ensemble;
  std::vector<EvalResult> members;
};

// Scores `data` with one loaded checkpoint, rebuilding contexts with the
// checkpoint's own aggregation settings.
inline std::vector<ScoreTensor> score_with_checkpoint(const Checkpoint& ckpt, const Dataset& data, std::size_t jobs = 1) {
  if (data.empty()) throw ValidationError("no tasks to score");
  const auto& dims = data.front().dims;
  if (ckpt.scorer.d_t != dims.d_t || ckpt.scorer.d_v != dims.d_v) {
    throw ValidationError("checkpoint dims (d_t=" + std::to_string(ckpt.scorer.d_t) + ", d_v=" +
                          std::to_string(ckpt.scorer.d_v) + ") do not match the dataset");
  }
  const auto prepared = prepare_questions(data, ckpt.aggregation);
  return score_questions(ckpt.params, prepared, Mode::inference, jobs);
}

inline EnsembleReport evaluate_ensemble(const EnsembleSpec& spec, const Dataset& data, std::size_t jobs = 1) {
  if (spec.members.empty()) throw ValidationError("ensemble needs at least one member");
  const auto questions = flatten_questions(data);
  EnsembleReport report;
  std::vector<std::vector<ScoreTensor>> member_scores;
  for (const auto& m : spec.members) {
    member_scores.push_back(score_with_checkpoint(load_checkpoint(m.checkpoint), data, jobs));
    report.members.push_back(evaluate(member_scores.back(), questions));
  }
  const auto weights = spec.weights();
  const auto fused = combine(member_scores, weights, spec.normalize, spec.mode);
  report.ensemble = evaluate(fused, questions);
  return report;
}

inline EnsembleSpec load_ensemble_spec(const std::filesystem::path& path) {
  nlohmann::json j;
  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ensemble spec: " + path.string());
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("ensemble spec is not valid JSON: " + std::string(e.what()));
    }
  }
  EnsembleSpec spec;
  try {
    for (const auto& jm : j.at("members")) {
      std::filesystem::path ckpt = jm.at("checkpoint").get<std::string>();
      if (ckpt.is_relative()) ckpt = path.parent_path() / ckpt;
      spec.members.push_back({ckpt, jm.value("weight", 1.0)});
    }
    spec.normalize = j.value("normalize", true);
    const auto mode = j.value("fusion", std::string("probabilities"));
    if (mode == "probabilities") {
      spec.mode = FusionMode::probabilities;
    } else if (mode == "logits") {
      spec.mode = FusionMode::logits;
    } else {
      throw ValidationError("unknown fusion mode: " + mode);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed ensemble spec: " + std::string(e.what()));
  }
  checked_weights(spec.weights(), spec.normalize);
  return spec;
}

}  // namespace aqtc
