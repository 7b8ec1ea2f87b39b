#pragma once

// Recall@k over candidate rankings. Every step of every question counts
// once; ties are broken in favor of the lower candidate index.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"
#include "aqtc/pipeline.hpp"
#include "aqtc/scorer.hpp"

namespace aqtc {

struct StepRank {
  std::string question_id;
  std::size_t step_index = 0;
  std::uint32_t rank = 0;  // 1-based rank of the ground truth
};

struct EvalResult {
  double r1 = 0.0;
  double r3 = 0.0;
  std::vector<StepRank> per_step;
};

// 1 + #{j : s[j] > s[gt]} + #{j < gt : s[j] == s[gt]}
inline std::uint32_t rank_of_truth(const Vec& scores, std::size_t gt) {
  if (scores.size() == 0 || gt >= static_cast<std::size_t>(scores.size())) {
    throw ValidationError("rank_of_truth: ground truth index out of range");
  }
  if (scores.hasNaN()) throw ValidationError("rank_of_truth: NaN score");
  const double target = scores[static_cast<Eigen::Index>(gt)];
  std::uint32_t rank = 1;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (scores[j] > target || (scores[j] == target && static_cast<std::size_t>(j) < gt)) ++rank;
  }
  return rank;
}

inline std::vector<const QuestionRecord*> flatten_questions(const Dataset& data) {
  std::vector<const QuestionRecord*> out;
  for (const auto& t : data) {
    for (const auto& q : t.questions) out.push_back(&q);
  }
  return out;
}

inline EvalResult evaluate(std::span<const ScoreTensor> scores, std::span<const QuestionRecord* const> questions) {
  if (scores.size() != questions.size()) throw ValidationError("evaluate: score/question count mismatch");
  EvalResult result;
  std::size_t hits1 = 0, hits3 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& q = *questions[i];
    const auto& st = scores[i];
    if (st.question_id != q.id || st.probs.size() != q.steps.size()) {
      throw ValidationError("evaluate: scores for '" + st.question_id + "' do not align with question '" + q.id + "'");
    }
    for (std::size_t s = 0; s < q.steps.size(); ++s) {
      if (static_cast<std::size_t>(st.probs[s].size()) != q.steps[s].candidates.size()) {
        throw ValidationError("evaluate: candidate count mismatch in '" + q.id + "' step " + std::to_string(s));
      }
      const auto rank = rank_of_truth(st.probs[s], q.steps[s].ground_truth_index);
      hits1 += rank <= 1;
      hits3 += rank <= 3;
      result.per_step.push_back({q.id, s, rank});
    }
  }
  if (result.per_step.empty()) throw ValidationError("evaluate: no steps to score");
  const auto total = static_cast<double>(result.per_step.size());
  result.r1 = static_cast<double>(hits1) / total;
  result.r3 = static_cast<double>(hits3) / total;
  return result;
}

inline EvalResult evaluate(std::span<const ScoreTensor> scores, const Dataset& data) {
  const auto questions = flatten_questions(data);
  return evaluate(scores, questions);
}

inline EvalResult evaluate_prepared(const ScorerParams& params, std::span<const PreparedQuestion> prepared,
                                    std::size_t jobs = 1) {
  const auto scores = score_questions(params, prepared, Mode::inference, jobs);
  std::vector<const QuestionRecord*> questions;
  for (const auto& pq : prepared) questions.push_back(pq.question);
  return evaluate(scores, questions);
}

}  // namespace aqtc
