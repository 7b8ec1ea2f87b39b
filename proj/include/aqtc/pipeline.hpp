#pragma once

// Ties grounding and aggregation together: one fused context per question,
// ready for the scorer.

#include <span>
#include <string>
#include <vector>

#include "aqtc/aggregation.hpp"
#include "aqtc/dataset.hpp"
#include "aqtc/grounding.hpp"
#include "aqtc/parallel.hpp"
#include "aqtc/scorer.hpp"

namespace aqtc {

// Borrows the question from the dataset it was prepared from; the dataset
// must outlive it.
struct PreparedQuestion {
  std::string task_id;
  const QuestionRecord* question = nullptr;
  Vec grounding;
  FusedContext context;
};

inline std::vector<PreparedQuestion> prepare_questions(const Dataset& data, const AggregationConfig& cfg) {
  cfg.validate();
  std::vector<PreparedQuestion> out;
  for (const auto& task : data) {
    const auto model = fit_task(task);
    for (const auto& q : task.questions) {
      PreparedQuestion pq{task.task_id, &q, score_question(model, q.question_tokens), {}};
      pq.context = fuse_functions(task.functions, pq.grounding, cfg);
      out.push_back(std::move(pq));
    }
  }
  return out;
}

inline std::vector<Sample> as_samples(std::span<const PreparedQuestion> prepared) {
  std::vector<Sample> out;
  out.reserve(prepared.size());
  for (const auto& pq : prepared) out.push_back({&pq.context, pq.question});
  return out;
}

inline std::vector<ScoreTensor> score_questions(const ScorerParams& params, std::span<const PreparedQuestion> prepared,
                                                Mode mode = Mode::inference, std::size_t jobs = 1) {
  std::vector<ScoreTensor> out(prepared.size());
  parallel_for(prepared.size(), jobs, [&](std::size_t i) {
    out[i] = forward_question(params, prepared[i].context, *prepared[i].question, mode);
  });
  return out;
}

// Teacher-forced loss without gradients.
inline double total_loss(const ScorerParams& params, std::span<const PreparedQuestion> prepared, std::size_t jobs = 1) {
  const auto scores = score_questions(params, prepared, Mode::teacher_forcing, jobs);
  double loss = 0.0;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& q = *prepared[i].question;
    for (std::size_t s = 0; s < q.steps.size(); ++s) {
      const double nll = -log_softmax(scores[i].logits[s])[static_cast<Eigen::Index>(q.steps[s].ground_truth_index)];
      loss += std::min(nll, kMaxStepLoss);
    }
  }
  return loss;
}

}  // namespace aqtc
