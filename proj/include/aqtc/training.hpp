#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aqtc/aggregation.hpp"
#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"
#include "aqtc/evaluation.hpp"
#include "aqtc/pipeline.hpp"
#include "aqtc/scorer.hpp"

namespace aqtc {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ScorerParams m;
  ScorerParams v;
  std::uint64_t t = 0;

  static AdamState for_params(const ScorerParams& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

// Bias-corrected Adam, applied in place.
inline void adam_step(ScorerParams& params, const ScorerParams& grads, AdamState& state, const AdamConfig& cfg) {
  const auto names = ScorerParams::names();
  const auto g = grads.flat();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g[i].allFinite()) throw NumericalError("non-finite gradient in '" + names[i] + "'");
  }
  auto theta = params.flat();
  auto m = state.m.flat();
  auto v = state.v.flat();
  if (theta.size() != g.size() || m.size() != g.size()) throw ValidationError("adam_step: shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (theta[i].size() != g[i].size() || m[i].size() != g[i].size()) {
      throw ValidationError("adam_step: shape mismatch in '" + names[i] + "'");
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < g.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i].square();
    theta[i] -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
  }
}

struct TrainConfig {
  AdamConfig adam;
  std::uint32_t epochs = 100;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Questions per optimizer step; 0 means the whole training set.
  std::size_t batch_size = 0;
  // Pick the saved checkpoint by test-split R@1 instead of training loss.
  // This selects on the evaluation data and leaks it into the result.
  bool select_on_test = false;
  std::size_t jobs = 1;

  void validate() const {
    if (!(adam.learning_rate > 0.0) || !std::isfinite(adam.learning_rate)) {
      throw ValidationError("learning rate must be > 0");
    }
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
  }
};

struct EpochRecord {
  std::uint32_t epoch = 0;
  // Teacher-forced CE after this epoch's updates, averaged over training
  // steps so runs on different dataset sizes are comparable.
  double loss = 0.0;
  double r1 = 0.0;
  double r3 = 0.0;
};

struct TrainResult {
  ScorerConfig scorer;
  ScorerParams best;
  ScorerParams last;
  std::uint32_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainResult train(const Dataset& dataset, const TrainConfig& cfg, ScorerConfig scorer_cfg,
                         const AggregationConfig& agg_cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  agg_cfg.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  const auto train_set = select_split(dataset, Split::train);
  const auto prepared = prepare_questions(train_set, agg_cfg);
  if (prepared.empty()) throw ValidationError("train: dataset has no training questions");
  std::optional<std::vector<PreparedQuestion>> test_prepared;
  Dataset test_set;
  if (cfg.select_on_test) {
    test_set = select_split(dataset, Split::test);
    if (test_set.empty()) throw ValidationError("train: select_on_test needs a test split");
    test_prepared = prepare_questions(test_set, agg_cfg);
  }

  scorer_cfg.d_t = dataset.front().dims.d_t;
  scorer_cfg.d_v = dataset.front().dims.d_v;
  TrainResult result;
  result.scorer = scorer_cfg;
  auto params = init_params(scorer_cfg);
  auto adam = AdamState::for_params(params);
  const auto samples = as_samples(prepared);
  const std::size_t batch = cfg.batch_size == 0 ? samples.size() : std::min(cfg.batch_size, samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  double best_score = std::numeric_limits<double>::infinity();
  std::size_t total_steps = 0;
  for (const auto& pq : prepared) total_steps += pq.question->steps.size();
  std::vector<Sample> minibatch;
  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle && batch < samples.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      minibatch.clear();
      for (std::size_t i = begin; i < std::min(begin + batch, order.size()); ++i) minibatch.push_back(samples[order[i]]);
      const auto lg = loss_and_grad(params, minibatch, cfg.jobs);
      adam_step(params, lg.grad, adam, cfg.adam);
    }
    EpochRecord rec{epoch, total_loss(params, prepared, cfg.jobs) / static_cast<double>(total_steps), 0.0, 0.0};
    const auto eval = evaluate_prepared(params, prepared, cfg.jobs);
    rec.r1 = eval.r1;
    rec.r3 = eval.r3;
    if (!std::isfinite(rec.loss)) throw NumericalError("training loss diverged at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    // Lower is better for both criteria.
    const double score = test_prepared ? -evaluate_prepared(params, *test_prepared, cfg.jobs).r1 : rec.loss;
    if (score < best_score) {
      best_score = score;
      result.best = params;
      result.best_epoch = epoch;
    }
  }
  result.last = std::move(params);
  return result;
}

// Result of comparing analytic gradients with central finite differences.
struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

// Denominator floor for the relative error. Entries whose true gradient is
// ~0 (e.g. the head output bias, which every softmax ignores) are judged on
// absolute error instead of on differencing noise.
inline constexpr double kGradCheckFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

// Compares `analytic` against central differences of the summed batch loss
// at `params`, entry by entry.
inline GradCheckReport check_gradients(const ScorerParams& params, std::span<const Sample> batch,
                                       const ScorerParams& analytic, double tolerance, double epsilon = 1e-5) {
  GradCheckReport report;
  const auto names = ScorerParams::names();
  auto probe = params;
  auto probe_flat = probe.flat();
  const auto analytic_flat = analytic.flat();
  auto loss_at = [&] {
    double loss = 0.0;
    for (const auto& s : batch) {
      const auto st = forward_question(probe, *s.context, *s.question, Mode::teacher_forcing);
      for (std::size_t k = 0; k < s.question->steps.size(); ++k) {
        loss -= log_softmax(st.logits[k])[static_cast<Eigen::Index>(s.question->steps[k].ground_truth_index)];
      }
    }
    return loss;
  };
  for (std::size_t t = 0; t < probe_flat.size(); ++t) {
    for (Eigen::Index i = 0; i < probe_flat[t].size(); ++i) {
      const double saved = probe_flat[t][i];
      probe_flat[t][i] = saved + epsilon;
      const double up = loss_at();
      probe_flat[t][i] = saved - epsilon;
      const double down = loss_at();
      probe_flat[t][i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic_flat[t][i];
      const double err = relative_error(a, numeric);
      ++report.entries_checked;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = err;
        report.worst_parameter = names[t];
        report.worst_index = static_cast<std::size_t>(i);
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

// A small random problem for gradient checking: 2-step questions with 3 and
// 4 candidates, random contexts, and random weights and biases.
struct GradCheckProblem {
  ScorerParams params;
  std::vector<FusedContext> contexts;
  std::vector<QuestionRecord> questions;

  std::vector<Sample> samples() const {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < questions.size(); ++i) out.push_back({&contexts[i], &questions[i]});
    return out;
  }

  // Smallest |pre-activation| over every ReLU in the teacher-forced pass.
  double relu_margin() const {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& s : samples()) {
      ForwardCache cache;
      forward_question(params, *s.context, *s.question, Mode::teacher_forcing, &cache);
      for (const auto& step : cache.steps) {
        for (const auto& c : step.candidates) {
          margin = std::min({margin, c.hidden_pre.cwiseAbs().minCoeff(), c.head_pre.cwiseAbs().minCoeff()});
        }
      }
    }
    return margin;
  }
};

// Central differences are invalid across a ReLU kink, so a draw is rejected
// until every ReLU input is at least this far from zero.
inline constexpr double kGradCheckReluMargin = 1e-3;

inline GradCheckProblem make_grad_check_problem(const ScorerConfig& cfg, std::size_t questions = 2) {
  cfg.validate();
  for (std::uint64_t attempt = 0;; ++attempt) {
    GradCheckProblem prob;
    auto init_cfg = cfg;
    init_cfg.seed = cfg.seed + attempt * 0x632BE59BD9B4E019ull;
    prob.params = init_params(init_cfg);
    std::mt19937_64 rng(init_cfg.seed ^ 0x9E3779B97F4A7C15ull);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto randvec = [&](std::size_t n, double scale = 1.0) {
      Vec v(static_cast<Eigen::Index>(n));
      for (auto& x : v) x = scale * normal(rng);
      return v;
    };
    // Non-zero biases so every bias gradient is exercised off the symmetric point.
    prob.params.for_each([&](std::string_view, auto& t) {
      if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Vec>) {
        t = randvec(static_cast<std::size_t>(t.size()), 0.1);
      }
    });
    prob.contexts.reserve(questions);
    prob.questions.reserve(questions);
    for (std::size_t qi = 0; qi < questions; ++qi) {
      prob.contexts.push_back({randvec(cfg.d_t), randvec(cfg.d_v)});
      QuestionRecord q;
      q.id = "gc" + std::to_string(qi);
      q.question_embedding = randvec(cfg.d_t);
      for (std::size_t n : {std::size_t{3}, std::size_t{4}}) {
        StepRecord step;
        for (std::size_t c = 0; c < n; ++c) step.candidates.push_back({randvec(cfg.d_t), randvec(cfg.d_v)});
        step.ground_truth_index = static_cast<std::size_t>(rng() % n);
        q.steps.push_back(std::move(step));
      }
      prob.questions.push_back(std::move(q));
    }
    if (prob.relu_margin() >= kGradCheckReluMargin || attempt == 999) return prob;
  }
}

inline GradCheckReport grad_check(const ScorerConfig& cfg, double tolerance, double epsilon = 1e-5) {
  const auto prob = make_grad_check_problem(cfg);
  const auto samples = prob.samples();
  const auto lg = loss_and_grad(prob.params, samples);
  return check_gradients(prob.params, samples, lg.grad, tolerance, epsilon);
}

}  // namespace aqtc
