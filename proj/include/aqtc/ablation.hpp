#pragma once

// Trains and evaluates one model per aggregation setting with shared seeds,
// producing a comparison table of R@1 / R@3.

#include <span>
#include <vector>

#include "aqtc/aggregation.hpp"
#include "aqtc/dataset.hpp"
#include "aqtc/evaluation.hpp"
#include "aqtc/parallel.hpp"
#include "aqtc/training.hpp"

namespace aqtc {

struct AblationRow {
  AggregationConfig config;
  EvalResult result;
  std::uint32_t best_epoch = 0;
};

// Scored on the test split when the dataset has one, otherwise on the
// training split. Each row uses the best-by-training-loss parameters, the
// same ones `train` saves.
inline std::vector<AblationRow> run_ablation(const Dataset& data, std::span<const AggregationConfig> grid,
                                             const TrainConfig& train_cfg, const ScorerConfig& scorer_cfg,
                                             std::size_t jobs = 1) {
  if (grid.empty()) throw ValidationError("ablation grid is empty");
  for (const auto& g : grid) g.validate();
  auto eval_set = select_split(data, Split::test);
  if (eval_set.empty()) eval_set = select_split(data, Split::train);
  std::vector<AblationRow> rows(grid.size());
  // Grid points run in parallel; each trains single-threaded so results do
  // not depend on `jobs`.
  auto inner = train_cfg;
  inner.jobs = 1;
  parallel_for(grid.size(), jobs, [&](std::size_t i) {
    const auto trained = train(data, inner, scorer_cfg, grid[i]);
    const auto prepared = prepare_questions(eval_set, grid[i]);
    rows[i] = {grid[i], evaluate_prepared(trained.best, prepared), trained.best_epoch};
  });
  return rows;
}

}  // namespace aqtc
