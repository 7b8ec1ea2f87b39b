#pragma once

// Deterministic synthetic datasets for tests and demos.
//
// Every function j of a task gets a visual key and a text key. A question
// targets one function: its tokens repeat that function's distinctive
// words, so TF-IDF grounding finds it, and every step's ground-truth
// candidate is built from the target function's keys while distractors are
// drawn independently.
//
// With `interaction_signal_only`, the answer signal lives exclusively in the
// interaction frames (state 1) of the target clip: hand-absent frames (-1)
// carry large distractor noise, candidate text carries nothing, and the
// only route to the answer is pooling the right frames.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"

namespace aqtc {

struct SyntheticSpec {
  std::size_t tasks = 3;
  std::size_t functions_per_task = 5;
  std::size_t questions_per_task = 2;
  std::size_t steps_per_question = 3;
  std::size_t candidates_per_step = 4;
  std::size_t d_v = 16;
  std::size_t d_t = 16;
  std::size_t frames_per_function = 8;
  // The last `test_tasks` tasks are put in the test split.
  std::size_t test_tasks = 0;
  bool interaction_signal_only = false;
  double distractor_noise = 3.0;
  // When > 0, visual keys come from a codebook of this many button
  // prototypes shared by all tasks, and distractor buttons are other
  // prototypes. 0 draws a fresh key per function.
  std::size_t visual_prototypes = 0;

  void validate() const {
    if (tasks == 0 || functions_per_task == 0 || questions_per_task == 0 || steps_per_question == 0 ||
        d_v == 0 || d_t == 0 || frames_per_function == 0) {
      throw ValidationError("synthetic spec: all counts must be >= 1");
    }
    if (candidates_per_step < 2) throw ValidationError("synthetic spec: candidates_per_step must be >= 2");
    if (test_tasks > tasks) throw ValidationError("synthetic spec: test_tasks exceeds tasks");
  }
};

namespace detail {

inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words = {"press", "the",  "button", "to",     "turn", "on",
                                                 "off",   "set",  "hold",   "device", "then", "mode"};
  return words;
}

class SyntheticRng {
 public:
  explicit SyntheticRng(std::uint64_t seed) : engine_(seed) {}

  // Values are rounded through f32 so the in-memory dataset equals what a
  // FEATPACK round trip would produce.
  double normal(double stddev = 1.0) {
    return static_cast<double>(static_cast<float>(stddev * normal_(engine_)));
  }
  Vec normal_vec(std::size_t n, double stddev = 1.0) {
    Vec v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = normal(stddev);
    return v;
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Vec as_f32(const Vec& v) { return v.cast<float>().cast<double>(); }

}  // namespace detail

inline Dataset generate_synthetic(std::uint64_t seed, const SyntheticSpec& spec) {
  spec.validate();
  detail::SyntheticRng rng(seed);
  const auto& common = detail::common_words();
  const bool hoi_mode = spec.interaction_signal_only;
  std::vector<Vec> codebook;
  for (std::size_t k = 0; k < spec.visual_prototypes; ++k) codebook.push_back(rng.normal_vec(spec.d_v));
  std::vector<std::size_t> prototype_of;
  Dataset data;
  for (std::size_t ti = 0; ti < spec.tasks; ++ti) {
    TaskManifest task;
    task.task_id = "task" + std::to_string(ti);
    task.dims = {spec.d_v, spec.d_t};
    task.split = ti + spec.test_tasks >= spec.tasks ? Split::test : Split::train;

    std::vector<Vec> vkey, tkey;
    std::vector<Tokens> distinctive;
    prototype_of.clear();
    for (std::size_t fj = 0; fj < spec.functions_per_task; ++fj) {
      FunctionRecord f;
      f.id = "f" + std::to_string(fj);
      if (codebook.empty()) {
        vkey.push_back(rng.normal_vec(spec.d_v));
      } else {
        prototype_of.push_back(rng.index(codebook.size()));
        vkey.push_back(codebook[prototype_of.back()]);
      }
      tkey.push_back(rng.normal_vec(spec.d_t));
      Tokens words;
      for (int k = 0; k < 3; ++k) words.push_back("w" + std::to_string(ti) + "x" + std::to_string(fj) + "x" + std::to_string(k));
      for (int k = 0; k < 4; ++k) f.paragraph_tokens.push_back(common[rng.index(common.size())]);
      for (const auto& w : words) f.paragraph_tokens.insert(f.paragraph_tokens.end(), 2, w);
      std::shuffle(f.paragraph_tokens.begin(), f.paragraph_tokens.end(), rng.engine());
      distinctive.push_back(std::move(words));

      const auto frames = spec.frames_per_function;
      f.hoi_states.resize(frames);
      for (auto& s : f.hoi_states) s = static_cast<std::int8_t>(static_cast<int>(rng.index(3)) - 1);
      // At least one interaction frame and, in signal mode, a majority of
      // hand-absent frames.
      f.hoi_states[rng.index(frames)] = 1;
      if (hoi_mode) {
        std::fill(f.hoi_states.begin(), f.hoi_states.end(), std::int8_t{-1});
        const auto interactions = std::max<std::size_t>(1, frames / 4);
        for (std::size_t k = 0; k < interactions; ++k) f.hoi_states[k] = 1;
        if (frames > interactions) f.hoi_states[interactions] = 0;
        std::shuffle(f.hoi_states.begin(), f.hoi_states.end(), rng.engine());
      }
      f.frame_embeddings.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(spec.d_v));
      for (std::size_t r = 0; r < frames; ++r) {
        Vec row;
        switch (f.hoi_states[r]) {
          case 1:
            row = vkey[fj] + rng.normal_vec(spec.d_v, 0.2);
            break;
          case 0:
            row = hoi_mode ? rng.normal_vec(spec.d_v, 0.3) : Vec(0.5 * vkey[fj] + rng.normal_vec(spec.d_v, 0.5));
            break;
          default:
            row = rng.normal_vec(spec.d_v, hoi_mode ? spec.distractor_noise : 1.0);
            break;
        }
        f.frame_embeddings.row(static_cast<Eigen::Index>(r)) = detail::as_f32(row).transpose();
      }
      f.global_embedding = hoi_mode ? rng.normal_vec(spec.d_v) : detail::as_f32(vkey[fj] + rng.normal_vec(spec.d_v, 0.3));
      f.text_embedding = detail::as_f32(tkey[fj] + rng.normal_vec(spec.d_t, 0.2));
      task.functions.push_back(std::move(f));
    }

    for (std::size_t qi = 0; qi < spec.questions_per_task; ++qi) {
      QuestionRecord q;
      q.id = "q" + std::to_string(qi);
      const auto target = rng.index(spec.functions_per_task);
      q.question_tokens = {"how", "to", distinctive[target][rng.index(3)], distinctive[target][rng.index(3)],
                           common[rng.index(common.size())]};
      q.question_embedding = detail::as_f32(tkey[target] + rng.normal_vec(spec.d_t, 0.5));
      for (std::size_t s = 0; s < spec.steps_per_question; ++s) {
        StepRecord step;
        step.ground_truth_index = rng.index(spec.candidates_per_step);
        for (std::size_t c = 0; c < spec.candidates_per_step; ++c) {
          CandidateRecord cand;
          if (c == step.ground_truth_index) {
            cand.text_embedding =
                hoi_mode ? rng.normal_vec(spec.d_t) : detail::as_f32(0.7 * tkey[target] + rng.normal_vec(spec.d_t, 0.7));
            cand.button_embedding = detail::as_f32(vkey[target] + rng.normal_vec(spec.d_v, hoi_mode ? 0.3 : 0.7));
          } else {
            cand.text_embedding = rng.normal_vec(spec.d_t);
            if (codebook.size() > 1) {
              auto k = rng.index(codebook.size() - 1);
              if (k >= prototype_of[target]) ++k;
              cand.button_embedding = detail::as_f32(codebook[k] + rng.normal_vec(spec.d_v, hoi_mode ? 0.3 : 0.7));
            } else {
              cand.button_embedding = rng.normal_vec(spec.d_v);
            }
          }
          step.candidates.push_back(std::move(cand));
        }
        q.steps.push_back(std::move(step));
      }
      task.questions.push_back(std::move(q));
    }
    validate_task(task);
    data.push_back(std::move(task));
  }
  return data;
}

}  // namespace aqtc
