#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "aqtc/aqtc.hpp"

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("aqtc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// 1 task, 1 function, 1 question, 1 step, 2 candidates, d_v = 3, d_t = 2.
inline aqtc::Dataset minimal_dataset() {
  aqtc::TaskManifest task;
  task.task_id = "t0";
  task.dims = {3, 2};
  aqtc::FunctionRecord f;
  f.id = "f0";
  f.paragraph_tokens = {"press", "power"};
  f.frame_embeddings = aqtc::Mat::Ones(2, 3);
  f.hoi_states = {1, -1};
  f.text_embedding = aqtc::Vec::Ones(2);
  task.functions.push_back(f);
  aqtc::QuestionRecord q;
  q.id = "q7";
  q.question_tokens = {"power"};
  q.question_embedding = aqtc::Vec::Constant(2, 0.5);
  aqtc::StepRecord s;
  s.candidates = {{aqtc::Vec::Zero(2), aqtc::Vec::Zero(3)}, {aqtc::Vec::Ones(2), aqtc::Vec::Ones(3)}};
  s.ground_truth_index = 1;
  q.steps.push_back(s);
  task.questions.push_back(q);
  return {task};
}

inline aqtc::SyntheticSpec overfit_spec() {
  aqtc::SyntheticSpec spec;
  spec.tasks = 3;
  spec.functions_per_task = 5;
  spec.questions_per_task = 2;
  spec.steps_per_question = 3;
  spec.candidates_per_step = 4;
  spec.d_v = 16;
  spec.d_t = 16;
  return spec;
}

// The fixture where only interaction frames carry the answer signal.
inline aqtc::SyntheticSpec hoi_spec() {
  aqtc::SyntheticSpec spec;
  spec.tasks = 16;
  spec.test_tasks = 4;
  spec.questions_per_task = 4;
  spec.d_v = 8;
  spec.d_t = 8;
  spec.interaction_signal_only = true;
  spec.visual_prototypes = 4;
  return spec;
}

}  // namespace testing_support
