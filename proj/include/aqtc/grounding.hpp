#pragma once

// TF-IDF question grounding. Each function paragraph is a document; a
// question is scored against every paragraph by cosine similarity.
//
//   tf(t, d)  = raw count of t in d
//   idf(t)    = ln((1 + n) / (1 + df(t))) + 1
//   doc[d][t] = tf * idf, rows L2-normalized (all-zero rows stay zero)

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"

namespace aqtc {

struct TfIdfModel {
  std::map<std::string, std::size_t> vocabulary;  // token -> column, sorted by token
  Vec idf;                                        // |V|
  Mat doc_vectors;                                // n_docs x |V|

  std::size_t documents() const noexcept { return static_cast<std::size_t>(doc_vectors.rows()); }
};

struct GroundingScores {
  std::string question_id;
  Vec scores;  // one per function, each in [0, 1]
};

namespace detail {

inline void l2_normalize(Eigen::Ref<Vec> v) {
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
}

// Row-vector form keeps doc_vectors rows addressable in place.
inline void l2_normalize_row(Mat& m, Eigen::Index row) {
  const double norm = m.row(row).norm();
  if (norm > 0.0) m.row(row) /= norm;
}

}  // namespace detail

inline TfIdfModel fit_tfidf(std::span<const Tokens> paragraphs) {
  if (paragraphs.empty()) throw ValidationError("fit_tfidf needs at least one paragraph");
  TfIdfModel model;
  for (const auto& p : paragraphs) {
    for (const auto& tok : p) model.vocabulary.emplace(tok, 0);
  }
  std::size_t col = 0;
  for (auto& [tok, index] : model.vocabulary) index = col++;

  const auto n = static_cast<Eigen::Index>(paragraphs.size());
  const auto v = static_cast<Eigen::Index>(model.vocabulary.size());
  model.doc_vectors = Mat::Zero(n, v);
  for (Eigen::Index d = 0; d < n; ++d) {
    for (const auto& tok : paragraphs[static_cast<std::size_t>(d)]) {
      model.doc_vectors(d, static_cast<Eigen::Index>(model.vocabulary.at(tok))) += 1.0;
    }
  }
  model.idf.resize(v);
  for (Eigen::Index t = 0; t < v; ++t) {
    const double df = static_cast<double>((model.doc_vectors.col(t).array() > 0.0).count());
    model.idf[t] = std::log((1.0 + static_cast<double>(n)) / (1.0 + df)) + 1.0;
  }
  for (Eigen::Index d = 0; d < n; ++d) {
    model.doc_vectors.row(d).array() *= model.idf.transpose().array();
    detail::l2_normalize_row(model.doc_vectors, d);
  }
  return model;
}

// Out-of-vocabulary tokens are ignored; an all-OOV question scores zero
// against every paragraph.
inline Vec score_question(const TfIdfModel& model, const Tokens& question_tokens) {
  Vec q = Vec::Zero(static_cast<Eigen::Index>(model.vocabulary.size()));
  for (const auto& tok : question_tokens) {
    if (auto it = model.vocabulary.find(tok); it != model.vocabulary.end()) {
      q[static_cast<Eigen::Index>(it->second)] += 1.0;
    }
  }
  q.array() *= model.idf.array();
  detail::l2_normalize(q);
  Vec scores = model.doc_vectors * q;
  // Rounding can push a cosine of unit vectors a hair past 1.
  return scores.cwiseMax(0.0).cwiseMin(1.0);
}

inline TfIdfModel fit_task(const TaskManifest& task) {
  std::vector<Tokens> paragraphs;
  paragraphs.reserve(task.functions.size());
  for (const auto& f : task.functions) paragraphs.push_back(f.paragraph_tokens);
  return fit_tfidf(paragraphs);
}

// Grounding scores for every question of one task, fitted on that task's
// functions only.
inline std::vector<GroundingScores> ground_task(const TaskManifest& task) {
  const auto model = fit_task(task);
  std::vector<GroundingScores> out;
  out.reserve(task.questions.size());
  for (const auto& q : task.questions) out.push_back({q.id, score_question(model, q.question_tokens)});
  return out;
}

}  // namespace aqtc
