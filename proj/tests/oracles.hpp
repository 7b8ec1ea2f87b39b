#pragma once

// Independent reference implementations used only by tests. They use plain
// std::vector loops and long double where cheap, and share no code with the
// library paths they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using VecD = std::vector<double>;
using MatD = std::vector<VecD>;  // row-major rows

// Naive TF-IDF: for each doc and each vocabulary word, count directly.
inline VecD tfidf_scores(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& question) {
  std::set<std::string> vocab_set;
  for (const auto& d : docs) vocab_set.insert(d.begin(), d.end());
  const std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
  const long double n = static_cast<long double>(docs.size());
  std::vector<long double> idf;
  for (const auto& w : vocab) {
    long double df = 0;
    for (const auto& d : docs) df += std::count(d.begin(), d.end(), w) > 0 ? 1 : 0;
    idf.push_back(std::log((1.0L + n) / (1.0L + df)) + 1.0L);
  }
  auto embed = [&](const std::vector<std::string>& tokens) {
    std::vector<long double> v;
    long double norm = 0;
    for (std::size_t t = 0; t < vocab.size(); ++t) {
      const long double tf = static_cast<long double>(std::count(tokens.begin(), tokens.end(), vocab[t]));
      v.push_back(tf * idf[t]);
      norm += v.back() * v.back();
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (auto& x : v) x /= norm;
    }
    return v;
  };
  const auto q = embed(question);
  VecD out;
  for (const auto& d : docs) {
    const auto dv = embed(d);
    long double dot = 0;
    for (std::size_t t = 0; t < vocab.size(); ++t) dot += dv[t] * q[t];
    out.push_back(static_cast<double>(dot));
  }
  return out;
}

inline VecD softmax_states(const std::vector<int>& states, double temperature) {
  long double total = 0;
  std::vector<long double> e;
  for (int s : states) {
    e.push_back(std::exp(static_cast<long double>(s) / temperature));
    total += e.back();
  }
  VecD out;
  for (auto x : e) out.push_back(static_cast<double>(x / total));
  return out;
}

// rank by explicit stable sort: descending score, ties by index.
inline unsigned rank_by_sort(const VecD& scores, std::size_t gt) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return static_cast<unsigned>(std::find(idx.begin(), idx.end(), gt) - idx.begin()) + 1;
}

inline VecD matvec(const MatD& m, const VecD& v) {
  VecD out(m.size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r) {
    for (std::size_t c = 0; c < v.size(); ++c) out[r] += m[r][c] * v[c];
  }
  return out;
}

inline VecD add(VecD a, const VecD& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Gru {
  MatD Wz, Wr, Wh, Uz, Ur, Uh;
  VecD bz, br, bh;
};

inline VecD gru(const Gru& p, const VecD& h, const VecD& x) {
  const auto az = add(add(matvec(p.Wz, x), matvec(p.Uz, h)), p.bz);
  const auto ar = add(add(matvec(p.Wr, x), matvec(p.Ur, h)), p.br);
  VecD rh(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) rh[i] = sigm(ar[i]) * h[i];
  const auto an = add(add(matvec(p.Wh, x), matvec(p.Uh, rh)), p.bh);
  VecD out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double z = sigm(az[i]);
    out[i] = (1.0 - z) * h[i] + z * std::tanh(an[i]);
  }
  return out;
}

struct Net {
  MatD W1, W2, V1, V2;
  VecD b1, b2, c1, c2;
  Gru gru;
};

inline VecD relu(VecD v) {
  for (auto& x : v) x = std::max(0.0, x);
  return v;
}

struct Candidate {
  VecD text, button;
};

struct Step {
  std::vector<Candidate> candidates;
  std::size_t gt;
};

// Straightforward forward pass; returns per-step probabilities.
inline std::vector<VecD> forward(const Net& net, const VecD& ctx_t, const VecD& ctx_v, const VecD& q,
                                 const std::vector<Step>& steps, bool teacher_forcing) {
  std::vector<VecD> probs;
  VecD h(net.gru.Uz.size(), 0.0);
  for (const auto& step : steps) {
    std::vector<VecD> states;
    VecD logits;
    for (const auto& c : step.candidates) {
      VecD x;
      for (const auto* part : {&ctx_t, &ctx_v, &q, &c.text, &c.button}) x.insert(x.end(), part->begin(), part->end());
      const auto u = add(matvec(net.W2, relu(add(matvec(net.W1, x), net.b1))), net.b2);
      const auto hn = gru(net.gru, h, u);
      states.push_back(hn);
      logits.push_back(add(matvec(net.V2, relu(add(matvec(net.V1, hn), net.c1))), net.c2)[0]);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    VecD p;
    double total = 0;
    for (double l : logits) total += std::exp(l - mx);
    for (double l : logits) p.push_back(std::exp(l - mx) / total);
    std::size_t carry = step.gt;
    if (!teacher_forcing) {
      carry = 0;
      for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[carry]) carry = i;
      }
    }
    h = states[carry];
    probs.push_back(p);
  }
  return probs;
}

}  // namespace oracle
