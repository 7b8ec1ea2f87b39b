#pragma once

// Answer scorer: for every candidate of a step
//
//   x      = [ctx.text | ctx.visual | E_q | E_a_t | E_a_v]
//   u      = W2 relu(W1 x + b1) + b2
//   h      = GRU(h_prev, u)
//   logit  = V2 relu(V1 h + c1) + c2
//
// and softmax over the step's logits. h_prev is the state carried out of
// the previous step: the ground-truth candidate's state while training
// (teacher forcing), the predicted candidate's state at inference.
// h_0 = 0. All math is f64.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "aqtc/aggregation.hpp"
#include "aqtc/dataset.hpp"
#include "aqtc/errors.hpp"
#include "aqtc/parallel.hpp"

namespace aqtc {

struct ScorerConfig {
  std::size_t d_t = 0;
  std::size_t d_v = 0;
  std::size_t d_hidden = 128;
  std::size_t d_gru = 128;
  std::uint64_t seed = 0;

  std::size_t d_in() const noexcept { return 3 * d_t + 2 * d_v; }
  std::size_t d_head() const noexcept { return std::max<std::size_t>(1, d_gru / 2); }

  void validate() const {
    if (d_t == 0 || d_v == 0 || d_hidden == 0 || d_gru == 0) {
      throw ValidationError("scorer dims must all be >= 1");
    }
  }
};

struct ScorerParams {
  // context-grounding MLP
  Mat W1;
  Vec b1;
  Mat W2;
  Vec b2;
  // GRU cell
  Mat W_z, W_r, W_h;
  Mat U_z, U_r, U_h;
  Vec b_z, b_r, b_h;
  // prediction head
  Mat V1;
  Vec c1;
  Mat V2;
  Vec c2;

  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  static ScorerParams zeros(const ScorerConfig& cfg) {
    const auto in = static_cast<Eigen::Index>(cfg.d_in());
    const auto hid = static_cast<Eigen::Index>(cfg.d_hidden);
    const auto g = static_cast<Eigen::Index>(cfg.d_gru);
    const auto hd = static_cast<Eigen::Index>(cfg.d_head());
    ScorerParams p;
    p.W1 = Mat::Zero(hid, in);
    p.b1 = Vec::Zero(hid);
    p.W2 = Mat::Zero(g, hid);
    p.b2 = Vec::Zero(g);
    for (Mat* m : {&p.W_z, &p.W_r, &p.W_h, &p.U_z, &p.U_r, &p.U_h}) *m = Mat::Zero(g, g);
    for (Vec* v : {&p.b_z, &p.b_r, &p.b_h}) *v = Vec::Zero(g);
    p.V1 = Mat::Zero(hd, g);
    p.c1 = Vec::Zero(hd);
    p.V2 = Mat::Zero(1, hd);
    p.c2 = Vec::Zero(1);
    return p;
  }

  ScorerParams zeros_like() const {
    ScorerParams out = *this;
    out.for_each([](std::string_view, auto& t) { t.setZero(); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](std::string_view, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  ScorerParams& operator+=(const ScorerParams& other) {
    auto dst = flat();
    const auto src = other.flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return *this;
  }

  ScorerParams& operator*=(double s) {
    for_each([s](std::string_view, auto& t) { t *= s; });
    return *this;
  }

  // Flat views in visit order, for element-wise passes (optimizer, checks).
  std::vector<Eigen::Map<Eigen::ArrayXd>> flat() {
    std::vector<Eigen::Map<Eigen::ArrayXd>> out;
    for_each([&](std::string_view, auto& t) { out.emplace_back(t.data(), t.size()); });
    return out;
  }
  std::vector<Eigen::Map<const Eigen::ArrayXd>> flat() const {
    std::vector<Eigen::Map<const Eigen::ArrayXd>> out;
    for_each([&](std::string_view, const auto& t) { out.emplace_back(t.data(), t.size()); });
    return out;
  }

  static std::vector<std::string> names() {
    std::vector<std::string> out;
    ScorerParams p;
    p.for_each([&](std::string_view name, const auto&) { out.emplace_back(name); });
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& p, F& f) {
    f("mlp/W1", p.W1);
    f("mlp/b1", p.b1);
    f("mlp/W2", p.W2);
    f("mlp/b2", p.b2);
    f("gru/W_z", p.W_z);
    f("gru/W_r", p.W_r);
    f("gru/W_h", p.W_h);
    f("gru/U_z", p.U_z);
    f("gru/U_r", p.U_r);
    f("gru/U_h", p.U_h);
    f("gru/b_z", p.b_z);
    f("gru/b_r", p.b_r);
    f("gru/b_h", p.b_h);
    f("head/V1", p.V1);
    f("head/c1", p.c1);
    f("head/V2", p.V2);
    f("head/c2", p.c2);
  }
};

// Xavier-uniform weights, zero biases, drawn in visit order.
inline ScorerParams init_params(const ScorerConfig& cfg) {
  cfg.validate();
  auto params = ScorerParams::zeros(cfg);
  std::mt19937_64 rng(cfg.seed);
  params.for_each([&](std::string_view, auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Mat>) {
      const double a = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
    }
  });
  return params;
}

inline Vec fuse_candidate(const FusedContext& ctx, const Vec& question, const CandidateRecord& cand) {
  const auto d_t = ctx.text.size();
  const auto d_v = ctx.visual.size();
  if (question.size() != d_t || cand.text_embedding.size() != d_t || cand.button_embedding.size() != d_v) {
    throw ValidationError("fuse_candidate: dimension mismatch");
  }
  Vec x(3 * d_t + 2 * d_v);
  x << ctx.text, ctx.visual, question, cand.text_embedding, cand.button_embedding;
  return x;
}

namespace detail {

inline Vec sigmoid(const Vec& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }
inline Vec relu(const Vec& a) { return a.cwiseMax(0.0); }
inline Vec relu_mask(const Vec& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

}  // namespace detail

// Numerically stable softmax. Shifting every logit by a constant leaves the
// result unchanged.
inline Vec softmax(const Vec& logits) {
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

inline Vec log_softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

// Lowest index among the maxima.
inline std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

struct GruActivations {
  Vec z, r, n, h;
};

inline GruActivations gru_forward(const ScorerParams& p, const Vec& h, const Vec& x) {
  GruActivations a;
  a.z = detail::sigmoid(p.W_z * x + p.U_z * h + p.b_z);
  a.r = detail::sigmoid(p.W_r * x + p.U_r * h + p.b_r);
  a.n = (p.W_h * x + p.U_h * a.r.cwiseProduct(h) + p.b_h).array().tanh().matrix();
  a.h = (1.0 - a.z.array()).matrix().cwiseProduct(h) + a.z.cwiseProduct(a.n);
  return a;
}

inline Vec gru_cell(const ScorerParams& p, const Vec& h, const Vec& x) {
  if (h.size() != p.U_z.cols() || x.size() != p.W_z.cols()) throw ValidationError("gru_cell: dimension mismatch");
  return gru_forward(p, h, x).h;
}

enum class Mode { teacher_forcing, inference };

// Post-softmax probabilities (and the logits behind them) for every step of
// one question.
struct ScoreTensor {
  std::string question_id;
  std::vector<Vec> probs;
  std::vector<Vec> logits;
};

struct CandidateCache {
  Vec x, hidden_pre, u;
  GruActivations gru;
  Vec head_pre;
};

struct StepCache {
  Vec h_prev;
  std::vector<CandidateCache> candidates;
  std::size_t carried = 0;
};

struct ForwardCache {
  std::vector<StepCache> steps;
};

inline ScoreTensor forward_question(const ScorerParams& p, const FusedContext& ctx, const QuestionRecord& q,
                                    Mode mode, ForwardCache* cache = nullptr) {
  ScoreTensor out;
  out.question_id = q.id;
  if (cache) cache->steps.clear();
  Vec h = Vec::Zero(p.U_z.rows());
  for (std::size_t s = 0; s < q.steps.size(); ++s) {
    const auto& step = q.steps[s];
    const auto n = static_cast<Eigen::Index>(step.candidates.size());
    Vec logits(n);
    std::vector<Vec> states;
    StepCache sc;
    sc.h_prev = h;
    for (Eigen::Index c = 0; c < n; ++c) {
      CandidateCache cc;
      cc.x = fuse_candidate(ctx, q.question_embedding, step.candidates[static_cast<std::size_t>(c)]);
      if (cc.x.size() != p.W1.cols()) throw ValidationError("forward_question: input width does not match scorer");
      cc.hidden_pre = p.W1 * cc.x + p.b1;
      cc.u = p.W2 * detail::relu(cc.hidden_pre) + p.b2;
      cc.gru = gru_forward(p, h, cc.u);
      cc.head_pre = p.V1 * cc.gru.h + p.c1;
      logits[c] = (p.V2 * detail::relu(cc.head_pre))(0) + p.c2[0];
      states.push_back(cc.gru.h);
      if (cache) sc.candidates.push_back(std::move(cc));
    }
    if (!logits.allFinite()) {
      throw NumericalError("non-finite logit in question '" + q.id + "' step " + std::to_string(s));
    }
    Vec probs = softmax(logits);
    sc.carried = mode == Mode::teacher_forcing ? step.ground_truth_index : argmax(probs);
    h = states[sc.carried];
    out.logits.push_back(std::move(logits));
    out.probs.push_back(std::move(probs));
    if (cache) cache->steps.push_back(std::move(sc));
  }
  return out;
}

// Largest per-step loss; -log of the smallest admissible probability.
inline const double kMaxStepLoss = -std::log(1e-12);

struct LossAndGrad {
  double loss = 0.0;
  ScorerParams grad;
  // Steps whose ground-truth probability fell below 1e-12.
  std::size_t clamped_steps = 0;
};

struct Sample {
  const FusedContext* context;
  const QuestionRecord* question;
};

namespace detail {

// Backprop of one candidate from d(logit) and the extra gradient arriving
// at its GRU output; returns d(h_prev).
inline Vec candidate_backward(const ScorerParams& p, const Vec& h_prev, const CandidateCache& cc, double dlogit,
                              const Vec& dh_extra, ScorerParams& g) {
  // head
  const Vec head_act = relu(cc.head_pre);
  g.V2 += dlogit * head_act.transpose();
  g.c2[0] += dlogit;
  const Vec dhead_pre = (p.V2.transpose() * dlogit).cwiseProduct(relu_mask(cc.head_pre));
  g.V1 += dhead_pre * cc.gru.h.transpose();
  g.c1 += dhead_pre;
  const Vec dh = p.V1.transpose() * dhead_pre + dh_extra;

  // GRU
  const auto& [z, r, n, h_new] = cc.gru;
  const Vec dz = dh.cwiseProduct(n - h_prev);
  const Vec dn = dh.cwiseProduct(z);
  Vec dh_prev = dh.cwiseProduct((1.0 - z.array()).matrix());
  const Vec da_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
  const Vec rh = r.cwiseProduct(h_prev);
  g.W_h += da_n * cc.u.transpose();
  g.U_h += da_n * rh.transpose();
  g.b_h += da_n;
  const Vec drh = p.U_h.transpose() * da_n;
  const Vec dr = drh.cwiseProduct(h_prev);
  dh_prev += drh.cwiseProduct(r);
  const Vec da_z = dz.cwiseProduct((z.array() * (1.0 - z.array())).matrix());
  const Vec da_r = dr.cwiseProduct((r.array() * (1.0 - r.array())).matrix());
  g.W_z += da_z * cc.u.transpose();
  g.U_z += da_z * h_prev.transpose();
  g.b_z += da_z;
  g.W_r += da_r * cc.u.transpose();
  g.U_r += da_r * h_prev.transpose();
  g.b_r += da_r;
  dh_prev += p.U_z.transpose() * da_z + p.U_r.transpose() * da_r;
  const Vec du = p.W_z.transpose() * da_z + p.W_r.transpose() * da_r + p.W_h.transpose() * da_n;

  // MLP
  g.W2 += du * relu(cc.hidden_pre).transpose();
  g.b2 += du;
  const Vec dhidden_pre = (p.W2.transpose() * du).cwiseProduct(relu_mask(cc.hidden_pre));
  g.W1 += dhidden_pre * cc.x.transpose();
  g.b1 += dhidden_pre;
  return dh_prev;
}

}  // namespace detail

// Cross-entropy of one question under teacher forcing, accumulating the
// exact gradient into `grad`.
inline double question_loss_and_grad(const ScorerParams& p, const FusedContext& ctx, const QuestionRecord& q,
                                     ScorerParams& grad, std::size_t* clamped = nullptr) {
  ForwardCache cache;
  const auto scores = forward_question(p, ctx, q, Mode::teacher_forcing, &cache);
  double loss = 0.0;
  for (std::size_t s = 0; s < q.steps.size(); ++s) {
    const double nll = -log_softmax(scores.logits[s])[static_cast<Eigen::Index>(q.steps[s].ground_truth_index)];
    if (nll > kMaxStepLoss) {
      loss += kMaxStepLoss;
      if (clamped) ++*clamped;
    } else {
      loss += nll;
    }
  }
  const Vec zero = Vec::Zero(p.U_z.rows());
  Vec dcarry = zero;
  for (std::size_t s = q.steps.size(); s-- > 0;) {
    const auto& sc = cache.steps[s];
    const auto gt = q.steps[s].ground_truth_index;
    Vec dh_prev = zero;
    for (std::size_t c = 0; c < sc.candidates.size(); ++c) {
      const double dlogit = scores.probs[s][static_cast<Eigen::Index>(c)] - (c == gt ? 1.0 : 0.0);
      dh_prev += detail::candidate_backward(p, sc.h_prev, sc.candidates[c], dlogit,
                                            c == sc.carried ? dcarry : zero, grad);
    }
    dcarry = std::move(dh_prev);
  }
  return loss;
}

// Summed loss and gradient over a batch. Per-question gradients are reduced
// in batch order, so results are bit-identical for any `jobs`.
inline LossAndGrad loss_and_grad(const ScorerParams& p, std::span<const Sample> batch, std::size_t jobs = 1) {
  if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");
  const ScorerParams zero = p.zeros_like();
  LossAndGrad out{0.0, zero, 0};
  // Bounded chunks keep at most `chunk` gradient buffers alive.
  const std::size_t chunk = std::max<std::size_t>(jobs, 1) * 4;
  std::vector<ScorerParams> grads;
  std::vector<double> losses;
  std::vector<std::size_t> clamped;
  for (std::size_t begin = 0; begin < batch.size(); begin += chunk) {
    const auto n = std::min(chunk, batch.size() - begin);
    grads.assign(n, zero);
    losses.assign(n, 0.0);
    clamped.assign(n, 0);
    parallel_for(n, jobs, [&](std::size_t i) {
      const auto& sample = batch[begin + i];
      losses[i] = question_loss_and_grad(p, *sample.context, *sample.question, grads[i], &clamped[i]);
    });
    for (std::size_t i = 0; i < n; ++i) {
      out.loss += losses[i];
      out.grad += grads[i];
      out.clamped_steps += clamped[i];
    }
  }
  return out;
}

}  // namespace aqtc
