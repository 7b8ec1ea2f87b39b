// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "aqtc/aqtc.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace aqtc;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t configs = 0, passed = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (std::size_t d_gru : {4, 8}) {
      ScorerConfig cfg;
      cfg.d_t = 3;
      cfg.d_v = 4;
      cfg.d_hidden = 6;
      cfg.d_gru = d_gru;
      cfg.seed = seed;
      const auto report = grad_check(cfg, 1e-4, 1e-5);
      ++configs;
      passed += report.passed;
      if (report.max_relative_error >= worst) {
        worst = report.max_relative_error;
        worst_name = report.worst_parameter;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {passed == configs && configs >= 3 && secs < 30.0,
          fmt("%zu/%zu configs, max rel err %.3g (%s), %.2fs", passed, configs, worst, worst_name.c_str(), secs)};
}

Verdict overfit() {
  const auto t0 = Clock::now();
  const auto data = generate_synthetic(7, testing_support::overfit_spec());
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.adam.learning_rate = 1e-4;
  cfg.seed = 1;
  cfg.jobs = 1;
  const auto result = train(data, cfg, {}, {});
  const auto& last = result.history.back();
  const double secs = seconds_since(t0);
  return {last.r1 == 1.0 && last.loss < 0.05 && secs < 120.0,
          fmt("train R@1=%.3f final loss=%.5f (per step), %.1fs", last.r1, last.loss, secs)};
}

Verdict tfidf_oracle() {
  std::mt19937_64 rng(310);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tokens> corpus(1 + rng() % 10);
    for (auto& d : corpus) {
      d.resize(rng() % 31);
      for (auto& t : d) t = "t" + std::to_string(rng() % 20);
    }
    Tokens q(rng() % 31);
    for (auto& t : q) t = "t" + std::to_string(rng() % 25);
    const auto got = score_question(fit_tfidf(corpus), q);
    const auto ref = oracle::tfidf_scores(corpus, q);
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      worst = std::max(worst, std::abs(got[static_cast<Eigen::Index>(j)] - ref[j]));
    }
  }
  return {worst <= 1e-9, fmt("100 corpora, max |diff| %.3g", worst)};
}

Verdict aggregation_invariants() {
  std::mt19937_64 rng(410);
  std::uniform_real_distribution<double> temp(0.05, 10.0);
  std::normal_distribution<double> normal;
  double simplex = 0.0, mean_gap = 0.0, hot_gap = 0.0;
  std::size_t monotone_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng() % 12;
    std::vector<std::int8_t> s(T);
    for (auto& x : s) x = static_cast<std::int8_t>(static_cast<int>(rng() % 3) - 1);
    const double tau = temp(rng);
    const auto w = hoi_weights(s, tau);
    simplex = std::max(simplex, std::abs(w.sum() - 1.0));
    if ((w.array() <= 0.0).any()) simplex = 1.0;
    const auto ref = oracle::softmax_states({s.begin(), s.end()}, tau);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t k = 0; k < T; ++k) {
        if (s[i] > s[k] && !(w[static_cast<Eigen::Index>(i)] > w[static_cast<Eigen::Index>(k)])) ++monotone_violations;
      }
      if (std::abs(w[static_cast<Eigen::Index>(i)] - ref[i]) > 1e-12) ++monotone_violations;
    }
    Mat frames(static_cast<Eigen::Index>(T), 5);
    for (auto& x : frames.reshaped()) x = normal(rng);
    const std::vector<std::int8_t> same(T, s[0]);
    AggregationConfig cfg;
    cfg.temperature = tau;
    const Vec pooled = aggregate_clip(frames, same, cfg);
    const Vec mean = frames.colwise().mean().transpose();
    mean_gap = std::max(mean_gap, (pooled - mean).cwiseAbs().maxCoeff());
    const auto flat = hoi_weights(s, 1e6);
    hot_gap = std::max(hot_gap, (flat.array() - 1.0 / static_cast<double>(T)).abs().maxCoeff());
  }
  return {simplex <= 1e-9 && monotone_violations == 0 && mean_gap <= 1e-12 && hot_gap < 1e-5,
          fmt("1000 vectors: |sum-1|<=%.2g, monotone violations %zu, uniform-vs-mean %.2g, tau=1e6 dev %.2g",
              simplex, monotone_violations, mean_gap, hot_gap)};
}

Verdict metric_oracle() {
  std::mt19937_64 rng(510);
  std::size_t mismatches = 0, order_violations = 0, steps_total = 0;
  for (int fixture = 0; fixture < 100; ++fixture) {
    std::vector<QuestionRecord> qs(1 + rng() % 6);
    std::vector<ScoreTensor> scores;
    std::size_t hit1 = 0, hit3 = 0, steps = 0;
    std::vector<unsigned> expected;
    // Coarse score levels so ties are common.
    const int levels = 2 + static_cast<int>(rng() % 4);
    for (std::size_t i = 0; i < qs.size(); ++i) {
      qs[i].id = "q" + std::to_string(i);
      ScoreTensor st{qs[i].id, {}, {}};
      const std::size_t n_steps = 1 + rng() % 5;
      for (std::size_t s = 0; s < n_steps; ++s) {
        const std::size_t n = 2 + rng() % 6;
        StepRecord step;
        step.candidates.resize(n);
        step.ground_truth_index = rng() % n;
        Vec v(static_cast<Eigen::Index>(n));
        for (auto& x : v) x = static_cast<double>(rng() % static_cast<unsigned>(levels)) / levels;
        const auto rank = oracle::rank_by_sort({v.begin(), v.end()}, step.ground_truth_index);
        expected.push_back(rank);
        hit1 += rank <= 1;
        hit3 += rank <= 3;
        ++steps;
        st.probs.push_back(v);
        st.logits.push_back(v);
        qs[i].steps.push_back(step);
      }
      scores.push_back(st);
    }
    std::vector<const QuestionRecord*> ptrs;
    for (const auto& q : qs) ptrs.push_back(&q);
    const auto r = evaluate(scores, ptrs);
    for (std::size_t k = 0; k < expected.size(); ++k) mismatches += r.per_step[k].rank != expected[k];
    mismatches += r.r1 != static_cast<double>(hit1) / static_cast<double>(steps);
    mismatches += r.r3 != static_cast<double>(hit3) / static_cast<double>(steps);
    order_violations += r.r1 > r.r3;
    steps_total += steps;
  }
  return {mismatches == 0 && order_violations == 0,
          fmt("100 fixtures, %zu steps, %zu mismatches, %zu R@1>R@3", steps_total, mismatches, order_violations)};
}

Verdict ablation_direction() {
  const auto t0 = Clock::now();
  TrainConfig tcfg;
  tcfg.epochs = 60;
  tcfg.adam.learning_rate = 1e-3;
  ScorerConfig scfg;
  scfg.d_hidden = 32;
  scfg.d_gru = 32;
  AggregationConfig hoi, mean;
  mean.use_hoi = false;
  const std::vector<AggregationConfig> grid{hoi, mean};
  double with = 0.0, without = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = generate_synthetic(101 + seed, testing_support::hoi_spec());
    tcfg.seed = seed;
    scfg.seed = seed;
    const auto rows = run_ablation(data, grid, tcfg, scfg, default_jobs());
    with += rows[0].result.r1 / 5.0;
    without += rows[1].result.r1 / 5.0;
    per_seed += fmt(" %.2f/%.2f", rows[0].result.r1, rows[1].result.r1);
  }
  return {with > without, fmt("mean test R@1 hoi=%.3f mean-pool=%.3f (per seed%s), %.1fs", with, without,
                              per_seed.c_str(), seconds_since(t0))};
}

bool same_scores(const std::vector<ScoreTensor>& a, const std::vector<ScoreTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].probs.size() != b[i].probs.size()) return false;
    for (std::size_t s = 0; s < a[i].probs.size(); ++s) {
      if (a[i].probs[s] != b[i].probs[s]) return false;
    }
  }
  return true;
}

bool same_eval(const EvalResult& a, const EvalResult& b) {
  if (a.r1 != b.r1 || a.r3 != b.r3 || a.per_step.size() != b.per_step.size()) return false;
  for (std::size_t i = 0; i < a.per_step.size(); ++i) {
    if (a.per_step[i].rank != b.per_step[i].rank) return false;
  }
  return true;
}

Verdict ensemble_identities() {
  testing_support::TempDir dir;
  const auto data = generate_synthetic(7, testing_support::overfit_spec());
  TrainConfig tcfg;
  tcfg.epochs = 10;
  tcfg.adam.learning_rate = 1e-3;
  ScorerConfig scfg;
  scfg.d_hidden = 16;
  scfg.d_gru = 8;
  std::vector<std::vector<ScoreTensor>> members;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    tcfg.seed = seed;
    scfg.seed = seed;
    const auto trained = train(data, tcfg, scfg, {});
    const auto path = dir / ("m" + std::to_string(seed) + ".fp");
    save_checkpoint({trained.scorer, {}, trained.best}, path);
    members.push_back(score_with_checkpoint(load_checkpoint(path), data));
  }
  const auto questions = flatten_questions(data);
  const auto solo = evaluate(members[0], questions);

  bool identities = true;
  const EnsembleSpec single{{{dir / "m0.fp", 1.0}}, true, FusionMode::probabilities};
  identities &= same_eval(evaluate_ensemble(single, data).ensemble, solo);
  const EnsembleSpec twice{{{dir / "m0.fp", 0.5}, {dir / "m0.fp", 0.5}}, true, FusionMode::probabilities};
  identities &= same_eval(evaluate_ensemble(twice, data).ensemble, solo);
  const std::vector<std::vector<ScoreTensor>> dup{members[0], members[0]};
  identities &= same_scores(combine(dup, std::vector<double>{1.0, 1.0}), members[0]);
  identities &= same_scores(combine(std::span(members).first(1), std::vector<double>{3.0}), members[0]);

  std::mt19937_64 rng(710);
  std::uniform_real_distribution<double> weight(0.0, 5.0), scale(0.01, 100.0);
  double simplex = 0.0, rescale = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w{weight(rng), weight(rng), weight(rng) + 1e-3};
    const auto a = combine(members, w);
    const double k = scale(rng);
    for (auto& x : w) x *= k;
    const auto b = combine(members, w);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t s = 0; s < a[i].probs.size(); ++s) {
        simplex = std::max(simplex, std::abs(a[i].probs[s].sum() - 1.0));
        rescale = std::max(rescale, (a[i].probs[s] - b[i].probs[s]).cwiseAbs().maxCoeff());
        if (argmax(a[i].probs[s]) != argmax(b[i].probs[s])) rescale = 1.0;
      }
    }
  }
  return {identities && simplex <= 1e-6 && rescale <= 1e-12,
          fmt("solo/duplicate identities %s, simplex |sum-1|<=%.2g, rescale max diff %.2g",
              identities ? "exact" : "BROKEN", simplex, rescale)};
}

Verdict determinism_and_format() {
  testing_support::TempDir dir;
  const auto data = generate_synthetic(7, testing_support::overfit_spec());
  TrainConfig tcfg;
  tcfg.epochs = 15;
  tcfg.adam.learning_rate = 1e-3;
  tcfg.batch_size = 2;
  tcfg.seed = 5;
  ScorerConfig scfg;
  scfg.d_hidden = 16;
  scfg.d_gru = 8;
  scfg.seed = 5;
  for (const char* run : {"a", "b"}) {
    const auto r = train(data, tcfg, scfg, {});
    write_text(dir / (std::string(run) + ".csv"), history_csv(r.history));
    save_checkpoint({r.scorer, {}, r.best}, dir / (std::string(run) + "_best.fp"));
    save_checkpoint({r.scorer, {}, r.last}, dir / (std::string(run) + "_last.fp"));
  }
  bool identical = true;
  for (const char* f : {".csv", "_best.fp", "_last.fp", "_best.fp.json"}) {
    identical &= read_file_bytes(dir / (std::string("a") + f)) == read_file_bytes(dir / (std::string("b") + f));
  }

  std::mt19937_64 rng(810);
  std::normal_distribution<float> normal;
  std::size_t roundtrip_failures = 0;
  for (int i = 0; i < 200; ++i) {
    FeatPack pack;
    for (int e = 0; e < static_cast<int>(rng() % 5); ++e) {
      const std::uint32_t r = static_cast<std::uint32_t>(rng() % 4), c = static_cast<std::uint32_t>(1 + rng() % 4);
      std::vector<float> v(r * c);
      for (auto& x : v) x = normal(rng);
      pack["f" + std::to_string(e)] = DenseArray::f32({r, c}, v);
      std::vector<std::int8_t> s(c);
      for (auto& x : s) x = static_cast<std::int8_t>(rng());
      pack["i" + std::to_string(e)] = DenseArray::i8({c}, s);
    }
    write_featpack(pack, dir / "rt.fp");
    roundtrip_failures += !(read_featpack(dir / "rt.fp") == pack);
  }
  const auto ckpt_bytes = read_file_bytes(dir / "a_best.fp");
  std::size_t undetected = 0, flips = 0;
  for (std::size_t i = 0; i < ckpt_bytes.size(); ++i) {
    for (std::uint8_t mask : {std::uint8_t{0x01}, std::uint8_t{0x80}, static_cast<std::uint8_t>(1 + rng() % 255)}) {
      auto bad = ckpt_bytes;
      bad[i] ^= mask;
      ++flips;
      try {
        decode_featpack(bad);
        ++undetected;
      } catch (const ValidationError&) {
      }
    }
  }
  return {identical && roundtrip_failures == 0 && undetected == 0,
          fmt("history/checkpoints %s, %zu round-trip failures, %zu/%zu corruptions undetected",
              identical ? "bit-identical" : "DIFFER", roundtrip_failures, undetected, flips)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"overfit synthetic fixture", overfit},
      {"tf-idf oracle equivalence", tfidf_oracle},
      {"aggregation invariants", aggregation_invariants},
      {"metric oracle equivalence", metric_oracle},
      {"ablation directionality", ablation_direction},
      {"ensemble identities", ensemble_identities},
      {"determinism and format", determinism_and_format},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s [%zu] %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
