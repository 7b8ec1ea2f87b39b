#pragma once

// Command-line front end. `run` is the whole program minus process setup,
// so tests can drive it in-process.
//
// Exit codes: 0 success, 1 invalid input (bad flags, validation, format or
// corruption errors), 2 runtime failure (I/O, numerical, anything else).

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "aqtc/aqtc.hpp"

namespace aqtc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Flat JSON object -> CLI11 config items for one subcommand. Keys are long
// option names without dashes ("lr", "hoi-temp"); arrays become
// multi-value inputs.
class JsonConfig : public CLI::Config {
 public:
  std::string section;

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      if (!section.empty()) item.parents = {section};
      item.name = key;
      auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

inline std::string sha256_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed for " + path.string());
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

// A manifest and every FEATPACK it references.
inline json hash_manifest_inputs(const fs::path& manifest) {
  json out = json::object();
  out[manifest.generic_string()] = sha256_file(manifest);
  std::ifstream in(manifest);
  try {
    const auto j = json::parse(in);
    for (const auto& t : j.at("tasks")) {
      const auto pack = manifest.parent_path() / t.at("featpack").get<std::string>();
      out[pack.generic_string()] = sha256_file(pack);
    }
  } catch (const json::exception&) {
    // load_manifest reports the real problem.
  }
  return out;
}

inline json hash_checkpoint(const fs::path& ckpt) {
  return {{ckpt.generic_string(), sha256_file(ckpt)},
          {sidecar_path(ckpt).generic_string(), sha256_file(sidecar_path(ckpt))}};
}

// Everything needed to repeat a run. Output locations and wall-clock time
// are left out so identical runs produce identical records.
inline void write_run_record(const fs::path& dir, const std::string& subcommand, const json& config, const json& inputs) {
  fs::create_directories(dir);
  const json record = {{"tool", "aqtc"},
                       {"format", "aqtc-run/1"},
                       {"subcommand", subcommand},
                       {"config", config},
                       {"inputs", inputs}};
  write_text(dir / "run.json", record.dump(2) + "\n");
}

inline void setup_logging() {
  auto logger = spdlog::get("aqtc");
  if (!logger) {
    logger = spdlog::stderr_color_mt("aqtc");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("AQTC_LOG")) {
    const std::string level = env;
    if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "warn") spdlog::set_level(spdlog::level::warn);
  }
}

struct AggregationFlags {
  double hoi_temp = 1.0;
  bool no_hoi = false;
  bool use_global = false;

  void add_to(CLI::App* app) {
    app->add_option("--hoi-temp", hoi_temp, "Softmax temperature over HOI states")->capture_default_str();
    app->add_flag("--no-hoi", no_hoi, "Temporal mean pooling instead of HOI weighting");
    app->add_flag("--use-global", use_global, "Use clip-level embeddings where present");
  }
  AggregationConfig config() const { return {hoi_temp, !no_hoi, use_global}; }
};

inline Dataset select(const Dataset& data, const std::string& split) {
  if (split == "all") return data;
  auto out = select_split(data, parse_split(split));
  if (out.empty()) throw ValidationError("dataset has no '" + split + "' tasks");
  return out;
}

inline json grounding_dump(const Dataset& data) {
  json out = json::object();
  for (const auto& task : data) {
    json jt = json::object();
    for (const auto& g : ground_task(task)) jt[g.question_id] = std::vector<double>(g.scores.begin(), g.scores.end());
    out[task.task_id] = jt;
  }
  return out;
}

inline std::string recall_line(const EvalResult& r) {
  return "R@1=" + format_number(r.r1, "%.3f") + " R@3=" + format_number(r.r3, "%.3f") +
         " steps=" + std::to_string(r.per_step.size());
}

inline std::vector<AggregationConfig> load_grid(const fs::path& path) {
  json j;
  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid: " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("grid is not valid JSON: " + std::string(e.what()));
    }
  }
  const json& points = j.is_object() && j.contains("grid") ? j.at("grid") : j;
  if (!points.is_array() || points.empty()) throw ValidationError("grid must be a non-empty array");
  std::vector<AggregationConfig> grid;
  try {
    for (const auto& p : points) {
      AggregationConfig cfg;
      cfg.use_hoi = p.value("use_hoi", true);
      cfg.use_global = p.value("use_global", false);
      cfg.temperature = p.value("temperature", 1.0);
      cfg.validate();
      grid.push_back(cfg);
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed grid entry: " + std::string(e.what()));
  }
  return grid;
}

inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  setup_logging();
  CLI::App app{"aqtc: function-interaction centric question-driven task completion"};
  app.name("aqtc");
  app.require_subcommand(1);
  // --config is owned by the root app (CLI11 reads config files there) and
  // reaches it from after the subcommand name through fallthrough.
  const auto config_format = std::make_shared<JsonConfig>();
  app.config_formatter(config_format);
  app.set_config("--config", "", "JSON file of option defaults for the subcommand; explicit flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--config") {
      ++i;
    } else if (!argv[i].empty() && argv[i].front() != '-') {
      config_format->section = argv[i];
      break;
    }
  }
  auto with_config = [&](CLI::App* sub) {
    sub->fallthrough();
    sub->allow_config_extras(CLI::config_extras_mode::error);
  };

  std::size_t jobs = default_jobs();
  std::string out_dir = "aqtc_out";

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Load a manifest and check every invariant");
  std::string data_path;
  validate_cmd->add_option("--data", data_path, "Manifest JSON")->required();
  validate_cmd->add_option("--out", out_dir, "Directory for run.json")->capture_default_str();
  with_config(validate_cmd);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a deterministic synthetic dataset");
  SyntheticSpec synth;
  std::uint64_t seed = 0;
  std::string synth_out;
  synth_cmd->add_option("--seed", seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--tasks", synth.tasks)->capture_default_str();
  synth_cmd->add_option("--functions", synth.functions_per_task)->capture_default_str();
  synth_cmd->add_option("--questions", synth.questions_per_task)->capture_default_str();
  synth_cmd->add_option("--steps", synth.steps_per_question)->capture_default_str();
  synth_cmd->add_option("--candidates", synth.candidates_per_step)->capture_default_str();
  synth_cmd->add_option("--d-v", synth.d_v)->capture_default_str();
  synth_cmd->add_option("--d-t", synth.d_t)->capture_default_str();
  synth_cmd->add_option("--frames", synth.frames_per_function)->capture_default_str();
  synth_cmd->add_option("--test-tasks", synth.test_tasks, "Trailing tasks placed in the test split")->capture_default_str();
  synth_cmd->add_flag("--hoi-signal", synth.interaction_signal_only, "Put the answer signal only in interaction frames");
  synth_cmd->add_option("--prototypes", synth.visual_prototypes, "Shared button prototypes (0 = none)")->capture_default_str();
  synth_cmd->add_option("--distractor-noise", synth.distractor_noise)->capture_default_str();
  with_config(synth_cmd);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a scorer and save checkpoints");
  TrainConfig train_cfg;
  ScorerConfig scorer_cfg;
  AggregationFlags agg_flags;
  std::string train_out;
  std::string dump_grounding;
  bool no_shuffle = false;
  train_cmd->add_option("--data", data_path)->required();
  train_cmd->add_option("--out", train_out, "Checkpoint directory")->required();
  train_cmd->add_option("--lr", train_cfg.adam.learning_rate)->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", seed)->capture_default_str();
  train_cmd->add_option("--batch-size", train_cfg.batch_size, "Questions per step, 0 = full batch")->capture_default_str();
  train_cmd->add_flag("--no-shuffle", no_shuffle);
  train_cmd->add_flag("--select-on-test", train_cfg.select_on_test,
                      "Keep the epoch with the best test R@1 (leaks the test split)");
  train_cmd->add_option("--d-hidden", scorer_cfg.d_hidden)->capture_default_str();
  train_cmd->add_option("--d-gru", scorer_cfg.d_gru)->capture_default_str();
  train_cmd->add_option("--dump-grounding", dump_grounding, "Write TF-IDF grounding scores as JSON");
  train_cmd->add_option("--jobs", jobs)->capture_default_str();
  agg_flags.add_to(train_cmd);
  with_config(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ckpt_path, split = "all", dump_ranks;
  eval_cmd->add_option("--ckpt", ckpt_path)->required();
  eval_cmd->add_option("--data", data_path)->required();
  eval_cmd->add_option("--split", split)->capture_default_str()->check(CLI::IsMember({"all", "train", "test"}));
  eval_cmd->add_option("--dump-ranks", dump_ranks, "CSV of per-step ground-truth ranks");
  eval_cmd->add_option("--dump-grounding", dump_grounding);
  eval_cmd->add_option("--out", out_dir)->capture_default_str();
  eval_cmd->add_option("--jobs", jobs)->capture_default_str();
  with_config(eval_cmd);

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate one model per aggregation setting");
  std::string grid_path, ablate_out = "ablation";
  ablate_cmd->add_option("--data", data_path)->required();
  ablate_cmd->add_option("--grid", grid_path)->required();
  ablate_cmd->add_option("--out", ablate_out, "Output directory, or a .csv path for the table")->capture_default_str();
  ablate_cmd->add_option("--lr", train_cfg.adam.learning_rate)->capture_default_str();
  ablate_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--seed", seed)->capture_default_str();
  ablate_cmd->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  ablate_cmd->add_option("--d-hidden", scorer_cfg.d_hidden)->capture_default_str();
  ablate_cmd->add_option("--d-gru", scorer_cfg.d_gru)->capture_default_str();
  ablate_cmd->add_option("--jobs", jobs)->capture_default_str();
  with_config(ablate_cmd);

  // ensemble
  auto* ensemble_cmd = app.add_subcommand("ensemble", "Linear score-level ensemble of checkpoints");
  std::string spec_path, fusion;
  ensemble_cmd->add_option("--spec", spec_path)->required();
  ensemble_cmd->add_option("--data", data_path)->required();
  ensemble_cmd->add_option("--split", split)->capture_default_str()->check(CLI::IsMember({"all", "train", "test"}));
  ensemble_cmd->add_option("--fusion", fusion, "Override the spec: probabilities | logits")
      ->check(CLI::IsMember({"probabilities", "logits"}));
  ensemble_cmd->add_option("--out", out_dir)->capture_default_str();
  ensemble_cmd->add_option("--jobs", jobs)->capture_default_str();
  with_config(ensemble_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "Render history or result CSVs to SVG");
  std::vector<std::string> csv_paths;
  std::string title;
  report_cmd->add_option("--csv", csv_paths, "history.csv or table.csv files")->required();
  report_cmd->add_option("--title", title);
  report_cmd->add_option("--out", out_dir)->capture_default_str();
  with_config(report_cmd);

  try {
    std::vector<std::string> args(argv.rbegin(), argv.rend());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    jobs = std::max<std::size_t>(jobs, 1);
    if (*validate_cmd) {
      const auto data = load_manifest(data_path);
      const auto c = count(data);
      out << "ok tasks=" << c.tasks << " functions=" << c.functions << " questions=" << c.questions
          << " steps=" << c.steps << " candidates=" << c.candidates << " d_v=" << data.front().dims.d_v
          << " d_t=" << data.front().dims.d_t << '\n';
      write_run_record(out_dir, "validate", {{"data", data_path}}, hash_manifest_inputs(data_path));
    } else if (*synth_cmd) {
      const auto data = generate_synthetic(seed, synth);
      save_dataset(data, synth_out);
      const json config = {{"seed", seed},
                           {"tasks", synth.tasks},
                           {"functions", synth.functions_per_task},
                           {"questions", synth.questions_per_task},
                           {"steps", synth.steps_per_question},
                           {"candidates", synth.candidates_per_step},
                           {"d-v", synth.d_v},
                           {"d-t", synth.d_t},
                           {"frames", synth.frames_per_function},
                           {"test-tasks", synth.test_tasks},
                           {"hoi-signal", synth.interaction_signal_only},
                           {"prototypes", synth.visual_prototypes},
                           {"distractor-noise", synth.distractor_noise}};
      write_run_record(synth_out, "synth", config, json::object());
      const auto c = count(data);
      out << "wrote " << (fs::path(synth_out) / "manifest.json").generic_string() << " tasks=" << c.tasks
          << " steps=" << c.steps << '\n';
    } else if (*train_cmd) {
      const auto data = load_manifest(data_path);
      train_cfg.seed = seed;
      train_cfg.shuffle = !no_shuffle;
      train_cfg.jobs = jobs;
      scorer_cfg.seed = seed;
      const auto agg = agg_flags.config();
      fs::create_directories(train_out);
      if (!dump_grounding.empty()) write_text(dump_grounding, grounding_dump(data).dump(2) + "\n");
      const auto result = train(data, train_cfg, scorer_cfg, agg, [](const EpochRecord& r) {
        spdlog::info("epoch {} loss {:.6f} R@1 {:.3f} R@3 {:.3f}", r.epoch, r.loss, r.r1, r.r3);
      });
      const fs::path dir = train_out;
      save_checkpoint({result.scorer, agg, result.best}, dir / "best.fp");
      save_checkpoint({result.scorer, agg, result.last}, dir / "last.fp");
      write_text(dir / "history.csv", history_csv(result.history));
      const json config = {{"data", data_path},
                           {"lr", train_cfg.adam.learning_rate},
                           {"epochs", train_cfg.epochs},
                           {"seed", seed},
                           {"batch-size", train_cfg.batch_size},
                           {"no-shuffle", no_shuffle},
                           {"select-on-test", train_cfg.select_on_test},
                           {"d-hidden", scorer_cfg.d_hidden},
                           {"d-gru", scorer_cfg.d_gru},
                           {"hoi-temp", agg.temperature},
                           {"no-hoi", !agg.use_hoi},
                           {"use-global", agg.use_global},
                           {"adam", {{"beta1", train_cfg.adam.beta1},
                                     {"beta2", train_cfg.adam.beta2},
                                     {"epsilon", train_cfg.adam.epsilon}}}};
      write_run_record(dir, "train", config, hash_manifest_inputs(data_path));
      const auto& last = result.history.back();
      out << "epochs=" << last.epoch << " best_epoch=" << result.best_epoch << " loss=" << format_number(last.loss, "%.6f")
          << " train R@1=" << format_number(last.r1, "%.3f") << " R@3=" << format_number(last.r3, "%.3f") << '\n';
    } else if (*eval_cmd) {
      const auto data = select(load_manifest(data_path), split);
      const auto ckpt = load_checkpoint(ckpt_path);
      const auto scores = score_with_checkpoint(ckpt, data, jobs);
      const auto result = evaluate(scores, data);
      if (!dump_ranks.empty()) write_text(dump_ranks, ranks_csv(result));
      if (!dump_grounding.empty()) write_text(dump_grounding, grounding_dump(data).dump(2) + "\n");
      auto inputs = hash_manifest_inputs(data_path);
      inputs.update(hash_checkpoint(ckpt_path));
      write_run_record(out_dir, "eval", {{"ckpt", ckpt_path}, {"data", data_path}, {"split", split}}, inputs);
      out << recall_line(result) << '\n';
    } else if (*ablate_cmd) {
      const auto data = load_manifest(data_path);
      const auto grid = load_grid(grid_path);
      train_cfg.seed = seed;
      scorer_cfg.seed = seed;
      const auto rows = run_ablation(data, grid, train_cfg, scorer_cfg, jobs);
      const auto table = ablation_table(rows);
      fs::path csv_path = ablate_out;
      fs::path dir = ablate_out;
      if (csv_path.extension() == ".csv") {
        dir = csv_path.parent_path().empty() ? fs::path(".") : csv_path.parent_path();
      } else {
        csv_path = dir / "table.csv";
      }
      fs::create_directories(dir);
      write_text(csv_path, table_csv(table));
      auto stem = csv_path;
      write_text(stem.replace_extension(".txt"), table_text(table));
      write_text(stem.replace_extension(".svg"), bar_chart_svg(table, "Aggregation ablation"));
      auto inputs = hash_manifest_inputs(data_path);
      inputs[grid_path] = sha256_file(grid_path);
      write_run_record(dir, "ablate",
                       {{"data", data_path},
                        {"grid", grid_path},
                        {"lr", train_cfg.adam.learning_rate},
                        {"epochs", train_cfg.epochs},
                        {"seed", seed},
                        {"batch-size", train_cfg.batch_size},
                        {"d-hidden", scorer_cfg.d_hidden},
                        {"d-gru", scorer_cfg.d_gru}},
                       inputs);
      out << table_text(table);
    } else if (*ensemble_cmd) {
      const auto data = select(load_manifest(data_path), split);
      auto spec = load_ensemble_spec(spec_path);
      if (fusion == "logits") spec.mode = FusionMode::logits;
      if (fusion == "probabilities") spec.mode = FusionMode::probabilities;
      const auto report = evaluate_ensemble(spec, data, jobs);
      ResultTable table{{"model", "weight"}, {}};
      for (std::size_t m = 0; m < spec.members.size(); ++m) {
        const auto name = spec.members[m].checkpoint.parent_path().filename().string() + "/" +
                          spec.members[m].checkpoint.filename().string();
        table.rows.push_back({name, {name, format_number(spec.members[m].weight, "%g")},
                              report.members[m].r1, report.members[m].r3});
      }
      table.rows.push_back({"ensemble", {"linear-ensemble", "-"}, report.ensemble.r1, report.ensemble.r3});
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "ensemble.csv", table_csv(table));
      write_text(fs::path(out_dir) / "ensemble.svg", bar_chart_svg(table, "Linear ensemble"));
      auto inputs = hash_manifest_inputs(data_path);
      inputs[spec_path] = sha256_file(spec_path);
      for (const auto& m : spec.members) inputs.update(hash_checkpoint(m.checkpoint));
      write_run_record(out_dir, "ensemble",
                       {{"spec", spec_path},
                        {"data", data_path},
                        {"split", split},
                        {"fusion", spec.mode == FusionMode::logits ? "logits" : "probabilities"}},
                       inputs);
      out << table_text(table);
    } else if (*report_cmd) {
      fs::create_directories(out_dir);
      json inputs = json::object();
      for (const auto& csv : csv_paths) {
        const fs::path p = csv;
        const auto svg = fs::path(out_dir) / p.filename().replace_extension(".svg");
        write_text(svg, render_csv_svg(p, title.empty() ? p.stem().string() : title));
        inputs[csv] = sha256_file(csv);
        out << "wrote " << svg.generic_string() << '\n';
      }
      write_run_record(out_dir, "report", {{"csv", csv_paths}, {"title", title}}, inputs);
    }
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace aqtc::cli
