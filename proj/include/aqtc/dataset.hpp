#pragma once

// Dataset model and the JSON manifest that binds it to FEATPACK files.
// The manifest schema is described in docs/data-contract.md.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aqtc/errors.hpp"
#include "aqtc/featpack.hpp"

namespace aqtc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Tokens = std::vector<std::string>;

struct Dims {
  std::size_t d_v = 0;
  std::size_t d_t = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct FunctionRecord {
  std::string id;
  Tokens paragraph_tokens;
  Mat frame_embeddings;  // T x d_v
  std::optional<Vec> global_embedding;
  std::vector<std::int8_t> hoi_states;  // T, each in {-1, 0, 1}
  Vec text_embedding;                   // d_t, paragraph embedding

  std::size_t frames() const noexcept { return hoi_states.size(); }
};

struct CandidateRecord {
  Vec text_embedding;    // d_t
  Vec button_embedding;  // d_v
};

struct StepRecord {
  std::vector<CandidateRecord> candidates;
  std::size_t ground_truth_index = 0;
};

struct QuestionRecord {
  std::string id;
  Tokens question_tokens;
  Vec question_embedding;  // d_t
  std::vector<StepRecord> steps;
};

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split: " + s);
}

struct TaskManifest {
  std::string task_id;
  std::vector<FunctionRecord> functions;
  std::vector<QuestionRecord> questions;
  Dims dims;
  Split split = Split::train;
};

using Dataset = std::vector<TaskManifest>;

struct DatasetCounts {
  std::size_t tasks = 0, functions = 0, questions = 0, steps = 0, candidates = 0;
};

inline DatasetCounts count(const Dataset& data) {
  DatasetCounts c;
  c.tasks = data.size();
  for (const auto& t : data) {
    c.functions += t.functions.size();
    c.questions += t.questions.size();
    for (const auto& q : t.questions) {
      c.steps += q.steps.size();
      for (const auto& s : q.steps) c.candidates += s.candidates.size();
    }
  }
  return c;
}

// Tasks of one split, in dataset order.
inline Dataset select_split(const Dataset& data, Split split) {
  Dataset out;
  for (const auto& t : data) {
    if (t.split == split) out.push_back(t);
  }
  return out;
}

namespace detail {

inline void require_finite(const Eigen::Ref<const Mat>& m, const std::string& what) {
  if (!m.allFinite()) throw ValidationError(what + " contains non-finite values");
}

inline void require_dim(const Vec& v, std::size_t dim, const std::string& what) {
  if (static_cast<std::size_t>(v.size()) != dim) {
    throw ValidationError(what + " has dimension " + std::to_string(v.size()) + ", expected " +
                          std::to_string(dim));
  }
  require_finite(v, what);
}

}  // namespace detail

// Throws ValidationError on the first violated invariant.
inline void validate_task(const TaskManifest& task) {
  const auto& dims = task.dims;
  if (dims.d_v == 0 || dims.d_t == 0) throw ValidationError("dims must be >= 1");
  if (task.functions.empty()) throw ValidationError("task '" + task.task_id + "' has no functions");
  std::set<std::string> ids;
  for (const auto& f : task.functions) {
    const auto where = "function '" + task.task_id + "/" + f.id + "'";
    if (!ids.insert(f.id).second) throw ValidationError("duplicate function id in " + where);
    if (f.hoi_states.empty()) throw ValidationError(where + " has no frames");
    if (static_cast<std::size_t>(f.frame_embeddings.rows()) != f.hoi_states.size()) {
      throw ValidationError(where + " frame count does not match hoi_states length");
    }
    if (static_cast<std::size_t>(f.frame_embeddings.cols()) != dims.d_v) {
      throw ValidationError(where + " frame width does not match d_v");
    }
    detail::require_finite(f.frame_embeddings, where + " frames");
    for (auto s : f.hoi_states) {
      if (s < -1 || s > 1) {
        throw ValidationError(where + " has hoi_state " + std::to_string(s) + " outside {-1,0,1}");
      }
    }
    if (f.global_embedding) detail::require_dim(*f.global_embedding, dims.d_v, where + " global embedding");
    detail::require_dim(f.text_embedding, dims.d_t, where + " text embedding");
  }
  std::set<std::string> qids;
  for (const auto& q : task.questions) {
    const auto where = "question '" + task.task_id + "/" + q.id + "'";
    if (!qids.insert(q.id).second) throw ValidationError("duplicate question id " + where);
    if (q.steps.empty()) throw ValidationError(where + " has no steps");
    detail::require_dim(q.question_embedding, dims.d_t, where + " embedding");
    for (std::size_t s = 0; s < q.steps.size(); ++s) {
      const auto& step = q.steps[s];
      const auto swhere = where + " step " + std::to_string(s);
      if (step.candidates.size() < 2) throw ValidationError(swhere + " needs >= 2 candidates");
      if (step.ground_truth_index >= step.candidates.size()) {
        throw ValidationError(swhere + " ground_truth_index out of range");
      }
      for (const auto& c : step.candidates) {
        detail::require_dim(c.text_embedding, dims.d_t, swhere + " candidate text embedding");
        detail::require_dim(c.button_embedding, dims.d_v, swhere + " candidate button embedding");
      }
    }
  }
}

inline void validate_dataset(const Dataset& data) {
  for (const auto& t : data) {
    validate_task(t);
    if (!(t.dims == data.front().dims)) throw ValidationError("dims differ across tasks");
  }
}

namespace keys {
inline std::string frames(const std::string& f) { return "E_l/" + f; }
inline std::string global(const std::string& f) { return "E_g/" + f; }
inline std::string states(const std::string& f) { return "S/" + f; }
inline std::string paragraph(const std::string& f) { return "E_ft/" + f; }
inline std::string question(const std::string& q) { return "E_q/" + q; }
inline std::string answer_text(const std::string& q, std::size_t s, std::size_t c) {
  return "E_a_t/" + q + "/" + std::to_string(s) + "/" + std::to_string(c);
}
inline std::string answer_button(const std::string& q, std::size_t s, std::size_t c) {
  return "E_a_v/" + q + "/" + std::to_string(s) + "/" + std::to_string(c);
}
}  // namespace keys

namespace detail {

inline const DenseArray& lookup(const FeatPack& pack, const std::string& key) {
  auto it = pack.find(key);
  if (it == pack.end()) throw MissingFeatureError(key);
  return it->second;
}

inline Vec read_vector(const FeatPack& pack, const std::string& key, std::size_t dim) {
  const auto& a = lookup(pack, key);
  if (a.dtype() != DType::f32 || a.shape.size() != 1 || a.shape[0] != dim) {
    throw ValidationError("'" + key + "' must be f32[" + std::to_string(dim) + "]");
  }
  const auto& v = a.as_f32();
  Vec out(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline Mat read_matrix(const FeatPack& pack, const std::string& key, std::size_t cols) {
  const auto& a = lookup(pack, key);
  if (a.dtype() != DType::f32 || a.shape.size() != 2 || a.shape[1] != cols) {
    throw ValidationError("'" + key + "' must be f32[T x " + std::to_string(cols) + "]");
  }
  const auto& v = a.as_f32();
  Mat out(a.shape[0], a.shape[1]);
  for (std::uint32_t r = 0; r < a.shape[0]; ++r) {
    for (std::uint32_t c = 0; c < a.shape[1]; ++c) out(r, c) = v[std::size_t{r} * a.shape[1] + c];
  }
  return out;
}

inline std::vector<std::int8_t> read_states(const FeatPack& pack, const std::string& key) {
  const auto& a = lookup(pack, key);
  if (a.dtype() != DType::i8 || a.shape.size() != 1) throw ValidationError("'" + key + "' must be i8[T]");
  return a.as_i8();
}

inline DenseArray to_array(const Vec& v) {
  std::vector<float> data(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return DenseArray::f32({static_cast<std::uint32_t>(v.size())}, std::move(data));
}

inline DenseArray to_array(const Mat& m) {
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(static_cast<float>(m(r, c)));
  }
  return DenseArray::f32({static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                         std::move(data));
}

template <typename T>
T json_get(const nlohmann::json& j, const char* field, const std::string& where) {
  if (!j.is_object() || !j.contains(field)) {
    throw ValidationError(where + ": missing field '" + field + "'");
  }
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field '" + field + "' has the wrong type");
  }
}

}  // namespace detail

inline constexpr std::string_view kManifestFormat = "aqtc-manifest/1";

inline TaskManifest task_from_json(const nlohmann::json& jt, const Dims& dims,
                                   const std::filesystem::path& base_dir) {
  using detail::json_get;
  TaskManifest task;
  task.dims = dims;
  task.task_id = json_get<std::string>(jt, "task_id", "task");
  const auto where = "task '" + task.task_id + "'";
  task.split = parse_split(json_get<std::string>(jt, "split", where));
  const auto pack = read_featpack(base_dir / json_get<std::string>(jt, "featpack", where));

  for (const auto& jf : json_get<nlohmann::json>(jt, "functions", where)) {
    FunctionRecord f;
    f.id = json_get<std::string>(jf, "id", where + " function");
    f.paragraph_tokens = json_get<Tokens>(jf, "paragraph_tokens", where + " function " + f.id);
    f.frame_embeddings = detail::read_matrix(pack, keys::frames(f.id), dims.d_v);
    f.hoi_states = detail::read_states(pack, keys::states(f.id));
    f.text_embedding = detail::read_vector(pack, keys::paragraph(f.id), dims.d_t);
    if (jf.value("has_global", false)) {
      f.global_embedding = detail::read_vector(pack, keys::global(f.id), dims.d_v);
    }
    task.functions.push_back(std::move(f));
  }
  for (const auto& jq : json_get<nlohmann::json>(jt, "questions", where)) {
    QuestionRecord q;
    q.id = json_get<std::string>(jq, "id", where + " question");
    const auto qwhere = where + " question " + q.id;
    q.question_tokens = json_get<Tokens>(jq, "question_tokens", qwhere);
    q.question_embedding = detail::read_vector(pack, keys::question(q.id), dims.d_t);
    const auto jsteps = json_get<nlohmann::json>(jq, "steps", qwhere);
    for (std::size_t s = 0; s < jsteps.size(); ++s) {
      StepRecord step;
      const auto n = json_get<std::size_t>(jsteps[s], "candidates", qwhere + " step");
      step.ground_truth_index = json_get<std::size_t>(jsteps[s], "ground_truth", qwhere + " step");
      for (std::size_t c = 0; c < n; ++c) {
        step.candidates.push_back(
            {detail::read_vector(pack, keys::answer_text(q.id, s, c), dims.d_t),
             detail::read_vector(pack, keys::answer_button(q.id, s, c), dims.d_v)});
      }
      q.steps.push_back(std::move(step));
    }
    task.questions.push_back(std::move(q));
  }
  validate_task(task);
  return task;
}

// Reads a manifest and every FEATPACK it references (paths relative to the
// manifest's directory), validating all invariants.
inline Dataset load_manifest(const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("manifest is not valid JSON: " + std::string(e.what()));
    }
  }
  using detail::json_get;
  if (json_get<std::string>(j, "format", "manifest") != kManifestFormat) {
    throw ValidationError("unsupported manifest format");
  }
  const auto jd = json_get<nlohmann::json>(j, "dims", "manifest");
  const Dims dims{json_get<std::size_t>(jd, "d_v", "dims"), json_get<std::size_t>(jd, "d_t", "dims")};
  Dataset data;
  for (const auto& jt : json_get<nlohmann::json>(j, "tasks", "manifest")) {
    data.push_back(task_from_json(jt, dims, manifest_path.parent_path()));
  }
  if (data.empty()) throw ValidationError("manifest has no tasks");
  validate_dataset(data);
  return data;
}

inline std::string featpack_filename(std::size_t task_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task_%04zu.featpack", task_index);
  return buf;
}

// Writes manifest.json plus one FEATPACK per task into `dir`.
inline void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  validate_dataset(data);
  std::filesystem::create_directories(dir);
  nlohmann::json jtasks = nlohmann::json::array();
  for (std::size_t ti = 0; ti < data.size(); ++ti) {
    const auto& task = data[ti];
    FeatPack pack;
    nlohmann::json jfuncs = nlohmann::json::array();
    for (const auto& f : task.functions) {
      pack[keys::frames(f.id)] = detail::to_array(f.frame_embeddings);
      pack[keys::states(f.id)] =
          DenseArray::i8({static_cast<std::uint32_t>(f.hoi_states.size())}, f.hoi_states);
      pack[keys::paragraph(f.id)] = detail::to_array(f.text_embedding);
      if (f.global_embedding) pack[keys::global(f.id)] = detail::to_array(*f.global_embedding);
      jfuncs.push_back({{"id", f.id},
                        {"paragraph_tokens", f.paragraph_tokens},
                        {"has_global", f.global_embedding.has_value()}});
    }
    nlohmann::json jqs = nlohmann::json::array();
    for (const auto& q : task.questions) {
      pack[keys::question(q.id)] = detail::to_array(q.question_embedding);
      nlohmann::json jsteps = nlohmann::json::array();
      for (std::size_t s = 0; s < q.steps.size(); ++s) {
        const auto& step = q.steps[s];
        for (std::size_t c = 0; c < step.candidates.size(); ++c) {
          pack[keys::answer_text(q.id, s, c)] = detail::to_array(step.candidates[c].text_embedding);
          pack[keys::answer_button(q.id, s, c)] = detail::to_array(step.candidates[c].button_embedding);
        }
        jsteps.push_back({{"candidates", step.candidates.size()}, {"ground_truth", step.ground_truth_index}});
      }
      jqs.push_back({{"id", q.id}, {"question_tokens", q.question_tokens}, {"steps", jsteps}});
    }
    const auto file = featpack_filename(ti);
    write_featpack(pack, dir / file);
    jtasks.push_back({{"task_id", task.task_id},
                      {"split", to_string(task.split)},
                      {"featpack", file},
                      {"functions", jfuncs},
                      {"questions", jqs}});
  }
  const nlohmann::json manifest = {{"format", kManifestFormat},
                                   {"dims", {{"d_v", data.front().dims.d_v}, {"d_t", data.front().dims.d_t}}},
                                   {"tasks", jtasks}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

}  // namespace aqtc
