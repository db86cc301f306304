#include "mrnn/model_io.hpp"

#include <charconv>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace mrnn {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, target);
}

namespace {

ordered_json vector_to_json(const Vector& v) {
  ordered_json arr = ordered_json::array();
  for (std::size_t i = 0; i < v.dim(); ++i) arr.push_back(v[i]);
  return arr;
}

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json arr = ordered_json::array();
  for (std::size_t i = 0; i < m.size(); ++i) arr.push_back(m.data()[i]);
  return arr;
}

Vector vector_from_json(const ordered_json& j, std::size_t dim, const std::string& what) {
  if (!j.is_array() || j.size() != dim) {
    throw DomainError("model file: " + what + " should hold " + std::to_string(dim) +
                      " values, found " + std::to_string(j.is_array() ? j.size() : 0));
  }
  Vector v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = j[i].get<double>();
  return v;
}

Matrix matrix_from_json(const ordered_json& j, std::size_t rows, std::size_t cols,
                        const std::string& what) {
  if (!j.is_array() || j.size() != rows * cols) {
    throw DomainError("model file: " + what + " should hold " +
                      std::to_string(rows * cols) + " values, found " +
                      std::to_string(j.is_array() ? j.size() : 0));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = j[i].get<double>();
  return m;
}

ordered_json config_to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["learning_rate"] = cfg.learning_rate;
  j["l2"] = cfg.l2;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["init_scale"] = cfg.init_scale;
  if (cfg.clip_norm) {
    j["clip_norm"] = *cfg.clip_norm;
  } else {
    j["clip_norm"] = nullptr;
  }
  j["intermediate_supervision"] = cfg.intermediate_supervision;
  j["shuffle"] = cfg.shuffle;
  return j;
}

void config_from_json(const ordered_json& j, TrainConfig& cfg) {
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.l2 = j.at("l2").get<double>();
  cfg.max_epochs = j.at("max_epochs").get<int>();
  cfg.patience = j.at("patience").get<int>();
  cfg.init_scale = j.at("init_scale").get<double>();
  if (j.at("clip_norm").is_null()) {
    cfg.clip_norm.reset();
  } else {
    cfg.clip_norm = j.at("clip_norm").get<double>();
  }
  cfg.intermediate_supervision = j.at("intermediate_supervision").get<bool>();
  cfg.shuffle = j.at("shuffle").get<bool>();
}

// Creation stamp only when the caller pins one via SOURCE_DATE_EPOCH; a wall
// clock would break bit-reproducible runs.
ordered_json creation_stamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (epoch == nullptr) return nullptr;
  char* end = nullptr;
  const long long secs = std::strtoll(epoch, &end, 10);
  if (end == epoch) return nullptr;
  std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

}  // namespace

void save_model_file(const std::string& path, const Model& model,
                     const TrainConfig& cfg) {
  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["model_kind"] = model_kind_name(model.kind);
  j["head"] = head_kind_name(model.head);
  j["classes"] = model.n_classes;

  std::size_t d_x = 0, d_h = model.hidden_dim();
  Activation f = Activation::identity;
  switch (model.kind) {
    case ModelKind::matrix_space:
      break;
    case ModelKind::elman:
      d_x = model.elman().d_x();
      f = model.elman().f;
      break;
    case ModelKind::mrnn:
      d_x = model.mrnn().d_x();
      f = model.mrnn().f;
      break;
  }
  j["d_x"] = d_x;
  j["d_h"] = d_h;
  j["activation"] = activation_name(f);
  j["vocabulary"] = model.vocab.tokens;

  ordered_json params;
  switch (model.kind) {
    case ModelKind::matrix_space: {
      const auto& p = model.matrix_space();
      ordered_json mats = ordered_json::array();
      for (const auto& m : p.word_matrices) mats.push_back(matrix_to_json(m));
      params["word_matrices"] = std::move(mats);
      params["h0"] = vector_to_json(p.h0);
      params["u"] = vector_to_json(p.u);
      params["U_out"] = matrix_to_json(p.U_out);
      params["c_out"] = vector_to_json(p.c_out);
      params["g"] = activation_name(p.g);
      break;
    }
    case ModelKind::elman: {
      const auto& p = model.elman();
      params["W"] = matrix_to_json(p.W);
      params["V"] = matrix_to_json(p.V);
      params["b"] = vector_to_json(p.b);
      params["U"] = matrix_to_json(p.U);
      params["c"] = vector_to_json(p.c);
      params["h0"] = vector_to_json(p.h0);
      params["g"] = activation_name(p.g);
      break;
    }
    case ModelKind::mrnn: {
      const auto& p = model.mrnn();
      ordered_json mats = ordered_json::array();
      for (std::size_t k = 0; k < p.A.n_in_x(); ++k) {
        mats.push_back(matrix_to_json(p.A.base(k)));
      }
      params["base_matrices"] = std::move(mats);
      params["U"] = matrix_to_json(p.U);
      params["h0"] = vector_to_json(p.h0);
      params["g"] = activation_name(p.g);
      break;
    }
  }
  j["params"] = std::move(params);

  if (model.embeddings) {
    ordered_json emb;
    emb["dim"] = model.embeddings->dim;
    emb["trainable"] = model.embeddings->trainable;
    ordered_json rows = ordered_json::array();
    for (const auto& v : model.embeddings->vectors) rows.push_back(vector_to_json(v));
    emb["vectors"] = std::move(rows);
    j["embeddings"] = std::move(emb);
  } else {
    j["embeddings"] = nullptr;
  }

  j["train_config"] = config_to_json(cfg);
  ordered_json meta;
  meta["seed"] = cfg.seed;
  meta["created"] = creation_stamp();
  j["metadata"] = std::move(meta);

  write_text_atomic(path, j.dump(2) + "\n");
}

LoadedModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("model file " + path + " is not valid JSON: " + e.what());
  }

  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    throw DomainError("model file " + path + " has format_version " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kModelFormatVersion));
  }

  LoadedModel out;
  Model& m = out.model;
  m.kind = model_kind_from_name(j.at("model_kind").get<std::string>());
  m.head = head_kind_from_name(j.at("head").get<std::string>());
  m.n_classes = j.at("classes").get<int>();
  const auto d_x = j.at("d_x").get<std::size_t>();
  const auto d_h = j.at("d_h").get<std::size_t>();
  const Activation f = activation_from_name(j.at("activation").get<std::string>());

  const auto tokens = j.at("vocabulary").get<std::vector<std::string>>();
  if (tokens.empty() || tokens[0] != "<unk>") {
    throw DomainError("model file " + path + ": vocabulary must start with <unk>");
  }
  m.vocab.tokens = tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    m.vocab.index[tokens[i]] = static_cast<int>(i);
  }
  m.vocab.unk_id = 0;

  const std::size_t n_out = head_output_dim(m.head, m.n_classes);
  const ordered_json& params = j.at("params");
  switch (m.kind) {
    case ModelKind::matrix_space: {
      MatrixSpaceParams p;
      p.m = d_h;
      const ordered_json& mats = params.at("word_matrices");
      if (!mats.is_array() || mats.size() != tokens.size()) {
        throw DomainError("model file: expected one word matrix per vocabulary entry");
      }
      for (std::size_t w = 0; w < mats.size(); ++w) {
        p.word_matrices.push_back(
            matrix_from_json(mats[w], d_h, d_h, "word_matrices[" + std::to_string(w) + "]"));
      }
      p.h0 = vector_from_json(params.at("h0"), d_h, "h0");
      p.u = vector_from_json(params.at("u"), d_h, "u");
      p.U_out = matrix_from_json(params.at("U_out"), n_out, d_h, "U_out");
      p.c_out = vector_from_json(params.at("c_out"), n_out, "c_out");
      p.g = activation_from_name(params.at("g").get<std::string>());
      m.params = std::move(p);
      break;
    }
    case ModelKind::elman: {
      ElmanParams p;
      p.W = matrix_from_json(params.at("W"), d_h, d_x, "W");
      p.V = matrix_from_json(params.at("V"), d_h, d_h, "V");
      p.b = vector_from_json(params.at("b"), d_h, "b");
      p.U = matrix_from_json(params.at("U"), n_out, d_h, "U");
      p.c = vector_from_json(params.at("c"), n_out, "c");
      p.h0 = vector_from_json(params.at("h0"), d_h, "h0");
      p.f = f;
      p.g = activation_from_name(params.at("g").get<std::string>());
      m.params = std::move(p);
      break;
    }
    case ModelKind::mrnn: {
      MRnnParams p;
      const ordered_json& mats = params.at("base_matrices");
      if (!mats.is_array() || mats.size() != d_x + 1) {
        throw DomainError("model file: expected " + std::to_string(d_x + 1) +
                          " base matrices");
      }
      p.A = Tensor3(d_h, d_x + 1, d_h + 1);
      for (std::size_t k = 0; k <= d_x; ++k) {
        p.A.base(k) = matrix_from_json(mats[k], d_h, d_h + 1,
                                       "base_matrices[" + std::to_string(k) + "]");
      }
      p.U = matrix_from_json(params.at("U"), n_out, d_h + 1, "U");
      p.h0 = vector_from_json(params.at("h0"), d_h, "h0");
      p.f = f;
      p.g = activation_from_name(params.at("g").get<std::string>());
      m.params = std::move(p);
      break;
    }
  }

  const ordered_json& emb = j.at("embeddings");
  if (!emb.is_null()) {
    EmbeddingTable table;
    table.dim = emb.at("dim").get<std::size_t>();
    table.trainable = emb.at("trainable").get<bool>();
    const ordered_json& rows = emb.at("vectors");
    if (!rows.is_array() || rows.size() != tokens.size()) {
      throw DomainError("model file: embedding table must have one row per token");
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      table.vectors.push_back(
          vector_from_json(rows[r], table.dim, "embeddings[" + std::to_string(r) + "]"));
    }
    m.embeddings = std::move(table);
  }

  out.config.model = m.kind;
  out.config.head = m.head;
  out.config.n_classes = m.n_classes;
  out.config.f = f;
  out.config.d_h = static_cast<int>(d_h);
  out.config.d_x = static_cast<int>(d_x);
  config_from_json(j.at("train_config"), out.config);
  out.config.seed = j.at("metadata").at("seed").get<std::uint64_t>();
  return out;
}

}  // namespace mrnn
