#include "mrnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mrnn/ordinal.hpp"

namespace mrnn {

namespace {

double bce(double y, double r) {
  // Clamp keeps the log finite when an output saturates.
  const double eps = 1e-12;
  const double yc = std::min(std::max(y, eps), 1.0 - eps);
  return -(r * std::log(yc) + (1.0 - r) * std::log(1.0 - yc));
}

}  // namespace

LossResult head_loss(HeadKind head, const Vector& raw_output, int label, int n_classes) {
  const std::size_t want = head_output_dim(head, n_classes);
  if (raw_output.dim() != want) {
    throw ShapeError("head_loss: output dim " + std::to_string(raw_output.dim()) +
                     " but head expects " + std::to_string(want));
  }
  LossResult res;
  switch (head) {
    case HeadKind::ordinal: {
      const OrdinalTarget target = ordinal_encode(label, n_classes);
      res.delta = Vector(want);
      for (std::size_t i = 0; i < want; ++i) {
        const double r = static_cast<double>(target.bits[i]);
        res.value += bce(raw_output[i], r);
        res.delta[i] = raw_output[i] - r;
      }
      break;
    }
    case HeadKind::classify: {
      if (label < 0 || label >= n_classes) {
        throw DomainError("head_loss: label " + std::to_string(label) +
                          " out of range [0, " + std::to_string(n_classes) + ")");
      }
      const double eps = 1e-12;
      res.value = -std::log(std::max(raw_output[static_cast<std::size_t>(label)], eps));
      res.delta = raw_output;
      res.delta[static_cast<std::size_t>(label)] -= 1.0;
      break;
    }
    case HeadKind::scalar: {
      if (label != 0 && label != 1) {
        throw DomainError("head_loss: scalar head needs a 0/1 label, got " +
                          std::to_string(label));
      }
      res.value = bce(raw_output[0], static_cast<double>(label));
      res.delta = Vector(1);
      res.delta[0] = raw_output[0] - static_cast<double>(label);
      break;
    }
  }
  return res;
}

ElmanGrads backward_elman(const ElmanParams& p, const std::vector<Vector>& inputs,
                          const RnnTrace& trace,
                          const std::vector<Vector>& output_deltas) {
  const std::size_t T = inputs.size();
  if (trace.preact.size() != T || trace.hidden.size() != T + 1 ||
      output_deltas.size() != T) {
    throw ShapeError("backward_elman: trace does not match the input sequence");
  }
  ElmanGrads g;
  g.W = Matrix(p.d_h(), p.d_x());
  g.V = Matrix(p.d_h(), p.d_h());
  g.b = Vector(p.d_h());
  g.U = Matrix(p.n_out(), p.d_h());
  g.c = Vector(p.n_out());
  g.inputs.assign(T, Vector(p.d_x()));

  Vector dh(p.d_h());
  for (std::size_t t = T; t-- > 0;) {
    const Vector& h_t = trace.hidden[t + 1];
    const Vector& h_prev = trace.hidden[t];
    if (output_deltas[t].dim() != 0) {
      const Vector& delta = output_deltas[t];
      for (std::size_t r = 0; r < p.n_out(); ++r) {
        for (std::size_t c = 0; c < p.d_h(); ++c) g.U(r, c) += delta[r] * h_t[c];
        g.c[r] += delta[r];
      }
      const Vector back = matvec_transpose(p.U, delta);
      for (std::size_t i = 0; i < p.d_h(); ++i) dh[i] += back[i];
    }
    const Vector fp = activation_jacobian_diag(p.f, trace.preact[t]);
    Vector da(p.d_h());
    for (std::size_t i = 0; i < p.d_h(); ++i) da[i] = dh[i] * fp[i];

    for (std::size_t i = 0; i < p.d_h(); ++i) {
      for (std::size_t j = 0; j < p.d_x(); ++j) g.W(i, j) += da[i] * inputs[t][j];
      for (std::size_t k = 0; k < p.d_h(); ++k) g.V(i, k) += da[i] * h_prev[k];
      g.b[i] += da[i];
    }
    g.inputs[t] = matvec_transpose(p.W, da);
    dh = matvec_transpose(p.V, da);
  }
  return g;
}

MRnnGrads backward_mrnn(const MRnnParams& p, const std::vector<Vector>& inputs,
                        const RnnTrace& trace,
                        const std::vector<Vector>& output_deltas) {
  const std::size_t T = inputs.size();
  if (trace.preact.size() != T || trace.hidden.size() != T + 1 ||
      output_deltas.size() != T) {
    throw ShapeError("backward_mrnn: trace does not match the input sequence");
  }
  const std::size_t dh_dim = p.d_h();
  const std::size_t dx_dim = p.d_x();
  MRnnGrads g;
  g.A = Tensor3(dh_dim, dx_dim + 1, dh_dim + 1);
  g.U = Matrix(p.n_out(), dh_dim + 1);
  g.inputs.assign(T, Vector(dx_dim));

  Vector dh(dh_dim);
  for (std::size_t t = T; t-- > 0;) {
    const Vector hb = augment_with_bias(trace.hidden[t + 1]);
    const Vector hprev_b = augment_with_bias(trace.hidden[t]);
    const Vector xb = augment_with_bias(inputs[t]);

    if (output_deltas[t].dim() != 0) {
      const Vector& delta = output_deltas[t];
      for (std::size_t r = 0; r < p.n_out(); ++r) {
        for (std::size_t c = 0; c <= dh_dim; ++c) g.U(r, c) += delta[r] * hb[c];
      }
      const Vector back = matvec_transpose(p.U, delta);
      // The bias coordinate of h' carries no gradient into h.
      for (std::size_t i = 0; i < dh_dim; ++i) dh[i] += back[i];
    }

    const Vector fp = activation_jacobian_diag(p.f, trace.preact[t]);
    Vector da(dh_dim);
    for (std::size_t i = 0; i < dh_dim; ++i) da[i] = dh[i] * fp[i];

    // dA: base matrix j picks up x'_j * (da outer h'_{t-1}).
    const Matrix rank1 = outer(da, hprev_b);
    for (std::size_t j = 0; j <= dx_dim; ++j) {
      const double xj = xb[j];
      if (xj == 0.0) continue;
      Matrix& dst = g.A.base(j);
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += xj * rank1.data()[i];
    }

    // dx'_j = da^T (B_j h'_{t-1});  dh'_{t-1} = sum_j x'_j B_j^T da.
    Vector dhprev(dh_dim + 1);
    for (std::size_t j = 0; j <= dx_dim; ++j) {
      const Matrix& bj = p.A.base(j);
      double dxj = 0.0;
      for (std::size_t i = 0; i < dh_dim; ++i) {
        double row = 0.0;
        for (std::size_t k = 0; k <= dh_dim; ++k) row += bj(i, k) * hprev_b[k];
        dxj += da[i] * row;
      }
      if (j < dx_dim) g.inputs[t][j] = dxj;  // bias coordinate gets no gradient
      const double xj = xb[j];
      if (xj != 0.0) {
        for (std::size_t i = 0; i < dh_dim; ++i) {
          const double dai = da[i] * xj;
          for (std::size_t k = 0; k <= dh_dim; ++k) dhprev[k] += dai * bj(i, k);
        }
      }
    }
    for (std::size_t i = 0; i < dh_dim; ++i) dh[i] = dhprev[i];
  }
  return g;
}

static MatrixSpaceGrads backward_matrix_space_core(const MatrixSpaceParams& p,
                                                   const std::vector<int>& token_ids,
                                                   const MatrixSpaceResult& trace,
                                                   Vector dh) {
  if (trace.hidden.size() != token_ids.size() + 1) {
    throw ShapeError("backward_matrix_space: trace does not match the sequence");
  }
  MatrixSpaceGrads g;
  for (std::size_t t = token_ids.size(); t-- > 0;) {
    const int id = token_ids[t];
    const Matrix& mw = p.word_matrices[static_cast<std::size_t>(id)];
    auto [it, fresh] = g.word.try_emplace(id, Matrix(p.m, p.m));
    Matrix& dst = it->second;
    const Vector& h_prev = trace.hidden[t];
    for (std::size_t r = 0; r < p.m; ++r)
      for (std::size_t c = 0; c < p.m; ++c) dst(r, c) += dh[r] * h_prev[c];
    dh = matvec_transpose(mw, dh);
  }
  return g;
}

MatrixSpaceGrads backward_matrix_space(const MatrixSpaceParams& p,
                                       const std::vector<int>& token_ids,
                                       const MatrixSpaceResult& trace,
                                       double score_delta) {
  Vector dh(p.m);
  for (std::size_t i = 0; i < p.m; ++i) dh[i] = score_delta * p.u[i];
  return backward_matrix_space_core(p, token_ids, trace, std::move(dh));
}

MatrixSpaceGrads backward_matrix_space_head(const MatrixSpaceParams& p,
                                            const std::vector<int>& token_ids,
                                            const MatrixSpaceResult& trace,
                                            const Vector& output_delta) {
  const Vector& h_final = trace.hidden.back();
  Vector dh = matvec_transpose(p.U_out, output_delta);
  MatrixSpaceGrads g = backward_matrix_space_core(p, token_ids, trace, std::move(dh));
  g.U_out = outer(output_delta, h_final);
  g.c_out = output_delta;
  return g;
}

std::unordered_map<int, Vector> accumulate_embedding_grads(
    const std::vector<int>& token_ids, const std::vector<Vector>& input_grads) {
  std::unordered_map<int, Vector> out;
  for (std::size_t t = 0; t < token_ids.size(); ++t) {
    auto [it, fresh] = out.try_emplace(token_ids[t], Vector(input_grads[t].dim()));
    for (std::size_t i = 0; i < input_grads[t].dim(); ++i) it->second[i] += input_grads[t][i];
  }
  return out;
}

double global_grad_norm(const std::vector<ParamGradPair>& blocks) {
  double sq = 0.0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.n; ++i) sq += b.grad[i] * b.grad[i];
  }
  return std::sqrt(sq);
}

void sgd_update(std::vector<ParamGradPair>& blocks, double learning_rate, double l2,
                std::optional<double> clip_norm) {
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.n; ++i) {
      if (!std::isfinite(b.grad[i])) {
        throw TrainingError("non-finite gradient in parameter block " + b.name);
      }
    }
  }
  double scale = 1.0;
  if (clip_norm) {
    const double norm = global_grad_norm(blocks);
    if (norm > *clip_norm && norm > 0.0) scale = *clip_norm / norm;
  }
  for (auto& b : blocks) {
    for (std::size_t i = 0; i < b.n; ++i) {
      b.param[i] -= learning_rate * (scale * b.grad[i] + l2 * b.param[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient verification

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.max_rel_err);
  return w;
}

bool GradCheckReport::all_below(double tol) const { return worst() < tol; }

namespace {

struct BlockRef {
  std::string name;
  double* data = nullptr;
  std::size_t n = 0;
};

std::vector<BlockRef> trainable_param_refs(Model& m) {
  std::vector<BlockRef> refs;
  switch (m.kind) {
    case ModelKind::matrix_space: {
      auto& p = m.matrix_space();
      for (std::size_t w = 0; w < p.word_matrices.size(); ++w) {
        refs.push_back({"M[" + std::to_string(w) + "]", p.word_matrices[w].data(),
                        p.word_matrices[w].size()});
      }
      refs.push_back({"U_out", p.U_out.data(), p.U_out.size()});
      refs.push_back({"c_out", p.c_out.data(), p.c_out.dim()});
      break;
    }
    case ModelKind::elman: {
      auto& p = m.elman();
      refs.push_back({"W", p.W.data(), p.W.size()});
      refs.push_back({"V", p.V.data(), p.V.size()});
      refs.push_back({"b", p.b.data(), p.b.dim()});
      refs.push_back({"U", p.U.data(), p.U.size()});
      refs.push_back({"c", p.c.data(), p.c.dim()});
      break;
    }
    case ModelKind::mrnn: {
      auto& p = m.mrnn();
      for (std::size_t j = 0; j < p.A.n_in_x(); ++j) {
        refs.push_back({"A[" + std::to_string(j) + "]", p.A.base(j).data(),
                        p.A.base(j).size()});
      }
      refs.push_back({"U", p.U.data(), p.U.size()});
      break;
    }
  }
  if (m.embeddings && m.embeddings->trainable) {
    for (std::size_t r = 0; r < m.embeddings->vectors.size(); ++r) {
      refs.push_back({"emb[" + std::to_string(r) + "]",
                      m.embeddings->vectors[r].data(), m.embeddings->vectors[r].dim()});
    }
  }
  return refs;
}

// Dense analytic gradients keyed by the same block names.
std::unordered_map<std::string, std::vector<double>> analytic_grad_map(
    const Model& m, const LabeledSequence& ex) {
  std::unordered_map<std::string, std::vector<double>> out;
  const auto dense = [&out](const std::string& name, const double* d, std::size_t n) {
    out[name] = std::vector<double>(d, d + n);
  };
  switch (m.kind) {
    case ModelKind::matrix_space: {
      const auto& p = m.matrix_space();
      const auto res = forward_matrix_space(p, ex.token_ids);
      const Vector y = matrix_space_output(p, res.hidden.back());
      const LossResult lr = head_loss(m.head, y, ex.label, m.n_classes);
      const MatrixSpaceGrads g =
          backward_matrix_space_head(p, ex.token_ids, res, lr.delta);
      for (std::size_t w = 0; w < p.word_matrices.size(); ++w) {
        const std::string name = "M[" + std::to_string(w) + "]";
        auto it = g.word.find(static_cast<int>(w));
        if (it != g.word.end()) {
          dense(name, it->second.data(), it->second.size());
        } else {
          out[name] = std::vector<double>(p.word_matrices[w].size(), 0.0);
        }
      }
      dense("U_out", g.U_out.data(), g.U_out.size());
      dense("c_out", g.c_out.data(), g.c_out.dim());
      break;
    }
    case ModelKind::elman: {
      const auto& p = m.elman();
      const auto xs = m.input_vectors(ex.token_ids);
      const RnnTrace trace = forward_elman(p, xs);
      const LossResult lr = head_loss(m.head, trace.outputs.back(), ex.label, m.n_classes);
      std::vector<Vector> deltas(xs.size());
      deltas.back() = lr.delta;
      const ElmanGrads g = backward_elman(p, xs, trace, deltas);
      dense("W", g.W.data(), g.W.size());
      dense("V", g.V.data(), g.V.size());
      dense("b", g.b.data(), g.b.dim());
      dense("U", g.U.data(), g.U.size());
      dense("c", g.c.data(), g.c.dim());
      if (m.embeddings && m.embeddings->trainable) {
        const auto eg = accumulate_embedding_grads(ex.token_ids, g.inputs);
        for (std::size_t r = 0; r < m.embeddings->vectors.size(); ++r) {
          const std::string name = "emb[" + std::to_string(r) + "]";
          auto it = eg.find(static_cast<int>(r));
          if (it != eg.end()) {
            dense(name, it->second.data(), it->second.dim());
          } else {
            out[name] = std::vector<double>(m.embeddings->dim, 0.0);
          }
        }
      }
      break;
    }
    case ModelKind::mrnn: {
      const auto& p = m.mrnn();
      const auto xs = m.input_vectors(ex.token_ids);
      const RnnTrace trace = forward_mrnn(p, xs);
      const LossResult lr = head_loss(m.head, trace.outputs.back(), ex.label, m.n_classes);
      std::vector<Vector> deltas(xs.size());
      deltas.back() = lr.delta;
      const MRnnGrads g = backward_mrnn(p, xs, trace, deltas);
      for (std::size_t j = 0; j < g.A.n_in_x(); ++j) {
        dense("A[" + std::to_string(j) + "]", g.A.base(j).data(), g.A.base(j).size());
      }
      dense("U", g.U.data(), g.U.size());
      if (m.embeddings && m.embeddings->trainable) {
        const auto eg = accumulate_embedding_grads(ex.token_ids, g.inputs);
        for (std::size_t r = 0; r < m.embeddings->vectors.size(); ++r) {
          const std::string name = "emb[" + std::to_string(r) + "]";
          auto it = eg.find(static_cast<int>(r));
          if (it != eg.end()) {
            dense(name, it->second.data(), it->second.dim());
          } else {
            out[name] = std::vector<double>(m.embeddings->dim, 0.0);
          }
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace

double model_example_loss(const Model& model, const LabeledSequence& example) {
  const Vector y = model.output_for(example.token_ids);
  return head_loss(model.head, y, example.label, model.n_classes).value;
}

GradCheckReport grad_check(Model& model, const LabeledSequence& example, double epsilon,
                           const FaultInjection* fault) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw DomainError("grad_check: epsilon must be in [1e-7, 1e-3]");
  }
  auto analytic = analytic_grad_map(model, example);
  if (fault != nullptr) {
    auto it = analytic.find(fault->block);
    if (it == analytic.end() || fault->index >= it->second.size()) {
      throw DomainError("grad_check: fault target " + fault->block + "[" +
                        std::to_string(fault->index) + "] does not exist");
    }
    it->second[fault->index] *= fault->factor;
  }

  GradCheckReport report;
  for (auto& ref : trainable_param_refs(model)) {
    const auto& a = analytic.at(ref.name);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.n; ++i) {
      const double saved = ref.data[i];
      ref.data[i] = saved + epsilon;
      const double up = model_example_loss(model, example);
      ref.data[i] = saved - epsilon;
      const double down = model_example_loss(model, example);
      ref.data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      // The 1e-6 floor keeps the comparison above the cancellation noise of
      // the central difference itself (|L| * ulp / 2eps ~ 1e-11 here), which
      // otherwise dominates for gradients below ~1e-7.
      const double rel = std::abs(a[i] - numeric) /
                         std::max({std::abs(a[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
    report.blocks.push_back({ref.name, worst});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Initialization

MatrixSpaceParams init_matrix_space(std::size_t vocab_size, std::size_t m,
                                    HeadKind head, int n_classes,
                                    double init_scale, Rng& rng) {
  MatrixSpaceParams p;
  p.m = m;
  p.word_matrices.reserve(vocab_size);
  // Near-identity start keeps long operator products stable.
  for (std::size_t w = 0; w < vocab_size; ++w) {
    Matrix mat = Matrix::identity(m);
    for (std::size_t i = 0; i < mat.size(); ++i) {
      mat.data()[i] += rng.uniform(-init_scale, init_scale);
    }
    p.word_matrices.push_back(std::move(mat));
  }
  p.h0 = Vector(m, 1.0 / std::sqrt(static_cast<double>(m)));
  p.u = Vector(m);
  p.u[0] = 1.0;
  const std::size_t n_out = head_output_dim(head, n_classes);
  p.U_out = Matrix(n_out, m);
  for (std::size_t i = 0; i < p.U_out.size(); ++i) {
    p.U_out.data()[i] = rng.uniform(-init_scale, init_scale);
  }
  p.c_out = Vector(n_out);
  for (std::size_t i = 0; i < n_out; ++i) p.c_out[i] = rng.uniform(-init_scale, init_scale);
  p.g = head_output_activation(head);
  return p;
}

ElmanParams init_elman(std::size_t d_x, std::size_t d_h, HeadKind head, int n_classes,
                       Activation f, double init_scale, Rng& rng) {
  ElmanParams p;
  const std::size_t n_out = head_output_dim(head, n_classes);
  p.W = Matrix(d_h, d_x);
  p.V = Matrix(d_h, d_h);
  p.b = Vector(d_h);
  p.U = Matrix(n_out, d_h);
  p.c = Vector(n_out);
  p.h0 = Vector(d_h);  // zero start; the additive path drives the state
  for (std::size_t i = 0; i < p.W.size(); ++i) p.W.data()[i] = rng.uniform(-init_scale, init_scale);
  for (std::size_t i = 0; i < p.V.size(); ++i) p.V.data()[i] = rng.uniform(-init_scale, init_scale);
  for (std::size_t i = 0; i < d_h; ++i) p.b[i] = rng.uniform(-init_scale, init_scale);
  for (std::size_t i = 0; i < p.U.size(); ++i) p.U.data()[i] = rng.uniform(-init_scale, init_scale);
  for (std::size_t i = 0; i < n_out; ++i) p.c[i] = rng.uniform(-init_scale, init_scale);
  p.f = f;
  p.g = head_output_activation(head);
  return p;
}

MRnnParams init_mrnn(std::size_t d_x, std::size_t d_h, HeadKind head, int n_classes,
                     Activation f, double init_scale, Rng& rng) {
  MRnnParams p;
  const std::size_t n_out = head_output_dim(head, n_classes);
  p.A = Tensor3(d_h, d_x + 1, d_h + 1);
  for (std::size_t j = 0; j <= d_x; ++j) {
    Matrix& b = p.A.base(j);
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-init_scale, init_scale);
  }
  p.U = Matrix(n_out, d_h + 1);
  for (std::size_t i = 0; i < p.U.size(); ++i) p.U.data()[i] = rng.uniform(-init_scale, init_scale);
  // A multiplicative recurrence annihilates a zero start vector.
  p.h0 = Vector(d_h, 1.0 / std::sqrt(static_cast<double>(d_h)));
  p.f = f;
  p.g = head_output_activation(head);
  return p;
}

Model init_model(const TrainConfig& cfg, const Vocabulary& vocab,
                 std::optional<EmbeddingTable> embeddings, Rng& rng) {
  Model m;
  m.kind = cfg.model;
  m.head = cfg.head;
  m.n_classes = cfg.n_classes;
  m.vocab = vocab;
  if (cfg.model == ModelKind::matrix_space) {
    m.embeddings.reset();
    m.params = init_matrix_space(vocab.size(), static_cast<std::size_t>(cfg.d_h),
                                 cfg.head, cfg.n_classes, cfg.init_scale, rng);
    return m;
  }
  if (!embeddings) {
    throw DomainError("init_model: elman/mrnn models need an embedding table");
  }
  const std::size_t d_x = embeddings->dim;
  if (cfg.d_x != 0 && static_cast<std::size_t>(cfg.d_x) != d_x) {
    throw ShapeError("init_model: config d_x " + std::to_string(cfg.d_x) +
                     " does not match embedding dim " + std::to_string(d_x));
  }
  if (embeddings->vectors.size() != vocab.size()) {
    throw ShapeError("init_model: embedding table has " +
                     std::to_string(embeddings->vectors.size()) + " rows for " +
                     std::to_string(vocab.size()) + " vocabulary entries");
  }
  m.embeddings = std::move(embeddings);
  if (cfg.model == ModelKind::elman) {
    m.params = init_elman(d_x, static_cast<std::size_t>(cfg.d_h), cfg.head,
                          cfg.n_classes, cfg.f, cfg.init_scale, rng);
  } else {
    m.params = init_mrnn(d_x, static_cast<std::size_t>(cfg.d_h), cfg.head,
                         cfg.n_classes, cfg.f, cfg.init_scale, rng);
  }
  return m;
}

GradCheckInstance make_gradcheck_instance(ModelKind kind, HeadKind head, Activation f,
                                          std::uint64_t seed, double rectifier_margin) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt * 7919);
    const int n_classes = 3 + static_cast<int>(rng.index(3));  // 3..5
    const std::size_t d_h = 2 + rng.index(5);                  // 2..6
    const std::size_t d_x = 2 + rng.index(7);                  // 2..8
    const std::size_t len = 1 + rng.index(5);                  // 1..5

    std::vector<std::string> words;
    for (int w = 0; w < 5; ++w) words.push_back("w" + std::to_string(w));
    const Vocabulary vocab = Vocabulary::with_unk(words);

    EmbeddingTable emb;
    emb.dim = d_x;
    emb.trainable = true;
    emb.vectors.resize(vocab.size(), Vector(d_x));
    for (auto& v : emb.vectors)
      for (std::size_t i = 0; i < d_x; ++i) v[i] = rng.uniform(-0.5, 0.5);

    TrainConfig cfg;
    cfg.model = kind;
    cfg.head = head;
    cfg.f = f;
    cfg.d_h = static_cast<int>(d_h);
    cfg.n_classes = n_classes;
    cfg.init_scale = 0.4;

    GradCheckInstance inst;
    inst.model = init_model(cfg, vocab,
                            kind == ModelKind::matrix_space
                                ? std::optional<EmbeddingTable>()
                                : std::optional<EmbeddingTable>(emb),
                            rng);
    inst.example.token_ids.clear();
    for (std::size_t t = 0; t < len; ++t) {
      inst.example.token_ids.push_back(static_cast<int>(rng.index(vocab.size())));
    }
    inst.example.label = head == HeadKind::scalar
                             ? static_cast<int>(rng.index(2))
                             : static_cast<int>(rng.index(static_cast<std::size_t>(n_classes)));

    // The rectifier is non-differentiable at 0. An instance is only usable
    // when no pre-activation can be dragged across 0 by the finite-difference
    // probes, so the guard band scales with the trace magnitude (which bounds
    // how sensitive later pre-activations are to earlier parameters).
    if (f == Activation::rectifier && kind != ModelKind::matrix_space) {
      const auto xs = inst.model.input_vectors(inst.example.token_ids);
      const RnnTrace trace = kind == ModelKind::elman
                                 ? forward_elman(inst.model.elman(), xs)
                                 : forward_mrnn(inst.model.mrnn(), xs);
      double peak = 1.0;
      for (const auto& h : trace.hidden) {
        for (std::size_t i = 0; i < h.dim(); ++i) peak = std::max(peak, std::abs(h[i]));
      }
      const double margin = std::max(rectifier_margin, 1e-2 * peak);
      bool safe = peak < 20.0;
      for (const auto& pre : trace.preact) {
        for (std::size_t i = 0; i < pre.dim(); ++i) {
          if (std::abs(pre[i]) < margin) safe = false;
        }
      }
      if (!safe) continue;
    }
    return inst;
  }
}

// ---------------------------------------------------------------------------
// Training loop

double evaluate_dev_metric(const Model& model, const Corpus& corpus) {
  const auto [rank, acc] = evaluate_metrics(model, corpus);
  return model.head == HeadKind::ordinal ? rank : acc;
}

std::pair<double, double> evaluate_metrics(const Model& model, const Corpus& corpus) {
  if (corpus.examples.empty()) throw DomainError("evaluate_metrics: empty corpus");
  std::vector<int> preds, truths;
  preds.reserve(corpus.examples.size());
  truths.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    preds.push_back(model.predict(ex.token_ids));
    truths.push_back(ex.label);
  }
  return {ranking_loss(preds, truths), accuracy(preds, truths)};
}

namespace {

// One forward/backward/update on a single example. Returns the example loss.
double train_step(Model& model, const LabeledSequence& ex, const TrainConfig& cfg) {
  std::vector<ParamGradPair> blocks;
  double loss_value = 0.0;

  switch (model.kind) {
    case ModelKind::matrix_space: {
      auto& p = model.matrix_space();
      const auto res = forward_matrix_space(p, ex.token_ids);
      const Vector y = matrix_space_output(p, res.hidden.back());
      LossResult lr = head_loss(model.head, y, ex.label, model.n_classes);
      loss_value = lr.value;
      MatrixSpaceGrads g = backward_matrix_space_head(p, ex.token_ids, res, lr.delta);
      for (auto& [id, gm] : g.word) {
        Matrix& pm = p.word_matrices[static_cast<std::size_t>(id)];
        blocks.push_back({"M[" + std::to_string(id) + "]", pm.data(), gm.data(), gm.size()});
      }
      blocks.push_back({"U_out", p.U_out.data(), g.U_out.data(), g.U_out.size()});
      blocks.push_back({"c_out", p.c_out.data(), g.c_out.data(), g.c_out.dim()});
      sgd_update(blocks, cfg.learning_rate, cfg.l2, cfg.clip_norm);
      break;
    }
    case ModelKind::elman:
    case ModelKind::mrnn: {
      const auto xs = model.input_vectors(ex.token_ids);
      const bool is_elman = model.kind == ModelKind::elman;
      const RnnTrace trace = is_elman ? forward_elman(model.elman(), xs)
                                      : forward_mrnn(model.mrnn(), xs);
      std::vector<Vector> deltas(xs.size());
      for (std::size_t t = 0; t < xs.size(); ++t) {
        const bool supervised = cfg.intermediate_supervision || t + 1 == xs.size();
        if (!supervised) continue;
        LossResult lr = head_loss(model.head, trace.outputs[t], ex.label, model.n_classes);
        loss_value += lr.value;
        deltas[t] = std::move(lr.delta);
      }

      std::unordered_map<int, Vector> emb_grads;
      const bool train_emb = model.embeddings && model.embeddings->trainable;
      if (is_elman) {
        ElmanGrads g = backward_elman(model.elman(), xs, trace, deltas);
        auto& p = model.elman();
        // grads live on the stack of this scope; update before leaving it
        blocks.push_back({"W", p.W.data(), g.W.data(), g.W.size()});
        blocks.push_back({"V", p.V.data(), g.V.data(), g.V.size()});
        blocks.push_back({"b", p.b.data(), g.b.data(), g.b.dim()});
        blocks.push_back({"U", p.U.data(), g.U.data(), g.U.size()});
        blocks.push_back({"c", p.c.data(), g.c.data(), g.c.dim()});
        if (train_emb) emb_grads = accumulate_embedding_grads(ex.token_ids, g.inputs);
        for (auto& [id, gv] : emb_grads) {
          Vector& row = model.embeddings->vectors[static_cast<std::size_t>(id)];
          blocks.push_back({"emb[" + std::to_string(id) + "]", row.data(), gv.data(), gv.dim()});
        }
        sgd_update(blocks, cfg.learning_rate, cfg.l2, cfg.clip_norm);
      } else {
        MRnnGrads g = backward_mrnn(model.mrnn(), xs, trace, deltas);
        auto& p = model.mrnn();
        for (std::size_t j = 0; j < p.A.n_in_x(); ++j) {
          blocks.push_back({"A[" + std::to_string(j) + "]", p.A.base(j).data(),
                            g.A.base(j).data(), g.A.base(j).size()});
        }
        blocks.push_back({"U", p.U.data(), g.U.data(), g.U.size()});
        if (train_emb) emb_grads = accumulate_embedding_grads(ex.token_ids, g.inputs);
        for (auto& [id, gv] : emb_grads) {
          Vector& row = model.embeddings->vectors[static_cast<std::size_t>(id)];
          blocks.push_back({"emb[" + std::to_string(id) + "]", row.data(), gv.data(), gv.dim()});
        }
        sgd_update(blocks, cfg.learning_rate, cfg.l2, cfg.clip_norm);
      }
      break;
    }
  }
  return loss_value;
}

}  // namespace

Model train(const TrainConfig& cfg, const Corpus& train_set, const Corpus& dev_set,
            const Vocabulary& vocab, std::optional<EmbeddingTable> embeddings,
            TrainReport* report, const EpochCallback& on_epoch) {
  if (train_set.examples.empty()) throw DomainError("train: empty training corpus");
  if (dev_set.examples.empty()) throw DomainError("train: empty dev corpus");
  if (train_set.n_classes != cfg.n_classes || dev_set.n_classes != cfg.n_classes) {
    throw DomainError("train: corpus n_classes (" + std::to_string(train_set.n_classes) +
                      "/" + std::to_string(dev_set.n_classes) +
                      ") disagree with config K=" + std::to_string(cfg.n_classes));
  }
  if (cfg.learning_rate <= 0.0) throw DomainError("train: learning_rate must be > 0");
  if (cfg.patience < 1) throw DomainError("train: patience must be >= 1");

  Rng rng(cfg.seed);
  Model model = init_model(cfg, vocab, std::move(embeddings), rng);

  const bool lower_is_better = cfg.head == HeadKind::ordinal;
  double best_metric = lower_is_better ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
  Model best_model = model;
  int best_epoch = 0;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train_set.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    double total_loss = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& ex = train_set.examples[order[i]];
      double loss = 0.0;
      try {
        loss = train_step(model, ex, cfg);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                            ", example " + std::to_string(i) + ")");
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch) + ", example " + std::to_string(i));
      }
      total_loss += loss;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = total_loss / static_cast<double>(order.size());
    stats.dev_metric = evaluate_dev_metric(model, dev_set);
    if (report != nullptr) report->epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    const bool improved = lower_is_better ? stats.dev_metric < best_metric
                                          : stats.dev_metric > best_metric;
    if (improved) {
      best_metric = stats.dev_metric;
      best_model = model;
      best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= cfg.patience) break;
    }
  }

  if (report != nullptr) {
    report->best_epoch = best_epoch;
    report->best_dev_metric = best_metric;
  }
  return best_model;
}

}  // namespace mrnn
