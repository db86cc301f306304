#include "mrnn/models.hpp"

#include <cmath>
#include <string>

#include "mrnn/ordinal.hpp"

namespace mrnn {

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::matrix_space: return "matrix-space";
    case ModelKind::elman: return "elman";
    case ModelKind::mrnn: return "mrnn";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "matrix-space") return ModelKind::matrix_space;
  if (name == "elman") return ModelKind::elman;
  if (name == "mrnn") return ModelKind::mrnn;
  throw DomainError("unknown model kind: " + name);
}

const char* head_kind_name(HeadKind h) {
  switch (h) {
    case HeadKind::ordinal: return "ordinal";
    case HeadKind::classify: return "classify";
    case HeadKind::scalar: return "scalar";
  }
  return "?";
}

HeadKind head_kind_from_name(const std::string& name) {
  if (name == "ordinal") return HeadKind::ordinal;
  if (name == "classify") return HeadKind::classify;
  if (name == "scalar") return HeadKind::scalar;
  throw DomainError("unknown head kind: " + name);
}

std::size_t head_output_dim(HeadKind head, int n_classes) {
  switch (head) {
    case HeadKind::ordinal: return static_cast<std::size_t>(n_classes - 1);
    case HeadKind::classify: return static_cast<std::size_t>(n_classes);
    case HeadKind::scalar: return 1;
  }
  return 0;
}

Activation head_output_activation(HeadKind head) {
  return head == HeadKind::classify ? Activation::softmax : Activation::sigmoid;
}

MatrixSpaceResult forward_matrix_space(const MatrixSpaceParams& p,
                                       const std::vector<int>& token_ids) {
  if (token_ids.empty()) {
    throw DomainError("forward_matrix_space: empty sequence");
  }
  MatrixSpaceResult res;
  res.hidden.reserve(token_ids.size() + 1);
  res.hidden.push_back(p.h0);
  Vector h = p.h0;
  for (int id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.word_matrices.size()) {
      throw DomainError("forward_matrix_space: no matrix for token id " +
                        std::to_string(id));
    }
    h = matvec(p.word_matrices[static_cast<std::size_t>(id)], h);
    res.hidden.push_back(h);
  }
  res.score = dot(p.u, h);
  return res;
}

Vector matrix_space_output(const MatrixSpaceParams& p, const Vector& h) {
  Vector z = matvec(p.U_out, h);
  for (std::size_t i = 0; i < z.dim(); ++i) z[i] += p.c_out[i];
  return apply_activation(p.g, z);
}

RnnTrace forward_elman(const ElmanParams& p, const std::vector<Vector>& inputs) {
  if (p.f == Activation::softmax) {
    throw DomainError("forward_elman: softmax is an output nonlinearity, not a "
                      "recurrence nonlinearity");
  }
  RnnTrace trace;
  trace.hidden.reserve(inputs.size() + 1);
  trace.preact.reserve(inputs.size());
  trace.outputs.reserve(inputs.size());
  trace.hidden.push_back(p.h0);
  Vector h = p.h0;
  for (const Vector& x : inputs) {
    if (x.dim() != p.d_x()) {
      throw ShapeError("forward_elman: input dim " + std::to_string(x.dim()) +
                       " but W expects " + std::to_string(p.d_x()));
    }
    Vector a = matvec(p.W, x);
    const Vector vh = matvec(p.V, h);
    for (std::size_t i = 0; i < a.dim(); ++i) a[i] += vh[i] + p.b[i];
    h = apply_activation(p.f, a);
    Vector z = matvec(p.U, h);
    for (std::size_t i = 0; i < z.dim(); ++i) z[i] += p.c[i];
    trace.preact.push_back(std::move(a));
    trace.hidden.push_back(h);
    trace.outputs.push_back(apply_activation(p.g, z));
  }
  return trace;
}

RnnTrace forward_mrnn(const MRnnParams& p, const std::vector<Vector>& inputs) {
  if (p.f == Activation::softmax) {
    throw DomainError("forward_mrnn: softmax is an output nonlinearity, not a "
                      "recurrence nonlinearity");
  }
  RnnTrace trace;
  trace.hidden.reserve(inputs.size() + 1);
  trace.preact.reserve(inputs.size());
  trace.outputs.reserve(inputs.size());
  trace.hidden.push_back(p.h0);
  Vector h = p.h0;
  for (const Vector& x : inputs) {
    if (x.dim() + 1 != p.A.n_in_x()) {
      throw ShapeError("forward_mrnn: input dim " + std::to_string(x.dim()) +
                       " but tensor expects " + std::to_string(p.A.n_in_x() - 1));
    }
    const Vector xb = augment_with_bias(x);
    const Vector hb = augment_with_bias(h);
    Vector a = bilinear(xb, p.A, hb);
    h = apply_activation(p.f, a);
    trace.preact.push_back(std::move(a));
    trace.hidden.push_back(h);
    trace.outputs.push_back(apply_activation(p.g, matvec(p.U, augment_with_bias(h))));
  }
  return trace;
}

MRnnParams mrnn_from_matrix_space(const MatrixSpaceParams& p) {
  const std::size_t m = p.m;
  const std::size_t vocab = p.word_matrices.size();
  MRnnParams q;
  q.A = Tensor3(m, vocab + 1, m + 1);
  for (std::size_t w = 0; w < vocab; ++w) {
    Matrix& b = q.A.base(w);
    const Matrix& mw = p.word_matrices[w];
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < m; ++c) b(r, c) = mw(r, c);
    // bias column stays zero
  }
  // base matrix for the input bias slot stays zero: no additive term
  q.U = Matrix(1, m + 1);
  for (std::size_t c = 0; c < m; ++c) q.U(0, c) = p.u[c];
  q.h0 = p.h0;
  q.f = Activation::identity;
  q.g = Activation::identity;
  return q;
}

MRnnParams mrnn_embed_elman(const ElmanParams& p) {
  const std::size_t dx = p.d_x();
  const std::size_t dh = p.d_h();
  MRnnParams q;
  q.A = Tensor3(dh, dx + 1, dh + 1);
  // W lands in the bias column of each input slice, V and b in the bias
  // input slice; the multiplicative core stays zero.
  for (std::size_t j = 0; j < dx; ++j) {
    Matrix& bj = q.A.base(j);
    for (std::size_t i = 0; i < dh; ++i) bj(i, dh) = p.W(i, j);
  }
  Matrix& bias_slice = q.A.base(dx);
  for (std::size_t i = 0; i < dh; ++i) {
    for (std::size_t k = 0; k < dh; ++k) bias_slice(i, k) = p.V(i, k);
    bias_slice(i, dh) = p.b[i];
  }
  q.U = Matrix(p.n_out(), dh + 1);
  for (std::size_t r = 0; r < p.n_out(); ++r) {
    for (std::size_t c = 0; c < dh; ++c) q.U(r, c) = p.U(r, c);
    q.U(r, dh) = p.c[r];
  }
  q.h0 = p.h0;
  q.f = p.f;
  q.g = p.g;
  return q;
}

Vector one_hot(std::size_t dim, std::size_t index) {
  Vector v(dim);
  v[index] = 1.0;
  return v;
}

int predict_label(HeadKind head, int n_classes, const Vector& output) {
  const std::size_t want = head_output_dim(head, n_classes);
  if (output.dim() != want) {
    throw ShapeError("predict_label: output dim " + std::to_string(output.dim()) +
                     " but head expects " + std::to_string(want));
  }
  switch (head) {
    case HeadKind::classify: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < output.dim(); ++i) {
        if (output[i] > output[best]) best = i;  // ties keep the lowest index
      }
      return static_cast<int>(best);
    }
    case HeadKind::ordinal:
      return ordinal_decode(output);
    case HeadKind::scalar:
      return output[0] >= 0.5 ? 1 : 0;
  }
  return 0;
}

std::size_t Model::hidden_dim() const {
  switch (kind) {
    case ModelKind::matrix_space: return matrix_space().m;
    case ModelKind::elman: return elman().d_h();
    case ModelKind::mrnn: return mrnn().d_h();
  }
  return 0;
}

std::vector<Vector> Model::input_vectors(const std::vector<int>& token_ids) const {
  if (!embeddings) {
    throw DomainError("model has no embedding table");
  }
  std::vector<Vector> xs;
  xs.reserve(token_ids.size());
  for (int id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= embeddings->vectors.size()) {
      throw DomainError("token id " + std::to_string(id) + " outside embedding table");
    }
    xs.push_back(embeddings->vectors[static_cast<std::size_t>(id)]);
  }
  return xs;
}

Vector Model::output_for(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw DomainError("output_for: empty sequence");
  switch (kind) {
    case ModelKind::matrix_space: {
      const auto res = forward_matrix_space(matrix_space(), token_ids);
      return matrix_space_output(matrix_space(), res.hidden.back());
    }
    case ModelKind::elman:
      return forward_elman(elman(), input_vectors(token_ids)).outputs.back();
    case ModelKind::mrnn:
      return forward_mrnn(mrnn(), input_vectors(token_ids)).outputs.back();
  }
  throw DomainError("output_for: bad model kind");
}

Vector Model::final_hidden(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw DomainError("final_hidden: empty sequence");
  switch (kind) {
    case ModelKind::matrix_space:
      return forward_matrix_space(matrix_space(), token_ids).hidden.back();
    case ModelKind::elman:
      return forward_elman(elman(), input_vectors(token_ids)).hidden.back();
    case ModelKind::mrnn:
      return forward_mrnn(mrnn(), input_vectors(token_ids)).hidden.back();
  }
  throw DomainError("final_hidden: bad model kind");
}

int Model::predict(const std::vector<int>& token_ids) const {
  return predict_label(head, n_classes, output_for(token_ids));
}

}  // namespace mrnn
