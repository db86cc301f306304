#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "mrnn/corpus.hpp"
#include "mrnn/numerics.hpp"

namespace mrnn {

enum class ModelKind { matrix_space, elman, mrnn };
enum class HeadKind { ordinal, classify, scalar };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);
const char* head_kind_name(HeadKind h);
HeadKind head_kind_from_name(const std::string& name);

// Width of the output layer: K-1 (ordinal), K (classify) or 1 (scalar).
std::size_t head_output_dim(HeadKind head, int n_classes);
// Output nonlinearity paired with the head: sigmoid, softmax, sigmoid.
Activation head_output_activation(HeadKind head);

// One square operator per vocabulary id; a phrase is the ordered product of
// its word operators applied to the fixed start vector h0. The fixed vector u
// turns the final state into a scalar score; U_out/c_out form the trainable
// output layer used by the multi-output heads.
struct MatrixSpaceParams {
  std::size_t m = 0;                  // operator dimension
  std::vector<Matrix> word_matrices;  // one m x m matrix per vocabulary id
  Vector h0;                          // fixed, non-zero
  Vector u;                           // fixed scoring vector
  Matrix U_out;                       // n_out x m
  Vector c_out;                       // n_out
  Activation g = Activation::sigmoid;
};

// h_t = f(W x_t + V h_{t-1} + b),  y_t = g(U h_t + c)
struct ElmanParams {
  Matrix W;  // d_h x d_x
  Matrix V;  // d_h x d_h
  Vector b;  // d_h
  Matrix U;  // n_out x d_h
  Vector c;  // n_out
  Vector h0; // d_h
  Activation f = Activation::tanh;
  Activation g = Activation::sigmoid;

  std::size_t d_x() const { return W.cols(); }
  std::size_t d_h() const { return W.rows(); }
  std::size_t n_out() const { return U.rows(); }
};

// h_t = f(x'_t A h'_{t-1}),  y_t = g(U h'_t)  with x' = [x;1], h' = [h;1].
// The tensor has d_x+1 base matrices of shape d_h x (d_h+1); the extra input
// slice and hidden column absorb the additive weights and biases.
struct MRnnParams {
  Tensor3 A;  // (d_h, d_x+1, d_h+1)
  Matrix U;   // n_out x (d_h+1)
  Vector h0;  // d_h
  Activation f = Activation::tanh;
  Activation g = Activation::sigmoid;

  std::size_t d_x() const { return A.n_in_x() - 1; }
  std::size_t d_h() const { return A.n_out(); }
  std::size_t n_out() const { return U.rows(); }
};

struct MatrixSpaceResult {
  double score = 0.0;
  std::vector<Vector> hidden;  // h_0 .. h_T
};

struct RnnTrace {
  std::vector<Vector> hidden;   // h_0 .. h_T
  std::vector<Vector> preact;   // recurrence pre-activations a_1 .. a_T
  std::vector<Vector> outputs;  // y_1 .. y_T (after g)
};

// Applies word operators in sequence order, h_t = M(w_t) h_{t-1}, and scores
// the final state with u.
MatrixSpaceResult forward_matrix_space(const MatrixSpaceParams& p,
                                       const std::vector<int>& token_ids);

// Output-layer response for the final (or any) hidden state.
Vector matrix_space_output(const MatrixSpaceParams& p, const Vector& h);

RnnTrace forward_elman(const ElmanParams& p, const std::vector<Vector>& inputs);
RnnTrace forward_mrnn(const MRnnParams& p, const std::vector<Vector>& inputs);

// Exact embedding of a matrix-space model as an mRNN over one-hot inputs of
// dimension |vocab|: base matrix j holds word matrix j, additive blocks are
// zero, f and g are identity, and the single output row is [u^T, 0]. The
// scalar output then equals the matrix-space score.
MRnnParams mrnn_from_matrix_space(const MatrixSpaceParams& p);

// Packs (W, V, b) into the tensor's bias blocks and c into U's bias column,
// so the mRNN computes the identical function to the Elman network.
MRnnParams mrnn_embed_elman(const ElmanParams& p);

Vector one_hot(std::size_t dim, std::size_t index);

// classify -> argmax (lowest-index tie-break); ordinal -> threshold decode;
// scalar -> 1 iff >= 0.5.
int predict_label(HeadKind head, int n_classes, const Vector& output);

// A complete inference bundle: parameters plus the vocabulary and (for the
// vector-input families) the embedding table.
struct Model {
  ModelKind kind = ModelKind::mrnn;
  HeadKind head = HeadKind::ordinal;
  int n_classes = 2;
  Vocabulary vocab;
  std::optional<EmbeddingTable> embeddings;  // absent for matrix-space
  std::variant<MatrixSpaceParams, ElmanParams, MRnnParams> params;

  const MatrixSpaceParams& matrix_space() const { return std::get<MatrixSpaceParams>(params); }
  const ElmanParams& elman() const { return std::get<ElmanParams>(params); }
  const MRnnParams& mrnn() const { return std::get<MRnnParams>(params); }
  MatrixSpaceParams& matrix_space() { return std::get<MatrixSpaceParams>(params); }
  ElmanParams& elman() { return std::get<ElmanParams>(params); }
  MRnnParams& mrnn() { return std::get<MRnnParams>(params); }

  std::size_t hidden_dim() const;

  // Embedding sequence for a tokenized example.
  std::vector<Vector> input_vectors(const std::vector<int>& token_ids) const;

  // Raw output vector (after g) at the final step.
  Vector output_for(const std::vector<int>& token_ids) const;

  // Final hidden state h_T.
  Vector final_hidden(const std::vector<int>& token_ids) const;

  int predict(const std::vector<int>& token_ids) const;
};

}  // namespace mrnn
