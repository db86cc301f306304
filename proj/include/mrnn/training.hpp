#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrnn/corpus.hpp"
#include "mrnn/models.hpp"
#include "mrnn/numerics.hpp"
#include "mrnn/rng.hpp"

namespace mrnn {

// Raised on divergence or non-finite gradients during training.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  ModelKind model = ModelKind::mrnn;
  HeadKind head = HeadKind::ordinal;
  Activation f = Activation::tanh;
  int d_h = 8;
  int d_x = 0;  // taken from the embedding table when 0
  int n_classes = 2;
  double learning_rate = 0.1;
  double l2 = 0.0;
  int max_epochs = 300;
  int patience = 25;
  std::uint64_t seed = 42;
  double init_scale = 0.01;
  std::optional<double> clip_norm;
  bool intermediate_supervision = false;
  bool shuffle = true;
};

struct LossResult {
  double value = 0.0;
  Vector delta;  // d(loss)/d(output pre-activation)
};

// Per-head losses: ordinal sums binary cross-entropies against the
// cumulative target bits, classify is cross-entropy against one-hot, scalar
// is binary cross-entropy. In every case the returned delta is the gradient
// at the output pre-activations, i.e. output minus target.
LossResult head_loss(HeadKind head, const Vector& raw_output, int label, int n_classes);

struct ElmanGrads {
  Matrix W, V, U;
  Vector b, c;
  std::vector<Vector> inputs;  // d(loss)/d(x_t), one per step
};

struct MRnnGrads {
  Tensor3 A;
  Matrix U;
  std::vector<Vector> inputs;
};

struct MatrixSpaceGrads {
  std::unordered_map<int, Matrix> word;  // only words occurring in the sequence
  Matrix U_out;
  Vector c_out;
};

// BPTT. output_deltas holds one entry per time step; steps without
// supervision pass an empty (dim 0) vector.
ElmanGrads backward_elman(const ElmanParams& p, const std::vector<Vector>& inputs,
                          const RnnTrace& trace,
                          const std::vector<Vector>& output_deltas);

MRnnGrads backward_mrnn(const MRnnParams& p, const std::vector<Vector>& inputs,
                        const RnnTrace& trace,
                        const std::vector<Vector>& output_deltas);

// Chain rule through the operator product for the scalar score u^T h_T.
// Repeated words accumulate one contribution per occurrence.
MatrixSpaceGrads backward_matrix_space(const MatrixSpaceParams& p,
                                       const std::vector<int>& token_ids,
                                       const MatrixSpaceResult& trace,
                                       double score_delta);

// Same chain but driven by the trainable output layer's delta.
MatrixSpaceGrads backward_matrix_space_head(const MatrixSpaceParams& p,
                                            const std::vector<int>& token_ids,
                                            const MatrixSpaceResult& trace,
                                            const Vector& output_delta);

// Sums per-step input gradients into per-token-id rows.
std::unordered_map<int, Vector> accumulate_embedding_grads(
    const std::vector<int>& token_ids, const std::vector<Vector>& input_grads);

// A named parameter buffer paired with its gradient buffer.
struct ParamGradPair {
  std::string name;
  double* param = nullptr;
  const double* grad = nullptr;
  std::size_t n = 0;
};

double global_grad_norm(const std::vector<ParamGradPair>& blocks);

// theta <- theta - lr * (g + l2 * theta), with g rescaled first when the
// global gradient norm exceeds clip_norm. Throws TrainingError on non-finite
// gradients, naming the offending block.
void sgd_update(std::vector<ParamGradPair>& blocks, double learning_rate, double l2,
                std::optional<double> clip_norm);

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double worst() const;
  bool all_below(double tol) const;
};

// Test hook: scales one analytic gradient entry before comparison.
struct FaultInjection {
  std::string block;
  std::size_t index = 0;
  double factor = 2.0;
};

// Central finite differences (L(t+e)-L(t-e))/2e against the analytic BPTT
// gradient for every trainable coordinate, reported per parameter block as
// max relative error |a-n|/max(|a|,|n|,1e-6). Loss is applied at the final
// step. The model is restored to its original state on return.
GradCheckReport grad_check(Model& model, const LabeledSequence& example,
                           double epsilon = 1e-5,
                           const FaultInjection* fault = nullptr);

// Loss of the model on one example with supervision at the final step.
double model_example_loss(const Model& model, const LabeledSequence& example);

// Random small model + example for gradient checking. Rectifier instances
// are resampled until no recurrence pre-activation sits within margin of 0.
struct GradCheckInstance {
  Model model;
  LabeledSequence example;
};
GradCheckInstance make_gradcheck_instance(ModelKind kind, HeadKind head, Activation f,
                                          std::uint64_t seed,
                                          double rectifier_margin = 1e-4);

// ---------------------------------------------------------------------------
// Parameter initialization

MatrixSpaceParams init_matrix_space(std::size_t vocab_size, std::size_t m,
                                    HeadKind head, int n_classes,
                                    double init_scale, Rng& rng);
ElmanParams init_elman(std::size_t d_x, std::size_t d_h, HeadKind head, int n_classes,
                       Activation f, double init_scale, Rng& rng);
MRnnParams init_mrnn(std::size_t d_x, std::size_t d_h, HeadKind head, int n_classes,
                     Activation f, double init_scale, Rng& rng);

Model init_model(const TrainConfig& cfg, const Vocabulary& vocab,
                 std::optional<EmbeddingTable> embeddings, Rng& rng);

// ---------------------------------------------------------------------------
// Training loop

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_metric = 0.0;  // ranking loss (ordinal) or accuracy (otherwise)
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_dev_metric = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Dev metric under the early-stopping convention: ranking loss for the
// ordinal head (lower is better), accuracy otherwise (higher is better).
double evaluate_dev_metric(const Model& model, const Corpus& corpus);

// (ranking_loss, accuracy) over a corpus.
std::pair<double, double> evaluate_metrics(const Model& model, const Corpus& corpus);

// Per-example SGD with deterministic shuffling, dev evaluation after each
// epoch, and best-snapshot early stopping. Returns the best-dev model.
Model train(const TrainConfig& cfg, const Corpus& train_set, const Corpus& dev_set,
            const Vocabulary& vocab, std::optional<EmbeddingTable> embeddings,
            TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

}  // namespace mrnn
