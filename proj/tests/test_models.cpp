#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mrnn/models.hpp"
#include "mrnn/rng.hpp"
#include "mrnn/training.hpp"

using namespace mrnn;

namespace {

Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double s = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
  return m;
}

ElmanParams random_elman(Rng& rng, std::size_t d_x, std::size_t d_h, std::size_t n_out) {
  ElmanParams p;
  p.W = random_matrix(rng, d_h, d_x);
  p.V = random_matrix(rng, d_h, d_h);
  p.b = random_vector(rng, d_h);
  p.U = random_matrix(rng, n_out, d_h);
  p.c = random_vector(rng, n_out);
  p.h0 = random_vector(rng, d_h);
  p.f = Activation::tanh;
  p.g = Activation::sigmoid;
  return p;
}

// Multiplicative-only tensor: zero additive blocks (bias slice and the bias
// column of every input slice).
MRnnParams random_pure_multiplicative(Rng& rng, std::size_t d_x, std::size_t d_h) {
  MRnnParams p;
  p.A = Tensor3(d_h, d_x + 1, d_h + 1);
  for (std::size_t j = 0; j < d_x; ++j) {
    Matrix& b = p.A.base(j);
    for (std::size_t i = 0; i < d_h; ++i)
      for (std::size_t k = 0; k < d_h; ++k) b(i, k) = rng.uniform(-1.0, 1.0);
  }
  p.U = Matrix(1, d_h + 1);
  for (std::size_t k = 0; k < d_h; ++k) p.U(0, k) = rng.uniform(-1.0, 1.0);
  p.h0 = random_vector(rng, d_h);
  p.f = Activation::identity;
  p.g = Activation::identity;
  return p;
}

MatrixSpaceParams random_matrix_space(Rng& rng, std::size_t vocab, std::size_t m) {
  MatrixSpaceParams p;
  p.m = m;
  for (std::size_t w = 0; w < vocab; ++w) {
    p.word_matrices.push_back(random_matrix(rng, m, m));
  }
  p.h0 = random_vector(rng, m);
  p.u = random_vector(rng, m);
  p.U_out = Matrix(1, m);
  p.c_out = Vector(1);
  p.g = Activation::identity;
  return p;
}

}  // namespace

TEST_CASE("matrix-space with identity operators keeps the start vector") {
  Rng rng(1);
  MatrixSpaceParams p = random_matrix_space(rng, 4, 3);
  for (auto& m : p.word_matrices) m = Matrix::identity(3);
  const auto res = forward_matrix_space(p, {1, 2, 3, 0});
  CHECK(res.score == doctest::Approx(dot(p.u, p.h0)));
  CHECK(res.hidden.size() == 5);
}

TEST_CASE("matrix-space single word matches the 2x2 hand computation") {
  MatrixSpaceParams p;
  p.m = 2;
  Matrix mw(2, 2);
  mw(0, 0) = 1.0; mw(0, 1) = 2.0;
  mw(1, 0) = 3.0; mw(1, 1) = 4.0;
  p.word_matrices = {mw};
  p.h0 = Vector{1.0, -1.0};
  p.u = Vector{2.0, 1.0};
  p.U_out = Matrix(1, 2);
  p.c_out = Vector(1);
  // M h0 = [1-2, 3-4] = [-1, -1]; u . (M h0) = -2 - 1 = -3
  const auto res = forward_matrix_space(p, {0});
  CHECK(res.score == doctest::Approx(-3.0));
  // the same number as h0^T M^T u
  const double transposed = dot(p.h0, matvec_transpose(mw, p.u));
  CHECK(res.score == doctest::Approx(transposed));
}

TEST_CASE("matrix-space order matters for generic operators") {
  Rng rng(2);
  const MatrixSpaceParams p = random_matrix_space(rng, 2, 2);
  const double fwd = forward_matrix_space(p, {0, 1}).score;
  const double rev = forward_matrix_space(p, {1, 0}).score;
  CHECK(fwd != rev);
}

TEST_CASE("matrix-space rejects unknown ids and empty input") {
  Rng rng(3);
  const MatrixSpaceParams p = random_matrix_space(rng, 2, 2);
  CHECK_THROWS_AS(forward_matrix_space(p, {5}), DomainError);
  CHECK_THROWS_AS(forward_matrix_space(p, {}), DomainError);
}

TEST_CASE("elman zero dynamics emit g(c) at every step") {
  Rng rng(4);
  ElmanParams p = random_elman(rng, 3, 2, 4);
  p.W = Matrix(2, 3);
  p.V = Matrix(2, 2);
  p.b = Vector(2);
  p.h0 = Vector(2);
  p.f = Activation::identity;
  const std::vector<Vector> xs = {random_vector(rng, 3), random_vector(rng, 3)};
  const RnnTrace trace = forward_elman(p, xs);
  const Vector want = apply_activation(p.g, p.c);
  for (const auto& y : trace.outputs) {
    for (std::size_t i = 0; i < y.dim(); ++i) CHECK(y[i] == doctest::Approx(want[i]));
  }
  for (const auto& h : trace.hidden) {
    for (std::size_t i = 0; i < h.dim(); ++i) CHECK(h[i] == 0.0);
  }
}

TEST_CASE("elman single step unfolds the recurrence once") {
  Rng rng(5);
  const ElmanParams p = random_elman(rng, 3, 2, 1);
  const Vector x = random_vector(rng, 3);
  const RnnTrace trace = forward_elman(p, {x});
  Vector a = matvec(p.W, x);
  const Vector vh = matvec(p.V, p.h0);
  for (std::size_t i = 0; i < a.dim(); ++i) a[i] += vh[i] + p.b[i];
  const Vector h1 = apply_activation(p.f, a);
  for (std::size_t i = 0; i < h1.dim(); ++i) {
    CHECK(trace.hidden[1][i] == doctest::Approx(h1[i]));
  }
}

TEST_CASE("elman matches an independent step-by-step recompute") {
  Rng rng(6);
  const std::size_t d_x = 4, d_h = 3, n_out = 2;
  const ElmanParams p = random_elman(rng, d_x, d_h, n_out);
  const std::vector<Vector> xs = {random_vector(rng, d_x), random_vector(rng, d_x),
                                  random_vector(rng, d_x)};
  const RnnTrace trace = forward_elman(p, xs);

  // scalar-by-scalar oracle, no shared helpers
  std::vector<double> h(d_h);
  for (std::size_t i = 0; i < d_h; ++i) h[i] = p.h0[i];
  for (std::size_t t = 0; t < xs.size(); ++t) {
    std::vector<double> nh(d_h);
    for (std::size_t i = 0; i < d_h; ++i) {
      double s = p.b[i];
      for (std::size_t j = 0; j < d_x; ++j) s += p.W(i, j) * xs[t][j];
      for (std::size_t k = 0; k < d_h; ++k) s += p.V(i, k) * h[k];
      nh[i] = std::tanh(s);
    }
    h = nh;
    for (std::size_t i = 0; i < d_h; ++i) {
      CHECK(trace.hidden[t + 1][i] == doctest::Approx(h[i]).epsilon(1e-12));
    }
    for (std::size_t r = 0; r < n_out; ++r) {
      double z = p.c[r];
      for (std::size_t k = 0; k < d_h; ++k) z += p.U(r, k) * h[k];
      const double y = 1.0 / (1.0 + std::exp(-z));
      CHECK(trace.outputs[t][r] == doctest::Approx(y).epsilon(1e-12));
    }
  }
}

TEST_CASE("mrnn with additive-only tensor reproduces the elman network") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d_x = 2 + rng.index(4);
    const std::size_t d_h = 2 + rng.index(4);
    const std::size_t n_out = 1 + rng.index(3);
    ElmanParams e = random_elman(rng, d_x, d_h, n_out);
    const MRnnParams q = mrnn_embed_elman(e);
    std::vector<Vector> xs;
    const std::size_t len = 1 + rng.index(4);
    for (std::size_t t = 0; t < len; ++t) xs.push_back(random_vector(rng, d_x));

    const RnnTrace te = forward_elman(e, xs);
    const RnnTrace tm = forward_mrnn(q, xs);
    REQUIRE(te.hidden.size() == tm.hidden.size());
    for (std::size_t t = 0; t < te.hidden.size(); ++t) {
      for (std::size_t i = 0; i < d_h; ++i) {
        CHECK(std::abs(te.hidden[t][i] - tm.hidden[t][i]) < 1e-12);
      }
    }
    for (std::size_t t = 0; t < te.outputs.size(); ++t) {
      for (std::size_t i = 0; i < n_out; ++i) {
        CHECK(std::abs(te.outputs[t][i] - tm.outputs[t][i]) < 1e-12);
      }
    }
  }
}

TEST_CASE("pure multiplicative mrnn unfolds to an operator product") {
  Rng rng(8);
  const std::size_t d_x = 3, d_h = 2;
  const MRnnParams p = random_pure_multiplicative(rng, d_x, d_h);
  const Vector x1 = random_vector(rng, d_x);
  const Vector x2 = random_vector(rng, d_x);
  const RnnTrace trace = forward_mrnn(p, {x1, x2});

  // effective square operator of a word: non-bias block of the contraction
  const auto word_operator = [&](const Vector& x) {
    const Matrix wide = contract_word(augment_with_bias(x), p.A);
    Matrix sq(d_h, d_h);
    for (std::size_t r = 0; r < d_h; ++r)
      for (std::size_t c = 0; c < d_h; ++c) sq(r, c) = wide(r, c);
    return sq;
  };
  const Vector product = matvec(word_operator(x2), matvec(word_operator(x1), p.h0));
  for (std::size_t i = 0; i < d_h; ++i) {
    CHECK(std::abs(trace.hidden.back()[i] - product[i]) < 1e-10);
  }
}

TEST_CASE("zero tensor collapses every state to f(0)") {
  MRnnParams p;
  p.A = Tensor3(3, 4, 4);
  p.U = Matrix(1, 4);
  p.h0 = Vector(3, 0.5);
  p.f = Activation::tanh;
  p.g = Activation::sigmoid;
  Rng rng(9);
  const RnnTrace trace = forward_mrnn(p, {random_vector(rng, 3), random_vector(rng, 3)});
  for (std::size_t t = 1; t < trace.hidden.size(); ++t) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(trace.hidden[t][i] == 0.0);
  }
}

TEST_CASE("one-hot mrnn reproduces matrix-space scores exhaustively") {
  Rng rng(10);
  const std::size_t vocab = 3, m = 3;
  for (int draw = 0; draw < 3; ++draw) {
    const MatrixSpaceParams ms = random_matrix_space(rng, vocab, m);
    const MRnnParams q = mrnn_from_matrix_space(ms);

    // the conversion plants each word matrix in the non-bias block
    for (std::size_t w = 0; w < vocab; ++w) {
      const Matrix planted = contract_word(
          augment_with_bias(one_hot(vocab, w)), q.A);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
          CHECK(planted(r, c) == ms.word_matrices[w](r, c));
        }
        CHECK(planted(r, m) == 0.0);
      }
    }

    for (std::size_t len = 1; len <= 4; ++len) {
      std::vector<int> ids(len, 0);
      while (true) {
        const double want = forward_matrix_space(ms, ids).score;
        std::vector<Vector> xs;
        for (int id : ids) xs.push_back(one_hot(vocab, static_cast<std::size_t>(id)));
        const double got = forward_mrnn(q, xs).outputs.back()[0];
        CHECK(std::abs(want - got) < 1e-10);

        int pos = static_cast<int>(len) - 1;
        while (pos >= 0 && ids[static_cast<std::size_t>(pos)] == static_cast<int>(vocab) - 1) {
          ids[static_cast<std::size_t>(pos)] = 0;
          --pos;
        }
        if (pos < 0) break;
        ++ids[static_cast<std::size_t>(pos)];
      }
    }
  }
}

TEST_CASE("one-hot conversion of identity operators keeps h0") {
  Rng rng(11);
  MatrixSpaceParams ms = random_matrix_space(rng, 3, 2);
  for (auto& m : ms.word_matrices) m = Matrix::identity(2);
  const MRnnParams q = mrnn_from_matrix_space(ms);
  const RnnTrace trace = forward_mrnn(
      q, {one_hot(3, 0), one_hot(3, 2), one_hot(3, 1)});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(trace.hidden.back()[i] == doctest::Approx(ms.h0[i]));
  }
}

TEST_CASE("swapping two tokens changes the output") {
  Rng rng(12);
  const MRnnParams p = random_pure_multiplicative(rng, 3, 3);
  const Vector a = random_vector(rng, 3);
  const Vector b = random_vector(rng, 3);
  const double ab = forward_mrnn(p, {a, b}).outputs.back()[0];
  const double ba = forward_mrnn(p, {b, a}).outputs.back()[0];
  CHECK(ab != ba);
}

TEST_CASE("forward passes are pure") {
  Rng rng(13);
  const MRnnParams p = random_pure_multiplicative(rng, 3, 3);
  const std::vector<Vector> xs = {random_vector(rng, 3), random_vector(rng, 3)};
  const RnnTrace one = forward_mrnn(p, xs);
  const RnnTrace two = forward_mrnn(p, xs);
  for (std::size_t t = 0; t < one.outputs.size(); ++t) {
    CHECK(one.outputs[t] == two.outputs[t]);
    CHECK(one.hidden[t + 1] == two.hidden[t + 1]);
  }
}

TEST_CASE("softmax is rejected as the recurrence nonlinearity") {
  Rng rng(15);
  ElmanParams e = random_elman(rng, 2, 2, 1);
  e.f = Activation::softmax;
  CHECK_THROWS_AS(forward_elman(e, {random_vector(rng, 2)}), DomainError);

  MRnnParams m = random_pure_multiplicative(rng, 2, 2);
  m.f = Activation::softmax;
  CHECK_THROWS_AS(forward_mrnn(m, {random_vector(rng, 2)}), DomainError);
}

TEST_CASE("predict_label per head") {
  CHECK(predict_label(HeadKind::classify, 3, Vector{0.1, 0.7, 0.2}) == 1);
  CHECK(predict_label(HeadKind::classify, 3, Vector{0.4, 0.4, 0.2}) == 0);
  CHECK(predict_label(HeadKind::ordinal, 5, Vector{0.9, 0.6, 0.4, 0.7}) == 2);
  CHECK(predict_label(HeadKind::scalar, 2, Vector{0.5}) == 1);
  CHECK(predict_label(HeadKind::scalar, 2, Vector{0.49}) == 0);
  CHECK_THROWS_AS(predict_label(HeadKind::classify, 3, Vector{0.5, 0.5}), ShapeError);
}

TEST_CASE("model output and prediction go through the embedding table") {
  const Vocabulary vocab = Vocabulary::with_unk({"a", "b"});
  EmbeddingTable emb;
  emb.dim = 2;
  emb.trainable = false;
  emb.vectors = {Vector{0.0, 0.0}, Vector{1.0, 0.0}, Vector{0.0, 1.0}};

  Rng rng(14);
  TrainConfig cfg;
  cfg.model = ModelKind::elman;
  cfg.head = HeadKind::classify;
  cfg.n_classes = 3;
  cfg.d_h = 3;
  Model model = init_model(cfg, vocab, emb, rng);
  const Vector y = model.output_for({1, 2});
  CHECK(y.dim() == 3);
  const int label = model.predict({1, 2});
  CHECK(label >= 0);
  CHECK(label < 3);
  CHECK(model.final_hidden({1, 2}).dim() == 3);
}
