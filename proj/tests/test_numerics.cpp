#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mrnn/numerics.hpp"
#include "mrnn/rng.hpp"

using namespace mrnn;

namespace {

Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

Tensor3 random_tensor(Rng& rng, std::size_t n_out, std::size_t n_in_x,
                      std::size_t n_in_h) {
  Tensor3 t(n_out, n_in_x, n_in_h);
  for (std::size_t j = 0; j < n_in_x; ++j) {
    Matrix& b = t.base(j);
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-1.0, 1.0);
  }
  return t;
}

// Independent oracle: triple loop over a^i_{jk} x_j h_k.
Vector bilinear_bruteforce(const Vector& x, const Tensor3& a, const Vector& h) {
  Vector out(a.n_out());
  for (std::size_t i = 0; i < a.n_out(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.n_in_x(); ++j) {
      for (std::size_t k = 0; k < a.n_in_h(); ++k) {
        s += a.base(j)(i, k) * x[j] * h[k];
      }
    }
    out[i] = s;
  }
  return out;
}

}  // namespace

TEST_CASE("matvec identity and zero") {
  const Matrix id = Matrix::identity(3);
  const Vector v{1.0, 2.0, 3.0};
  const Vector out = matvec(id, v);
  CHECK(out == v);

  const Matrix zero(2, 3);
  const Vector z = matvec(zero, v);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("matvec hand-expanded product") {
  Matrix m(2, 2);
  m(0, 0) = 1.0; m(0, 1) = 2.0;
  m(1, 0) = 3.0; m(1, 1) = 4.0;
  const Vector out = matvec(m, Vector{1.0, 1.0});
  CHECK(out[0] == doctest::Approx(3.0));
  CHECK(out[1] == doctest::Approx(7.0));
}

TEST_CASE("matvec shape mismatch names both shapes") {
  const Matrix m(2, 3);
  const Vector v(4);
  CHECK_THROWS_WITH_AS(matvec(m, v), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matvec_transpose agrees with explicit transpose") {
  Rng rng(11);
  Matrix m(3, 4);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
  const Vector v = random_vector(rng, 3);
  Matrix mt(4, 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) mt(c, r) = m(r, c);
  const Vector a = matvec_transpose(m, v);
  const Vector b = matvec(mt, v);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(b[i]));
}

TEST_CASE("bilinear identity slices pass h through") {
  Tensor3 t(2, 2, 2);
  t.base(0) = Matrix::identity(2);
  t.base(1) = Matrix::identity(2);
  const Vector out = bilinear(Vector{1.0, 0.0}, t, Vector{3.0, 4.0});
  CHECK(out[0] == doctest::Approx(3.0));
  CHECK(out[1] == doctest::Approx(4.0));
}

TEST_CASE("bilinear of zero h is zero") {
  Rng rng(5);
  const Tensor3 t = random_tensor(rng, 3, 2, 4);
  const Vector x = random_vector(rng, 2);
  const Vector out = bilinear(x, t, Vector(4));
  for (std::size_t i = 0; i < out.dim(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("bilinear matches brute-force triple loop") {
  Rng rng(7);
  const Tensor3 t = random_tensor(rng, 2, 3, 2);
  const Vector x = random_vector(rng, 3);
  const Vector h = random_vector(rng, 2);
  const Vector fast = bilinear(x, t, h);
  const Vector slow = bilinear_bruteforce(x, t, h);
  for (std::size_t i = 0; i < fast.dim(); ++i) {
    CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
  }
}

TEST_CASE("bilinear shape errors") {
  const Tensor3 t(2, 3, 2);
  CHECK_THROWS_AS(bilinear(Vector(4), t, Vector(2)), ShapeError);
  CHECK_THROWS_AS(bilinear(Vector(3), t, Vector(5)), ShapeError);
}

TEST_CASE("contract_word selects the base matrix for one-hot input") {
  Rng rng(13);
  const Tensor3 t = random_tensor(rng, 3, 4, 3);
  for (std::size_t j = 0; j < 4; ++j) {
    Vector e(4);
    e[j] = 1.0;
    const Matrix m = contract_word(e, t);
    CHECK(m == t.base(j));
  }
}

TEST_CASE("contract_word of zero is the zero matrix, and is linear") {
  Rng rng(17);
  const Tensor3 t = random_tensor(rng, 2, 3, 2);
  const Matrix z = contract_word(Vector(3), t);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == 0.0);

  Vector e12(3);
  e12[0] = 1.0;
  e12[1] = 1.0;
  const Matrix sum = contract_word(e12, t);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(sum.data()[i] ==
          doctest::Approx(t.base(0).data()[i] + t.base(1).data()[i]));
  }
}

TEST_CASE("bilinear equals contract_word then matvec") {
  Rng rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_out = 1 + rng.index(4);
    const std::size_t n_in_x = 1 + rng.index(4);
    const std::size_t n_in_h = 1 + rng.index(4);
    const Tensor3 t = random_tensor(rng, n_out, n_in_x, n_in_h);
    const Vector x = random_vector(rng, n_in_x);
    const Vector h = random_vector(rng, n_in_h);
    const Vector a = bilinear(x, t, h);
    const Vector b = matvec(contract_word(x, t), h);
    for (std::size_t i = 0; i < a.dim(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilinear is linear in x and in h") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor3 t = random_tensor(rng, 3, 4, 3);
    const Vector x1 = random_vector(rng, 4);
    const Vector x2 = random_vector(rng, 4);
    const Vector h = random_vector(rng, 3);
    const double alpha = rng.uniform(-2.0, 2.0);
    const double beta = rng.uniform(-2.0, 2.0);

    Vector xc(4);
    for (std::size_t i = 0; i < 4; ++i) xc[i] = alpha * x1[i] + beta * x2[i];
    const Vector lhs = bilinear(xc, t, h);
    const Vector b1 = bilinear(x1, t, h);
    const Vector b2 = bilinear(x2, t, h);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(lhs[i] == doctest::Approx(alpha * b1[i] + beta * b2[i]).epsilon(1e-10));
    }

    const Vector h1 = random_vector(rng, 3);
    const Vector h2 = random_vector(rng, 3);
    Vector hc(3);
    for (std::size_t i = 0; i < 3; ++i) hc[i] = alpha * h1[i] + beta * h2[i];
    const Vector lh = bilinear(x1, t, hc);
    const Vector c1 = bilinear(x1, t, h1);
    const Vector c2 = bilinear(x1, t, h2);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(lh[i] == doctest::Approx(alpha * c1[i] + beta * c2[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("activation values") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  const Vector r = apply_activation(Activation::rectifier, Vector{-1.0, 2.0});
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);
  const Vector s = apply_activation(Activation::softmax, Vector{0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("sigmoid stays finite for extreme inputs") {
  const Vector v = apply_activation(Activation::sigmoid, Vector{-750.0, 750.0});
  CHECK(std::isfinite(v[0]));
  CHECK(std::isfinite(v[1]));
  CHECK(v[0] == doctest::Approx(0.0));
  CHECK(v[1] == doctest::Approx(1.0));
}

TEST_CASE("softmax is a probability vector") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector v = random_vector(rng, 1 + rng.index(6), -30.0, 30.0);
    const Vector s = apply_activation(Activation::softmax, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < s.dim(); ++i) {
      CHECK(s[i] > 0.0);
      CHECK(s[i] < 1.0 + 1e-15);
      sum += s[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("activation jacobians") {
  const Vector ones = activation_jacobian_diag(Activation::identity, Vector{-3.0, 0.0, 9.0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(ones[i] == 1.0);

  const Vector sg = activation_jacobian_diag(Activation::sigmoid, Vector{0.0});
  CHECK(sg[0] == doctest::Approx(0.25));

  // central finite difference of tanh at x = 5
  const double eps = 1e-5;
  const double fd = (std::tanh(5.0 + eps) - std::tanh(5.0 - eps)) / (2.0 * eps);
  const Vector th = activation_jacobian_diag(Activation::tanh, Vector{5.0});
  CHECK(std::abs(th[0] - fd) < 1e-6);

  CHECK_THROWS_AS(activation_jacobian_diag(Activation::softmax, Vector{0.0}), DomainError);
}

TEST_CASE("every elementwise derivative matches central differences") {
  Rng rng(31);
  const Activation acts[] = {Activation::identity, Activation::sigmoid,
                             Activation::tanh, Activation::rectifier};
  const double eps = 1e-5;
  for (const Activation a : acts) {
    for (int trial = 0; trial < 40; ++trial) {
      double x = rng.uniform(-3.0, 3.0);
      if (a == Activation::rectifier && std::abs(x) < 1e-4) x += 0.5;
      const Vector up = apply_activation(a, Vector{x + eps});
      const Vector down = apply_activation(a, Vector{x - eps});
      const double fd = (up[0] - down[0]) / (2.0 * eps);
      const Vector an = activation_jacobian_diag(a, Vector{x});
      CHECK(std::abs(an[0] - fd) < 1e-7);
    }
  }
}

TEST_CASE("activation names round-trip") {
  const Activation acts[] = {Activation::identity, Activation::sigmoid, Activation::tanh,
                             Activation::rectifier, Activation::softmax};
  for (const Activation a : acts) {
    CHECK(activation_from_name(activation_name(a)) == a);
  }
  CHECK_THROWS_AS(activation_from_name("gelu"), DomainError);
}
