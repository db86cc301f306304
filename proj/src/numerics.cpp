#include "mrnn/numerics.hpp"

#include <cmath>

namespace mrnn {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::rectifier: return "rectifier";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "rectifier") return Activation::rectifier;
  if (name == "softmax") return Activation::softmax;
  throw DomainError("unknown activation name: " + name);
}

static std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.dim()) {
    throw ShapeError("matvec: matrix is " + shape_str(m) + " but vector has dim " +
                     std::to_string(v.dim()));
  }
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) s += m(r, c) * v[c];
    out[r] = s;
  }
  return out;
}

Vector matvec_transpose(const Matrix& m, const Vector& v) {
  if (m.rows() != v.dim()) {
    throw ShapeError("matvec_transpose: matrix is " + shape_str(m) +
                     " but vector has dim " + std::to_string(v.dim()));
  }
  Vector out(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double vr = v[r];
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c) * vr;
  }
  return out;
}

Vector bilinear(const Vector& x, const Tensor3& a, const Vector& h) {
  if (x.dim() != a.n_in_x()) {
    throw ShapeError("bilinear: x has dim " + std::to_string(x.dim()) +
                     " but tensor expects n_in_x " + std::to_string(a.n_in_x()));
  }
  if (h.dim() != a.n_in_h()) {
    throw ShapeError("bilinear: h has dim " + std::to_string(h.dim()) +
                     " but tensor expects n_in_h " + std::to_string(a.n_in_h()));
  }
  Vector out(a.n_out());
  for (std::size_t j = 0; j < a.n_in_x(); ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    const Matrix& b = a.base(j);
    for (std::size_t i = 0; i < a.n_out(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.n_in_h(); ++k) s += b(i, k) * h[k];
      out[i] += xj * s;
    }
  }
  return out;
}

Matrix contract_word(const Vector& x, const Tensor3& a) {
  if (x.dim() != a.n_in_x()) {
    throw ShapeError("contract_word: x has dim " + std::to_string(x.dim()) +
                     " but tensor expects n_in_x " + std::to_string(a.n_in_x()));
  }
  Matrix m(a.n_out(), a.n_in_h());
  for (std::size_t j = 0; j < a.n_in_x(); ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    const Matrix& b = a.base(j);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] += xj * b.data()[i];
  }
  return m;
}

double sigmoid(double x) {
  // Branch form stays finite for large |x|.
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector apply_activation(Activation a, const Vector& v) {
  Vector out(v.dim());
  switch (a) {
    case Activation::identity:
      out = v;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < v.dim(); ++i) out[i] = sigmoid(v[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < v.dim(); ++i) out[i] = std::tanh(v[i]);
      break;
    case Activation::rectifier:
      for (std::size_t i = 0; i < v.dim(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
      break;
    case Activation::softmax: {
      double mx = v[0];
      for (std::size_t i = 1; i < v.dim(); ++i) mx = std::max(mx, v[i]);
      double z = 0.0;
      for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = std::exp(v[i] - mx);
        z += out[i];
      }
      for (std::size_t i = 0; i < v.dim(); ++i) out[i] /= z;
      break;
    }
  }
  return out;
}

Vector activation_jacobian_diag(Activation a, const Vector& preact) {
  if (a == Activation::softmax) {
    throw DomainError("activation_jacobian_diag: softmax is not an elementwise "
                      "recurrence nonlinearity");
  }
  Vector out(preact.dim());
  switch (a) {
    case Activation::identity:
      for (std::size_t i = 0; i < out.dim(); ++i) out[i] = 1.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < out.dim(); ++i) {
        const double s = sigmoid(preact[i]);
        out[i] = s * (1.0 - s);
      }
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < out.dim(); ++i) {
        const double t = std::tanh(preact[i]);
        out[i] = 1.0 - t * t;
      }
      break;
    case Activation::rectifier:
      // Subgradient 0 at exactly 0.
      for (std::size_t i = 0; i < out.dim(); ++i) out[i] = preact[i] > 0.0 ? 1.0 : 0.0;
      break;
    case Activation::softmax:
      break;  // unreachable
  }
  return out;
}

double dot(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("dot: dims " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

Matrix outer(const Vector& a, const Vector& b) {
  Matrix m(a.dim(), b.dim());
  for (std::size_t r = 0; r < a.dim(); ++r)
    for (std::size_t c = 0; c < b.dim(); ++c) m(r, c) = a[r] * b[c];
  return m;
}

Vector add(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("add: dims " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace mrnn
