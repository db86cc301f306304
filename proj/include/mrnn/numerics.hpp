#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrnn {

// Thrown when operand shapes do not line up. The message names both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a value is outside an operation's domain.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dense double-precision vector.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : v_(dim, fill) {}
  Vector(std::initializer_list<double> xs) : v_(xs) {}
  explicit Vector(std::vector<double> xs) : v_(std::move(xs)) {}

  std::size_t dim() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  double& operator[](std::size_t i) { return v_[i]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::size_t size() const { return v_.size(); }

  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool operator==(const Vector& o) const { return v_ == o.v_; }

 private:
  std::vector<double> v_;
};

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), d_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  std::size_t size() const { return d_.size(); }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> d_;
};

// Third-order tensor stored as n_in_x base matrices of shape n_out x n_in_h.
// The bilinear form x'A h picks up base matrix j with weight x_j, so a word
// vector turns into the operator sum_j x_j B_j.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t n_out, std::size_t n_in_x, std::size_t n_in_h)
      : n_out_(n_out), n_in_x_(n_in_x), n_in_h_(n_in_h),
        base_(n_in_x, Matrix(n_out, n_in_h)) {}

  std::size_t n_out() const { return n_out_; }
  std::size_t n_in_x() const { return n_in_x_; }
  std::size_t n_in_h() const { return n_in_h_; }

  Matrix& base(std::size_t j) { return base_[j]; }
  const Matrix& base(std::size_t j) const { return base_[j]; }

 private:
  std::size_t n_out_ = 0, n_in_x_ = 0, n_in_h_ = 0;
  std::vector<Matrix> base_;
};

// Softmax is an output-layer nonlinearity only; it is rejected as the
// recurrence nonlinearity and by activation_jacobian_diag.
enum class Activation { identity, sigmoid, tanh, rectifier, softmax };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// y = M v
Vector matvec(const Matrix& m, const Vector& v);
// y = M^T v, without materializing the transpose
Vector matvec_transpose(const Matrix& m, const Vector& v);

// v_i = x^T A^[i] h, computed as sum_j x_j (B_j h).
Vector bilinear(const Vector& x, const Tensor3& a, const Vector& h);

// M = sum_j x_j B_j; for every h, matvec(M, h) == bilinear(x, a, h).
Matrix contract_word(const Vector& x, const Tensor3& a);

Vector apply_activation(Activation a, const Vector& v);

// Elementwise derivative of the activation at the given pre-activations.
// Softmax is handled jointly with cross-entropy in the training module and
// is rejected here.
Vector activation_jacobian_diag(Activation a, const Vector& preact);

double sigmoid(double x);

double dot(const Vector& a, const Vector& b);
Matrix outer(const Vector& a, const Vector& b);
Vector add(const Vector& a, const Vector& b);

}  // namespace mrnn
