#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace morseflow {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2 operator-() const { return {-x, -y}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }
inline double norm2(const Vec2& v) { return v.x * v.x + v.y * v.y; }
inline Vec2 perp(const Vec2& v) { return {-v.y, v.x}; }

struct Mat2 {
  // row-major: [a b; c d]
  double a = 0, b = 0, c = 0, d = 0;

  static Mat2 identity() { return {1, 0, 0, 1}; }
  static Mat2 scale(double s) { return {s, 0, 0, s}; }

  Vec2 operator*(const Vec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  Mat2 operator*(const Mat2& m) const {
    return {a * m.a + b * m.c, a * m.b + b * m.d, c * m.a + d * m.c, c * m.b + d * m.d};
  }
  Mat2 operator+(const Mat2& m) const { return {a + m.a, b + m.b, c + m.c, d + m.d}; }
  Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
  double det() const { return a * d - b * c; }
  Mat2 inverse() const {
    double dt = det();
    if (std::abs(dt) < 1e-300) throw std::runtime_error("Mat2::inverse: singular matrix");
    return {d / dt, -b / dt, -c / dt, a / dt};
  }
};

// Dense row-major matrix, only used at small sizes (shooting Jacobians,
// collapse kernels). Hand-rolled solvers keep the library dependency-free.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Solve A x = b by LU with partial pivoting. Returns false when A is
// numerically singular (pivot below tol relative to the largest entry).
inline bool lu_solve(Matrix A, std::vector<double> b, std::vector<double>& x,
                     double rel_tol = 1e-13) {
  const std::size_t n = A.rows();
  if (A.cols() != n || b.size() != n) throw std::invalid_argument("lu_solve: shape mismatch");
  double amax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) amax = std::max(amax, std::abs(A(i, j)));
  if (amax == 0.0) return false;
  std::vector<std::size_t> piv(n);
  for (std::size_t i = 0; i < n; ++i) piv[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(A(k, k));
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A(i, k)) > best) {
        best = std::abs(A(i, k));
        p = i;
      }
    if (best < rel_tol * amax) return false;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(k, j), A(p, j));
      std::swap(b[k], b[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = A(i, k) / A(k, k);
      A(i, k) = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
      b[i] -= f * b[k];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t ik = n; ik-- > 0;) {
    double s = b[ik];
    for (std::size_t j = ik + 1; j < n; ++j) s -= A(ik, j) * x[j];
    x[ik] = s / A(ik, ik);
  }
  return true;
}

// Numerical rank via Householder QR with column pivoting.
inline std::size_t matrix_rank(Matrix A, double rel_tol = 1e-10) {
  const std::size_t m = A.rows(), n = A.cols();
  std::vector<double> colnorm(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) colnorm[j] += A(i, j) * A(i, j);
  double scale = 0.0;
  for (double c : colnorm) scale = std::max(scale, std::sqrt(c));
  if (scale == 0.0) return 0;
  std::size_t rank = 0;
  const std::size_t kmax = std::min(m, n);
  for (std::size_t k = 0; k < kmax; ++k) {
    // pivot: column with largest remaining norm
    std::size_t p = k;
    double best = -1.0;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += A(i, j) * A(i, j);
      if (s > best) {
        best = s;
        p = j;
      }
    }
    if (p != k)
      for (std::size_t i = 0; i < m; ++i) std::swap(A(i, k), A(i, p));
    double nrm = std::sqrt(std::max(best, 0.0));
    if (nrm <= rel_tol * scale) break;
    ++rank;
    // Householder reflector on column k
    double alpha = (A(k, k) >= 0 ? -nrm : nrm);
    double vk = A(k, k) - alpha;
    std::vector<double> v(m - k);
    v[0] = vk;
    for (std::size_t i = k + 1; i < m; ++i) v[i - k] = A(i, k);
    double vnorm2 = 0.0;
    for (double t : v) vnorm2 += t * t;
    if (vnorm2 < 1e-300) continue;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * A(i, j);
      s = 2.0 * s / vnorm2;
      for (std::size_t i = k; i < m; ++i) A(i, j) -= s * v[i - k];
    }
    A(k, k) = alpha;
  }
  return rank;
}

// Kernel basis of A by Gauss-Jordan reduction.
inline std::vector<std::vector<double>> null_space(Matrix A, double rel_tol = 1e-10) {
  const std::size_t m = A.rows(), n = A.cols();
  double amax = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) amax = std::max(amax, std::abs(A(i, j)));
  const double tol = rel_tol * std::max(amax, 1.0);
  std::vector<int> pivot_col;
  std::size_t row = 0;
  for (std::size_t col = 0; col < n && row < m; ++col) {
    std::size_t p = row;
    double best = std::abs(A(row, col));
    for (std::size_t i = row + 1; i < m; ++i)
      if (std::abs(A(i, col)) > best) {
        best = std::abs(A(i, col));
        p = i;
      }
    if (best <= tol) continue;
    if (p != row)
      for (std::size_t j = 0; j < n; ++j) std::swap(A(row, j), A(p, j));
    double piv = A(row, col);
    for (std::size_t j = 0; j < n; ++j) A(row, j) /= piv;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == row) continue;
      double f = A(i, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) A(i, j) -= f * A(row, j);
    }
    pivot_col.push_back(static_cast<int>(col));
    ++row;
  }
  std::vector<bool> is_pivot(n, false);
  for (int c : pivot_col) is_pivot[c] = true;
  std::vector<std::vector<double>> basis;
  for (std::size_t freec = 0; freec < n; ++freec) {
    if (is_pivot[freec]) continue;
    std::vector<double> v(n, 0.0);
    v[freec] = 1.0;
    for (std::size_t r = 0; r < pivot_col.size(); ++r) v[pivot_col[r]] = -A(r, freec);
    basis.push_back(std::move(v));
  }
  return basis;
}

// Nodes/weights for n-point Gauss-Legendre on [0,1], computed once by Newton
// iteration on the Legendre polynomial.
inline void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));  // initial guess on [-1,1]
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (x * p1 - p0) / (x * x - 1.0);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = 0.5 * (x + 1.0);
    weights[i] = 0.5 * w;
  }
}

}  // namespace morseflow
