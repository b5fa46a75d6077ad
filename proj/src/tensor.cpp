#include "oie/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace oie {

namespace {

int product(const std::vector<int>& s) {
  int n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("Tensor: dimensions must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(product(shape)), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (static_cast<std::size_t>(product(shape)) != data.size()) {
    throw std::invalid_argument("Tensor: shape/data size mismatch");
  }
}

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= ndim()) throw std::out_of_range("Tensor::dim: axis out of range");
  return shape[static_cast<std::size_t>(i)];
}

int Tensor::numel() const { return static_cast<int>(data.size()); }

int Tensor::cols() const {
  if (shape.empty()) throw std::out_of_range("Tensor::cols: rank-0 tensor");
  return shape.back();
}

double& Tensor::at(int i, int j) {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

double Tensor::at(int i, int j) const {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

bool Tensor::finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor tmatmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("tmatmul: incompatible shapes " + a.shape_str() +
                                " x " + b.shape_str());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) c.at(i, j) += av * b.at(p, j);
    }
  }
  return c;
}

Tensor ttranspose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("ttranspose: expects rank 2");
  Tensor t({a.dim(1), a.dim(0)});
  for (int i = 0; i < a.dim(0); ++i)
    for (int j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor tadd(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tadd: shape mismatch");
  Tensor c = a;
  for (int i = 0; i < c.numel(); ++i) c.at(i) += b.at(i);
  return c;
}

Tensor tsub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tsub: shape mismatch");
  Tensor c = a;
  for (int i = 0; i < c.numel(); ++i) c.at(i) -= b.at(i);
  return c;
}

Tensor tscale(const Tensor& a, double c) {
  Tensor t = a;
  for (double& v : t.data) v *= c;
  return t;
}

Tensor tslice_rows(const Tensor& a, int r0, int r1) {
  if (a.ndim() != 2 || r0 < 0 || r1 > a.dim(0) || r0 >= r1) {
    throw std::invalid_argument("tslice_rows: bad range");
  }
  Tensor t({r1 - r0, a.dim(1)});
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < a.dim(1); ++j) t.at(i - r0, j) = a.at(i, j);
  return t;
}

Tensor tslice_cols(const Tensor& a, int c0, int c1) {
  if (a.ndim() != 2 || c0 < 0 || c1 > a.dim(1) || c0 >= c1) {
    throw std::invalid_argument("tslice_cols: bad range");
  }
  Tensor t({a.dim(0), c1 - c0});
  for (int i = 0; i < a.dim(0); ++i)
    for (int j = c0; j < c1; ++j) t.at(i, j - c0) = a.at(i, j);
  return t;
}

std::vector<double> tsoftmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("tsoftmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

double tmax_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tmax_abs_diff: shape mismatch");
  double m = 0.0;
  for (int i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace oie
