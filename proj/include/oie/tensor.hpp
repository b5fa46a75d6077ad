#pragma once

#include <string>
#include <vector>

namespace oie {

// Dense row-major float64 array. Shapes are small (toy scale), so every op
// copies freely and checks bounds.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const;
  int numel() const;
  int rows() const { return dim(0); }
  int cols() const;  // last axis

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j);
  double at(int i, int j) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool finite() const;
  void fill(double v);

  std::string shape_str() const;
};

// Plain (tape-free) helpers. Used for inference-side math, diagnostics and
// test oracles that need an independent arithmetic path.
Tensor tmatmul(const Tensor& a, const Tensor& b);
Tensor ttranspose(const Tensor& a);
Tensor tadd(const Tensor& a, const Tensor& b);
Tensor tsub(const Tensor& a, const Tensor& b);
Tensor tscale(const Tensor& a, double c);
Tensor tslice_rows(const Tensor& a, int r0, int r1);
Tensor tslice_cols(const Tensor& a, int c0, int c1);
std::vector<double> tsoftmax(const std::vector<double>& logits);
double tmax_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace oie
