#include "oie/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oie {

const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::position: return "position";
    case ParamGroup::word: return "word";
    case ParamGroup::body: return "body";
    case ParamGroup::classifier: return "classifier";
    case ParamGroup::lora: return "lora";
    case ParamGroup::gate: return "gate";
  }
  return "?";
}

ParamGroup param_group_from_name(const std::string& name) {
  if (name == "position") return ParamGroup::position;
  if (name == "word") return ParamGroup::word;
  if (name == "body") return ParamGroup::body;
  if (name == "classifier") return ParamGroup::classifier;
  if (name == "lora") return ParamGroup::lora;
  if (name == "gate") return ParamGroup::gate;
  throw std::invalid_argument("unknown parameter group: " + name);
}

Tape::Node& Tape::node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
const Tape::Node& Tape::node(int id) const {
  return nodes_[static_cast<std::size_t>(id)];
}

Var Tape::push(const char* op, Tensor value,
               std::function<void(Tape&, const Node&)> backprop,
               Parameter* param) {
  if (!value.finite()) {
    throw std::runtime_error(std::string("non-finite value produced by op '") +
                             op + "'");
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.param = param;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int id, const Tensor& g) {
  Node& n = node(id);
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  for (int i = 0; i < g.numel(); ++i) n.grad.at(i) += g.at(i);
}

void Tape::accum_at(int id, int flat_index, double g) {
  Node& n = node(id);
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  n.grad.at(flat_index) += g;
}

Tensor Tape::grad_of(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
  return n.grad;
}

Var Tape::leaf(Parameter& p) {
  auto it = leaf_cache_.find(&p);
  if (it != leaf_cache_.end()) return Var{it->second};
  Parameter* pp = &p;
  Var v = push(
      "leaf", p.value,
      [pp](Tape&, const Node& self) {
        if (!pp->trainable) return;
        for (int i = 0; i < self.grad.numel(); ++i) {
          pp->grad.at(i) += self.grad.at(i);
        }
      },
      pp);
  leaf_cache_[&p] = v.id;
  return v;
}

Var Tape::input(Tensor t) { return push("input", std::move(t), nullptr); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                av.shape_str() + " x " + bv.shape_str());
  }
  Tensor c = tmatmul(av, bv);
  const int ai = a.id, bi = b.id;
  return push("matmul", std::move(c), [ai, bi](Tape& t, const Node& self) {
    const Tensor& A = t.node(ai).value;
    const Tensor& B = t.node(bi).value;
    t.accum(ai, tmatmul(self.grad, ttranspose(B)));
    t.accum(bi, tmatmul(ttranspose(A), self.grad));
  });
}

Var Tape::transpose(Var a) {
  Tensor c = ttranspose(val(a));
  const int ai = a.id;
  return push("transpose", std::move(c), [ai](Tape& t, const Node& self) {
    t.accum(ai, ttranspose(self.grad));
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) {
    throw std::invalid_argument("add: shape mismatch " + av.shape_str() +
                                " vs " + bv.shape_str());
  }
  Tensor c = tadd(av, bv);
  const int ai = a.id, bi = b.id;
  return push("add", std::move(c), [ai, bi](Tape& t, const Node& self) {
    t.accum(ai, self.grad);
    t.accum(bi, self.grad);
  });
}

Var Tape::add_broadcast_row(Var x, Var row) {
  const Tensor& xv = val(x);
  const Tensor& rv = val(row);
  if (xv.ndim() != 2 || rv.ndim() != 2 || rv.dim(0) != 1 ||
      rv.dim(1) != xv.dim(1)) {
    throw std::invalid_argument("add_broadcast_row: shape mismatch " +
                                xv.shape_str() + " vs " + rv.shape_str());
  }
  Tensor c = xv;
  for (int i = 0; i < xv.dim(0); ++i)
    for (int j = 0; j < xv.dim(1); ++j) c.at(i, j) += rv.at(0, j);
  const int xi = x.id, ri = row.id;
  return push("add_broadcast_row", std::move(c),
              [xi, ri](Tape& t, const Node& self) {
                t.accum(xi, self.grad);
                const int m = self.grad.dim(0), n = self.grad.dim(1);
                Tensor rg({1, n});
                for (int i = 0; i < m; ++i)
                  for (int j = 0; j < n; ++j) rg.at(0, j) += self.grad.at(i, j);
                t.accum(ri, rg);
              });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) {
    throw std::invalid_argument("mul: shape mismatch");
  }
  Tensor c = av;
  for (int i = 0; i < c.numel(); ++i) c.at(i) *= bv.at(i);
  const int ai = a.id, bi = b.id;
  return push("mul", std::move(c), [ai, bi](Tape& t, const Node& self) {
    const Tensor& A = t.node(ai).value;
    const Tensor& B = t.node(bi).value;
    Tensor ga = self.grad, gb = self.grad;
    for (int i = 0; i < ga.numel(); ++i) {
      ga.at(i) *= B.at(i);
      gb.at(i) *= A.at(i);
    }
    t.accum(ai, ga);
    t.accum(bi, gb);
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = tscale(val(a), c);
  const int ai = a.id;
  return push("scale", std::move(out), [ai, c](Tape& t, const Node& self) {
    t.accum(ai, tscale(self.grad, c));
  });
}

Var Tape::mul_scalar(Var x, Var s) {
  const Tensor& xv = val(x);
  const Tensor& sv = val(s);
  if (sv.numel() != 1) {
    throw std::invalid_argument("mul_scalar: scalar operand must have one element");
  }
  Tensor c = tscale(xv, sv.at(0));
  const int xi = x.id, si = s.id;
  return push("mul_scalar", std::move(c), [xi, si](Tape& t, const Node& self) {
    const Tensor& X = t.node(xi).value;
    const double s_val = t.node(si).value.at(0);
    t.accum(xi, tscale(self.grad, s_val));
    double ds = 0.0;
    for (int i = 0; i < X.numel(); ++i) ds += self.grad.at(i) * X.at(i);
    Tensor g = Tensor::zeros(t.node(si).value.shape);
    g.at(0) = ds;
    t.accum(si, g);
  });
}

Var Tape::relu(Var a) {
  Tensor c = val(a);
  for (double& v : c.data) v = v > 0.0 ? v : 0.0;
  const int ai = a.id;
  return push("relu", std::move(c), [ai](Tape& t, const Node& self) {
    const Tensor& A = t.node(ai).value;
    Tensor g = self.grad;
    for (int i = 0; i < g.numel(); ++i) {
      if (A.at(i) <= 0.0) g.at(i) = 0.0;
    }
    t.accum(ai, g);
  });
}

namespace {

// Stable row softmax into out[offset + i*stride], i in [0, n).
void softmax_strided(const std::vector<double>& in, std::vector<double>& out,
                     int offset, int stride, int n) {
  double m = in[static_cast<std::size_t>(offset)];
  for (int i = 1; i < n; ++i) {
    m = std::max(m, in[static_cast<std::size_t>(offset + i * stride)]);
  }
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(offset + i * stride);
    out[k] = std::exp(in[k] - m);
    denom += out[k];
  }
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(offset + i * stride)] /= denom;
  }
}

}  // namespace

Var Tape::softmax(Var a, int axis) {
  const Tensor& av = val(a);
  if (av.ndim() < 1 || av.ndim() > 2) {
    throw std::invalid_argument("softmax: expects rank 1 or 2");
  }
  if (axis < 0 || axis >= av.ndim()) {
    throw std::invalid_argument("softmax: axis out of range");
  }
  const int rows = av.ndim() == 2 ? av.dim(0) : 1;
  const int cols = av.ndim() == 2 ? av.dim(1) : av.dim(0);
  const bool along_cols = (av.ndim() == 1) || (axis == 1);
  Tensor c(av.shape);
  if (along_cols) {
    for (int i = 0; i < rows; ++i) {
      softmax_strided(av.data, c.data, i * cols, 1, cols);
    }
  } else {
    for (int j = 0; j < cols; ++j) {
      softmax_strided(av.data, c.data, j, cols, rows);
    }
  }
  const int ai = a.id;
  return push("softmax", std::move(c),
              [ai, rows, cols, along_cols](Tape& t, const Node& self) {
                const Tensor& Y = self.value;
                Tensor g(Y.shape);
                const int groups = along_cols ? rows : cols;
                const int n = along_cols ? cols : rows;
                const int stride = along_cols ? 1 : cols;
                for (int r = 0; r < groups; ++r) {
                  const int offset = along_cols ? r * cols : r;
                  double dot = 0.0;
                  for (int i = 0; i < n; ++i) {
                    const int k = offset + i * stride;
                    dot += self.grad.at(k) * Y.at(k);
                  }
                  for (int i = 0; i < n; ++i) {
                    const int k = offset + i * stride;
                    g.at(k) = Y.at(k) * (self.grad.at(k) - dot);
                  }
                }
                t.accum(ai, g);
              });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = val(x);
  const Tensor& gv = val(gamma);
  const Tensor& bv = val(beta);
  if (xv.ndim() != 2) throw std::invalid_argument("layer_norm: x must be rank 2");
  const int m = xv.dim(0), n = xv.dim(1);
  if (gv.ndim() != 2 || gv.dim(0) != 1 || gv.dim(1) != n || !gv.same_shape(bv)) {
    throw std::invalid_argument("layer_norm: gamma/beta must be [1 x cols]");
  }
  Tensor c({m, n});
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xv.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      c.at(i, j) = (xv.at(i, j) - mean) * inv * gv.at(0, j) + bv.at(0, j);
    }
  }
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return push(
      "layer_norm", std::move(c),
      [xi, gi, bi, eps, m, n](Tape& t, const Node& self) {
        const Tensor& X = t.node(xi).value;
        const Tensor& G = t.node(gi).value;
        Tensor gx({m, n}), gg({1, n}), gb({1, n});
        for (int i = 0; i < m; ++i) {
          double mean = 0.0;
          for (int j = 0; j < n; ++j) mean += X.at(i, j);
          mean /= n;
          double var = 0.0;
          for (int j = 0; j < n; ++j) {
            const double d = X.at(i, j) - mean;
            var += d * d;
          }
          var /= n;
          const double inv = 1.0 / std::sqrt(var + eps);
          double sum_g = 0.0, sum_gx = 0.0;
          for (int j = 0; j < n; ++j) {
            const double xhat = (X.at(i, j) - mean) * inv;
            const double dy = self.grad.at(i, j);
            gb.at(0, j) += dy;
            gg.at(0, j) += dy * xhat;
            const double gj = G.at(0, j) * dy;
            sum_g += gj;
            sum_gx += gj * xhat;
          }
          for (int j = 0; j < n; ++j) {
            const double xhat = (X.at(i, j) - mean) * inv;
            const double gj = G.at(0, j) * self.grad.at(i, j);
            gx.at(i, j) = inv * (gj - sum_g / n - xhat * sum_gx / n);
          }
        }
        t.accum(xi, gx);
        t.accum(gi, gg);
        t.accum(bi, gb);
      });
}

Var Tape::embedding(Var table, const std::vector<int>& ids) {
  const Tensor& tv = val(table);
  if (tv.ndim() != 2) throw std::invalid_argument("embedding: table must be rank 2");
  const int rows = tv.dim(0), d = tv.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(rows) + ")");
    }
  }
  Tensor c({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (int j = 0; j < d; ++j) c.at(static_cast<int>(i), j) = tv.at(ids[i], j);
  }
  const int ti = table.id;
  std::vector<int> idv = ids;
  return push("embedding", std::move(c),
              [ti, idv, d](Tape& t, const Node& self) {
                for (std::size_t i = 0; i < idv.size(); ++i) {
                  for (int j = 0; j < d; ++j) {
                    t.accum_at(ti, idv[i] * d + j,
                               self.grad.at(static_cast<int>(i), j));
                  }
                }
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = val(parts[0]).dim(0);
  int total = 0;
  for (Var p : parts) {
    const Tensor& pv = val(p);
    if (pv.ndim() != 2 || pv.dim(0) != m) {
      throw std::invalid_argument("concat_cols: row mismatch");
    }
    total += pv.dim(1);
  }
  Tensor c({m, total});
  int off = 0;
  std::vector<int> ids, widths;
  for (Var p : parts) {
    const Tensor& pv = val(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < pv.dim(1); ++j) c.at(i, off + j) = pv.at(i, j);
    ids.push_back(p.id);
    widths.push_back(pv.dim(1));
    off += pv.dim(1);
  }
  return push("concat_cols", std::move(c),
              [ids, widths, m](Tape& t, const Node& self) {
                int off2 = 0;
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  Tensor g({m, widths[k]});
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < widths[k]; ++j)
                      g.at(i, j) = self.grad.at(i, off2 + j);
                  t.accum(ids[k], g);
                  off2 += widths[k];
                }
              });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  Tensor c = tslice_rows(val(a), r0, r1);
  const int ai = a.id;
  const int ncols = c.dim(1);
  return push("slice_rows", std::move(c),
              [ai, r0, ncols](Tape& t, const Node& self) {
                for (int i = 0; i < self.grad.dim(0); ++i) {
                  for (int j = 0; j < ncols; ++j) {
                    t.accum_at(ai, (r0 + i) * ncols + j, self.grad.at(i, j));
                  }
                }
              });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const int src_cols = val(a).dim(1);
  Tensor c = tslice_cols(val(a), c0, c1);
  const int ai = a.id;
  return push("slice_cols", std::move(c),
              [ai, c0, src_cols](Tape& t, const Node& self) {
                for (int i = 0; i < self.grad.dim(0); ++i) {
                  for (int j = 0; j < self.grad.dim(1); ++j) {
                    t.accum_at(ai, i * src_cols + c0 + j, self.grad.at(i, j));
                  }
                }
              });
}

Var Tape::mean_rows(Var a) {
  const Tensor& av = val(a);
  if (av.ndim() != 2) throw std::invalid_argument("mean_rows: expects rank 2");
  const int m = av.dim(0), n = av.dim(1);
  Tensor c({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) c.at(0, j) += av.at(i, j);
  for (int j = 0; j < n; ++j) c.at(0, j) /= m;
  const int ai = a.id;
  return push("mean_rows", std::move(c), [ai, m, n](Tape& t, const Node& self) {
    Tensor g({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.at(i, j) = self.grad.at(0, j) / m;
    t.accum(ai, g);
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& av = val(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  const int ai = a.id;
  return push("sum_all", Tensor::scalar(s), [ai](Tape& t, const Node& self) {
    const double g = self.grad.at(0);
    Tensor ga = Tensor::full(t.node(ai).value.shape, g);
    t.accum(ai, ga);
  });
}

Var Tape::gather_cols(Var a, const std::vector<int>& idx) {
  const Tensor& av = val(a);
  if (av.ndim() != 2 || av.dim(0) != 1) {
    throw std::invalid_argument("gather_cols: expects a [1 x T] row");
  }
  for (int i : idx) {
    if (i < 0 || i >= av.dim(1)) {
      throw std::invalid_argument("gather_cols: index out of range");
    }
  }
  Tensor c({1, static_cast<int>(idx.size())});
  for (std::size_t k = 0; k < idx.size(); ++k) c.at(0, static_cast<int>(k)) = av.at(0, idx[k]);
  const int ai = a.id;
  std::vector<int> iv = idx;
  return push("gather_cols", std::move(c), [ai, iv](Tape& t, const Node& self) {
    for (std::size_t k = 0; k < iv.size(); ++k) {
      t.accum_at(ai, iv[k], self.grad.at(0, static_cast<int>(k)));
    }
  });
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& targets,
                        const std::vector<std::uint8_t>& mask) {
  const Tensor& lv = val(logits);
  if (lv.ndim() != 2) throw std::invalid_argument("cross_entropy: logits must be rank 2");
  const int n = lv.dim(0), C = lv.dim(1);
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("cross_entropy: targets size mismatch");
  }
  if (!mask.empty() && static_cast<int>(mask.size()) != n) {
    throw std::invalid_argument("cross_entropy: mask size mismatch");
  }
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    if (mask.empty() || mask[static_cast<std::size_t>(i)] == 0) ++kept;
  }
  if (kept == 0) throw std::invalid_argument("cross_entropy: no unmasked positions");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask.empty() && mask[static_cast<std::size_t>(i)] != 0) continue;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= C) throw std::invalid_argument("cross_entropy: target out of range");
    double m = lv.at(i, 0);
    for (int j = 1; j < C; ++j) m = std::max(m, lv.at(i, j));
    double lse = 0.0;
    for (int j = 0; j < C; ++j) lse += std::exp(lv.at(i, j) - m);
    lse = m + std::log(lse);
    total += lse - lv.at(i, t);
  }
  const int li = logits.id;
  std::vector<int> tv = targets;
  std::vector<std::uint8_t> mv = mask;
  return push("cross_entropy", Tensor::scalar(total / kept),
              [li, tv, mv, n, C, kept](Tape& t, const Node& self) {
                const Tensor& L = t.node(li).value;
                const double gout = self.grad.at(0);
                Tensor g({n, C});
                for (int i = 0; i < n; ++i) {
                  if (!mv.empty() && mv[static_cast<std::size_t>(i)] != 0) continue;
                  double m = L.at(i, 0);
                  for (int j = 1; j < C; ++j) m = std::max(m, L.at(i, j));
                  double denom = 0.0;
                  for (int j = 0; j < C; ++j) denom += std::exp(L.at(i, j) - m);
                  for (int j = 0; j < C; ++j) {
                    double p = std::exp(L.at(i, j) - m) / denom;
                    if (j == tv[static_cast<std::size_t>(i)]) p -= 1.0;
                    g.at(i, j) = gout * p / kept;
                  }
                }
                t.accum(li, g);
              });
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("backward: invalid loss variable");
  }
  if (node(loss.id).value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  for (Node& n : nodes_) n.grad = Tensor();
  node(loss.id).grad = Tensor::full(node(loss.id).value.shape, 1.0);
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = node(id);
    if (!has_grad(n) || !n.backprop) continue;
    n.backprop(*this, n);
  }
}

}  // namespace oie
