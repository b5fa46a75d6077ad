#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "oie/tensor.hpp"

namespace oie {

// Parameter groups. The first four cover the backbone (position embedding,
// word embedding, encoder body, extraction heads); the last two are the
// adapter-side extensions (low-rank experts and their gates).
enum class ParamGroup { position, word, body, classifier, lora, gate };

const char* param_group_name(ParamGroup g);
ParamGroup param_group_from_name(const std::string& name);

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::body;
  bool trainable = true;
  Tensor value;
  Tensor grad;  // same shape as value, zero when untouched

  Parameter() = default;
  Parameter(std::string n, ParamGroup g, Tensor v)
      : name(std::move(n)), group(g), value(std::move(v)) {
    grad = Tensor::zeros(value.shape);
  }

  void zero_grad() { grad.fill(0.0); }
};

// Handle into a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Wengert list: ops append nodes in execution order, so reverse creation
// order is a topological order and backward() visits each node exactly once.
// Every op validates shapes up front and rejects non-finite outputs with the
// producing op's name in the message.
class Tape {
 public:
  // One node per parameter per tape; repeated calls return the same handle.
  // Parameter values must not change while the tape is alive.
  Var leaf(Parameter& p);
  Var input(Tensor t);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  // x [m x n] + row [1 x n], broadcast over rows. Covers bias adds.
  Var add_broadcast_row(Var x, Var row);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  // x scaled by a one-element tensor variable; gradient reaches both.
  Var mul_scalar(Var x, Var s);
  Var relu(Var a);
  Var softmax(Var a, int axis);
  // Row-wise normalization over the last axis, scale gamma / offset beta
  // are [1 x n].
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var embedding(Var table, const std::vector<int>& ids);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_rows(Var a, int r0, int r1);
  Var slice_cols(Var a, int c0, int c1);
  Var mean_rows(Var a);
  Var sum_all(Var a);
  // Select columns of a [1 x T] row by index, producing [1 x k].
  Var gather_cols(Var a, const std::vector<int>& idx);
  // Mean negative log-likelihood over unmasked rows. mask empty = keep all;
  // mask[i] nonzero = row i excluded (padding).
  Var cross_entropy(Var logits, const std::vector<int>& targets,
                    const std::vector<std::uint8_t>& mask = {});

  // Seeds d(loss)/d(loss) = 1 and sweeps the list in reverse. Trainable leaf
  // parameters receive accumulated gradients; frozen ones are untouched.
  // Node-local gradients are reset first, so repeated calls from the same
  // tape state are bitwise identical.
  void backward(Var loss);

  const Tensor& val(Var v) const { return node(v.id).value; }
  // Gradient w.r.t. a tape variable from the last backward(); zeros if the
  // variable was unreachable.
  Tensor grad_of(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    const char* op = "";
    Parameter* param = nullptr;
    std::function<void(Tape&, const Node&)> backprop;
  };

  Node& node(int id);
  const Node& node(int id) const;
  Var push(const char* op, Tensor value,
           std::function<void(Tape&, const Node&)> backprop,
           Parameter* param = nullptr);
  void accum(int id, const Tensor& g);
  void accum_at(int id, int flat_index, double g);
  bool has_grad(const Node& n) const { return !n.grad.data.empty(); }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> leaf_cache_;
};

}  // namespace oie
