#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "awml/numcore/param_set.hpp"
#include "awml/numcore/tensor.hpp"

namespace awml::num {

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Options of the masked coordinate + mask cross-entropy loss. Prediction and
// target rows hold, per agent, (x, y, logit) and (x, y, mask) respectively.
struct CoordLossOptions {
  double coord_scale = 1.0;  // predicted coordinates are multiplied by this
  bool squared = false;      // squared instead of plain Euclidean distance
  bool include_coord = true;
  bool include_ce = true;
};

// Reverse-mode differentiation over matrix-valued operations. Nodes are
// appended in execution order, so reverse id order is a topological order.
// In Inference mode no backward closures are recorded.
class Tape {
 public:
  enum class Mode { Record, Inference };

  explicit Tape(Mode mode = Mode::Record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  // Leaf aliasing params.tensor(index); `params` must outlive the tape.
  // Repeated calls for the same entry return the same leaf.
  Var param(const ParamSet& params, std::size_t index);
  Var param(const ParamSet& params, std::string_view name);

  const Tensor& value(Var v) const;
  // Accumulated gradient; empty if no gradient reached the node.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  Var matmul(Var a, Var b);
  // x [n x k] * w [k x m] + b [m] broadcast over rows.
  Var affine(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var concat_rows(std::span<const Var> parts);
  // out[r] = a[r, cols[r]], shape [n x 1].
  Var pick_cols(Var a, std::span<const std::size_t> cols);
  // One LSTM step. state is the packed [n x 2H] tensor (h | c); gate columns
  // of wx [D x 4H], wh [H x 4H] and b [4H] are ordered (input, forget, cell, output).
  Var lstm_cell(Var x, Var state, Var wx, Var wh, Var b);
  Var coord_mask_loss(Var pred, const Tensor& target, const CoordLossOptions& options);

  // Propagates d(loss)/d(node) to every node. loss must hold one element.
  void backward(Var loss);
  // Gradient with respect to every entry of `params`; entries that were not
  // used, or not on a path to the loss, are zero.
  ParamSet gradient(const ParamSet& params) const;

 private:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor value;
    const Tensor* alias = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  Var push(Tensor value, bool requires_grad, Backprop backprop);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Tensor& grad_buffer(std::size_t id);

  Mode mode_;
  std::vector<Node> nodes_;
  std::map<std::pair<const ParamSet*, std::size_t>, std::size_t> param_nodes_;
};

ParamSet backward(Tape& tape, Var loss, const ParamSet& params);

}  // namespace awml::num
