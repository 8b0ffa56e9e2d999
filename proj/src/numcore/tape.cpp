#include "awml/numcore/tape.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "awml/common/error.hpp"

// The detail message is only built on failure.
#define AWML_REQUIRE(ok, op, detail)                                    \
  do {                                                                  \
    if (!(ok)) throw SchemaError(std::string(op) + ": " + (detail));    \
  } while (0)

namespace awml::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

CMatMap cmat(const Tensor& t) { return CMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                                               static_cast<Eigen::Index>(t.cols())); }
MatMap mat(Tensor& t) { return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                                      static_cast<Eigen::Index>(t.cols())); }

double sigmoid_of(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-|z|)) + max(z, 0) - z * m, the stable binary cross-entropy.
double bce_with_logit(double z, double m) {
  return std::max(z, 0.0) - z * m + std::log1p(std::exp(-std::abs(z)));
}


}  // namespace

Var Tape::push(Tensor value, bool requires_grad, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && mode_ == Mode::Record;
  if (node.requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.alias ? *n.alias : n.value;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(Var{id}).shape(), 0.0);
  return n.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::param(const ParamSet& params, std::size_t index) {
  if (index >= params.size()) throw SchemaError("param index out of range");
  const auto key = std::make_pair(&params, index);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var{it->second};
  Node node;
  node.alias = &params.tensor(index);
  node.requires_grad = mode_ == Mode::Record;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(key, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Tape::param(const ParamSet& params, std::string_view name) {
  const auto i = params.find(name);
  if (i == params.size()) throw SchemaError("no parameter named '" + std::string(name) + "'");
  return param(params, i);
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  AWML_REQUIRE(av.cols() == bv.rows(), "matmul",
          shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  mat(out).noalias() = cmat(av) * cmat(bv);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.needs(a)) mat(t.grad_buffer(a.id)).noalias() += cmat(g) * cmat(t.value(b)).transpose();
    if (t.needs(b)) mat(t.grad_buffer(b.id)).noalias() += cmat(t.value(a)).transpose() * cmat(g);
  });
}

Var Tape::affine(Var x, Var w, Var b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  AWML_REQUIRE(xv.cols() == wv.rows(), "affine",
          shape_string(xv.shape()) + " x " + shape_string(wv.shape()));
  AWML_REQUIRE(bv.rows() == 1 && bv.cols() == wv.cols(), "affine", "bias " + shape_string(bv.shape()));
  Tensor out = Tensor::matrix(xv.rows(), wv.cols());
  auto o = mat(out);
  o.noalias() = cmat(xv) * cmat(wv);
  o.rowwise() += cmat(bv).row(0);
  return push(std::move(out), needs(x) || needs(w) || needs(b), [x, w, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.needs(x)) mat(t.grad_buffer(x.id)).noalias() += cmat(g) * cmat(t.value(w)).transpose();
    if (t.needs(w)) mat(t.grad_buffer(w.id)).noalias() += cmat(t.value(x)).transpose() * cmat(g);
    if (t.needs(b)) mat(t.grad_buffer(b.id)).row(0) += cmat(g).colwise().sum();
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  AWML_REQUIRE(av.shape() == bv.shape(), "add", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    for (Var v : {a, b}) {
      if (!t.needs(v)) continue;
      Tensor& gb = t.grad_buffer(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  AWML_REQUIRE(av.shape() == bv.shape(), "sub", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.needs(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  AWML_REQUIRE(av.shape() == bv.shape(), "mul", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av2 = t.value(a);
    const Tensor& bv2 = t.value(b);
    if (t.needs(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return push(std::move(out), needs(a), [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Tape::tanh(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_of(out[i]);
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).values()) s += v;
  return push(Tensor::scalar(s), needs(a), [a](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::mean(Var a) {
  const auto n = static_cast<double>(value(a).size());
  return scale(sum(a), 1.0 / n);
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = value(a);
  AWML_REQUIRE(begin < end && end <= av.cols(), "slice_cols",
          "[" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_string(av.shape()));
  const std::size_t rows = av.rows();
  const std::size_t width = end - begin;
  Tensor out = Tensor::matrix(rows, width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = av.at(r, begin + c);
  }
  return push(std::move(out), needs(a), [a, begin, width](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < width; ++c) ga.at(r, begin + c) += g.at(r, c);
    }
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  AWML_REQUIRE(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool any_grad = false;
  for (Var p : parts) {
    AWML_REQUIRE(value(p).cols() == cols, "concat_rows", "column mismatch");
    rows += value(p).rows();
    any_grad = any_grad || needs(p);
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    std::copy(pv.values().begin(), pv.values().end(), out.data() + offset);
    offset += pv.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), any_grad, [inputs = std::move(inputs)](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t n = t.value(p).size();
      if (t.needs(p)) {
        Tensor& gp = t.grad_buffer(p.id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var Tape::pick_cols(Var a, std::span<const std::size_t> cols) {
  const Tensor& av = value(a);
  AWML_REQUIRE(cols.size() == av.rows(), "pick_cols", "one column index per row required");
  Tensor out = Tensor::matrix(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    AWML_REQUIRE(cols[r] < av.cols(), "pick_cols", "column index out of range");
    out[r] = av.at(r, cols[r]);
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return push(std::move(out), needs(a), [a, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < idx.size(); ++r) ga.at(r, idx[r]) += g[r];
  });
}

Var Tape::lstm_cell(Var x, Var state, Var wx, Var wh, Var b) {
  const Tensor& xv = value(x);
  const Tensor& sv = value(state);
  const Tensor& wxv = value(wx);
  const Tensor& whv = value(wh);
  const Tensor& bv = value(b);
  const std::size_t n = xv.rows();
  const std::size_t hidden = whv.rows();
  AWML_REQUIRE(whv.cols() == 4 * hidden, "lstm_cell", "wh must be [H x 4H], got " + shape_string(whv.shape()));
  AWML_REQUIRE(wxv.rows() == xv.cols() && wxv.cols() == 4 * hidden, "lstm_cell",
          "wx " + shape_string(wxv.shape()) + " vs input " + shape_string(xv.shape()));
  AWML_REQUIRE(bv.rows() == 1 && bv.cols() == 4 * hidden, "lstm_cell", "bias " + shape_string(bv.shape()));
  AWML_REQUIRE(sv.rows() == n && sv.cols() == 2 * hidden, "lstm_cell", "state " + shape_string(sv.shape()));

  // Pre-activations z = x wx + h wh + b, then activated in place to gates.
  Tensor gates = Tensor::matrix(n, 4 * hidden);
  {
    auto z = mat(gates);
    z.noalias() = cmat(xv) * cmat(wxv);
    const auto h_prev = cmat(sv).leftCols(static_cast<Eigen::Index>(hidden));
    z.noalias() += h_prev * cmat(whv);
    z.rowwise() += cmat(bv).row(0);
  }
  Tensor out = Tensor::matrix(n, 2 * hidden);
  Tensor tanh_c = Tensor::matrix(n, hidden);
  for (std::size_t r = 0; r < n; ++r) {
    double* gr = gates.data() + r * 4 * hidden;
    const double* s_prev = sv.data() + r * 2 * hidden;
    double* o = out.data() + r * 2 * hidden;
    for (std::size_t k = 0; k < hidden; ++k) {
      const double ig = sigmoid_of(gr[k]);
      const double fg = sigmoid_of(gr[hidden + k]);
      const double cg = std::tanh(gr[2 * hidden + k]);
      const double og = sigmoid_of(gr[3 * hidden + k]);
      gr[k] = ig;
      gr[hidden + k] = fg;
      gr[2 * hidden + k] = cg;
      gr[3 * hidden + k] = og;
      const double c = fg * s_prev[hidden + k] + ig * cg;
      o[hidden + k] = c;
      const double tc = std::tanh(c);
      tanh_c.data()[r * hidden + k] = tc;
      o[k] = og * tc;
    }
  }
  const bool rg = needs(x) || needs(state) || needs(wx) || needs(wh) || needs(b);
  return push(std::move(out), rg,
              [x, state, wx, wh, b, hidden, gates = std::move(gates), tanh_c = std::move(tanh_c)](Tape& t,
                                                                                             std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& prev = t.value(state);
    const std::size_t rows = g.rows();
    Tensor dz = Tensor::matrix(rows, 4 * hidden);
    Tensor dprev_c = Tensor::matrix(rows, hidden);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = gates.data() + r * 4 * hidden;
      const double* gin = g.data() + r * 2 * hidden;
      const double* tcr = tanh_c.data() + r * hidden;
      const double* c_prev = prev.data() + r * 2 * hidden + hidden;
      double* dzr = dz.data() + r * 4 * hidden;
      for (std::size_t k = 0; k < hidden; ++k) {
        const double ig = gr[k], fg = gr[hidden + k], cg = gr[2 * hidden + k], og = gr[3 * hidden + k];
        const double tc = tcr[k];
        const double dh = gin[k];
        const double dc = gin[hidden + k] + dh * og * (1.0 - tc * tc);
        dzr[k] = dc * cg * ig * (1.0 - ig);
        dzr[hidden + k] = dc * c_prev[k] * fg * (1.0 - fg);
        dzr[2 * hidden + k] = dc * ig * (1.0 - cg * cg);
        dzr[3 * hidden + k] = dh * tc * og * (1.0 - og);
        dprev_c.at(r, k) = dc * fg;
      }
    }
    const auto dzm = cmat(dz);
    if (t.needs(wx)) mat(t.grad_buffer(wx.id)).noalias() += cmat(t.value(x)).transpose() * dzm;
    if (t.needs(wh)) {
      const auto h_prev = cmat(prev).leftCols(static_cast<Eigen::Index>(hidden));
      mat(t.grad_buffer(wh.id)).noalias() += h_prev.transpose() * dzm;
    }
    if (t.needs(b)) mat(t.grad_buffer(b.id)).row(0) += dzm.colwise().sum();
    if (t.needs(x)) mat(t.grad_buffer(x.id)).noalias() += dzm * cmat(t.value(wx)).transpose();
    if (t.needs(state)) {
      auto gs = mat(t.grad_buffer(state.id));
      gs.leftCols(static_cast<Eigen::Index>(hidden)).noalias() += dzm * cmat(t.value(wh)).transpose();
      gs.rightCols(static_cast<Eigen::Index>(hidden)) += cmat(dprev_c);
    }
  });
}

Var Tape::coord_mask_loss(Var pred, const Tensor& target, const CoordLossOptions& options) {
  const Tensor& pv = value(pred);
  AWML_REQUIRE(pv.rows() == target.rows() && pv.cols() == target.cols() && pv.cols() % 3 == 0,
          "coord_mask_loss", shape_string(pv.shape()) + " vs target " + shape_string(target.shape()));
  const std::size_t agents = pv.cols() / 3;
  const double s = options.coord_scale;
  double total = 0.0;
  for (std::size_t r = 0; r < pv.rows(); ++r) {
    for (std::size_t i = 0; i < agents; ++i) {
      const double m = target.at(r, 3 * i + 2);
      if (options.include_coord && m != 0.0) {
        const double dx = s * pv.at(r, 3 * i) - target.at(r, 3 * i);
        const double dy = s * pv.at(r, 3 * i + 1) - target.at(r, 3 * i + 1);
        const double sq = dx * dx + dy * dy;
        total += m * (options.squared ? sq : std::sqrt(sq));
      }
      if (options.include_ce) total += bce_with_logit(pv.at(r, 3 * i + 2), m);
    }
  }
  return push(Tensor::scalar(total), needs(pred), [pred, target, options](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    const Tensor& p = t.value(pred);
    Tensor& gp = t.grad_buffer(pred.id);
    const std::size_t n_agents = p.cols() / 3;
    const double sc = options.coord_scale;
    for (std::size_t r = 0; r < p.rows(); ++r) {
      for (std::size_t i = 0; i < n_agents; ++i) {
        const double m = target.at(r, 3 * i + 2);
        if (options.include_coord && m != 0.0) {
          const double dx = sc * p.at(r, 3 * i) - target.at(r, 3 * i);
          const double dy = sc * p.at(r, 3 * i + 1) - target.at(r, 3 * i + 1);
          double kx = 0.0, ky = 0.0;
          if (options.squared) {
            kx = 2.0 * dx;
            ky = 2.0 * dy;
          } else {
            const double norm = std::sqrt(dx * dx + dy * dy);
            // Subgradient zero at the kink.
            if (norm > 0.0) {
              kx = dx / norm;
              ky = dy / norm;
            }
          }
          gp.at(r, 3 * i) += g * m * sc * kx;
          gp.at(r, 3 * i + 1) += g * m * sc * ky;
        }
        if (options.include_ce) gp.at(r, 3 * i + 2) += g * (sigmoid_of(p.at(r, 3 * i + 2)) - m);
      }
    }
  });
}

void Tape::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw ContractError("backward: unknown loss node");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(value(loss).shape()));
  }
  if (mode_ != Mode::Record) throw ContractError("backward: tape recorded in inference mode");
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, i);
  }
}

ParamSet Tape::gradient(const ParamSet& params) const {
  ParamSet grads = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = param_nodes_.find(std::make_pair(&params, i));
    if (it == param_nodes_.end()) continue;
    const Tensor& g = nodes_[it->second].grad;
    if (!g.empty()) grads.tensor(i) = g;
  }
  return grads;
}

ParamSet backward(Tape& tape, Var loss, const ParamSet& params) {
  tape.backward(loss);
  return tape.gradient(params);
}

}  // namespace awml::num
