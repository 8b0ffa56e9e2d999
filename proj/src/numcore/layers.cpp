#include "awml/numcore/layers.hpp"

#include <cmath>
#include <string>

#include "awml/common/error.hpp"

namespace awml::num {

namespace {

std::string layer_name(const char* prefix, std::size_t i, const char* leaf) {
  return std::string(prefix) + std::to_string(i) + "." + leaf;
}

Tensor uniform_tensor(Shape shape, double bound, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void expect_shape(const ParamSet& params, const std::string& name, const Shape& shape) {
  const auto i = params.find(name);
  if (i == params.size()) throw SchemaError("missing parameter '" + name + "'");
  if (params.tensor(i).shape() != shape) {
    throw SchemaError("parameter '" + name + "' has shape " + shape_string(params.tensor(i).shape()) +
                      ", expected " + shape_string(shape));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

}  // namespace

ParamSet init_lstm_mlp(const LstmMlpSpec& spec, CounterRng& rng) {
  if (spec.input == 0 || spec.hidden == 0 || spec.mlp_hidden == 0 || spec.output == 0 || spec.layers == 0) {
    throw SchemaError("lstm_mlp sizes must be positive");
  }
  ParamSet p;
  const std::size_t h = spec.hidden;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const std::size_t in = l == 0 ? spec.input : h;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in + h));
    p.add(layer_name("lstm", l, "wx"), uniform_tensor({in, 4 * h}, bound, rng));
    p.add(layer_name("lstm", l, "wh"), uniform_tensor({h, 4 * h}, bound, rng));
    Tensor b(Shape{4 * h}, 0.0);
    for (std::size_t k = 0; k < h; ++k) b[h + k] = 1.0;
    p.add(layer_name("lstm", l, "b"), std::move(b));
  }
  const double b0 = 1.0 / std::sqrt(static_cast<double>(h));
  p.add("mlp0.w", uniform_tensor({h, spec.mlp_hidden}, b0, rng));
  p.add("mlp0.b", Tensor(Shape{spec.mlp_hidden}, 0.0));
  const double b1 = 1.0 / std::sqrt(static_cast<double>(spec.mlp_hidden));
  p.add("mlp1.w", uniform_tensor({spec.mlp_hidden, spec.output}, b1, rng));
  p.add("mlp1.b", Tensor(Shape{spec.output}, 0.0));
  return p;
}

void check_lstm_mlp_schema(const ParamSet& params, const LstmMlpSpec& spec) {
  const std::size_t h = spec.hidden;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const std::size_t in = l == 0 ? spec.input : h;
    expect_shape(params, layer_name("lstm", l, "wx"), {in, 4 * h});
    expect_shape(params, layer_name("lstm", l, "wh"), {h, 4 * h});
    expect_shape(params, layer_name("lstm", l, "b"), {4 * h});
  }
  expect_shape(params, "mlp0.w", {h, spec.mlp_hidden});
  expect_shape(params, "mlp0.b", {spec.mlp_hidden});
  expect_shape(params, "mlp1.w", {spec.mlp_hidden, spec.output});
  expect_shape(params, "mlp1.b", {spec.output});
  if (params.size() != 3 * spec.layers + 4) throw SchemaError("lstm_mlp has unexpected extra parameters");
}

LstmMlpResult forward_lstm_mlp(Tape& tape, const ParamSet& params, const LstmMlpSpec& spec,
                               std::span<const Var> seq, std::span<const Var> init_state,
                               std::size_t head_start) {
  check_lstm_mlp_schema(params, spec);
  if (seq.empty()) throw SchemaError("forward_lstm_mlp: sequence must have T >= 1");
  if (head_start >= seq.size()) throw SchemaError("forward_lstm_mlp: head_start beyond sequence");
  if (!init_state.empty() && init_state.size() != spec.layers) {
    throw SchemaError("forward_lstm_mlp: one initial state per layer required");
  }
  const std::size_t batch = tape.value(seq[0]).rows();
  for (Var x : seq) {
    const Tensor& xv = tape.value(x);
    if (xv.rows() != batch || xv.cols() != spec.input) {
      throw SchemaError("forward_lstm_mlp: input step has shape " + shape_string(xv.shape()));
    }
    require_finite(xv, "forward_lstm_mlp input");
  }
  const std::size_t h = spec.hidden;

  std::vector<Var> state(spec.layers);
  for (std::size_t l = 0; l < spec.layers; ++l) {
    state[l] = init_state.empty() ? tape.constant(Tensor::matrix(batch, 2 * h)) : init_state[l];
  }
  std::vector<Var> wx(spec.layers), wh(spec.layers), b(spec.layers);
  for (std::size_t l = 0; l < spec.layers; ++l) {
    wx[l] = tape.param(params, layer_name("lstm", l, "wx"));
    wh[l] = tape.param(params, layer_name("lstm", l, "wh"));
    b[l] = tape.param(params, layer_name("lstm", l, "b"));
  }

  std::vector<Var> tops;
  tops.reserve(seq.size() - head_start);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    Var in = seq[t];
    for (std::size_t l = 0; l < spec.layers; ++l) {
      state[l] = tape.lstm_cell(in, state[l], wx[l], wh[l], b[l]);
      in = tape.slice_cols(state[l], 0, h);
    }
    if (t >= head_start) tops.push_back(in);
  }
  const Var top = tops.size() == 1 ? tops[0] : tape.concat_rows(tops);
  const Var hid = tape.tanh(tape.affine(top, tape.param(params, "mlp0.w"), tape.param(params, "mlp0.b")));
  const Var out = tape.affine(hid, tape.param(params, "mlp1.w"), tape.param(params, "mlp1.b"));
  return {out, std::move(state)};
}

Tensor forward_lstm_mlp(const ParamSet& params, const LstmMlpSpec& spec, const Tensor& seq) {
  Tape tape(Tape::Mode::Inference);
  std::vector<Var> steps;
  steps.reserve(seq.rows());
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    Tensor row = Tensor::matrix(1, seq.cols());
    for (std::size_t c = 0; c < seq.cols(); ++c) row[c] = seq.at(t, c);
    steps.push_back(tape.constant(std::move(row)));
  }
  return tape.value(forward_lstm_mlp(tape, params, spec, steps).out);
}

ParamSet init_mlp(const MlpSpec& spec, CounterRng& rng) {
  if (spec.input == 0 || spec.hidden == 0 || spec.output == 0) throw SchemaError("mlp sizes must be positive");
  ParamSet p;
  p.add("mlp0.w", uniform_tensor({spec.input, spec.hidden}, 1.0 / std::sqrt(double(spec.input)), rng));
  p.add("mlp0.b", Tensor(Shape{spec.hidden}, 0.0));
  p.add("mlp1.w", uniform_tensor({spec.hidden, spec.output}, 1.0 / std::sqrt(double(spec.hidden)), rng));
  p.add("mlp1.b", Tensor(Shape{spec.output}, 0.0));
  return p;
}

void check_mlp_schema(const ParamSet& params, const MlpSpec& spec) {
  expect_shape(params, "mlp0.w", {spec.input, spec.hidden});
  expect_shape(params, "mlp0.b", {spec.hidden});
  expect_shape(params, "mlp1.w", {spec.hidden, spec.output});
  expect_shape(params, "mlp1.b", {spec.output});
  if (params.size() != 4) throw SchemaError("mlp has unexpected extra parameters");
}

Var forward_mlp(Tape& tape, const ParamSet& params, const MlpSpec& spec, Var x) {
  check_mlp_schema(params, spec);
  const Tensor& xv = tape.value(x);
  if (xv.cols() != spec.input) throw SchemaError("forward_mlp: input has shape " + shape_string(xv.shape()));
  require_finite(xv, "forward_mlp input");
  const Var hid = tape.tanh(tape.affine(x, tape.param(params, "mlp0.w"), tape.param(params, "mlp0.b")));
  return tape.affine(hid, tape.param(params, "mlp1.w"), tape.param(params, "mlp1.b"));
}

}  // namespace awml::num
