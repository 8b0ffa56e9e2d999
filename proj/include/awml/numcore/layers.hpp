#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "awml/numcore/param_set.hpp"
#include "awml/numcore/rng.hpp"
#include "awml/numcore/tape.hpp"

namespace awml::num {

// Stacked LSTM followed by a two-layer MLP (tanh hidden, linear output)
// applied independently at every timestep.
struct LstmMlpSpec {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t mlp_hidden = 0;
  std::size_t output = 0;
  std::size_t layers = 2;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; fan_in of a gate map is
// input + hidden. Forget-gate bias 1, every other bias 0.
ParamSet init_lstm_mlp(const LstmMlpSpec& spec, CounterRng& rng);
void check_lstm_mlp_schema(const ParamSet& params, const LstmMlpSpec& spec);

struct LstmMlpResult {
  Var out;                       // [(T - head_start) * B x output], time-major blocks
  std::vector<Var> final_state;  // packed (h | c) per layer
};

// seq holds T tensors of shape [B x input]. An empty init_state starts every
// layer from zeros. The MLP head is evaluated for timesteps >= head_start.
LstmMlpResult forward_lstm_mlp(Tape& tape, const ParamSet& params, const LstmMlpSpec& spec,
                               std::span<const Var> seq, std::span<const Var> init_state = {},
                               std::size_t head_start = 0);

// Single sequence [T x input] -> [T x output] from a zero state.
Tensor forward_lstm_mlp(const ParamSet& params, const LstmMlpSpec& spec, const Tensor& seq);

// Two affine maps with a tanh in between.
struct MlpSpec {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;
};

ParamSet init_mlp(const MlpSpec& spec, CounterRng& rng);
void check_mlp_schema(const ParamSet& params, const MlpSpec& spec);
Var forward_mlp(Tape& tape, const ParamSet& params, const MlpSpec& spec, Var x);

}  // namespace awml::num
