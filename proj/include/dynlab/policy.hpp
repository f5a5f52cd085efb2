#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "dynlab/maze.hpp"
#include "dynlab/types.hpp"

namespace dynlab {

enum class Arch { Gru, VanillaRnn };
std::string_view arch_name(Arch arch);
Arch arch_from_name(std::string_view name);

struct PolicyDims {
  int input = kObservationDim;
  int hidden = 64;
  int actions = kNumActions;
  friend bool operator==(const PolicyDims&, const PolicyDims&) = default;
};

// Structured view of the recurrent policy. For the GRU the gate blocks are
// stacked as [update z; reset r; candidate n], each `hidden` rows tall:
//   z = sigmoid(Wz o + Uz h + bz)
//   r = sigmoid(Wr o + Ur h + br)
//   n = tanh(Wn o + Un (r * h) + bn)
//   h' = (1 - z) * h + z * n
// The vanilla RNN has a single block: h' = tanh(W o + U h + b).
// Readout: logits = w_out h + b_out.
struct PolicyParams {
  Arch arch = Arch::Gru;
  PolicyDims dims;
  Mat w_in;
  Mat w_rec;
  Vec bias;
  Mat w_out;
  Vec b_out;

  PolicyParams() = default;
  PolicyParams(Arch arch, PolicyDims dims);  // all-zero parameters

  int gates() const { return arch == Arch::Gru ? 3 : 1; }
  // Recurrent weights / bias of the tanh block (the candidate block for
  // the GRU); these define the autonomous vector field F(h).
  auto tanh_block_rec() const { return w_rec.bottomRows(dims.hidden); }
  auto tanh_block_bias() const { return bias.tail(dims.hidden); }
};

// Flat layout (layout_version 1): w_in, w_rec, bias, w_out, b_out, each
// matrix row-major.
inline constexpr int kLayoutVersion = 1;
std::size_t param_count(Arch arch, const PolicyDims& dims);
Vec flatten_params(const PolicyParams& params);
PolicyParams unflatten_params(Arch arch, const PolicyDims& dims, const Vec& theta);

PolicyParams random_params(Arch arch, const PolicyDims& dims, double stddev, std::uint64_t seed);

Vec recurrent_step(const PolicyParams& params, const Vec& h, const Eigen::Ref<const Vec>& input);
Vec recurrent_step(const PolicyParams& params, const Vec& h, const Observation& obs);

Vec policy_logits(const PolicyParams& params, const Vec& h);
Vec softmax(const Vec& logits);
// Argmax with ties broken toward the lowest action index.
Action greedy_action(const Vec& logits);
inline Action greedy_action(const PolicyParams& params, const Vec& h) {
  return greedy_action(policy_logits(params, h));
}

// F(h) = tanh(W_rec h + b) - h over the tanh block, input term omitted.
Vec rnn_vector_field(const PolicyParams& params, const Vec& h);

inline Eigen::Map<const Vec> as_vector(const Observation& obs) {
  return Eigen::Map<const Vec>(obs.data(), static_cast<Eigen::Index>(obs.size()));
}

// Checkpoint: <dir>/policy.json header plus <dir>/policy.bin holding the
// flat vector as little-endian f64.
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& dir);
PolicyParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace dynlab
