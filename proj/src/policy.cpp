#include "dynlab/policy.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

namespace {

Vec sigmoid(const Vec& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

// tanh through the vectorized exp; several times faster than the scalar
// libm tanh Eigen falls back to for doubles. Absolute error ~1e-16.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / (1.0 + (2.0 * x).exp());
}

void check_dims(const PolicyDims& dims) {
  if (dims.input <= 0 || dims.hidden <= 0 || dims.actions <= 0)
    throw Error(ErrorCode::DimensionMismatch, "policy dimensions must be positive");
}

}  // namespace

std::string_view arch_name(Arch arch) { return arch == Arch::Gru ? "gru" : "rnn"; }

Arch arch_from_name(std::string_view name) {
  if (name == "gru") return Arch::Gru;
  if (name == "rnn") return Arch::VanillaRnn;
  throw Error(ErrorCode::InvalidArgument, "unknown architecture '" + std::string(name) + "'");
}

PolicyParams::PolicyParams(Arch a, PolicyDims d) : arch(a), dims(d) {
  check_dims(d);
  const int g = gates();
  w_in = Mat::Zero(g * d.hidden, d.input);
  w_rec = Mat::Zero(g * d.hidden, d.hidden);
  bias = Vec::Zero(g * d.hidden);
  w_out = Mat::Zero(d.actions, d.hidden);
  b_out = Vec::Zero(d.actions);
}

std::size_t param_count(Arch arch, const PolicyDims& dims) {
  const std::size_t g = arch == Arch::Gru ? 3 : 1;
  const auto h = static_cast<std::size_t>(dims.hidden);
  const auto i = static_cast<std::size_t>(dims.input);
  const auto a = static_cast<std::size_t>(dims.actions);
  return g * h * (i + h + 1) + a * (h + 1);
}

Vec flatten_params(const PolicyParams& p) {
  Vec theta(static_cast<Eigen::Index>(param_count(p.arch, p.dims)));
  Eigen::Index k = 0;
  auto put = [&](const auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) theta[k++] = m(r, c);
  };
  put(p.w_in);
  put(p.w_rec);
  put(p.bias);
  put(p.w_out);
  put(p.b_out);
  return theta;
}

PolicyParams unflatten_params(Arch arch, const PolicyDims& dims, const Vec& theta) {
  PolicyParams p(arch, dims);
  if (static_cast<std::size_t>(theta.size()) != param_count(arch, dims))
    throw Error(ErrorCode::LengthMismatch, "flat parameter vector has length " +
                                               std::to_string(theta.size()) + ", expected " +
                                               std::to_string(param_count(arch, dims)));
  Eigen::Index k = 0;
  auto take = [&](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = theta[k++];
  };
  take(p.w_in);
  take(p.w_rec);
  take(p.bias);
  take(p.w_out);
  take(p.b_out);
  return p;
}

PolicyParams random_params(Arch arch, const PolicyDims& dims, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  const Vec theta =
      gaussian_vector(rng, static_cast<Eigen::Index>(param_count(arch, dims)), stddev);
  return unflatten_params(arch, dims, theta);
}

Vec recurrent_step(const PolicyParams& p, const Vec& h, const Eigen::Ref<const Vec>& input) {
  const int n = p.dims.hidden;
  if (h.size() != n || input.size() != p.dims.input)
    throw Error(ErrorCode::DimensionMismatch, "recurrent_step: hidden or input dimension mismatch");
  if (p.arch == Arch::VanillaRnn) {
    Vec pre = p.bias;
    pre.noalias() += p.w_in * input;
    pre.noalias() += p.w_rec * h;
    return fast_tanh(pre.array()).matrix();
  }
  Vec in_part = p.bias;
  in_part.noalias() += p.w_in * input;
  Vec gates = in_part.head(2 * n);
  gates.noalias() += p.w_rec.topRows(2 * n) * h;
  const Vec zr = sigmoid(gates);
  const auto z = zr.head(n).array();
  const Vec rh = (zr.tail(n).array() * h.array()).matrix();
  Vec cand = in_part.tail(n);
  cand.noalias() += p.w_rec.bottomRows(n) * rh;
  const Vec nt = fast_tanh(cand.array()).matrix();
  return ((1.0 - z) * h.array() + z * nt.array()).matrix();
}

Vec recurrent_step(const PolicyParams& p, const Vec& h, const Observation& obs) {
  return recurrent_step(p, h, as_vector(obs));
}

Vec policy_logits(const PolicyParams& p, const Vec& h) {
  if (h.size() != p.dims.hidden)
    throw Error(ErrorCode::DimensionMismatch, "policy_logits: hidden dimension mismatch");
  Vec logits = p.b_out;
  logits.noalias() += p.w_out * h;
  return logits;
}

Vec softmax(const Vec& logits) {
  const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Action greedy_action(const Vec& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<Action>(best);
}

Vec rnn_vector_field(const PolicyParams& p, const Vec& h) {
  if (h.size() != p.dims.hidden)
    throw Error(ErrorCode::DimensionMismatch, "rnn_vector_field: hidden dimension mismatch");
  Vec pre = p.tanh_block_bias();
  pre.noalias() += p.tanh_block_rec() * h;
  return pre.array().tanh().matrix() - h;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  std::filesystem::create_directories(dir);
  const Vec theta = flatten_params(params);
  nlohmann::json header{{"arch", arch_name(params.arch)},
                        {"dims",
                         {{"input", params.dims.input},
                          {"hidden", params.dims.hidden},
                          {"actions", params.dims.actions}}},
                        {"layout_version", kLayoutVersion},
                        {"n_params", theta.size()}};
  std::ofstream(dir / "policy.json") << header.dump(2) << '\n';
  std::ofstream bin(dir / "policy.bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
  if (!bin) throw Error(ErrorCode::Io, "failed writing " + (dir / "policy.bin").string());
}

PolicyParams load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream hf(dir / "policy.json");
  if (!hf) throw Error(ErrorCode::Io, "cannot open " + (dir / "policy.json").string());
  const auto header = nlohmann::json::parse(hf);
  if (header.at("layout_version").get<int>() != kLayoutVersion)
    throw Error(ErrorCode::SchemaMismatch, "unsupported checkpoint layout_version");
  const Arch arch = arch_from_name(header.at("arch").get<std::string>());
  PolicyDims dims;
  dims.input = header.at("dims").at("input").get<int>();
  dims.hidden = header.at("dims").at("hidden").get<int>();
  dims.actions = header.at("dims").at("actions").get<int>();
  const auto n = static_cast<Eigen::Index>(param_count(arch, dims));
  Vec theta(n);
  std::ifstream bin(dir / "policy.bin", std::ios::binary);
  bin.read(reinterpret_cast<char*>(theta.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!bin) throw Error(ErrorCode::LengthMismatch, "checkpoint binary shorter than header claims");
  return unflatten_params(arch, dims, theta);
}

}  // namespace dynlab
