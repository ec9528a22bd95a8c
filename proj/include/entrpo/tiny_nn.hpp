#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "entrpo/cartpole_env.hpp"
#include "entrpo/random.hpp"

namespace entrpo {

/// Flat vector holding every weight and bias of a network.
using ParamVector = Eigen::VectorXd;

/// Fully-connected tanh network with an affine output layer.
///
/// Parameters are stored layer by layer: the fan_out x fan_in weight matrix
/// in column-major order, followed by the fan_out bias vector.
struct MlpArchitecture {
  std::vector<int> layer_sizes;

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw std::invalid_argument("MlpArchitecture: need at least input and output layers");
    for (int size : layer_sizes)
      if (size < 1) throw std::invalid_argument("MlpArchitecture: layer sizes must be >= 1");
  }

  std::size_t parameter_count() const {
    std::size_t count = 0;
    for (int l = 0; l < num_layers(); ++l)
      count += static_cast<std::size_t>(layer_sizes[l] + 1) * layer_sizes[l + 1];
    return count;
  }

  std::size_t layer_offset(int layer) const {
    std::size_t offset = 0;
    for (int l = 0; l < layer; ++l)
      offset += static_cast<std::size_t>(layer_sizes[l] + 1) * layer_sizes[l + 1];
    return offset;
  }

  bool operator==(const MlpArchitecture&) const = default;
};

inline MlpArchitecture policy_architecture() { return {{4, 64, 64, kNumActions}}; }
inline MlpArchitecture value_architecture() { return {{4, 128, 64, 32, 1}}; }

namespace detail {

inline void check_params(const MlpArchitecture& arch, const ParamVector& params) {
  if (static_cast<std::size_t>(params.size()) != arch.parameter_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(params.size()) +
                                " does not match architecture (" +
                                std::to_string(arch.parameter_count()) + ")");
}

template <typename Vec>
auto weight_view(const MlpArchitecture& arch, Vec& params, int layer) {
  const int fan_in = arch.layer_sizes[layer];
  const int fan_out = arch.layer_sizes[layer + 1];
  using Scalar = std::remove_reference_t<decltype(params.data()[0])>;
  using MatrixType = std::conditional_t<std::is_const_v<Scalar>, const Eigen::MatrixXd, Eigen::MatrixXd>;
  return Eigen::Map<MatrixType>(params.data() + arch.layer_offset(layer), fan_out, fan_in);
}

template <typename Vec>
auto bias_view(const MlpArchitecture& arch, Vec& params, int layer) {
  const int fan_in = arch.layer_sizes[layer];
  const int fan_out = arch.layer_sizes[layer + 1];
  using Scalar = std::remove_reference_t<decltype(params.data()[0])>;
  using VectorType = std::conditional_t<std::is_const_v<Scalar>, const Eigen::VectorXd, Eigen::VectorXd>;
  return Eigen::Map<VectorType>(params.data() + arch.layer_offset(layer) +
                                    static_cast<std::size_t>(fan_in) * fan_out,
                                fan_out);
}

}  // namespace detail

struct LayerParams {
  Eigen::MatrixXd weight;  // fan_out x fan_in
  Eigen::VectorXd bias;
};

inline std::vector<LayerParams> unflatten(const MlpArchitecture& arch, const ParamVector& params) {
  detail::check_params(arch, params);
  std::vector<LayerParams> layers;
  layers.reserve(arch.num_layers());
  for (int l = 0; l < arch.num_layers(); ++l)
    layers.push_back({detail::weight_view(arch, params, l), detail::bias_view(arch, params, l)});
  return layers;
}

inline ParamVector flatten(const MlpArchitecture& arch, const std::vector<LayerParams>& layers) {
  if (static_cast<int>(layers.size()) != arch.num_layers())
    throw std::invalid_argument("flatten: layer count does not match architecture");
  ParamVector params(static_cast<Eigen::Index>(arch.parameter_count()));
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != arch.layer_sizes[l + 1] || layer.weight.cols() != arch.layer_sizes[l] ||
        layer.bias.size() != arch.layer_sizes[l + 1])
      throw std::invalid_argument("flatten: layer " + std::to_string(l) + " has wrong shape");
    detail::weight_view(arch, params, l) = layer.weight;
    detail::bias_view(arch, params, l) = layer.bias;
  }
  return params;
}

/// Weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
inline ParamVector init_params(const MlpArchitecture& arch, Rng& rng) {
  arch.validate();
  ParamVector params = ParamVector::Zero(static_cast<Eigen::Index>(arch.parameter_count()));
  for (int l = 0; l < arch.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.layer_sizes[l]));
    auto weight = detail::weight_view(arch, params, l);
    for (Eigen::Index j = 0; j < weight.cols(); ++j)
      for (Eigen::Index i = 0; i < weight.rows(); ++i) weight(i, j) = rng.uniform(-bound, bound);
  }
  return params;
}

/// Layer activations from one batched forward pass; columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // [0] = inputs, back() = outputs

  const Eigen::MatrixXd& outputs() const { return activations.back(); }
};

inline ForwardCache forward_cached(const MlpArchitecture& arch, const ParamVector& params,
                                   const Eigen::MatrixXd& inputs) {
  detail::check_params(arch, params);
  if (inputs.rows() != arch.input_size())
    throw std::invalid_argument("forward: input width does not match architecture");
  ForwardCache cache;
  cache.activations.reserve(arch.layer_sizes.size());
  cache.activations.push_back(inputs);
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto weight = detail::weight_view(arch, params, l);
    const auto bias = detail::bias_view(arch, params, l);
    Eigen::MatrixXd z = weight * cache.activations.back();
    z.colwise() += bias;
    if (l + 1 < arch.num_layers()) z = z.array().tanh().matrix();
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

inline Eigen::MatrixXd forward(const MlpArchitecture& arch, const ParamVector& params,
                               const Eigen::MatrixXd& inputs) {
  return forward_cached(arch, params, inputs).outputs();
}

inline Eigen::VectorXd forward(const MlpArchitecture& arch, const ParamVector& params,
                               const Eigen::VectorXd& input) {
  return forward_cached(arch, params, Eigen::MatrixXd(input)).outputs().col(0);
}

/// Reverse pass: gradient of sum(output_grad .* outputs) w.r.t. the parameters.
inline ParamVector backward(const MlpArchitecture& arch, const ParamVector& params,
                            const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
  ParamVector grad = ParamVector::Zero(params.size());
  Eigen::MatrixXd delta = output_grad;
  for (int l = arch.num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input = cache.activations[l];
    detail::weight_view(arch, grad, l) = delta * input.transpose();
    detail::bias_view(arch, grad, l) = delta.rowwise().sum();
    if (l > 0) {
      const auto weight = detail::weight_view(arch, params, l);
      Eigen::MatrixXd upstream = weight.transpose() * delta;
      delta = upstream.array() * (1.0 - input.array().square());
    }
  }
  return grad;
}

/// Forward-mode directional derivative of the outputs along `direction`.
inline Eigen::MatrixXd jvp(const MlpArchitecture& arch, const ParamVector& params,
                           const ForwardCache& cache, const ParamVector& direction) {
  detail::check_params(arch, direction);
  Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(cache.activations[0].rows(), cache.activations[0].cols());
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto weight = detail::weight_view(arch, params, l);
    const auto dweight = detail::weight_view(arch, direction, l);
    const auto dbias = detail::bias_view(arch, direction, l);
    Eigen::MatrixXd dz = dweight * cache.activations[l];
    if (l > 0) dz.noalias() += weight * tangent;
    dz.colwise() += dbias;
    if (l + 1 < arch.num_layers())
      tangent = dz.array() * (1.0 - cache.activations[l + 1].array().square());
    else
      tangent = std::move(dz);
  }
  return tangent;
}

/// Exact gradient of a scalar batch loss. `loss(outputs, output_grad)` returns
/// the loss and fills dloss/doutputs (same shape as outputs).
template <typename Loss>
ParamVector gradient(const MlpArchitecture& arch, const ParamVector& params,
                     const Eigen::MatrixXd& inputs, Loss&& loss, double* loss_value = nullptr) {
  const ForwardCache cache = forward_cached(arch, params, inputs);
  Eigen::MatrixXd output_grad = Eigen::MatrixXd::Zero(cache.outputs().rows(), cache.outputs().cols());
  const double value = loss(cache.outputs(), output_grad);
  if (!std::isfinite(value)) throw std::domain_error("gradient: loss is not finite");
  if (loss_value) *loss_value = value;
  return backward(arch, params, cache, output_grad);
}

inline Eigen::Vector4d to_input(const EnvState& s) { return {s.x, s.x_dot, s.theta, s.theta_dot}; }

template <typename States>
Eigen::MatrixXd to_inputs(const States& states) {
  Eigen::MatrixXd inputs(4, static_cast<Eigen::Index>(std::size(states)));
  Eigen::Index j = 0;
  for (const EnvState& s : states) inputs.col(j++) = to_input(s);
  return inputs;
}

/// Categorical distribution over the two cart-pole actions.
struct PolicyDistribution {
  std::array<double, kNumActions> probs{};
  std::array<double, kNumActions> log_probs{};

  /// Softmax with log-probabilities from log-sum-exp.
  template <typename Logits>
  static PolicyDistribution from_logits(const Logits& logits) {
    double max_logit = logits[0];
    for (int a = 1; a < kNumActions; ++a) max_logit = std::max(max_logit, static_cast<double>(logits[a]));
    double sum = 0.0;
    for (int a = 0; a < kNumActions; ++a) sum += std::exp(logits[a] - max_logit);
    const double log_normalizer = max_logit + std::log(sum);
    PolicyDistribution dist;
    for (int a = 0; a < kNumActions; ++a) {
      dist.log_probs[a] = logits[a] - log_normalizer;
      dist.probs[a] = std::exp(dist.log_probs[a]);
    }
    return dist;
  }

  static PolicyDistribution from_probs(const std::array<double, kNumActions>& probs) {
    PolicyDistribution dist;
    dist.probs = probs;
    for (int a = 0; a < kNumActions; ++a) dist.log_probs[a] = std::log(probs[a]);
    return dist;
  }
};

inline PolicyDistribution policy_distribution(const ParamVector& params, const EnvState& state) {
  const Eigen::VectorXd logits = forward(policy_architecture(), params, Eigen::VectorXd(to_input(state)));
  return PolicyDistribution::from_logits(logits);
}

inline std::vector<PolicyDistribution> policy_distributions(const ParamVector& params,
                                                            const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd logits = forward(policy_architecture(), params, inputs);
  std::vector<PolicyDistribution> dists;
  dists.reserve(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    dists.push_back(PolicyDistribution::from_logits(logits.col(j)));
  return dists;
}

inline double value(const ParamVector& params, const EnvState& state) {
  return forward(value_architecture(), params, Eigen::VectorXd(to_input(state)))(0);
}

inline Eigen::VectorXd values(const ParamVector& params, const Eigen::MatrixXd& inputs) {
  return forward(value_architecture(), params, inputs).row(0).transpose();
}

// Checkpoint text format:
//   entrpo-mlp 1
//   layers <n> <size_0> ... <size_{n-1}>
//   params <count>
//   <one value per line, 17 significant digits>

inline void save_checkpoint(const std::string& path, const MlpArchitecture& arch,
                            const ParamVector& params) {
  detail::check_params(arch, params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << "entrpo-mlp 1\nlayers " << arch.layer_sizes.size();
  for (int size : arch.layer_sizes) out << ' ' << size;
  out << "\nparams " << params.size() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < params.size(); ++i) out << params(i) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

struct Checkpoint {
  MlpArchitecture arch;
  ParamVector params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "entrpo-mlp" || version != 1) throw std::runtime_error("not an entrpo checkpoint: " + path);
  std::size_t n_layers = 0;
  in >> tag >> n_layers;
  if (tag != "layers" || !in) throw std::runtime_error("malformed checkpoint header: " + path);
  Checkpoint ckpt;
  ckpt.arch.layer_sizes.resize(n_layers);
  for (int& size : ckpt.arch.layer_sizes) in >> size;
  ckpt.arch.validate();
  std::size_t count = 0;
  in >> tag >> count;
  if (tag != "params" || count != ckpt.arch.parameter_count())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  ckpt.params.resize(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::string token;
    in >> token;
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    ckpt.params(static_cast<Eigen::Index>(i)) = std::stod(token);
  }
  if (!ckpt.params.allFinite()) throw std::runtime_error("checkpoint contains non-finite values: " + path);
  return ckpt;
}

}  // namespace entrpo
