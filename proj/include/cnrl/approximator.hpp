#pragma once

// Feed-forward tanh network with a linear output layer, analytic gradients,
// and an Adam optimizer. Parameters live in per-layer Eigen matrices; the flat
// layout (layer-major, weights row-major then biases) is what checkpoints and
// the optimizers see.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnrl {

enum class Activation { Tanh, Linear };

template <typename Scalar = double>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Mlp() = default;

  /// Zero-initialized network; hidden layers use `hidden`, the output is linear.
  explicit Mlp(std::vector<int> layer_sizes, Activation hidden = Activation::Tanh)
      : layer_sizes_(std::move(layer_sizes)), hidden_(hidden) {
    if (layer_sizes_.size() < 2) {
      throw std::invalid_argument("Mlp needs at least an input and an output layer");
    }
    for (int n : layer_sizes_) {
      if (n <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
      weights_.push_back(Matrix::Zero(layer_sizes_[l + 1], layer_sizes_[l]));
      biases_.push_back(Vector::Zero(layer_sizes_[l + 1]));
    }
  }

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  Activation hidden_activation() const { return hidden_; }
  int input_size() const { return layer_sizes_.front(); }
  int output_size() const { return layer_sizes_.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  const Matrix& weight(std::size_t l) const { return weights_[l]; }
  const Vector& bias(std::size_t l) const { return biases_[l]; }
  Matrix& weight(std::size_t l) { return weights_[l]; }
  Vector& bias(std::size_t l) { return biases_[l]; }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  Vector params() const {
    Vector flat(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) flat[k++] = weights_[l](r, c);
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) flat[k++] = biases_[l][r];
    }
    return flat;
  }

  void set_params(const Eigen::Ref<const Vector>& flat) {
    if (flat.size() != parameter_count()) {
      throw std::invalid_argument("Mlp::set_params: expected " + std::to_string(parameter_count()) +
                                  " values, got " + std::to_string(flat.size()));
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat[k++];
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = flat[k++];
    }
  }

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const Scalar bound = Scalar(1) / std::sqrt(Scalar(weights_[l].cols()));
      std::uniform_real_distribution<Scalar> dist(-bound, bound);
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = dist(rng);
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = dist(rng);
    }
  }

  bool same_shape(const Mlp& other) const {
    return layer_sizes_ == other.layer_sizes_ && hidden_ == other.hidden_;
  }

 private:
  std::vector<int> layer_sizes_;
  Activation hidden_ = Activation::Tanh;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

using Mlpd = Mlp<double>;

/// Layer activations for a batch (one column per sample), kept for backward.
template <typename Scalar>
struct ForwardCache {
  std::vector<typename Mlp<Scalar>::Matrix> activations;  // activations[0] is the input
};

namespace detail {

template <typename Derived>
void apply_activation(Activation act, Eigen::MatrixBase<Derived>& z) {
  if (act == Activation::Tanh) z = z.array().tanh().matrix();
}

}  // namespace detail

/// Batched forward pass; each column of `inputs` is one sample.
template <typename Scalar>
typename Mlp<Scalar>::Matrix forward_batch(const Mlp<Scalar>& net,
                                           const typename Mlp<Scalar>::Matrix& inputs,
                                           ForwardCache<Scalar>* cache = nullptr) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  if (inputs.rows() != net.input_size()) {
    throw std::invalid_argument("Mlp forward: expected input of size " +
                                std::to_string(net.input_size()) + ", got " +
                                std::to_string(inputs.rows()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(inputs);
  }
  Matrix a = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix z = net.weight(l) * a;
    z.colwise() += net.bias(l);
    if (l + 1 < net.num_layers()) detail::apply_activation(net.hidden_activation(), z);
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

template <typename Scalar>
typename Mlp<Scalar>::Vector forward(const Mlp<Scalar>& net,
                                     const Eigen::Ref<const typename Mlp<Scalar>::Vector>& x) {
  typename Mlp<Scalar>::Matrix in = x;
  return forward_batch(net, in);
}

/// Gradient of sum_over_samples(output . upstream) with respect to the flat
/// parameter vector. `cache` must come from forward_batch on the same inputs.
template <typename Scalar>
typename Mlp<Scalar>::Vector backward_batch(const Mlp<Scalar>& net, const ForwardCache<Scalar>& cache,
                                            const typename Mlp<Scalar>::Matrix& upstream) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  using Vector = typename Mlp<Scalar>::Vector;
  const std::size_t layers = net.num_layers();
  if (cache.activations.size() != layers + 1) {
    throw std::invalid_argument("Mlp backward: forward cache does not match the network");
  }
  const Matrix& out = cache.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw std::invalid_argument("Mlp backward: upstream gradient shape mismatch");
  }

  std::vector<Matrix> dw(layers);
  std::vector<Vector> db(layers);
  Matrix delta = upstream;  // d/dz of the current layer
  for (std::size_t i = layers; i-- > 0;) {
    dw[i] = delta * cache.activations[i].transpose();
    db[i] = delta.rowwise().sum();
    if (i == 0) break;
    Matrix back = net.weight(i).transpose() * delta;
    if (net.hidden_activation() == Activation::Tanh) {
      const Matrix& h = cache.activations[i];
      back.array() *= (Scalar(1) - h.array().square());
    }
    delta = std::move(back);
  }

  Vector grad(net.parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    for (Eigen::Index r = 0; r < dw[l].rows(); ++r)
      for (Eigen::Index c = 0; c < dw[l].cols(); ++c) grad[k++] = dw[l](r, c);
    for (Eigen::Index r = 0; r < db[l].size(); ++r) grad[k++] = db[l][r];
  }
  return grad;
}

template <typename Scalar>
typename Mlp<Scalar>::Vector backward(const Mlp<Scalar>& net,
                                      const Eigen::Ref<const typename Mlp<Scalar>::Vector>& x,
                                      const Eigen::Ref<const typename Mlp<Scalar>::Vector>& upstream) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  ForwardCache<Scalar> cache;
  Matrix in = x;
  forward_batch(net, in, &cache);
  Matrix up = upstream;
  return backward_batch(net, cache, up);
}

template <typename Scalar = double>
struct AdamState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector m;
  Vector v;
  long step = 0;
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps_hat = Scalar(1e-8);

  AdamState() = default;
  AdamState(Eigen::Index n, Scalar lr)
      : m(Vector::Zero(n)), v(Vector::Zero(n)), learning_rate(lr) {}
};

/// One bias-corrected Adam update of `params` in place.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, Eigen::Ref<typename AdamState<Scalar>::Vector> params,
               const Eigen::Ref<const typename AdamState<Scalar>::Vector>& grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: length mismatch between params, grads and moments");
  }
  if (!grads.allFinite()) {
    throw std::domain_error("adam_step: non-finite gradient");
  }
  ++state.step;
  state.m = state.beta1 * state.m + (Scalar(1) - state.beta1) * grads;
  state.v = state.beta2 * state.v + (Scalar(1) - state.beta2) * grads.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, Scalar(state.step));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, Scalar(state.step));
  params.array() -= state.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.eps_hat);
}

}  // namespace cnrl
