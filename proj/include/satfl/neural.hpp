#pragma once

// Small fully connected networks with exact reverse-mode gradients, Adam and
// target-network blending. Samples are stored column-wise: an input batch is
// an (inputs x batch) matrix.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace satfl {

enum class Activation { identity, tanh, relu, sigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

/// Weights and biases of every layer. Also used for gradients and Adam moments.
template <typename Scalar>
struct LayerStack {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::vector<Matrix> W;
  std::vector<Vector> b;

  std::size_t layers() const { return W.size(); }

  static LayerStack zeros_like(const LayerStack& other) {
    LayerStack z;
    for (const auto& w : other.W) z.W.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& v : other.b) z.b.push_back(Vector::Zero(v.size()));
    return z;
  }

  bool same_shape(const LayerStack& other) const {
    if (W.size() != other.W.size() || b.size() != other.b.size()) return false;
    for (std::size_t l = 0; l < W.size(); ++l)
      if (W[l].rows() != other.W[l].rows() || W[l].cols() != other.W[l].cols() ||
          b[l].size() != other.b[l].size())
        return false;
    return true;
  }

  Scalar squared_norm() const {
    Scalar s(0);
    for (const auto& w : W) s += w.squaredNorm();
    for (const auto& v : b) s += v.squaredNorm();
    return s;
  }
};

template <typename Scalar>
struct NetworkParams {
  using Matrix = typename LayerStack<Scalar>::Matrix;
  using Vector = typename LayerStack<Scalar>::Vector;

  LayerStack<Scalar> weights;
  Activation hidden = Activation::tanh;
  Activation head = Activation::identity;
  // Bounded heads map sigmoid output s to lo + (hi - lo) s per output.
  Vector head_lo;
  Vector head_hi;

  Eigen::Index inputs() const { return weights.W.front().cols(); }
  Eigen::Index outputs() const { return weights.W.back().rows(); }
  bool bounded() const { return head == Activation::sigmoid; }
};

using Networkd = NetworkParams<double>;

namespace detail {

template <typename Scalar, typename Derived>
auto activate(Activation a, const Eigen::MatrixBase<Derived>& z) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  switch (a) {
    case Activation::tanh: return Matrix(z.array().tanh());
    case Activation::relu: return Matrix(z.array().max(Scalar(0)));
    case Activation::sigmoid:
      return Matrix((Scalar(1) + (-z.array()).exp()).inverse());
    case Activation::identity: break;
  }
  return Matrix(z);
}

// Derivative expressed through the activation output y = f(z).
template <typename Scalar, typename Derived>
auto activation_slope(Activation a, const Eigen::MatrixBase<Derived>& y) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  switch (a) {
    case Activation::tanh: return Matrix(Scalar(1) - y.array().square());
    case Activation::relu: return Matrix((y.array() > Scalar(0)).template cast<Scalar>());
    case Activation::sigmoid: return Matrix(y.array() * (Scalar(1) - y.array()));
    case Activation::identity: break;
  }
  return Matrix(Matrix::Ones(y.rows(), y.cols()));
}

}  // namespace detail

/// Builds an MLP with the given layer widths, e.g. {S, H, H, L} for three
/// fully connected layers. Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar = double>
NetworkParams<Scalar> make_network(const std::vector<int>& widths, Activation hidden,
                                   Activation head, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("make_network: need at least two widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("make_network: widths must be >= 1");
  NetworkParams<Scalar> net;
  net.hidden = hidden;
  net.head = head;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Scalar bound = Scalar(1) / std::sqrt(Scalar(widths[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    typename NetworkParams<Scalar>::Matrix W(widths[l + 1], widths[l]);
    typename NetworkParams<Scalar>::Vector b(widths[l + 1]);
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = Scalar(u(rng));
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = Scalar(u(rng));
    net.weights.W.push_back(std::move(W));
    net.weights.b.push_back(std::move(b));
  }
  if (head == Activation::sigmoid) {
    net.head_lo = NetworkParams<Scalar>::Vector::Zero(widths.back());
    net.head_hi = NetworkParams<Scalar>::Vector::Ones(widths.back());
  }
  return net;
}

/// Rescales a bounded head to per-output ranges [lo, hi].
template <typename Scalar>
void set_head_range(NetworkParams<Scalar>& net, const typename NetworkParams<Scalar>::Vector& lo,
                    const typename NetworkParams<Scalar>::Vector& hi) {
  if (!net.bounded()) throw std::invalid_argument("set_head_range: head is not bounded");
  if (lo.size() != net.outputs() || hi.size() != net.outputs())
    throw std::invalid_argument("set_head_range: range length must equal output width");
  if (((hi - lo).array() < Scalar(0)).any())
    throw std::invalid_argument("set_head_range: lo must not exceed hi");
  net.head_lo = lo;
  net.head_hi = hi;
}

/// Layer outputs kept for the reverse pass. a[0] is the input batch and
/// a[l] the activation after layer l; for bounded heads a.back() is the raw
/// sigmoid value before rescaling.
template <typename Scalar>
struct ForwardCache {
  std::vector<typename LayerStack<Scalar>::Matrix> a;
  typename LayerStack<Scalar>::Matrix output;
};

template <typename Scalar, typename Derived>
ForwardCache<Scalar> forward_cached(const NetworkParams<Scalar>& net,
                                    const Eigen::MatrixBase<Derived>& input) {
  if (input.rows() != net.inputs())
    throw std::invalid_argument("forward: expected " + std::to_string(net.inputs()) +
                                " inputs, got " + std::to_string(input.rows()));
  ForwardCache<Scalar> cache;
  cache.a.reserve(net.weights.layers() + 1);
  cache.a.emplace_back(input);
  const std::size_t n = net.weights.layers();
  for (std::size_t l = 0; l < n; ++l) {
    typename LayerStack<Scalar>::Matrix z = net.weights.W[l] * cache.a.back();
    z.colwise() += net.weights.b[l];
    cache.a.push_back(detail::activate<Scalar>(l + 1 < n ? net.hidden : net.head, z));
  }
  if (net.bounded()) {
    cache.output = (cache.a.back().array().colwise() * (net.head_hi - net.head_lo).array())
                       .colwise() +
                   net.head_lo.array();
  } else {
    cache.output = cache.a.back();
  }
  return cache;
}

/// Batch forward pass: (inputs x batch) -> (outputs x batch).
template <typename Scalar, typename Derived>
typename LayerStack<Scalar>::Matrix forward(const NetworkParams<Scalar>& net,
                                            const Eigen::MatrixBase<Derived>& input) {
  return forward_cached(net, input).output;
}

/// Single-sample forward pass.
template <typename Scalar>
typename LayerStack<Scalar>::Vector forward(const NetworkParams<Scalar>& net,
                                            const typename LayerStack<Scalar>::Vector& input) {
  return forward_cached(net, input).output.col(0);
}

template <typename Scalar>
struct Backprop {
  LayerStack<Scalar> grad;                    // summed over the batch
  typename LayerStack<Scalar>::Matrix input;  // d(loss)/d(input), per sample
};

/// Reverse pass given d(loss)/d(output) for every sample in the batch.
template <typename Scalar, typename Derived>
Backprop<Scalar> backward(const NetworkParams<Scalar>& net, const ForwardCache<Scalar>& cache,
                          const Eigen::MatrixBase<Derived>& output_gradient) {
  if (output_gradient.rows() != net.outputs() || output_gradient.cols() != cache.output.cols())
    throw std::invalid_argument("backward: output gradient shape mismatch");
  const std::size_t n = net.weights.layers();
  Backprop<Scalar> out;
  out.grad = LayerStack<Scalar>::zeros_like(net.weights);
  typename LayerStack<Scalar>::Matrix delta = output_gradient;
  if (net.bounded()) delta = delta.array().colwise() * (net.head_hi - net.head_lo).array();
  for (std::size_t l = n; l-- > 0;) {
    const Activation act = l + 1 < n ? net.hidden : net.head;
    delta = delta.cwiseProduct(detail::activation_slope<Scalar>(act, cache.a[l + 1]));
    out.grad.W[l].noalias() = delta * cache.a[l].transpose();
    out.grad.b[l] = delta.rowwise().sum();
    delta = net.weights.W[l].transpose() * delta;
  }
  out.input = std::move(delta);
  return out;
}

template <typename Scalar, typename DerivedIn, typename DerivedOut>
Backprop<Scalar> backward(const NetworkParams<Scalar>& net, const Eigen::MatrixBase<DerivedIn>& input,
                          const Eigen::MatrixBase<DerivedOut>& output_gradient) {
  return backward(net, forward_cached(net, input), output_gradient);
}

template <typename Scalar>
struct OptimizerState {
  LayerStack<Scalar> m;
  LayerStack<Scalar> v;
  std::int64_t step = 0;
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

template <typename Scalar>
OptimizerState<Scalar> make_optimizer(const NetworkParams<Scalar>& net, Scalar learning_rate) {
  OptimizerState<Scalar> s;
  s.m = LayerStack<Scalar>::zeros_like(net.weights);
  s.v = LayerStack<Scalar>::zeros_like(net.weights);
  s.learning_rate = learning_rate;
  return s;
}

/// One Adam step that descends along `grad`.
template <typename Scalar>
void optimizer_step(OptimizerState<Scalar>& s, NetworkParams<Scalar>& net,
                    const LayerStack<Scalar>& grad) {
  if (!grad.same_shape(net.weights) || !s.m.same_shape(net.weights))
    throw std::invalid_argument("optimizer_step: shape mismatch");
  ++s.step;
  const Scalar c1 = Scalar(1) - std::pow(s.beta1, Scalar(s.step));
  const Scalar c2 = Scalar(1) - std::pow(s.beta2, Scalar(s.step));
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = s.beta1 * m + (Scalar(1) - s.beta1) * g;
    v = s.beta2 * v + (Scalar(1) - s.beta2) * g.cwiseProduct(g);
    p.array() -= s.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
  };
  for (std::size_t l = 0; l < net.weights.layers(); ++l) {
    update(net.weights.W[l], s.m.W[l], s.v.W[l], grad.W[l]);
    update(net.weights.b[l], s.m.b[l], s.v.b[l], grad.b[l]);
  }
}

/// target <- rate * main + (1 - rate) * target
template <typename Scalar>
void soft_update(NetworkParams<Scalar>& target, const NetworkParams<Scalar>& main, Scalar rate) {
  if (!(rate >= Scalar(0) && rate <= Scalar(1)))
    throw std::invalid_argument("soft_update: rate must lie in [0, 1]");
  if (!target.weights.same_shape(main.weights))
    throw std::invalid_argument("soft_update: shape mismatch");
  if (rate == Scalar(1)) {
    target.weights = main.weights;
    return;
  }
  for (std::size_t l = 0; l < main.weights.layers(); ++l) {
    target.weights.W[l] = rate * main.weights.W[l] + (Scalar(1) - rate) * target.weights.W[l];
    target.weights.b[l] = rate * main.weights.b[l] + (Scalar(1) - rate) * target.weights.b[l];
  }
}

// Checkpoint layout (plain text, one token stream):
//   satfl-net 1
//   layers <n> hidden <activation> head <activation>
//   for each layer: W <rows> <cols> <row-major values> b <size> <values>
//   if the head is bounded: lo <size> <values> hi <size> <values>
// Values are written with max_digits10 so a round trip is exact.

template <typename Scalar>
void save_checkpoint(std::ostream& os, const NetworkParams<Scalar>& net) {
  const auto old_precision = os.precision(std::numeric_limits<Scalar>::max_digits10);
  os << "satfl-net 1\n";
  os << "layers " << net.weights.layers() << " hidden " << to_string(net.hidden) << " head "
     << to_string(net.head) << '\n';
  auto vec = [&](const char* tag, const auto& v) {
    os << tag << ' ' << v.size();
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v(i);
    os << '\n';
  };
  for (std::size_t l = 0; l < net.weights.layers(); ++l) {
    const auto& W = net.weights.W[l];
    os << "W " << W.rows() << ' ' << W.cols();
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) os << ' ' << W(i, j);
    os << '\n';
    vec("b", net.weights.b[l]);
  }
  if (net.bounded()) {
    vec("lo", net.head_lo);
    vec("hi", net.head_hi);
  }
  os.precision(old_precision);
}

template <typename Scalar = double>
NetworkParams<Scalar> load_checkpoint(std::istream& is) {
  auto expect = [&](const std::string& want) {
    std::string got;
    if (!(is >> got) || got != want)
      throw std::runtime_error("checkpoint: expected '" + want + "', got '" + got + "'");
  };
  auto count = [&]() {
    long long n;
    if (!(is >> n) || n < 0) throw std::runtime_error("checkpoint: bad size field");
    return static_cast<Eigen::Index>(n);
  };
  auto value = [&]() {
    Scalar x;
    if (!(is >> x)) throw std::runtime_error("checkpoint: truncated value list");
    return x;
  };
  auto vec = [&](const std::string& tag) {
    expect(tag);
    typename LayerStack<Scalar>::Vector v(count());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = value();
    return v;
  };
  expect("satfl-net");
  expect("1");
  NetworkParams<Scalar> net;
  std::string name;
  expect("layers");
  const Eigen::Index layers = count();
  expect("hidden");
  is >> name;
  net.hidden = parse_activation(name);
  expect("head");
  is >> name;
  net.head = parse_activation(name);
  for (Eigen::Index l = 0; l < layers; ++l) {
    expect("W");
    const Eigen::Index rows = count(), cols = count();
    typename LayerStack<Scalar>::Matrix W(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) W(i, j) = value();
    net.weights.W.push_back(std::move(W));
    net.weights.b.push_back(vec("b"));
    if (net.weights.b.back().size() != rows) throw std::runtime_error("checkpoint: bias size");
    if (l > 0 && net.weights.W[l - 1].rows() != cols)
      throw std::runtime_error("checkpoint: layer shapes do not chain");
  }
  if (net.bounded()) {
    net.head_lo = vec("lo");
    net.head_hi = vec("hi");
  }
  return net;
}

}  // namespace satfl
