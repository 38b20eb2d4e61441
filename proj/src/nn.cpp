#include "trajflow/nn.hpp"

#include <cmath>
#include <numbers>

#include "trajflow/errors.hpp"

namespace trajflow::nn {

namespace {

Mat uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

}  // namespace

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  if (in <= 0 || out <= 0) throw ConfigError("Linear " + name + ": dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = &store.add(name + ".weight", uniform_matrix(in, out, bound, rng));
  l.bias = &store.add(name + ".bias", uniform_matrix(1, out, bound, rng));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  return ad::linear(x, tape.param(*weight), tape.param(*bias));
}

Mlp Mlp::create(ParamStore& store, const std::string& name, const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("Mlp " + name + ": needs at least input and output widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(Linear::create(store, name + "." + std::to_string(i), dims[i], dims[i + 1], rng));
  }
  return m;
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, x);
    if (i + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim) {
  LayerNorm n;
  n.gain = &store.add(name + ".gain", Mat::Ones(1, dim));
  n.bias = &store.add(name + ".bias", Mat::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return ad::layer_norm(x, tape.param(*gain), tape.param(*bias));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int query_in,
                                              int key_in, int value_in, int dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention " + name + ": embed dim must be divisible by heads");
  }
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".q", query_in, dim, rng);
  a.key = Linear::create(store, name + ".k", key_in, dim, rng);
  a.value = Linear::create(store, name + ".v", value_in, dim, rng);
  a.output = Linear::create(store, name + ".o", dim, dim, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(Tape& tape, Var q, Var k, Var v, const ad::AttentionMask& allowed) const {
  Var attended = ad::attention(query(tape, q), key(tape, k), value(tape, v), heads, allowed);
  return output(tape, attended);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, int dim, int hidden, Rng& rng) {
  FeedForward f;
  f.up = Linear::create(store, name + ".up", dim, hidden, rng);
  f.down = Linear::create(store, name + ".down", hidden, dim, rng);
  return f;
}

Var FeedForward::operator()(Tape& tape, Var x) const { return down(tape, ad::relu(up(tape, x))); }

Mat time_embedding(double t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("time embedding dim must be positive and even");
  const int half = dim / 2;
  Mat e(1, dim);
  // t is scaled to [0, 1000) so that the highest frequency resolves small
  // flow-time differences, as in discrete-time diffusion embeddings.
  const double x = 1000.0 * t;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e(0, i) = std::sin(x * freq);
    e(0, half + i) = std::cos(x * freq);
  }
  return e;
}

Mat location_embedding(const Mat& positions, int frequencies) {
  if (positions.cols() != 2) throw DimensionError("location_embedding expects n x 2 positions");
  if (frequencies <= 0) throw ConfigError("location embedding needs at least one frequency");
  Mat e(positions.rows(), 4 * frequencies);
  // Wavelengths from 1 to 256 scene units, geometric.
  for (int f = 0; f < frequencies; ++f) {
    const double ratio = frequencies > 1 ? static_cast<double>(f) / (frequencies - 1) : 0.0;
    const double omega = 2.0 * std::numbers::pi / std::pow(256.0, ratio);
    for (Eigen::Index i = 0; i < positions.rows(); ++i) {
      for (int axis = 0; axis < 2; ++axis) {
        const double a = omega * positions(i, axis);
        const int base = axis * 2 * frequencies;
        e(i, base + f) = std::sin(a);
        e(i, base + frequencies + f) = std::cos(a);
      }
    }
  }
  return e;
}

}  // namespace trajflow::nn
