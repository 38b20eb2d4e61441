#pragma once

#include <string>
#include <vector>

#include "trajflow/autodiff.hpp"
#include "trajflow/rng.hpp"

namespace trajflow::nn {

using ad::Mat;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

struct Linear {
  ad::Parameter* weight = nullptr;
  ad::Parameter* bias = nullptr;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParamStore& store, const std::string& name, const std::vector<int>& dims, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
};

struct LayerNorm {
  ad::Parameter* gain = nullptr;
  ad::Parameter* bias = nullptr;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim);
  Var operator()(Tape& tape, Var x) const;
};

/// Multi-head attention with independent input widths for query, key and
/// value streams; all project to `dim`.
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, int query_in, int key_in,
                                   int value_in, int dim, int heads, Rng& rng);
  Var operator()(Tape& tape, Var q, Var k, Var v, const ad::AttentionMask& allowed) const;
};

struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward create(ParamStore& store, const std::string& name, int dim, int hidden, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
};

/// Sinusoidal features of a scalar flow time t in [0, 1): dim/2 sines and
/// dim/2 cosines at geometrically spaced frequencies.
Mat time_embedding(double t, int dim);

/// Sinusoidal features of 2-D locations, applied independently to x and y
/// and concatenated: n x (4 * frequencies).
Mat location_embedding(const Mat& positions, int frequencies);

}  // namespace trajflow::nn
