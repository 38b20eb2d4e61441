#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace trajflow::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// A named trainable matrix with its gradient accumulator.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

/// Owns model parameters in insertion order. Addresses are stable.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const { return params_.size(); }

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward()
/// replays them in reverse, invoking only nodes that need gradients.
class Tape {
 public:
  using Backward = std::function<void(const Mat& grad_out)>;

  Var constant(Mat value);
  /// Leaf whose gradient is kept on the tape (for input sensitivities).
  Var input(Mat value);
  /// Leaf bound to a parameter; backward() accumulates into Parameter::grad.
  Var param(Parameter& p);

  Var record(Mat value, const std::vector<Var>& parents, Backward backward);

  void backward(Var root);

  void accumulate(int id, const Mat& g);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const Mat& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.param != nullptr ? n.param->value : n.value;
  }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// Elementary differentiable operations. Matrices are row-major in meaning:
// one row per token / query / element.
Var matmul(Var a, Var b);
/// x * w + b with b a 1 x out row broadcast over rows.
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// a (n x d) + row (1 x d) broadcast.
Var add_row(Var a, Var row);
/// Repeats a 1 x d row n times.
Var repeat_rows(Var row, Eigen::Index n);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_cols(Var a, const std::vector<Eigen::Index>& cols);
Var sum(Var a);
Var detach(Var a);

/// Max over consecutive groups of `group_size` rows, ignoring rows whose
/// valid flag is false. Groups with no valid row yield a zero row.
Var masked_max_pool(Var x, const std::vector<char>& valid, Eigen::Index group_size);

/// Boolean key-visibility matrix: allowed(i, j) != 0 iff query i may attend key j.
using AttentionMask = Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>;

/// Post-softmax weights for one head: rows with no allowed key are all zero.
Mat attention_weights(const Mat& q, const Mat& k, const AttentionMask& allowed);

/// Multi-head scaled dot-product attention over already-projected q, k, v.
/// q: n x d, k: m x d, v: m x d, d divisible by heads. Output n x d.
Var attention(Var q, Var k, Var v, int heads, const AttentionMask& allowed);

}  // namespace trajflow::ad
