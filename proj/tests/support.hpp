#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "trajflow/autodiff.hpp"
#include "trajflow/io.hpp"
#include "trajflow/model.hpp"
#include "trajflow/scene.hpp"

namespace testing {

using trajflow::ad::Mat;

/// Small enough (< 1k scalars) for exhaustive finite differences.
inline trajflow::ModelConfig toy_model_config() {
  trajflow::ModelConfig mc;
  mc.encoder.layers = 1;
  mc.encoder.embed_dim = 2;
  mc.encoder.heads = 1;
  mc.encoder.local_k = 3;
  mc.encoder.pe_frequencies = 1;
  mc.decoder.layers = 1;
  mc.decoder.embed_dim = 4;
  mc.decoder.heads = 2;
  mc.decoder.n_queries = 3;
  mc.decoder.cross_local_k = 4;
  mc.decoder.time_embed_dim = 2;
  mc.decoder.future_steps = 2;
  mc.decoder.pe_frequencies = 1;
  return mc;
}

inline trajflow::SceneGenConfig toy_scene_config() {
  trajflow::SceneGenConfig g;
  g.agent_count = 3;
  g.history_steps = 3;
  g.future_steps = 2;
  g.points_per_polyline = 3;
  g.max_polylines = 5;
  return g;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / std::max(a.norm() * b.norm(), 1e-300);
}

/// Central differences of f over every scalar in `params`.
inline Eigen::VectorXd fd_gradient(const std::vector<Mat*>& params, const std::function<double()>& f,
                                   double eps = 1e-6) {
  Eigen::Index n = 0;
  for (const Mat* p : params) n += p->size();
  Eigen::VectorXd g(n);
  Eigen::Index k = 0;
  for (Mat* p : params) {
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      double& x = p->data()[i];
      const double x0 = x;
      x = x0 + eps;
      const double fp = f();
      x = x0 - eps;
      const double fm = f();
      x = x0;
      g(k++) = (fp - fm) / (2.0 * eps);
    }
  }
  return g;
}

inline Eigen::VectorXd flatten_grads(const std::vector<trajflow::ad::Parameter*>& params) {
  Eigen::Index n = 0;
  for (const auto* p : params) n += p->value.size();
  Eigen::VectorXd g(n);
  Eigen::Index k = 0;
  for (const auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) g(k++) = p->grad.size() ? p->grad.data()[i] : 0.0;
  }
  return g;
}

inline std::vector<Mat*> values_of(const std::vector<trajflow::ad::Parameter*>& params) {
  std::vector<Mat*> out;
  for (auto* p : params) out.push_back(&p->value);
  return out;
}

inline std::vector<trajflow::SceneRecord> generated_records(int count, const trajflow::SceneGenConfig& cfg,
                                                            std::uint64_t first_seed = 1) {
  std::vector<trajflow::SceneRecord> out;
  for (int i = 0; i < count; ++i) out.push_back(trajflow::to_record(trajflow::generate_scene(first_seed + i, cfg)));
  return out;
}

}  // namespace testing
