#pragma once

// Finite-difference gradient checks on the toy model, shared by the unit
// tests and the acceptance run.

#include <string>
#include <vector>

#include "support.hpp"
#include "trajflow/losses.hpp"
#include "trajflow/trainer.hpp"

namespace gradcheck {

struct Outcome {
  std::string name;
  double rel_err = 0.0;
  double cosine = 0.0;
  std::size_t scalars = 0;
};

struct Fixture {
  trajflow::TrajFlowModel model{testing::toy_model_config(), 7};
  trajflow::GeneratedScene g = trajflow::generate_scene(11, testing::toy_scene_config());
  trajflow::Rng rng{5};
  trajflow::TrajectoryTensor yt = trajflow::sample_noise(rng, 3, 2);
};

/// Compares the tape gradient of `objective` (taken with backward=true)
/// against central differences over `params`.
template <class F>
Outcome compare(const std::string& name, trajflow::ad::ParamStore& store, std::vector<trajflow::ad::Parameter*> params,
                F objective) {
  store.zero_grad();
  objective(true);
  const Eigen::VectorXd analytic = testing::flatten_grads(params);
  const Eigen::VectorXd fd = testing::fd_gradient(testing::values_of(params), [&] { return objective(false); });
  return {name, testing::rel_err(analytic, fd), testing::cosine(analytic, fd), static_cast<std::size_t>(fd.size())};
}

inline Outcome encoder() {
  using namespace trajflow;
  Fixture f;
  std::vector<ad::Parameter*> enc;
  for (auto* p : f.model.params().all()) {
    if (p->name.rfind("encoder.", 0) == 0) enc.push_back(p);
  }
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(8, f.model.config().encoder.embed_dim);
  return compare("encoder", f.model.params(), enc, [&](bool backward) {
    ad::Tape tape;
    const ContextTokens tok = f.model.encoder().encode(tape, f.model.encoder().tokenize(tape, f.g.scene.context));
    ad::Var loss = ad::sum(ad::mul(tok.tokens, tape.constant(w.topRows(tok.tokens.rows()))));
    if (backward) tape.backward(loss);
    return loss.scalar();
  });
}

inline Outcome decoder() {
  using namespace trajflow;
  Fixture f;
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 2 * kGmmParams + 2);
  return compare("decoder", f.model.params(), f.model.params().all(), [&](bool backward) {
    ad::Tape tape;
    const auto enc = f.model.encode(tape, f.g.scene.context);
    const DecoderVars out = f.model.denoise(tape, enc, f.yt.data, 0.37);
    ad::Var all = ad::concat_cols({out.traj_params, out.logits, out.rank_scores});
    ad::Var loss = ad::sum(ad::mul(all, tape.constant(w)));
    if (backward) tape.backward(loss);
    return loss.scalar();
  });
}

enum class Term { flow_gmm, flow_l2, cls, rank, total };

inline Outcome loss_term(Term term) {
  using namespace trajflow;
  static const char* names[] = {"flow loss (gmm)", "flow loss (l2)", "classification loss", "ranking loss",
                                "total loss"};
  Fixture f;
  const Eigen::RowVectorXd gt = flatten(f.g.scene.future) / 10.0;
  return compare(names[static_cast<int>(term)], f.model.params(), f.model.params().all(), [&](bool backward) {
    ad::Tape tape;
    const auto enc = f.model.encode(tape, f.g.scene.context);
    const DecoderVars out = f.model.denoise(tape, enc, f.yt.data, 0.6);
    LossConfig lc;
    lc.nms.k = 2;
    lc.mode = term == Term::flow_l2 ? RegressionMode::l2 : RegressionMode::gmm_nll;
    const LossTerms t = total_loss(out, gt, lc);
    ad::Var loss = term == Term::cls ? t.cls : term == Term::rank ? t.rank : term == Term::total ? t.total : t.flow;
    if (backward) tape.backward(loss);
    return loss.scalar();
  });
}

/// One full train_step with the optimizer disabled; the stored gradient must
/// match differences of the batch-mean l + l_s with every random draw
/// (noise, time, self-conditioning input) replayed.
inline Outcome train_step(double sc_probability, double* objective_gap = nullptr) {
  using namespace trajflow;
  TrainConfig cfg;
  cfg.model = testing::toy_model_config();
  cfg.nms.k = 2;
  cfg.batch_size = 3;
  cfg.peak_lr = 0.0;
  cfg.sc_probability = sc_probability;
  const auto records = testing::generated_records(3, testing::toy_scene_config(), 40);
  Normalizer norm;
  norm.scale = Eigen::Vector2d(5.0, 5.0);
  TrainState state = init_training(cfg, norm);
  std::vector<const SceneRecord*> batch;
  for (const auto& r : records) batch.push_back(&r);
  const StepResult step = trajflow::train_step(state, batch, 0.0);
  auto params = state.model->params().all();
  const Eigen::VectorXd analytic = testing::flatten_grads(params);
  Rng unused(0);
  auto objective = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      total += run_sample(*state.model, *batch[i], cfg, norm, unused, false, &step.draws[i]).objective;
    }
    return total / static_cast<double>(batch.size());
  };
  if (objective_gap) *objective_gap = std::abs(objective() - step.objective);
  const Eigen::VectorXd fd = testing::fd_gradient(testing::values_of(params), objective);
  return {"train_step (sc=" + std::to_string(sc_probability).substr(0, 3) + ")", testing::rel_err(analytic, fd),
          testing::cosine(analytic, fd), static_cast<std::size_t>(fd.size())};
}

}  // namespace gradcheck
