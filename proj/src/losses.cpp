#include "trajflow/losses.hpp"

#include <cmath>
#include <numbers>

#include "trajflow/errors.hpp"

namespace trajflow {

using ad::Mat;
using ad::Var;

RegressionMode regression_mode_from_string(const std::string& s) {
  if (s == "l2") return RegressionMode::l2;
  if (s == "gmm_nll") return RegressionMode::gmm_nll;
  throw ConfigError("unknown regression mode: " + s);
}

std::string to_string(RegressionMode m) { return m == RegressionMode::l2 ? "l2" : "gmm_nll"; }

int select_best(const Eigen::MatrixXd& traj_mean, const Eigen::VectorXd& logits, const Eigen::RowVectorXd& gt,
                const NmsConfig& nms, const Normalizer& norm) {
  const auto nq = static_cast<int>(traj_mean.rows());
  if (nq < 1) throw DimensionError("select_best: no proposals");
  if (traj_mean.cols() != gt.cols()) throw DimensionError("select_best: trajectory width mismatch");
  NmsConfig cfg = nms;
  cfg.k = std::min(cfg.k, nq);
  std::vector<char> padded;
  const std::vector<int> kept = nms_indices(norm.denormalize_flat(traj_mean), logits, cfg, &padded);
  int best = -1;
  double best_d = 0.0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (padded[i]) continue;
    const int k = kept[i];
    const double d = (traj_mean.row(k) - gt).squaredNorm();
    if (best < 0 || d < best_d || (d == best_d && k < best)) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

namespace {

struct WaypointNll {
  double value;
  double d_mx, d_my, d_lsx, d_lsy, d_rho;
};

WaypointNll waypoint_nll(double mx, double my, double lsx, double lsy, double rho, double gx, double gy) {
  const double zx = (gx - mx) * std::exp(-lsx);
  const double zy = (gy - my) * std::exp(-lsy);
  const double om = 1.0 - rho * rho;
  const double q = zx * zx + zy * zy - 2.0 * rho * zx * zy;
  WaypointNll w;
  w.value = std::log(2.0 * std::numbers::pi) + lsx + lsy + 0.5 * std::log(om) + q / (2.0 * om);
  const double ax = (zx - rho * zy) / om;
  const double ay = (zy - rho * zx) / om;
  w.d_mx = -ax * std::exp(-lsx);
  w.d_my = -ay * std::exp(-lsy);
  w.d_lsx = 1.0 - zx * ax;
  w.d_lsy = 1.0 - zy * ay;
  w.d_rho = -rho / om - zx * zy / om + rho * q / (om * om);
  return w;
}

void check_index(int best, Eigen::Index n) {
  if (best < 0 || best >= n) throw DimensionError("loss: best index out of range");
}

}  // namespace

double gmm_nll(const Eigen::RowVectorXd& params, const Eigen::RowVectorXd& gt) {
  const Eigen::Index steps = gt.cols() / 2;
  if (params.cols() != steps * kGmmParams) throw DimensionError("gmm_nll: parameter width mismatch");
  if (!params.allFinite()) throw NumericError("gmm_nll: nonfinite distribution parameters");
  double total = 0.0;
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index o = s * kGmmParams;
    total += waypoint_nll(params(o), params(o + 1), params(o + 2), params(o + 3), params(o + 4), gt(2 * s),
                          gt(2 * s + 1))
                 .value;
  }
  return total;
}

Var flow_regression_loss(const DecoderVars& out, const Eigen::RowVectorXd& gt, int best, RegressionMode mode) {
  Var mean = out.traj_mean;
  check_index(best, mean.rows());
  if (mean.cols() != gt.cols()) throw DimensionError("flow loss: trajectory width mismatch");
  if (mode == RegressionMode::l2) {
    Var row = ad::slice_rows(mean, best, 1);
    const Mat diff = row.value() - Mat(gt);
    if (!diff.allFinite()) throw NumericError("flow loss: nonfinite trajectory");
    const double n = static_cast<double>(diff.size());
    ad::Tape& tape = *row.tape;
    return tape.record(Mat::Constant(1, 1, diff.squaredNorm() / n), {row},
                       [&tape, id = row.id, diff, n](const Mat& g) { tape.accumulate(id, diff * (2.0 * g(0, 0) / n)); });
  }
  Var row = ad::slice_rows(out.traj_params, best, 1);
  const Eigen::RowVectorXd p = row.value();
  if (!p.allFinite()) throw NumericError("flow loss: nonfinite distribution parameters");
  const Eigen::Index steps = gt.cols() / 2;
  if (p.cols() != steps * kGmmParams) throw DimensionError("flow loss: parameter width mismatch");
  Mat grad(1, p.cols());
  double total = 0.0;
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index o = s * kGmmParams;
    const WaypointNll w = waypoint_nll(p(o), p(o + 1), p(o + 2), p(o + 3), p(o + 4), gt(2 * s), gt(2 * s + 1));
    total += w.value;
    grad(0, o) = w.d_mx;
    grad(0, o + 1) = w.d_my;
    grad(0, o + 2) = w.d_lsx;
    grad(0, o + 3) = w.d_lsy;
    grad(0, o + 4) = w.d_rho;
  }
  if (!std::isfinite(total)) throw NumericError("flow loss: nonfinite NLL");
  ad::Tape& tape = *row.tape;
  return tape.record(Mat::Constant(1, 1, total), {row},
                     [&tape, id = row.id, grad](const Mat& g) { tape.accumulate(id, grad * g(0, 0)); });
}

Var classification_loss(Var logits, int best) {
  const Mat& s = logits.value();
  check_index(best, s.rows());
  if (!s.allFinite()) throw NumericError("classification loss: nonfinite logits");
  const double n = static_cast<double>(s.rows());
  double total = 0.0;
  Mat grad(s.rows(), s.cols());
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    const double x = s(k, 0);
    const double y = k == best ? 1.0 : 0.0;
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    grad(k, 0) = (sigmoid(x) - y) / n;
  }
  ad::Tape& tape = *logits.tape;
  return tape.record(Mat::Constant(1, 1, total / n), {logits},
                     [&tape, id = logits.id, grad](const Mat& g) { tape.accumulate(id, grad * g(0, 0)); });
}

Var ranking_loss(Var scores, const Ranking& order) {
  const PlLoss pl = pl_nll_loss(scores.value().col(0), order);
  ad::Tape& tape = *scores.tape;
  return tape.record(Mat::Constant(1, 1, pl.value), {scores},
                     [&tape, id = scores.id, grad = Mat(pl.grad)](const Mat& g) { tape.accumulate(id, grad * g(0, 0)); });
}

LossBreakdown LossTerms::values() const {
  LossBreakdown b;
  b.l_flow = flow.scalar();
  b.l_cls = cls.scalar();
  b.l_rank = rank.scalar();
  b.total = total.scalar();
  b.best_index = best_index;
  return b;
}

LossTerms total_loss(const DecoderVars& out, const Eigen::RowVectorXd& gt, const LossConfig& cfg,
                     const Normalizer& norm) {
  const Mat& mean = out.traj_mean.value();
  LossTerms t;
  t.best_index = select_best(mean, out.logits.value().col(0), gt, cfg.nms, norm);
  t.flow = flow_regression_loss(out, gt, t.best_index, cfg.mode);
  t.cls = classification_loss(out.logits, t.best_index);
  t.rank = ranking_loss(cfg.rank_on_logits ? out.logits : out.rank_scores, ground_truth_ranking(mean, gt));
  t.total = ad::add(ad::add(t.flow, t.cls), ad::scale(t.rank, cfg.rank_weight));
  if (!std::isfinite(t.total.scalar())) throw NumericError("total loss is not finite");
  return t;
}

namespace {

DecoderVars constant_vars(ad::Tape& tape, const DecoderOutput& out) {
  DecoderVars v;
  v.traj_params = tape.constant(out.traj_params);
  v.traj_mean = tape.constant(out.traj_mean);
  v.logits = tape.constant(Mat(out.logits));
  v.rank_scores = tape.constant(Mat(out.rank_scores));
  return v;
}

}  // namespace

double flow_regression_loss(const DecoderOutput& out, const Eigen::RowVectorXd& gt, int best, RegressionMode mode) {
  ad::Tape tape;
  return flow_regression_loss(constant_vars(tape, out), gt, best, mode).scalar();
}

double classification_loss(const Eigen::VectorXd& logits, int best) {
  ad::Tape tape;
  return classification_loss(tape.constant(Mat(logits)), best).scalar();
}

LossBreakdown total_loss(const DecoderOutput& out, const Eigen::RowVectorXd& gt, const LossConfig& cfg,
                         const Normalizer& norm) {
  ad::Tape tape;
  return total_loss(constant_vars(tape, out), gt, cfg, norm).values();
}

}  // namespace trajflow
