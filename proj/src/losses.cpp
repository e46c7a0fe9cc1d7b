#include "hicome/losses.hpp"

#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hicome::loss {

namespace {
constexpr float kEps = 1e-7f;

ag::Var flatten_per_image(const ag::Var& x) {
  const auto& s = x.value().shape();
  if (s.empty()) throw std::invalid_argument("loss: scalar input");
  const int64_t n = s[0];
  return x.reshape({n, x.value().numel() / n});
}

ag::Var vector_distance(const ag::Var& a, const ag::Var& b) {
  ag::Var d = ag::sub(a, b);
  // tiny floor keeps the sqrt differentiable at coincident points
  return ag::sqrt_op(ag::add_scalar(ag::sum_all(ag::mul(d, d)), 1e-12f));
}
}  // namespace

void LossConfig::validate() const {
  if (lambda_bce < 0 || lambda_iou < 0 || lambda_iaccl < 0)
    throw std::invalid_argument("loss weights must be >= 0");
  if (triplet_margin < 0) throw std::invalid_argument("triplet margin must be >= 0");
}

ag::Var bce_loss(const ag::Var& pred, const ag::Var& gt) {
  check_same_shape(pred.value(), gt.value(), "bce_loss");
  ag::Var p = ag::clamp(pred, kEps, 1.0f - kEps);
  ag::Var one_minus_p = ag::add_scalar(ag::scale(p, -1.0f), 1.0f);
  ag::Var one_minus_y = ag::add_scalar(ag::scale(gt, -1.0f), 1.0f);
  ag::Var term = ag::add(ag::mul(gt, ag::log_op(p)), ag::mul(one_minus_y, ag::log_op(one_minus_p)));
  return ag::scale(ag::mean_all(term), -1.0f);
}

ag::Var iou_loss(const ag::Var& pred, const ag::Var& gt) {
  check_same_shape(pred.value(), gt.value(), "iou_loss");
  ag::Var p = flatten_per_image(pred);
  ag::Var y = flatten_per_image(gt);
  ag::Var inter = ag::row_sum(ag::mul(p, y));
  ag::Var uni = ag::sub(ag::add(ag::row_sum(p), ag::row_sum(y)), inter);
  ag::Var ratio = ag::div(inter, ag::add_scalar(uni, kEps));
  return ag::add_scalar(ag::scale(ag::mean_all(ratio), -1.0f), 1.0f);
}

ag::Var triplet_loss(const ag::Var& anchor, const ag::Var& positive, const ag::Var& negative,
                     float margin) {
  ag::Var dp = vector_distance(anchor, positive);
  ag::Var dn = vector_distance(anchor, negative);
  return ag::relu(ag::add_scalar(ag::sub(dp, dn), margin));
}

ag::Var iaccl_loss(const ag::Var& f1_0, const ag::Var& f1_1, const ag::Var& f2_0,
                   const ag::Var& f2_1, float margin) {
  // each triple is (negative, anchor, positive)
  ag::Var t1 = triplet_loss(f2_0, f2_1, f1_1, margin);
  ag::Var t2 = triplet_loss(f1_0, f1_1, f2_0, margin);
  return ag::add(t1, t2);
}

double weighted_total(const LossConfig& cfg, double bce, double iou, double iaccl) {
  return static_cast<double>(cfg.lambda_bce) * bce + static_cast<double>(cfg.lambda_iou) * iou +
         static_cast<double>(cfg.lambda_iaccl) * iaccl;
}

std::string LossBreakdown::to_json_line(int64_t step, int64_t epoch, double lr) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["bce"] = bce;
  j["iou"] = iou;
  if (iaccl)
    j["iaccl"] = *iaccl;
  else
    j["iaccl"] = nullptr;
  j["total"] = total;
  return j.dump();
}

ag::Var total_loss(const ag::Var& pred_a, const ag::Var& gt_a, const ag::Var& pred_b,
                   const ag::Var& gt_b, const std::optional<GroupHalfEmbeddings>& embeddings,
                   const LossConfig& cfg, LossBreakdown* breakdown) {
  cfg.validate();
  ag::Var bce = ag::scale(ag::add(bce_loss(pred_a, gt_a), bce_loss(pred_b, gt_b)), 0.5f);
  ag::Var iou = ag::scale(ag::add(iou_loss(pred_a, gt_a), iou_loss(pred_b, gt_b)), 0.5f);

  ag::Var total = ag::add(ag::scale(bce, cfg.lambda_bce), ag::scale(iou, cfg.lambda_iou));
  std::optional<double> iaccl_val;
  if (embeddings) {
    ag::Var iaccl = iaccl_loss(embeddings->f1_0, embeddings->f1_1, embeddings->f2_0,
                               embeddings->f2_1, cfg.triplet_margin);
    total = ag::add(total, ag::scale(iaccl, cfg.lambda_iaccl));
    iaccl_val = iaccl.scalar();
  }
  if (breakdown) {
    breakdown->bce = bce.scalar();
    breakdown->iou = iou.scalar();
    breakdown->iaccl = iaccl_val;
    breakdown->total = total.scalar();
  }
  return total;
}

}  // namespace hicome::loss
