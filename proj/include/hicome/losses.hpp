#pragma once

#include <optional>
#include <string>

#include "hicome/autograd.hpp"

namespace hicome::loss {

struct LossConfig {
  float lambda_bce = 30.0f;
  float lambda_iou = 0.5f;
  float lambda_iaccl = 3.0f;
  float triplet_margin = 0.3f;

  void validate() const;
};

// Mean over batch and pixels of -[y log p + (1-y) log(1-p)], p clamped to
// [eps, 1-eps] with eps = 1e-7.
ag::Var bce_loss(const ag::Var& pred, const ag::Var& gt);

// 1 - mean over images of soft IoU; pred/gt are [N, H, W, 1] (or any [N, ...]).
ag::Var iou_loss(const ag::Var& pred, const ag::Var& gt);

// max(0, |a-p| - |a-n| + margin) on embedding vectors.
ag::Var triplet_loss(const ag::Var& anchor, const ag::Var& positive, const ag::Var& negative,
                     float margin);

// L_Tri(f1_1, f2_0, f2_1) + L_Tri(f2_0, f1_0, f1_1), each triple read as
// (negative, anchor, positive).
ag::Var iaccl_loss(const ag::Var& f1_0, const ag::Var& f1_1, const ag::Var& f2_0,
                   const ag::Var& f2_1, float margin);

struct GroupHalfEmbeddings {
  ag::Var f1_0, f1_1, f2_0, f2_1;
};

struct LossBreakdown {
  double bce = 0.0;
  double iou = 0.0;
  std::optional<double> iaccl;  // absent when embeddings were not provided
  double total = 0.0;

  std::string to_json_line(int64_t step, int64_t epoch, double lr) const;
};

// lambda_bce * c1 + lambda_iou * c2 + lambda_iaccl * c3 (unit components
// give 33.5 under the defaults).
double weighted_total(const LossConfig& cfg, double bce, double iou, double iaccl);

// Saliency losses averaged over both groups; the IACCL term is dropped when
// embeddings are absent.
ag::Var total_loss(const ag::Var& pred_a, const ag::Var& gt_a, const ag::Var& pred_b,
                   const ag::Var& gt_b, const std::optional<GroupHalfEmbeddings>& embeddings,
                   const LossConfig& cfg, LossBreakdown* breakdown = nullptr);

}  // namespace hicome::loss
