#include "hicome/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hicome::metrics {

namespace {

void check_shapes(const SaliencyMap& pred, const BinaryMask& gt, const char* who) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument(std::string(who) + ": pred/gt shape mismatch");
}

double threshold_at(int k) { return static_cast<double>(k) / 255.0; }

// den == 0 never divides; perfect scores stay exact.
double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Per-threshold confusion counts for the sweep predicate pred >= k/255.
// bucket(v) = largest k with k/255 <= v, computed with the same comparison
// the predicate uses, so cumulative counts match a direct evaluation bit for
// bit.
struct SweepCounts {
  std::array<double, kThresholds> tp{}, fp{};
  double n_pos = 0.0, n_neg = 0.0;
};

int bucket_of(float v) {
  int lo = 0, hi = kThresholds - 1, ans = -1;
  while (lo <= hi) {
    const int mid = (lo + hi) / 2;
    if (static_cast<double>(v) >= threshold_at(mid)) {
      ans = mid;
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  return ans;  // -1 when v < 0 (not expected for saliency maps)
}

SweepCounts sweep_counts(const SaliencyMap& pred, const BinaryMask& gt) {
  SweepCounts sc;
  std::array<double, kThresholds> pos_hist{}, neg_hist{};
  const size_t n = pred.v.size();
  for (size_t i = 0; i < n; ++i) {
    const int b = bucket_of(pred.v[i]);
    if (gt.v[i]) {
      sc.n_pos += 1.0;
      if (b >= 0) pos_hist[static_cast<size_t>(b)] += 1.0;
    } else {
      sc.n_neg += 1.0;
      if (b >= 0) neg_hist[static_cast<size_t>(b)] += 1.0;
    }
  }
  // pixel with bucket b is predicted positive for thresholds k <= b
  double cp = 0.0, cn = 0.0;
  for (int k = kThresholds - 1; k >= 0; --k) {
    cp += pos_hist[static_cast<size_t>(k)];
    cn += neg_hist[static_cast<size_t>(k)];
    sc.tp[static_cast<size_t>(k)] = cp;
    sc.fp[static_cast<size_t>(k)] = cn;
  }
  return sc;
}

}  // namespace

double mae(const SaliencyMap& pred, const BinaryMask& gt) {
  check_shapes(pred, gt, "mae");
  double acc = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i)
    acc += std::fabs(static_cast<double>(pred.v[i]) - static_cast<double>(gt.v[i]));
  return acc / static_cast<double>(pred.v.size());
}

FMeasureResult f_measure(const SaliencyMap& pred, const BinaryMask& gt) {
  check_shapes(pred, gt, "f_measure");
  constexpr double beta2 = 0.3;
  FMeasureResult r;
  const SweepCounts sc = sweep_counts(pred, gt);
  if (sc.n_pos == 0.0) {
    r.empty_gt = true;
    return r;
  }
  double acc = 0.0;
  for (int k = 0; k < kThresholds; ++k) {
    const double tp = sc.tp[static_cast<size_t>(k)];
    const double fp = sc.fp[static_cast<size_t>(k)];
    const double prec = safe_div(tp, tp + fp);
    const double rec = safe_div(tp, sc.n_pos);
    const double f = safe_div((1.0 + beta2) * prec * rec, beta2 * prec + rec);
    r.precision[static_cast<size_t>(k)] = prec;
    r.recall[static_cast<size_t>(k)] = rec;
    r.f[static_cast<size_t>(k)] = f;
    r.f_max = std::max(r.f_max, f);
    acc += f;
  }
  r.f_mean = acc / kThresholds;
  return r;
}

EMeasureResult e_measure(const SaliencyMap& pred, const BinaryMask& gt) {
  check_shapes(pred, gt, "e_measure");
  EMeasureResult r;
  const double n = static_cast<double>(pred.v.size());
  const SweepCounts sc = sweep_counts(pred, gt);
  const bool gt_all_zero = sc.n_pos == 0.0;
  const bool gt_all_one = sc.n_neg == 0.0;

  double acc = 0.0;
  for (int k = 0; k < kThresholds; ++k) {
    const double tp = sc.tp[static_cast<size_t>(k)];
    const double fp = sc.fp[static_cast<size_t>(k)];
    const double n_b = tp + fp;  // predicted-positive count
    double e;
    if (gt_all_zero) {
      e = (n - n_b) / n;  // phi = 1 - B
    } else if (gt_all_one) {
      e = n_b / n;  // phi = B
    } else {
      // phi depends only on the (B, G) cell; evaluate the alignment formula
      // on the four centered value pairs and weight by cell counts.
      const double mu_b = n_b / n;
      const double mu_g = sc.n_pos / n;
      const double fn = sc.n_pos - tp;
      const double tn = sc.n_neg - fp;
      auto phi = [&](double bval, double gval) {
        const double db = bval - mu_b;
        const double dg = gval - mu_g;
        const double den = dg * dg + db * db;  // > 0: G is mixed so dg != 0
        const double xi = 2.0 * dg * db / den;
        const double t = xi + 1.0;
        return t * t / 4.0;
      };
      e = (tp * phi(1, 1) + fp * phi(1, 0) + fn * phi(0, 1) + tn * phi(0, 0)) / n;
    }
    r.e[static_cast<size_t>(k)] = e;
    r.e_max = std::max(r.e_max, e);
    acc += e;
  }
  r.e_mean = acc / kThresholds;
  return r;
}

namespace {

struct RegionMoments {
  double mean_x = 0.0, mean_y = 0.0, var_x = 0.0, var_y = 0.0, cov = 0.0;
  double n = 0.0;
};

// SSIM-style regional similarity (population moments). alpha != 0 implies
// beta != 0, so division is safe and a perfect region scores exactly 1.
double region_ssim(const RegionMoments& m) {
  if (m.n == 0.0) return 0.0;
  const double alpha = 4.0 * m.mean_x * m.mean_y * m.cov;
  const double beta = (m.mean_x * m.mean_x + m.mean_y * m.mean_y) * (m.var_x + m.var_y);
  if (alpha != 0.0) return alpha / beta;
  return beta == 0.0 ? 1.0 : 0.0;
}

RegionMoments moments(const SaliencyMap& pred, const BinaryMask& gt, int y0, int y1, int x0,
                      int x1) {
  RegionMoments m;
  m.n = static_cast<double>(std::max(0, y1 - y0)) * std::max(0, x1 - x0);
  if (m.n == 0.0) return m;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      m.mean_x += pred.at(y, x);
      m.mean_y += gt.at(y, x);
    }
  m.mean_x /= m.n;
  m.mean_y /= m.n;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double dx = pred.at(y, x) - m.mean_x;
      const double dy = gt.at(y, x) - m.mean_y;
      m.var_x += dx * dx;
      m.var_y += dy * dy;
      m.cov += dx * dy;
    }
  m.var_x /= m.n;
  m.var_y /= m.n;
  m.cov /= m.n;
  return m;
}

double object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / static_cast<double>(vals.size()));
  return 2.0 * mean / (mean * mean + 1.0 + sigma);
}

}  // namespace

double s_measure(const SaliencyMap& pred, const BinaryMask& gt) {
  check_shapes(pred, gt, "s_measure");
  const double n = static_cast<double>(pred.v.size());
  const double fg = static_cast<double>(gt.foreground_count());

  double mean_pred = 0.0;
  for (float v : pred.v) mean_pred += v;
  mean_pred /= n;

  if (fg == 0.0) return std::clamp(1.0 - mean_pred, 0.0, 1.0);
  if (fg == n) return std::clamp(mean_pred, 0.0, 1.0);

  // object term
  std::vector<double> fg_vals, bg_vals;
  fg_vals.reserve(static_cast<size_t>(fg));
  bg_vals.reserve(static_cast<size_t>(n - fg));
  for (size_t i = 0; i < pred.v.size(); ++i) {
    if (gt.v[i])
      fg_vals.push_back(pred.v[i]);
    else
      bg_vals.push_back(1.0 - pred.v[i]);
  }
  const double mu = fg / n;
  const double s_o = mu * object_score(fg_vals) + (1.0 - mu) * object_score(bg_vals);

  // region term: split at the foreground centroid
  double cy = 0.0, cx = 0.0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x)
      if (gt.at(y, x)) {
        cy += y;
        cx += x;
      }
  const int icy = std::clamp(static_cast<int>(std::lround(cy / fg)), 0, gt.h - 1);
  const int icx = std::clamp(static_cast<int>(std::lround(cx / fg)), 0, gt.w - 1);

  const int ys[3] = {0, icy + 1, gt.h};
  const int xs[3] = {0, icx + 1, gt.w};
  double weighted = 0.0;
  for (int qy = 0; qy < 2; ++qy)
    for (int qx = 0; qx < 2; ++qx) {
      const RegionMoments m = moments(pred, gt, ys[qy], ys[qy + 1], xs[qx], xs[qx + 1]);
      weighted += m.n * region_ssim(m);
    }
  const double s_r = weighted / n;

  return std::clamp(0.5 * s_o + 0.5 * s_r, 0.0, 1.0);
}

// -------------------------------------------------------------------- report

namespace {

struct ImageEval {
  Scores scores;
  bool empty_gt = false;
  CurveReport curve;
};

ImageEval score_pair(const SaliencyMap& pred_native, const BinaryMask& gt, bool with_curves) {
  const SaliencyMap pred = resize_map(pred_native, gt.h, gt.w);
  ImageEval ev;
  const auto f = f_measure(pred, gt);
  const auto e = e_measure(pred, gt);
  ev.scores.smeasure = s_measure(pred, gt);
  ev.scores.emax = e.e_max;
  ev.scores.emean = e.e_mean;
  ev.scores.fmax = f.f_max;
  ev.scores.fmean = f.f_mean;
  ev.scores.mae = mae(pred, gt);
  ev.empty_gt = f.empty_gt;
  if (with_curves) {
    ev.curve.precision = f.precision;
    ev.curve.recall = f.recall;
    ev.curve.e = e.e;
  }
  return ev;
}

void add_scores(Scores& acc, const Scores& s) {
  acc.smeasure += s.smeasure;
  acc.emax += s.emax;
  acc.emean += s.emean;
  acc.fmax += s.fmax;
  acc.fmean += s.fmean;
  acc.mae += s.mae;
}

void div_scores(Scores& acc, double n) {
  acc.smeasure /= n;
  acc.emax /= n;
  acc.emean /= n;
  acc.fmax /= n;
  acc.fmean /= n;
  acc.mae /= n;
}

nlohmann::ordered_json scores_json(const GroupReport& g) {
  nlohmann::ordered_json j;
  j["Smeasure"] = g.scores.smeasure;
  j["Emax"] = g.scores.emax;
  j["Emean"] = g.scores.emean;
  j["Fmax"] = g.scores.fmax;
  j["Fmean"] = g.scores.fmean;
  j["MAE"] = g.scores.mae;
  j["n_images"] = g.n_images;
  if (g.n_empty_gt > 0) j["n_empty_gt"] = g.n_empty_gt;
  return j;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["aggregate"] = scores_json(aggregate);
  nlohmann::ordered_json pg;
  for (const auto& [name, rep] : per_group) pg[name] = scores_json(rep);
  j["per_group"] = pg;
  if (curves) {
    j["curves"]["precision"] = curves->precision;
    j["curves"]["recall"] = curves->recall;
    j["curves"]["e"] = curves->e;
  }
  return j.dump(2);
}

MetricReport evaluate_dataset(const std::map<std::string, SaliencyMap>& preds,
                              const data::GroupedDataset& ds, bool parallel, bool with_curves) {
  struct Job {
    const SaliencyMap* pred;
    const BinaryMask* gt;
    std::string group;
  };
  std::vector<Job> jobs;
  std::vector<std::string> missing;
  for (const auto& g : ds.groups)
    for (const auto& s : g.samples) {
      const std::string key = g.name + "/" + s.stem;
      auto it = preds.find(key);
      if (it == preds.end()) {
        missing.push_back(key);
        continue;
      }
      jobs.push_back({&it->second, &s.mask, g.name});
    }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "evaluate_dataset: missing predictions for " << missing.size() << " images:";
    for (const auto& m : missing) os << " " << m;
    throw std::runtime_error(os.str());
  }

  std::vector<ImageEval> evals(jobs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int64_t i = 0; i < static_cast<int64_t>(jobs.size()); ++i)
    evals[static_cast<size_t>(i)] =
        score_pair(*jobs[static_cast<size_t>(i)].pred, *jobs[static_cast<size_t>(i)].gt, with_curves);

  MetricReport report;
  if (with_curves) report.curves = CurveReport{};
  for (size_t i = 0; i < jobs.size(); ++i) {
    auto& grp = report.per_group[jobs[i].group];
    add_scores(grp.scores, evals[i].scores);
    grp.n_images += 1;
    grp.n_empty_gt += evals[i].empty_gt ? 1 : 0;
    add_scores(report.aggregate.scores, evals[i].scores);
    report.aggregate.n_images += 1;
    report.aggregate.n_empty_gt += evals[i].empty_gt ? 1 : 0;
    if (with_curves)
      for (int k = 0; k < kThresholds; ++k) {
        report.curves->precision[static_cast<size_t>(k)] += evals[i].curve.precision[static_cast<size_t>(k)];
        report.curves->recall[static_cast<size_t>(k)] += evals[i].curve.recall[static_cast<size_t>(k)];
        report.curves->e[static_cast<size_t>(k)] += evals[i].curve.e[static_cast<size_t>(k)];
      }
  }
  for (auto& [name, grp] : report.per_group) div_scores(grp.scores, static_cast<double>(grp.n_images));
  if (report.aggregate.n_images > 0) {
    div_scores(report.aggregate.scores, static_cast<double>(report.aggregate.n_images));
    if (with_curves)
      for (int k = 0; k < kThresholds; ++k) {
        report.curves->precision[static_cast<size_t>(k)] /= static_cast<double>(report.aggregate.n_images);
        report.curves->recall[static_cast<size_t>(k)] /= static_cast<double>(report.aggregate.n_images);
        report.curves->e[static_cast<size_t>(k)] /= static_cast<double>(report.aggregate.n_images);
      }
  }
  return report;
}

}  // namespace hicome::metrics
