#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/metrics.hpp"

namespace lfdtn {

struct EvalRow {
  int t = 0;
  Metrics m;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // one per predicted frame
  Metrics mean;
};

/// Scores frames t >= seed_count. Both sequences include the seed frames.
inline EvalReport evaluate_run(const std::vector<Image>& pred, const std::vector<Image>& gt, int seed_count) {
  if (pred.size() != gt.size())
    throw ValidationError("evaluate_run: prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                          std::to_string(gt.size()));
  if (seed_count < 0 || static_cast<std::size_t>(seed_count) > gt.size())
    throw ValidationError("evaluate_run: seed_count out of range");
  EvalReport r;
  r.mean.psnr = 0.0;
  for (std::size_t t = seed_count; t < gt.size(); ++t) {
    EvalRow row{static_cast<int>(t), compute_metrics(pred[t], gt[t])};
    r.mean.l1 += row.m.l1;
    r.mean.mse += row.m.mse;
    r.mean.dssim += row.m.dssim;
    r.mean.bce += row.m.bce;
    r.mean.psnr += row.m.psnr;
    r.rows.push_back(row);
  }
  if (!r.rows.empty()) {
    const double n = static_cast<double>(r.rows.size());
    r.mean.l1 /= n;
    r.mean.mse /= n;
    r.mean.dssim /= n;
    r.mean.bce /= n;
    r.mean.psnr /= n;
  }
  return r;
}

/// Header, one line per predicted frame, then a `mean` line.
inline std::string metrics_csv(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(9) << "t,l1,mse,dssim,bce,psnr\n";
  auto line = [&os](const std::string& t, const Metrics& m) {
    os << t << ',' << m.l1 << ',' << m.mse << ',' << m.dssim << ',' << m.bce << ',' << m.psnr << '\n';
  };
  for (const auto& row : r.rows) line(std::to_string(row.t), row.m);
  line("mean", r.mean);
  return os.str();
}

}  // namespace lfdtn
