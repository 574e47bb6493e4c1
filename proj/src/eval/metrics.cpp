#include "cgid/eval/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cgid/errors.hpp"

namespace cgid {

AccuracyMatrix::AccuracyMatrix(std::vector<std::size_t> class_sizes) : sizes_(std::move(class_sizes)) {}

void AccuracyMatrix::push_row(std::vector<double> row) {
  if (rows_.size() >= sizes_.size()) throw ContractError("AccuracyMatrix: all stages already filled");
  if (row.size() != rows_.size() + 1) throw ContractError("AccuracyMatrix: row t must have t+1 entries");
  for (double v : row) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("AccuracyMatrix: accuracy outside [0, 1]");
  }
  rows_.push_back(std::move(row));
}

const std::vector<double>& AccuracyMatrix::row(std::size_t t) const {
  if (t >= rows_.size()) throw ContractError("AccuracyMatrix: stage " + std::to_string(t) + " not evaluated");
  return rows_[t];
}

double AccuracyMatrix::at(std::size_t t, std::size_t i) const {
  const auto& r = row(t);
  if (i >= r.size()) throw ContractError("AccuracyMatrix: a[t][i] needs i <= t");
  return r[i];
}

std::size_t AccuracyMatrix::class_total(std::size_t first, std::size_t last) const {
  std::size_t n = 0;
  for (std::size_t i = first; i <= last && i < sizes_.size(); ++i) n += sizes_[i];
  return n;
}

namespace {

void require_ood_stage(std::size_t t) {
  if (t == 0) throw ContractError("OOD metrics are undefined at the IND stage");
}

double weighted(const AccuracyMatrix& a, std::size_t first, std::size_t last, auto&& value) {
  const std::size_t total = a.class_total(first, last);
  if (total == 0) throw MetricError("class sets are empty");
  double s = 0.0;
  for (std::size_t i = first; i <= last; ++i) s += static_cast<double>(a.class_sizes()[i]) * value(i);
  return s / static_cast<double>(total);
}

}  // namespace

double ind_accuracy(const AccuracyMatrix& a, std::size_t t) { return a.at(t, 0); }

double all_accuracy(const AccuracyMatrix& a, std::size_t t) {
  return weighted(a, 0, t, [&](std::size_t i) { return a.at(t, i); });
}

CgidAccuracy cgid_accuracy(const AccuracyMatrix& a, std::size_t t) {
  require_ood_stage(t);
  return {a.at(t, 0), weighted(a, 1, t, [&](std::size_t i) { return a.at(t, i); }), all_accuracy(a, t)};
}

CgidForgetting cgid_forgetting(const AccuracyMatrix& a, std::size_t t) {
  require_ood_stage(t);
  const auto drop = [&](std::size_t i) { return a.at(i, i) - a.at(t, i); };
  return {drop(0), weighted(a, 1, t, drop), weighted(a, 0, t, drop)};
}

LossGain loss_gain(const AccuracyMatrix& a, std::size_t t) {
  const double base = a.at(0, 0);
  if (base == 0.0) throw MetricError("Loss/Gain undefined: IND accuracy after the IND stage is 0");
  const double f_ind = a.at(0, 0) - a.at(t, 0);
  const double y0 = static_cast<double>(a.class_sizes().at(0));
  const double y_all = static_cast<double>(a.class_total(0, t));
  // Adding 0.0 turns a negative zero into zero.
  return {-f_ind / base + 0.0, y_all * all_accuracy(a, t) / (y0 * base) - 1.0};
}

double compactness(const DenseMatrix& features, std::span<const Label> labels, std::span<const Label> classes) {
  if (labels.size() != features.rows()) throw ShapeError("compactness: one label per row");
  std::map<Label, std::vector<std::size_t>> members;
  for (Label c : classes) members[c];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = members.find(labels[i]);
    if (it != members.end()) it->second.push_back(i);
  }
  double intra_sum = 0.0;
  std::size_t intra_pairs = 0;
  std::vector<std::vector<double>> centroids;
  for (const auto& [c, rows] : members) {
    if (rows.empty()) continue;
    if (rows.size() < 2) throw ContractError("compactness: class " + std::to_string(c) + " has a single sample");
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        intra_sum += std::sqrt(squared_distance(features.row(rows[a]), features.row(rows[b])));
        ++intra_pairs;
      }
    std::vector<double> mean(features.cols(), 0.0);
    for (std::size_t r : rows)
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += features(r, d);
    for (double& v : mean) v /= static_cast<double>(rows.size());
    centroids.push_back(std::move(mean));
  }
  if (centroids.size() < 2) return 0.0;
  double inter_sum = 0.0;
  std::size_t inter_pairs = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      inter_sum += std::sqrt(squared_distance(centroids[a], centroids[b]));
      ++inter_pairs;
    }
  const double inter = inter_sum / static_cast<double>(inter_pairs);
  const double intra = intra_sum / static_cast<double>(intra_pairs);
  if (intra == 0.0) {
    if (inter == 0.0) return 0.0;
    return std::numeric_limits<double>::infinity();
  }
  return inter / intra;
}

}  // namespace cgid
