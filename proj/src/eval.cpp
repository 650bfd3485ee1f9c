#include "regmap/eval.hpp"

#include "regmap/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace regmap {
namespace {

void check_lengths(std::span<const double> y, std::span<const double> y_hat, const char* what) {
  if (y.size() != y_hat.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (y.empty()) throw std::invalid_argument(std::string(what) + ": no samples");
}

AbsErrorStat abs_stat(const std::vector<double>& e) {
  AbsErrorStat s;
  s.n = e.size();
  if (e.empty()) return s;
  for (double v : e) s.mean += v;
  s.mean /= static_cast<double>(e.size());
  if (e.size() > 1) {
    double ss = 0.0;
    for (double v : e) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(e.size() - 1));
  }
  return s;
}

template <typename Get>
std::optional<double> mean_present(std::span<const FoldResult> folds, Get get) {
  double sum = 0.0;
  int n = 0;
  for (const auto& f : folds)
    if (const std::optional<double> v = get(f)) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

MaeReport mae(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, "mae");
  std::vector<double> all;
  std::array<std::vector<double>, 3> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = std::abs(y_hat[i] - y[i]);
    all.push_back(e);
    by_class[static_cast<int>(classify(y[i]))].push_back(e);
  }
  MaeReport r;
  r.overall = abs_stat(all);
  for (int c = 0; c < 3; ++c)
    if (!by_class[c].empty()) r.per_class[c] = abs_stat(by_class[c]);
  return r;
}

ClassMetrics classify_metrics(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, "classify_metrics");
  ClassMetrics m;
  for (std::size_t i = 0; i < y.size(); ++i)
    m.confusion(static_cast<int>(classify(y[i])), static_cast<int>(classify(y_hat[i]))) += 1;
  m.accuracy = static_cast<double>(m.confusion.trace()) / static_cast<double>(y.size());
  for (int c = 0; c < 3; ++c) {
    const int tp = m.confusion(c, c);
    const int truth = m.confusion.row(c).sum();
    const int predicted = m.confusion.col(c).sum();
    if (truth == 0 && predicted == 0) continue;
    const double p = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
    const double r = truth > 0 ? static_cast<double>(tp) / truth : 0.0;
    m.f1[c] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return m;
}

double majority_rate(std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("majority_rate: no samples");
  std::array<std::size_t, 3> n{};
  for (double v : y) ++n[static_cast<int>(classify(v))];
  return static_cast<double>(*std::max_element(n.begin(), n.end())) / static_cast<double>(y.size());
}

Aggregate aggregate_folds(std::span<const FoldResult> folds) {
  if (folds.empty()) throw std::invalid_argument("aggregate: no folds");
  Aggregate a;
  const auto k = static_cast<double>(folds.size());
  for (const auto& f : folds) {
    a.mae += f.mae.overall.mean / k;
    a.mae_std += f.mae.overall.std / k;
    a.accuracy += f.classes.accuracy / k;
    a.baseline_mae += f.baseline_mae / k;
    a.majority += f.majority / k;
  }
  for (int c = 0; c < 3; ++c) {
    a.mae_class[c] = mean_present(folds, [c](const FoldResult& f) -> std::optional<double> {
      if (!f.mae.per_class[c]) return std::nullopt;
      return f.mae.per_class[c]->mean;
    });
    a.mae_class_std[c] = mean_present(folds, [c](const FoldResult& f) -> std::optional<double> {
      if (!f.mae.per_class[c]) return std::nullopt;
      return f.mae.per_class[c]->std;
    });
    a.f1[c] = mean_present(folds, [c](const FoldResult& f) { return f.classes.f1[c]; });
  }
  return a;
}

CvReport cross_validate(const SampleTable& table, const CvConfig& cfg) {
  table.validate();
  std::vector<std::string> ids = table.pair_ids();
  const auto npairs = static_cast<int>(ids.size());
  if (npairs < 2) throw std::invalid_argument("cross_validate: need at least 2 pairs");

  // Test-pair sets per fold.
  std::vector<std::set<std::string>> test_sets;
  Rng rng(derive_seed(cfg.seed, {0x6376}));
  if (cfg.repeats > 0) {
    if (cfg.test_pairs < 1 || cfg.test_pairs >= npairs)
      throw std::invalid_argument("cross_validate: test_pairs must be in [1, pairs)");
    for (int r = 0; r < cfg.repeats; ++r) {
      std::shuffle(ids.begin(), ids.end(), rng);
      test_sets.emplace_back(ids.begin(), ids.begin() + cfg.test_pairs);
    }
  } else {
    if (cfg.folds < 2) throw std::invalid_argument("cross_validate: need at least 2 folds");
    if (npairs < cfg.folds) throw std::invalid_argument("cross_validate: fewer pairs than folds");
    std::shuffle(ids.begin(), ids.end(), rng);
    test_sets.resize(static_cast<std::size_t>(cfg.folds));
    for (int p = 0; p < npairs; ++p) test_sets[static_cast<std::size_t>(p % cfg.folds)].insert(ids[p]);
  }

  const Eigen::VectorXd y = table.targets();
  CvReport report;
  report.folds.resize(test_sets.size());
  // Folds run one after another; each forest parallelizes over trees.
  for (std::size_t k = 0; k < test_sets.size(); ++k) {
    FoldResult& f = report.folds[k];
    std::vector<std::size_t> train_rows;
    for (std::size_t r = 0; r < table.rows(); ++r)
      (test_sets[k].contains(table.samples[r].pair_id) ? f.test_rows : train_rows).push_back(r);
    for (const auto& id : table.pair_ids())
      (test_sets[k].contains(id) ? f.test_pairs : f.train_pairs).push_back(id);

    const SampleTable train = table.rows_where(train_rows);
    const SampleTable test = table.rows_where(f.test_rows);
    // Same forest seed in every fold: folds differ only by their data.
    const Forest forest = train_forest(train.x, train.targets(), cfg.forest, train.columns);
    f.y = test.targets();
    f.y_hat = forest.predict(test.x, test.columns);
    const std::span<const double> ys(f.y.data(), static_cast<std::size_t>(f.y.size()));
    const std::span<const double> ps(f.y_hat.data(), static_cast<std::size_t>(f.y_hat.size()));
    f.mae = mae(ys, ps);
    f.classes = classify_metrics(ys, ps);
    f.baseline_mae = (f.y.array() - train.targets().mean()).abs().mean();
    f.majority = majority_rate(ys);
  }
  report.aggregate = aggregate_folds(report.folds);
  return report;
}

}  // namespace regmap
