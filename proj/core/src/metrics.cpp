#include "probforest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "probforest/glm.hpp"
#include "probforest/numeric.hpp"

namespace probforest::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

double clip_probability(double p, double clip) { return std::clamp(p, clip, 1.0 - clip); }

}  // namespace

double c_statistic(std::span<const double> p, std::span<const int> y) {
  check_lengths(p.size(), y.size(), "c_statistic");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  // Sum of midranks of the events.
  double rank_sum = 0.0;
  double n_events = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double events_in_group = 0.0;
    while (j < order.size() && p[order[j]] == p[order[i]]) {
      events_in_group += y[order[j]] == 1 ? 1.0 : 0.0;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * events_in_group;
    n_events += events_in_group;
    i = j;
  }
  const double n_non = static_cast<double>(p.size()) - n_events;
  if (n_events == 0.0 || n_non == 0.0) {
    throw std::invalid_argument("c_statistic: both outcome classes must be present");
  }
  return (rank_sum - n_events * (n_events + 1.0) / 2.0) / (n_events * n_non);
}

double expected_c_statistic(std::span<const double> p, std::span<const double> true_p) {
  check_lengths(p.size(), true_p.size(), "expected_c_statistic");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  double numerator = 0.0, events = 0.0, non_events = 0.0, self_pairs = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    double e = 0.0, ne = 0.0, self = 0.0;
    std::size_t j = i;
    for (; j < order.size() && p[order[j]] == p[order[i]]; ++j) {
      const double t = true_p[order[j]];
      e += t;
      ne += 1.0 - t;
      self += t * (1.0 - t);
    }
    numerator += e * non_events + 0.5 * (e * ne - self);
    events += e;
    non_events += ne;
    self_pairs += self;
    i = j;
  }
  const double denominator = events * non_events - self_pairs;
  if (!(denominator > 0.0)) throw std::invalid_argument("expected_c_statistic: no weighted pairs");
  return numerator / denominator;
}

namespace {

// Credit for class `cls` given one case per class: the class-`cls` case
// must hold the strictly highest class-`cls` probability; t-way ties at the
// top earn 1/t.
double tuple_credit(const Matrix& probs, std::span<const std::size_t> tuple, std::size_t cls) {
  const double own = probs(tuple[cls], cls);
  int at_top = 0;
  for (std::size_t other = 0; other < tuple.size(); ++other) {
    const double v = probs(tuple[other], cls);
    if (v > own) return 0.0;
    if (v == own) ++at_top;
  }
  return 1.0 / at_top;
}

}  // namespace

double pdi(const Matrix& probs, std::span<const int> y, std::uint64_t tuples, Rng& rng,
           std::uint64_t exact_limit) {
  check_lengths(probs.rows(), y.size(), "pdi");
  const std::size_t k = probs.cols();
  if (k < 2) throw std::invalid_argument("pdi: need at least two classes");
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k) {
      throw std::invalid_argument("pdi: label outside [0, k)");
    }
    members[static_cast<std::size_t>(y[i])].push_back(i);
  }
  double total_tuples = 1.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].empty()) {
      throw std::invalid_argument("pdi: class " + std::to_string(c) + " has no cases");
    }
    total_tuples *= static_cast<double>(members[c].size());
  }

  std::vector<double> credit(k, 0.0);
  std::vector<std::size_t> tuple(k);
  double n_evaluated = 0.0;
  if (total_tuples <= static_cast<double>(exact_limit)) {
    // Odometer over all combinations.
    std::vector<std::size_t> pos(k, 0);
    for (;;) {
      for (std::size_t c = 0; c < k; ++c) tuple[c] = members[c][pos[c]];
      for (std::size_t c = 0; c < k; ++c) credit[c] += tuple_credit(probs, tuple, c);
      n_evaluated += 1.0;
      std::size_t c = 0;
      while (c < k && ++pos[c] == members[c].size()) pos[c++] = 0;
      if (c == k) break;
    }
  } else {
    if (tuples == 0) throw std::invalid_argument("pdi: tuple budget must be positive");
    for (std::uint64_t t = 0; t < tuples; ++t) {
      for (std::size_t c = 0; c < k; ++c) tuple[c] = members[c][rng.uniform_index(members[c].size())];
      for (std::size_t c = 0; c < k; ++c) credit[c] += tuple_credit(probs, tuple, c);
    }
    n_evaluated = static_cast<double>(tuples);
  }
  double sum = 0.0;
  for (double c : credit) sum += c / n_evaluated;
  return sum / static_cast<double>(k);
}

CalibrationFit calibration_slope(std::span<const double> p, std::span<const int> y, double clip) {
  check_lengths(p.size(), y.size(), "calibration_slope");
  if (!(clip > 0.0 && clip < 0.5)) throw std::invalid_argument("calibration_slope: clip in (0, 0.5)");
  Matrix x(p.size(), 1);
  for (std::size_t i = 0; i < p.size(); ++i) x(i, 0) = logit(clip_probability(p[i], clip));
  CalibrationFit fit;
  try {
    const auto model = glm::fit_binary_logistic(x, y, 0.0);
    fit.intercept = model.coefficients(0, 0);
    fit.slope = model.coefficients(0, 1);
    fit.converged = model.converged && std::isfinite(fit.slope);
    fit.separated = model.separated;
  } catch (const glm::GlmError&) {
    // Constant predictions leave the slope unidentifiable.
    fit.converged = false;
    fit.slope = std::nan("");
    fit.intercept = std::nan("");
  }
  return fit;
}

double brier(std::span<const double> p, std::span<const int> y) {
  check_lengths(p.size(), y.size(), "brier");
  if (p.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  return s / static_cast<double>(p.size());
}

double logloss(std::span<const double> p, std::span<const int> y, double clip) {
  check_lengths(p.size(), y.size(), "logloss");
  if (p.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clip_probability(p[i], clip);
    s -= y[i] == 1 ? std::log(q) : std::log1p(-q);
  }
  return s / static_cast<double>(p.size());
}

double brier_multiclass(const Matrix& probs, std::span<const int> y) {
  check_lengths(probs.rows(), y.size(), "brier_multiclass");
  if (y.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const double target = static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0;
      s += (probs(i, c) - target) * (probs(i, c) - target);
    }
  }
  return s / static_cast<double>(y.size());
}

double logloss_multiclass(const Matrix& probs, std::span<const int> y, double clip) {
  check_lengths(probs.rows(), y.size(), "logloss_multiclass");
  if (y.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s -= std::log(std::clamp(probs(i, static_cast<std::size_t>(y[i])), clip, 1.0));
  }
  return s / static_cast<double>(y.size());
}

RunMetrics evaluate_run(std::span<const double> train_p, std::span<const int> train_y,
                        std::span<const double> test_p, std::span<const int> test_y) {
  RunMetrics m;
  m.train_c = c_statistic(train_p, train_y);
  m.test_c = c_statistic(test_p, test_y);
  m.train_slope = calibration_slope(train_p, train_y);
  m.test_slope = calibration_slope(test_p, test_y);
  m.train_brier = brier(train_p, train_y);
  m.test_brier = brier(test_p, test_y);
  m.train_logloss = logloss(train_p, train_y);
  m.test_logloss = logloss(test_p, test_y);
  return m;
}

PerObservationError per_observation_error(const Matrix& preds, std::span<const double> true_p) {
  if (preds.rows() < 2) throw std::invalid_argument("bias_variance: need at least 2 runs");
  check_lengths(preds.cols(), true_p.size(), "bias_variance");
  const std::size_t runs = preds.rows();
  const std::size_t n = preds.cols();
  PerObservationError out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                          std::vector<double>(n, 0.0)};
  std::vector<double> mean(n, 0.0);
  for (std::size_t r = 0; r < runs; ++r)
    for (std::size_t j = 0; j < n; ++j) mean[j] += preds(r, j);
  for (auto& m : mean) m /= static_cast<double>(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = preds(r, j) - mean[j];
      out.variance[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    out.variance[j] /= static_cast<double>(runs);
    const double b = mean[j] - true_p[j];
    out.squared_bias[j] = b * b;
    out.mse[j] = out.squared_bias[j] + out.variance[j];
  }
  return out;
}

MseDecomposition decompose(const PerObservationError& errors) {
  const auto sb = summarize(errors.squared_bias);
  const auto v = summarize(errors.variance);
  const auto m = summarize(errors.mse);
  return {sb.mean, v.mean, m.mean, sb.sd, v.sd, m.sd};
}

double discrimination_loss(double true_c, std::span<const double> test_c_values) {
  if (test_c_values.empty()) throw std::invalid_argument("discrimination_loss: no test values");
  return true_c - median(test_c_values);
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  Summary s;
  s.median = quantile_type7_sorted(sorted, 0.5);
  s.iqr = quantile_type7_sorted(sorted, 0.75) - quantile_type7_sorted(sorted, 0.25);
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace probforest::metrics
