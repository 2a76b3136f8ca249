#include "probforest/glm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "probforest/linalg.hpp"
#include "probforest/numeric.hpp"

namespace probforest::glm {

// ---------------------------------------------------------------------------
// Restricted cubic splines

RcsBasis RcsBasis::from_data(std::span<const double> x) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  RcsBasis basis{quantile_type7_sorted(sorted, 0.10), quantile_type7_sorted(sorted, 0.50),
                 quantile_type7_sorted(sorted, 0.90)};
  basis.validate();
  return basis;
}

void RcsBasis::validate() const {
  if (!(t1 < t2 && t2 < t3)) {
    throw std::invalid_argument("RcsBasis: knots must be strictly increasing");
  }
}

double RcsBasis::nonlinear_term(double x) const {
  auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  const double span = t3 - t1;
  return (cube(x - t1) - cube(x - t2) * (t3 - t1) / (t3 - t2) +
          cube(x - t3) * (t2 - t1) / (t3 - t2)) /
         (span * span);
}

Matrix rcs_expand(std::span<const double> x, const RcsBasis& basis) {
  basis.validate();
  Matrix out(x.size(), 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out(i, 0) = x[i];
    out(i, 1) = basis.nonlinear_term(x[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood pieces

namespace {

// Fills `probs` (length K) with softmax probabilities for one row.
void row_probabilities(const Matrix& coef, std::span<const double> row, std::span<double> probs) {
  const std::size_t m = coef.rows();
  double max_eta = 0.0;  // reference class has eta = 0
  for (std::size_t k = 0; k < m; ++k) {
    double eta = coef(k, 0);
    for (std::size_t j = 0; j < row.size(); ++j) eta += coef(k, j + 1) * row[j];
    probs[k + 1] = eta;
    max_eta = std::max(max_eta, eta);
  }
  probs[0] = std::exp(-max_eta);
  double total = probs[0];
  for (std::size_t k = 1; k <= m; ++k) {
    probs[k] = std::exp(probs[k] - max_eta);
    total += probs[k];
  }
  for (auto& p : probs) p /= total;
}

double ridge_penalty(const Matrix& coef, double ridge) {
  if (ridge == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < coef.rows(); ++k)
    for (std::size_t j = 1; j < coef.cols(); ++j) s += coef(k, j) * coef(k, j);
  return ridge * s;
}

void check_design(const Matrix& x, std::size_t n_labels, double ridge) {
  if (x.rows() != n_labels) {
    throw std::invalid_argument("glm: x has " + std::to_string(x.rows()) + " rows but y has " +
                                std::to_string(n_labels));
  }
  if (ridge < 0.0) throw std::invalid_argument("glm: ridge must be non-negative");
  if (ridge > 0.0 || x.rows() == 0) return;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double first = x(0, j);
    bool constant = true;
    for (std::size_t i = 1; i < x.rows() && constant; ++i) constant = x(i, j) == first;
    if (constant) {
      throw GlmError("glm: predictor column " + std::to_string(j) +
                     " is constant, so its coefficient is not identifiable without a ridge penalty");
    }
  }
}

enum class StopRule { coefficient_change, gradient_norm };

struct Likelihood {
  double value = 0.0;
  std::vector<double> gradient;  // m * d1, row-major like the coefficients
  Matrix information;            // negative Hessian plus penalty
};

Likelihood evaluate(const Matrix& coef, const Matrix& x, std::span<const int> y_index,
                    double ridge, bool with_information) {
  const std::size_t m = coef.rows();
  const std::size_t d1 = coef.cols();
  const std::size_t dim = m * d1;
  Likelihood out;
  out.gradient.assign(dim, 0.0);
  if (with_information) out.information = Matrix(dim, dim);
  std::vector<double> probs(m + 1);
  std::vector<double> design(d1);
  design[0] = 1.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    std::copy(row.begin(), row.end(), design.begin() + 1);
    row_probabilities(coef, row, probs);
    const auto yi = static_cast<std::size_t>(y_index[i]);
    out.value += std::log(std::max(probs[yi], std::numeric_limits<double>::min()));
    for (std::size_t a = 0; a < m; ++a) {
      const double resid = (yi == a + 1 ? 1.0 : 0.0) - probs[a + 1];
      for (std::size_t j = 0; j < d1; ++j) out.gradient[a * d1 + j] += resid * design[j];
    }
    if (!with_information) continue;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a; b < m; ++b) {
        const double w = probs[a + 1] * ((a == b ? 1.0 : 0.0) - probs[b + 1]);
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < d1; ++j) {
          const double wj = w * design[j];
          for (std::size_t l = 0; l < d1; ++l) out.information(a * d1 + j, b * d1 + l) += wj * design[l];
        }
      }
    }
  }
  if (with_information) {
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < r; ++c) out.information(r, c) = out.information(c, r);
  }
  out.value -= ridge_penalty(coef, ridge);
  if (ridge > 0.0) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t j = 1; j < d1; ++j) {
        out.gradient[a * d1 + j] -= 2.0 * ridge * coef(a, j);
        if (with_information) out.information(a * d1 + j, a * d1 + j) += 2.0 * ridge;
      }
    }
  }
  return out;
}

GlmModel newton_fit(const Matrix& x, std::span<const int> y_index, std::vector<int> labels,
                    double ridge, const FitOptions& options, StopRule rule) {
  const std::size_t m = labels.size() - 1;
  const std::size_t d1 = x.cols() + 1;
  GlmModel model;
  model.class_labels = std::move(labels);
  model.coefficients = Matrix(m, d1);

  // Start from the marginal class frequencies.
  std::vector<double> freq(m + 1, 0.0);
  for (int c : y_index) freq[static_cast<std::size_t>(c)] += 1.0;
  for (std::size_t k = 0; k < m; ++k) model.coefficients(k, 0) = std::log(freq[k + 1] / freq[0]);

  auto current = evaluate(model.coefficients, x, y_index, ridge, true);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    model.iterations = iter;
    if (rule == StopRule::gradient_norm) {
      double gmax = 0.0;
      for (double g : current.gradient) gmax = std::max(gmax, std::abs(g));
      if (gmax < options.gradient_tolerance) {
        model.converged = true;
        model.iterations = iter - 1;
        return model;
      }
    }
    std::vector<double> step;
    try {
      step = cholesky_solve(cholesky_lower(current.information), current.gradient);
    } catch (const NotPositiveDefinite&) {
      return model;  // information matrix degenerate: separation or collinearity
    }
    double scale = 1.0;
    Matrix trial;
    Likelihood next;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      trial = model.coefficients;
      auto flat = trial.data();
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += scale * step[i];
      next = evaluate(trial, x, y_index, ridge, true);
      if (std::isfinite(next.value) &&
          next.value >= current.value - 1e-12 * std::max(1.0, std::abs(current.value))) {
        break;
      }
    }
    double max_change = 0.0;
    for (double s : step) max_change = std::max(max_change, std::abs(scale * s));
    model.coefficients = std::move(trial);
    current = std::move(next);
    for (double v : model.coefficients.data()) {
      if (!std::isfinite(v)) return model;
    }
    if (rule == StopRule::coefficient_change && max_change < options.coefficient_tolerance) {
      model.converged = true;
      return model;
    }
  }
  if (rule == StopRule::gradient_norm) {
    double gmax = 0.0;
    for (double g : current.gradient) gmax = std::max(gmax, std::abs(g));
    model.converged = gmax < options.gradient_tolerance;
  }
  return model;
}

// True when some fitted probability is within 10 machine epsilons of 0 or 1.
bool fitted_extremes(const Matrix& coef, const Matrix& x) {
  constexpr double eps = 10.0 * std::numeric_limits<double>::epsilon();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double eta = coef(0, 0);
    for (std::size_t j = 0; j < x.cols(); ++j) eta += coef(0, j + 1) * x(i, j);
    const double p = inverse_logit(eta);
    if (p < eps || p > 1.0 - eps) return true;
  }
  return false;
}

}  // namespace

double penalized_log_likelihood(const Matrix& coefficients, const Matrix& x,
                                std::span<const int> y_index, double ridge) {
  return evaluate(coefficients, x, y_index, ridge, false).value;
}

std::vector<double> penalized_gradient(const Matrix& coefficients, const Matrix& x,
                                       std::span<const int> y_index, double ridge) {
  return evaluate(coefficients, x, y_index, ridge, false).gradient;
}

GlmModel fit_binary_logistic(const Matrix& x, std::span<const int> y, double ridge,
                             const FitOptions& options) {
  check_design(x, y.size(), ridge);
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v == 0) has0 = true;
    else if (v == 1) has1 = true;
    else throw std::invalid_argument("fit_binary_logistic: outcome must be 0/1");
  }
  if (!has0 || !has1) throw GlmError("fit_binary_logistic: both outcome classes must be present");
  auto model = newton_fit(x, y, {0, 1}, ridge, options, StopRule::coefficient_change);
  model.separated = !model.converged && fitted_extremes(model.coefficients, x);
  return model;
}

GlmModel fit_multinomial(const Matrix& x, std::span<const int> y, double ridge,
                         const FitOptions& options) {
  check_design(x, y.size(), ridge);
  std::vector<int> labels(y.begin(), y.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  if (labels.size() < 2) throw GlmError("fit_multinomial: need at least two classes");
  std::vector<int> y_index(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y_index[i] = static_cast<int>(std::lower_bound(labels.begin(), labels.end(), y[i]) - labels.begin());
  }
  return newton_fit(x, y_index, std::move(labels), ridge, options, StopRule::gradient_norm);
}

Matrix predict_glm(const GlmModel& model, const Matrix& x) {
  if (x.cols() != model.n_features()) {
    throw std::invalid_argument("predict_glm: input has " + std::to_string(x.cols()) +
                                " features, model expects " + std::to_string(model.n_features()));
  }
  Matrix out(x.rows(), model.n_classes());
  for (std::size_t i = 0; i < x.rows(); ++i) row_probabilities(model.coefficients, x.row(i), out.row(i));
  return out;
}

void write_coefficients_csv(const GlmModel& model, std::span<const std::string> feature_names,
                            const std::filesystem::path& path) {
  if (feature_names.size() != model.n_features()) {
    throw std::invalid_argument("write_coefficients_csv: feature name count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "class,intercept";
  for (const auto& n : feature_names) out << ',' << n;
  out << '\n';
  for (std::size_t k = 0; k < model.coefficients.rows(); ++k) {
    out << model.class_labels[k + 1];
    for (double v : model.coefficients.row(k)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Spline pipeline

std::size_t FeatureExpansion::n_terms() const {
  std::size_t n = 0;
  for (const auto& s : splines) n += s ? 2 : 1;
  return n;
}

Matrix FeatureExpansion::expand(const Matrix& x) const {
  if (x.cols() != splines.size()) {
    throw std::invalid_argument("FeatureExpansion: input has " + std::to_string(x.cols()) +
                                " features, expected " + std::to_string(splines.size()));
  }
  Matrix out(x.rows(), n_terms());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < splines.size(); ++j) {
      out(i, c++) = x(i, j);
      if (splines[j]) out(i, c++) = splines[j]->nonlinear_term(x(i, j));
    }
  }
  return out;
}

std::vector<std::string> FeatureExpansion::term_names(std::span<const std::string> input_names) const {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < splines.size(); ++j) {
    names.push_back(input_names[j]);
    if (splines[j]) names.push_back(input_names[j] + "'");
  }
  return names;
}

Matrix SplineGlm::predict(const Matrix& x) const { return predict_glm(model, expansion.expand(x)); }

SplineGlm fit_spline_glm(const Dataset& data, std::span<const int> spline_features, double ridge) {
  data.validate();
  SplineGlm result;
  result.feature_names =
      data.feature_names.empty() ? default_feature_names(data.n_features()) : data.feature_names;
  result.expansion.splines.resize(data.n_features());
  for (int f : spline_features) {
    if (f < 0 || static_cast<std::size_t>(f) >= data.n_features()) {
      throw std::invalid_argument("fit_spline_glm: spline feature index out of range");
    }
    result.expansion.splines[static_cast<std::size_t>(f)] =
        RcsBasis::from_data(data.x.column(static_cast<std::size_t>(f)));
  }
  const Matrix design = result.expansion.expand(data.x);
  std::vector<int> labels(data.y);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  result.model = labels == std::vector<int>{0, 1} ? fit_binary_logistic(design, data.y, ridge)
                                                  : fit_multinomial(design, data.y, ridge);
  return result;
}

void SplineGlm::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "probforest-glm";
  j["version"] = 1;
  j["class_labels"] = model.class_labels;
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  auto& coef = j["coefficients"] = nlohmann::json::array();
  for (std::size_t k = 0; k < model.coefficients.rows(); ++k) {
    const auto row = model.coefficients.row(k);
    coef.push_back(std::vector<double>(row.begin(), row.end()));
  }
  auto& features = j["features"] = nlohmann::json::array();
  for (std::size_t f = 0; f < expansion.splines.size(); ++f) {
    nlohmann::json entry{{"name", feature_names.at(f)}};
    if (const auto& s = expansion.splines[f]) {
      entry["knots"] = {s->t1, s->t2, s->t3};
    } else {
      entry["knots"] = nullptr;
    }
    features.push_back(entry);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

SplineGlm SplineGlm::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != "probforest-glm") throw std::runtime_error("wrong format tag");
    SplineGlm g;
    g.model.class_labels = j.at("class_labels").get<std::vector<int>>();
    g.model.converged = j.at("converged").get<bool>();
    g.model.iterations = j.at("iterations").get<int>();
    const auto rows = j.at("coefficients").get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    g.model.coefficients = Matrix(rows.size(), cols);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != cols) throw std::runtime_error("ragged coefficient matrix");
      std::copy(rows[k].begin(), rows[k].end(), g.model.coefficients.row(k).begin());
    }
    for (const auto& f : j.at("features")) {
      g.feature_names.push_back(f.at("name").get<std::string>());
      if (f.at("knots").is_null()) {
        g.expansion.splines.emplace_back();
      } else {
        const auto k = f.at("knots").get<std::vector<double>>();
        if (k.size() != 3) throw std::runtime_error("spline needs exactly 3 knots");
        g.expansion.splines.emplace_back(RcsBasis{k[0], k[1], k[2]});
      }
    }
    if (g.expansion.n_terms() != g.model.n_features()) {
      throw std::runtime_error("feature list does not match coefficient count");
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace probforest::glm
