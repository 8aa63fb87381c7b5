#include "slotfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "slotfuse/parallel.hpp"
#include "slotfuse/text.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

std::string to_string(LossKind loss) {
  return loss == LossKind::LOGISTIC ? "logistic" : "squared_hinge";
}

std::optional<LossKind> parse_loss_kind(std::string_view text) {
  if (text == "logistic") return LossKind::LOGISTIC;
  if (text == "squared_hinge") return LossKind::SQUARED_HINGE;
  return std::nullopt;
}

double LinearModel::raw_score(const std::vector<double>& values) const {
  if (values.size() != weights.size()) {
    throw std::invalid_argument("feature vector dimension does not match the model");
  }
  double z = bias;
  if (feature_mean.empty()) {
    for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * values[j];
  } else {
    for (std::size_t j = 0; j < weights.size(); ++j) {
      z += weights[j] * (values[j] - feature_mean[j]) / feature_scale[j];
    }
  }
  return z;
}

std::size_t LinearModel::nonzero_weights() const {
  std::size_t n = 0;
  for (double w : weights) n += w != 0.0;
  return n;
}

nlohmann::json LinearModel::to_json() const {
  nlohmann::json j;
  j["format"] = "slotfuse-model-v1";
  j["loss"] = to_string(loss);
  j["lambda"] = lambda;
  j["bias"] = bias;
  j["weights"] = weights;
  j["layout"] = layout.to_json();
  if (!feature_mean.empty()) {
    j["standardize"] = {{"mean", feature_mean}, {"scale", feature_scale}};
  }
  j["iterations"] = iterations;
  j["objective"] = final_objective;
  return j;
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "slotfuse-model-v1") {
    throw ParseError("unrecognized model format tag");
  }
  LinearModel model;
  const auto loss = parse_loss_kind(j.at("loss").get<std::string>());
  if (!loss) throw ParseError("unknown loss kind in model file");
  model.loss = *loss;
  model.lambda = j.at("lambda").get<double>();
  model.bias = j.at("bias").get<double>();
  model.weights = j.at("weights").get<std::vector<double>>();
  model.layout = FeatureLayout::from_json(j.at("layout"));
  if (j.contains("standardize")) {
    model.feature_mean = j["standardize"].at("mean").get<std::vector<double>>();
    model.feature_scale = j["standardize"].at("scale").get<std::vector<double>>();
  }
  model.iterations = j.value("iterations", 0);
  model.final_objective = j.value("objective", 0.0);
  if (model.weights.size() != model.layout.dimension()) {
    throw ParseError("model weight count does not match its layout dimension");
  }
  return model;
}

void LinearModel::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json().dump(2) + "\n");
}

LinearModel LinearModel::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(path.string() + ": " + err.what());
  }
  return from_json(j);
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ln(1 + exp(-m)) without overflow for large |m|.
double logistic_loss(double margin) {
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

// Returns exactly 0.0 inside the threshold so L1-killed weights compare
// bitwise equal to zero.
double soft_threshold(double u, double a) {
  if (u > a) return u - a;
  if (u < -a) return u + a;
  return 0.0;
}

// One training row after duplicate coalescing.
struct Row {
  std::vector<double> x;
  double y = 1.0;       // +1 or -1
  double weight = 1.0;  // duplicate count / n
};

struct Problem {
  std::vector<Row> rows;
  std::size_t dim = 0;
};

// Smooth part of the objective (weighted mean loss, no penalty).
double smooth_objective(const Problem& prob, const std::vector<double>& w, double b,
                        LossKind loss, int jobs) {
  return blocked_sum(prob.rows.size(), jobs, [&](std::size_t i) {
    const Row& r = prob.rows[i];
    double z = b;
    for (std::size_t j = 0; j < prob.dim; ++j) z += w[j] * r.x[j];
    const double m = r.y * z;
    const double l =
        loss == LossKind::LOGISTIC ? logistic_loss(m) : std::pow(std::max(0.0, 1.0 - m), 2);
    return r.weight * l;
  });
}

// Gradient of the smooth part with respect to (w, b); grad has dim+1 slots,
// the last one for the bias.
void smooth_gradient(const Problem& prob, const std::vector<double>& w, double b, LossKind loss,
                     int jobs, std::vector<double>& grad) {
  blocked_vector_sum(prob.rows.size(), prob.dim + 1, jobs, grad,
                     [&](std::size_t i, std::vector<double>& acc) {
                       const Row& r = prob.rows[i];
                       double z = b;
                       for (std::size_t j = 0; j < prob.dim; ++j) z += w[j] * r.x[j];
                       const double m = r.y * z;
                       double dloss;  // d loss / d z
                       if (loss == LossKind::LOGISTIC) {
                         dloss = -r.y * sigmoid(-m);
                       } else {
                         dloss = m < 1.0 ? -2.0 * r.y * (1.0 - m) : 0.0;
                       }
                       const double c = r.weight * dloss;
                       for (std::size_t j = 0; j < prob.dim; ++j) acc[j] += c * r.x[j];
                       acc[prob.dim] += c;
                     });
}

double l1_norm(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += std::fabs(v);
  return s;
}

}  // namespace

TrainResult train(const std::vector<FeatureVector>& rows, const FeatureLayout& layout,
                  const TrainOptions& options) {
  const std::size_t dim = layout.dimension();
  if (options.lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");

  std::size_t n_pos = 0, n_neg = 0;
  for (const FeatureVector& row : rows) {
    if (!row.label) {
      throw std::invalid_argument("unlabeled row for " + row.query_id + "/" + row.slot + "/" +
                                  row.fill_norm);
    }
    if (row.values.size() != dim) {
      throw std::invalid_argument("row dimension mismatch for " + row.query_id + "/" + row.slot +
                                  "/" + row.fill_norm);
    }
    for (double v : row.values) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("non-finite feature for " + row.query_id + "/" + row.slot +
                                    "/" + row.fill_norm);
      }
    }
    (*row.label ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("training needs at least one positive and one negative label");
  }

  // Standardization parameters from the raw data (population std).
  std::vector<double> mean(dim, 0.0), scale(dim, 1.0);
  if (options.standardize) {
    for (const FeatureVector& row : rows) {
      for (std::size_t j = 0; j < dim; ++j) mean[j] += row.values[j];
    }
    for (double& m : mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(dim, 0.0);
    for (const FeatureVector& row : rows) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = row.values[j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
      scale[j] = sd > 0.0 ? sd : 1.0;
    }
  }

  // Coalesce exact duplicates so a duplicated dataset trains to the same
  // model bit for bit (weights = count/n keep the objective unchanged).
  std::map<std::pair<std::vector<double>, bool>, double> counts;
  for (const FeatureVector& row : rows) {
    std::vector<double> x = row.values;
    if (options.standardize) {
      for (std::size_t j = 0; j < dim; ++j) x[j] = (x[j] - mean[j]) / scale[j];
    }
    counts[{std::move(x), *row.label}] += 1.0;
  }
  Problem prob;
  prob.dim = dim;
  prob.rows.reserve(counts.size());
  const double n = static_cast<double>(rows.size());
  for (const auto& [key, count] : counts) {
    prob.rows.push_back(Row{key.first, key.second ? 1.0 : -1.0, count / n});
  }

  // Proximal gradient with backtracking line search from a zero start.
  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  double g = smooth_objective(prob, w, b, options.loss, options.jobs);
  double objective = g + options.lambda * l1_norm(w);

  TrainResult result;
  result.objective_trace.push_back(objective);

  std::vector<double> grad(dim + 1, 0.0);
  std::vector<double> w_next(dim, 0.0);
  double step = 1.0;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    smooth_gradient(prob, w, b, options.loss, options.jobs, grad);

    double g_next = 0.0, b_next = 0.0;
    while (true) {
      for (std::size_t j = 0; j < dim; ++j) {
        w_next[j] = soft_threshold(w[j] - step * grad[j], step * options.lambda);
      }
      b_next = b - step * grad[dim];
      g_next = smooth_objective(prob, w_next, b_next, options.loss, options.jobs);

      // Sufficient decrease of the smooth part around the prox step.
      double linear = 0.0, quad = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = w_next[j] - w[j];
        linear += grad[j] * d;
        quad += d * d;
      }
      const double db = b_next - b;
      linear += grad[dim] * db;
      quad += db * db;
      if (g_next <= g + linear + quad / (2.0 * step) + 1e-15) break;
      step *= 0.5;
      if (step < 1e-18) break;
    }
    if (step < 1e-18) break;

    const double objective_next = g_next + options.lambda * l1_norm(w_next);
    const double decrease = objective - objective_next;
    std::swap(w, w_next);
    b = b_next;
    g = g_next;
    objective = objective_next;
    result.objective_trace.push_back(objective);

    if (decrease >= 0.0 && decrease <= options.tolerance * std::max(1.0, std::fabs(objective))) {
      result.converged = true;
      ++iter;
      break;
    }
    step *= 1.25;  // relax after an accepted step
  }

  LinearModel model;
  model.layout = layout;
  model.weights = std::move(w);
  model.bias = b;
  model.lambda = options.lambda;
  model.loss = options.loss;
  if (options.standardize) {
    model.feature_mean = std::move(mean);
    model.feature_scale = std::move(scale);
  }
  model.iterations = iter;
  model.final_objective = objective;
  result.model = std::move(model);
  return result;
}

std::vector<Prediction> predict(const LinearModel& model, const std::vector<FeatureVector>& rows,
                                double threshold, int jobs) {
  std::vector<Prediction> out(rows.size());
  std::vector<std::string> errors(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const FeatureVector& row = rows[i];
    if (row.values.size() != model.weights.size()) {
      errors[i] = "row dimension mismatch for " + row.query_id + "/" + row.slot + "/" +
                  row.fill_norm;
      return;
    }
    const double p = sigmoid(model.raw_score(row.values));
    out[i] = Prediction{row.query_id, row.slot, row.fill_norm, p, p >= threshold};
  });
  for (const std::string& err : errors) {
    if (!err.empty()) throw std::invalid_argument(err);
  }
  return out;
}

double tune_lambda(const std::vector<FeatureVector>& rows, const FeatureLayout& layout,
                   const TrainOptions& base, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("empty lambda grid");
  std::vector<FeatureVector> fit, held;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (i % 5 == 4 ? held : fit).push_back(rows[i]);
  }

  double best_lambda = grid.front();
  double best_f1 = -1.0;
  for (double lambda : grid) {
    TrainOptions options = base;
    options.lambda = lambda;
    const TrainResult trained = train(fit, layout, options);
    std::size_t tp = 0, fp = 0, fn = 0;
    const auto preds = predict(trained.model, held, 0.5, base.jobs);
    for (std::size_t i = 0; i < held.size(); ++i) {
      const bool truth = held[i].label.value_or(false);
      if (preds[i].accepted && truth) ++tp;
      if (preds[i].accepted && !truth) ++fp;
      if (!preds[i].accepted && truth) ++fn;
    }
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    if (f1 > best_f1 + 1e-12 || (std::fabs(f1 - best_f1) <= 1e-12 && lambda > best_lambda)) {
      best_f1 = f1;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace slotfuse
