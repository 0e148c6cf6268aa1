#include "kdn/kplane.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kdn/errors.hpp"
#include "kdn/log.hpp"
#include "kdn/random.hpp"

namespace kdn {

namespace {

[[noreturn]] void dims(const std::string& msg) { throw Error(ErrorKind::inconsistent_input, "dimension mismatch: " + msg); }
[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorKind::schema, msg); }

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) schema("matrix size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[std::size_t(r * cols + c)];
  return m;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), Eigen::Index(data.size()));
}

Eigen::RowVectorXd row_from(const nlohmann::json& j) { return vector_from(j).transpose(); }

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  Gradients m, v;

  Adam(const MlpModel& model, double lr_) : lr(lr_) {
    m = {Eigen::MatrixXd::Zero(model.W1.rows(), model.W1.cols()), Eigen::VectorXd::Zero(model.b1.size()),
         Eigen::MatrixXd::Zero(model.W2.rows(), model.W2.cols()), Eigen::VectorXd::Zero(model.b2.size())};
    v = m;
  }

  template <typename P, typename G>
  void update(P& param, const G& grad, P& m1, P& m2, double c1, double c2) {
    m1 = beta1 * m1 + (1.0 - beta1) * grad;
    m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
  }

  void step(MlpModel& model, const Gradients& g) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    update(model.W1, g.W1, m.W1, v.W1, c1, c2);
    update(model.b1, g.b1, m.b1, v.b1, c1, c2);
    update(model.W2, g.W2, m.W2, v.W2, c1, c2);
    update(model.b2, g.b2, m.b2, v.b2, c1, c2);
  }
};

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

Normalizer Normalizer::fit(const Eigen::MatrixXd& m) {
  Normalizer n;
  const auto rows = static_cast<double>(m.rows());
  n.mean = m.colwise().mean();
  n.stddev.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double var = (m.col(c).array() - n.mean(c)).square().sum() / rows;
    const double sd = std::sqrt(var);
    n.stddev(c) = sd > 1e-12 * std::max(1.0, std::abs(n.mean(c))) ? sd : 1.0;
  }
  return n;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& m) const {
  if (m.cols() != mean.size()) dims("normalizer expects " + std::to_string(mean.size()) + " columns");
  return (m.rowwise() - mean).array().rowwise() / stddev.array();
}

Eigen::MatrixXd Normalizer::invert(const Eigen::MatrixXd& z) const {
  if (z.cols() != mean.size()) dims("normalizer expects " + std::to_string(mean.size()) + " columns");
  return (z.array().rowwise() * stddev.array()).matrix().rowwise() + mean;
}

void TrainConfig::validate() const {
  if (hidden_units == 0 || batch_size == 0 || max_epochs == 0 || patience == 0 || !(learning_rate > 0.0))
    throw Error(ErrorKind::invalid_argument, "training parameters must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5))
    throw Error(ErrorKind::invalid_argument, "validation_fraction must be in (0, 0.5]");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"hidden_units", hidden_units}, {"learning_rate", learning_rate}, {"batch_size", batch_size},
          {"max_epochs", max_epochs},     {"patience", patience},           {"seed", seed},
          {"validation_fraction", validation_fraction}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  return c;
}

MlpModel MlpModel::zeros(std::size_t inputs, std::size_t hidden, std::size_t outputs) {
  MlpModel m;
  const auto in = Eigen::Index(inputs), h = Eigen::Index(hidden), out = Eigen::Index(outputs);
  m.W1 = Eigen::MatrixXd::Zero(h, in);
  m.b1 = Eigen::VectorXd::Zero(h);
  m.W2 = Eigen::MatrixXd::Zero(out, h);
  m.b2 = Eigen::VectorXd::Zero(out);
  m.x_norm = {Eigen::RowVectorXd::Zero(in), Eigen::RowVectorXd::Ones(in)};
  m.y_norm = {Eigen::RowVectorXd::Zero(out), Eigen::RowVectorXd::Ones(out)};
  return m;
}

Eigen::MatrixXd MlpModel::forward_normalized(const Eigen::MatrixXd& xn) const {
  if (static_cast<std::size_t>(xn.cols()) != inputs())
    dims("model expects " + std::to_string(inputs()) + " inputs, got " + std::to_string(xn.cols()));
  const Eigen::MatrixXd h = sigmoid((xn * W1.transpose()).rowwise() + b1.transpose());
  return (h * W2.transpose()).rowwise() + b2.transpose();
}

double MlpModel::loss_normalized(const Eigen::MatrixXd& xn, const Eigen::MatrixXd& yn) const {
  return 0.5 * (forward_normalized(xn) - yn).squaredNorm() / static_cast<double>(xn.rows());
}

Gradients batch_gradient(const MlpModel& model, const Eigen::MatrixXd& xn, const Eigen::MatrixXd& yn) {
  if (static_cast<std::size_t>(xn.cols()) != model.inputs() || static_cast<std::size_t>(yn.cols()) != model.outputs() ||
      xn.rows() != yn.rows())
    dims("gradient inputs do not match model");
  const double inv_n = 1.0 / static_cast<double>(xn.rows());
  const Eigen::MatrixXd h = sigmoid((xn * model.W1.transpose()).rowwise() + model.b1.transpose());
  const Eigen::MatrixXd err = ((h * model.W2.transpose()).rowwise() + model.b2.transpose()) - yn;
  const Eigen::MatrixXd dz = ((err * model.W2).array() * h.array() * (1.0 - h.array())).matrix();
  Gradients g;
  g.W2 = err.transpose() * h * inv_n;
  g.b2 = err.colwise().sum().transpose() * inv_n;
  g.W1 = dz.transpose() * xn * inv_n;
  g.b1 = dz.colwise().sum().transpose() * inv_n;
  return g;
}

Gradients gradient(const MlpModel& model, const Eigen::RowVectorXd& x_row, const Eigen::RowVectorXd& y_row) {
  return batch_gradient(model, model.x_norm.apply(x_row), model.y_norm.apply(y_row));
}

MlpModel fit(const Dataset& train, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = train.rows();
  if (n < 2) throw Error(ErrorKind::insufficient_data, "fit needs at least 2 training rows");
  if (train.Y.rows() != train.X.rows()) dims("X and Y row counts differ");
  if (!train.X.allFinite() || !train.Y.allFinite()) throw Error(ErrorKind::training_failure, "training data not finite");

  Rng rng(cfg.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  shuffle(idx, rng);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n))), 1, n - 1);
  const Dataset val = train.select({idx.begin(), idx.begin() + std::ptrdiff_t(n_val)});
  const Dataset fit_part = train.select({idx.begin() + std::ptrdiff_t(n_val), idx.end()});

  MlpModel model;
  model.x_norm = Normalizer::fit(fit_part.X);
  model.y_norm = Normalizer::fit(fit_part.Y);
  const Eigen::MatrixXd xn = model.x_norm.apply(fit_part.X);
  const Eigen::MatrixXd yn = model.y_norm.apply(fit_part.Y);
  const Eigen::MatrixXd xv = model.x_norm.apply(val.X);
  const Eigen::MatrixXd yv = model.y_norm.apply(val.Y);

  const auto in = train.X.cols(), out = train.Y.cols(), hid = Eigen::Index(cfg.hidden_units);
  auto init = [&](Eigen::Index rows, Eigen::Index cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-a, a);
    return w;
  };
  model.W1 = init(hid, in);
  model.b1 = Eigen::VectorXd::Zero(hid);
  model.W2 = init(out, hid);
  model.b2 = Eigen::VectorXd::Zero(out);

  Adam adam(model, cfg.learning_rate);
  MlpModel best = model;
  double best_val = mse(model.forward_normalized(xv), yv);
  std::size_t best_epoch = 0, epoch = 0, since_best = 0;
  std::vector<std::size_t> order(static_cast<std::size_t>(xn.rows()));
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd xb, yb;

  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      xb.resize(Eigen::Index(b), in);
      yb.resize(Eigen::Index(b), out);
      for (std::size_t i = 0; i < b; ++i) {
        xb.row(Eigen::Index(i)) = xn.row(Eigen::Index(order[start + i]));
        yb.row(Eigen::Index(i)) = yn.row(Eigen::Index(order[start + i]));
      }
      adam.step(model, batch_gradient(model, xb, yb));
    }
    const double val_mse = mse(model.forward_normalized(xv), yv);
    if (!std::isfinite(val_mse))
      throw Error(ErrorKind::training_failure, "non-finite validation loss at epoch " + std::to_string(epoch) +
                                                   " (learning_rate " + std::to_string(cfg.learning_rate) + ")");
    if (val_mse < best_val) {
      best_val = val_mse;
      best = model;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  log().debug("fit: {} rows, stopped after {} epochs, best epoch {} val mse {:.3e}", n, std::min(epoch, cfg.max_epochs),
              best_epoch, best_val);

  best.meta = {{"topology_hash", train.topology_hash},
               {"train_config", cfg.to_json()},
               {"seed", cfg.seed},
               {"train_rows", n},
               {"best_epoch", best_epoch},
               {"best_validation_mse", best_val},
               {"feature_names", train.feature_names},
               {"target_names", train.target_names}};
  return best;
}

Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& x_rows) {
  return model.y_norm.invert(model.forward_normalized(model.x_norm.apply(x_rows)));
}

EvalMetrics evaluate(const MlpModel& model, const Dataset& test) {
  if (test.rows() == 0) throw Error(ErrorKind::insufficient_data, "empty test set");
  if (static_cast<std::size_t>(test.Y.cols()) != model.outputs()) dims("test targets do not match model outputs");
  const Eigen::MatrixXd pred = predict(model, test.X);
  EvalMetrics m;
  m.mse = mse(model.y_norm.apply(pred), model.y_norm.apply(test.Y));
  const auto rows = test.Y.rows(), cols = test.Y.cols();
  m.per_pair_rel_err.assign(std::size_t(cols), 0.0);
  m.per_sample_rel_err.assign(std::size_t(rows), 0.0);
  std::vector<std::size_t> col_count(std::size_t(cols), 0);
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    double row_sum = 0.0;
    std::size_t row_count = 0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double y = test.Y(r, c);
      if (!(y > 0.0)) continue;
      const double e = std::abs(pred(r, c) - y) / y;
      total += e;
      ++count;
      row_sum += e;
      ++row_count;
      m.per_pair_rel_err[std::size_t(c)] += e;
      ++col_count[std::size_t(c)];
    }
    m.per_sample_rel_err[std::size_t(r)] = row_count ? row_sum / double(row_count) : 0.0;
  }
  for (std::size_t c = 0; c < col_count.size(); ++c)
    if (col_count[c]) m.per_pair_rel_err[c] /= double(col_count[c]);
  m.mean_rel_err = count ? total / double(count) : 0.0;
  return m;
}

std::vector<CurvePoint> learning_curve(const Dataset& ds, const std::vector<std::size_t>& sizes,
                                       const TrainConfig& cfg, std::size_t test_size) {
  if (sizes.empty()) throw Error(ErrorKind::invalid_argument, "no training sizes given");
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw Error(ErrorKind::invalid_argument, "sizes must be ascending");
  if (sizes.back() + test_size > ds.rows())
    throw Error(ErrorKind::insufficient_data, "learning curve needs " + std::to_string(sizes.back() + test_size) +
                                                  " rows, dataset has " + std::to_string(ds.rows()));
  std::vector<std::size_t> idx(ds.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(substream_seed(cfg.seed, 0xC0CAULL));
  shuffle(idx, rng);
  const Dataset test = ds.select({idx.begin(), idx.begin() + std::ptrdiff_t(test_size)});
  std::vector<CurvePoint> curve;
  for (std::size_t size : sizes) {
    const auto first = idx.begin() + std::ptrdiff_t(test_size);
    const MlpModel model = fit(ds.select({first, first + std::ptrdiff_t(size)}), cfg);
    const EvalMetrics m = evaluate(model, test);
    curve.push_back({size, m.mse, m.mean_rel_err});
    log().info("learning curve: {} rows -> mse {:.4e}, mean rel err {:.4f}", size, m.mse, m.mean_rel_err);
  }
  return curve;
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw Error(ErrorKind::invalid_argument, "window must be positive");
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += values[k];
    out.push_back(s / double(i + 1 - lo));
  }
  return out;
}

nlohmann::json to_json(const MlpModel& model) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "mlp_model"},
          {"activation", "sigmoid"},
          {"W1", matrix_json(model.W1)},
          {"b1", vector_json(model.b1)},
          {"W2", matrix_json(model.W2)},
          {"b2", vector_json(model.b2)},
          {"x_norm", {{"mean", vector_json(model.x_norm.mean.transpose())}, {"std", vector_json(model.x_norm.stddev.transpose())}}},
          {"y_norm", {{"mean", vector_json(model.y_norm.mean.transpose())}, {"std", vector_json(model.y_norm.stddev.transpose())}}},
          {"meta", model.meta}};
}

MlpModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("kind", "") != "mlp_model" || j.value("schema_version", 0) != kSchemaVersion)
    schema("expected an mlp_model document");
  try {
    MlpModel m;
    m.W1 = matrix_from(j.at("W1"));
    m.b1 = vector_from(j.at("b1"));
    m.W2 = matrix_from(j.at("W2"));
    m.b2 = vector_from(j.at("b2"));
    m.x_norm = {row_from(j.at("x_norm").at("mean")), row_from(j.at("x_norm").at("std"))};
    m.y_norm = {row_from(j.at("y_norm").at("mean")), row_from(j.at("y_norm").at("std"))};
    m.meta = j.value("meta", nlohmann::json::object());
    if (m.b1.size() != m.W1.rows() || m.W2.cols() != m.W1.rows() || m.b2.size() != m.W2.rows() ||
        m.x_norm.mean.size() != m.W1.cols() || m.x_norm.stddev.size() != m.W1.cols() ||
        m.y_norm.mean.size() != m.W2.rows() || m.y_norm.stddev.size() != m.W2.rows())
      schema("model dimensions are inconsistent");
    if ((m.x_norm.stddev.array() <= 0.0).any() || (m.y_norm.stddev.array() <= 0.0).any())
      schema("normalization std must be > 0");
    return m;
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("malformed model: ") + e.what());
  }
}

}  // namespace kdn
