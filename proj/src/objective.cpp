#include "ersinv/objective.hpp"

#include <cmath>
#include <sstream>

namespace ersinv {

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (!std::isfinite(beta)) throw Error(ErrorCode::InvalidArgument, "beta must be finite");
}

std::string LossConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "alpha=" << alpha << " beta=" << beta << " lambda=" << lambda;
  return os.str();
}

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::SD: return "SD";
    case LossVariant::OS: return "OS";
    case LossVariant::OD: return "OD";
    case LossVariant::NA: return "NA";
  }
  return "?";
}

LossVariant parse_loss_variant(std::string_view s) {
  for (auto v : {LossVariant::SD, LossVariant::OS, LossVariant::OD, LossVariant::NA})
    if (s == to_string(v)) return v;
  throw Error(ErrorCode::InvalidArgument, "unknown loss variant '" + std::string(s) + "' (SD, OS, OD, NA)");
}

LossConfig loss_config(LossVariant v) {
  LossConfig c;
  const bool smooth = v == LossVariant::SD || v == LossVariant::OS;
  const bool depth = v == LossVariant::SD || v == LossVariant::OD;
  c.alpha = smooth ? 0.2 : 0.0;
  c.beta = depth ? 1.0 : 0.0;
  return c;
}

double depth_weight(std::size_t row, const LossConfig& cfg) {
  return std::pow(static_cast<double>(row) + cfg.lambda, cfg.beta / 2.0);
}

Field depth_weight_map(std::size_t height, std::size_t width, const LossConfig& cfg) {
  Field m(height, width);
  for (std::size_t i = 0; i < height; ++i) {
    const double w = depth_weight(i, cfg);
    for (std::size_t j = 0; j < width; ++j) m(i, j) = w;
  }
  return m;
}

namespace {

void check_pair(const Field& pred, const Field& truth) {
  if (!pred.same_shape(truth))
    throw Error(ErrorCode::DimensionMismatch, "prediction " + std::to_string(pred.rows()) + "x" +
                                                  std::to_string(pred.cols()) + " vs truth " +
                                                  std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double value_term(const Field& pred, const Field& truth, const LossConfig& cfg) {
  check_pair(pred, truth);
  double v = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    const double w = depth_weight(i, cfg);
    double row = 0.0;
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      const double e = pred(i, j) - truth(i, j);
      row += e * e;
    }
    v += w * row;
  }
  return v;
}

double smooth_term(const Field& pred) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i)
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      if (i + 1 < pred.rows()) s += std::abs(pred(i + 1, j) - pred(i, j));
      if (j + 1 < pred.cols()) s += std::abs(pred(i, j + 1) - pred(i, j));
    }
  return s;
}

double total_loss(const Field& pred, const Field& truth, const LossConfig& cfg) {
  check_pair(pred, truth);
  if (pred.size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty field");
  const double z = static_cast<double>(pred.size());
  return (value_term(pred, truth, cfg) + cfg.alpha * smooth_term(pred)) / z;
}

Field loss_grad(const Field& pred, const Field& truth, const LossConfig& cfg) {
  check_pair(pred, truth);
  if (pred.size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty field");
  const double inv_z = 1.0 / static_cast<double>(pred.size());
  Field g(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    const double w = depth_weight(i, cfg);
    for (std::size_t j = 0; j < pred.cols(); ++j) g(i, j) = 2.0 * w * (pred(i, j) - truth(i, j));
  }
  if (cfg.alpha != 0.0) {
    for (std::size_t i = 0; i < pred.rows(); ++i)
      for (std::size_t j = 0; j < pred.cols(); ++j) {
        if (i + 1 < pred.rows()) {
          const double s = cfg.alpha * sign(pred(i + 1, j) - pred(i, j));
          g(i + 1, j) += s;
          g(i, j) -= s;
        }
        if (j + 1 < pred.cols()) {
          const double s = cfg.alpha * sign(pred(i, j + 1) - pred(i, j));
          g(i, j + 1) += s;
          g(i, j) -= s;
        }
      }
  }
  for (auto& v : g.data()) v *= inv_z;
  return g;
}

namespace {

Field plane_field(const nn::Tensor4& t, std::size_t n) {
  Field f(t.h(), t.w());
  std::copy(t.plane(n, 0), t.plane(n, 0) + t.h() * t.w(), f.data().begin());
  return f;
}

}  // namespace

double batch_loss(const nn::Tensor4& pred, const nn::Tensor4& truth, const LossConfig& cfg, nn::Tensor4* grad) {
  if (!(pred.shape() == truth.shape()) || pred.c() != 1 || pred.n() == 0)
    throw Error(ErrorCode::DimensionMismatch,
                "batch loss needs matching N x 1 x H x W tensors, got " + pred.shape().str() + " and " +
                    truth.shape().str());
  const double inv_n = 1.0 / static_cast<double>(pred.n());
  if (grad) *grad = nn::Tensor4(pred.shape());
  double total = 0.0;
  for (std::size_t n = 0; n < pred.n(); ++n) {
    const Field p = plane_field(pred, n), t = plane_field(truth, n);
    total += total_loss(p, t, cfg);
    if (grad) {
      const Field g = loss_grad(p, t, cfg);
      double* dst = grad->plane(n, 0);
      for (std::size_t q = 0; q < g.size(); ++q) dst[q] = g.data()[q] * inv_n;
    }
  }
  return total * inv_n;
}

}  // namespace ersinv
