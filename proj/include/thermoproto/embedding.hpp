#pragma once

// Feature-to-prototype embedding: either the identity or a one-hidden-layer
// perceptron z = W2 tanh(W1 v + b1) + b2, trained episodically with the
// prototype negative log-likelihood and plain gradient descent.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/prototype.hpp"
#include "thermoproto/rng.hpp"

namespace thermoproto {

enum class EmbedderKind { Identity, Mlp };

struct MlpParams {
  Eigen::MatrixXd w1;  // H x G
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // D x H
  Eigen::VectorXd b2;  // D

  static MlpParams zeros(Eigen::Index g, Eigen::Index h, Eigen::Index d) {
    return {Eigen::MatrixXd::Zero(h, g), Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Zero(d, h), Eigen::VectorXd::Zero(d)};
  }

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index output_dim() const { return w2.rows(); }
};

class Embedder {
 public:
  static Embedder identity() { return Embedder(); }

  static Embedder mlp(MlpParams params) {
    require(params.w1.rows() == params.b1.size() && params.w2.cols() == params.w1.rows() &&
                params.w2.rows() == params.b2.size(),
            "inconsistent MLP parameter shapes");
    require(params.w1.cols() >= 1 && params.w1.rows() >= 1 && params.w2.rows() >= 1, "MLP dimensions must be positive");
    require(params.w1.allFinite() && params.b1.allFinite() && params.w2.allFinite() && params.b2.allFinite(),
            "MLP parameters must be finite");
    Embedder e;
    e.kind_ = EmbedderKind::Mlp;
    e.params_ = std::move(params);
    return e;
  }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn row-major: W1, b1, W2, b2.
  static Embedder mlp_random(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
    require(input_dim >= 1 && hidden_dim >= 1 && output_dim >= 1, "MLP dimensions must be positive");
    Xoshiro256 rng(seed);
    auto p = MlpParams::zeros(input_dim, hidden_dim, output_dim);
    const double r1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (Eigen::Index i = 0; i < p.w1.rows(); ++i)
      for (Eigen::Index j = 0; j < p.w1.cols(); ++j) p.w1(i, j) = rng.uniform(-r1, r1);
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = rng.uniform(-r1, r1);
    for (Eigen::Index i = 0; i < p.w2.rows(); ++i)
      for (Eigen::Index j = 0; j < p.w2.cols(); ++j) p.w2(i, j) = rng.uniform(-r2, r2);
    for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2(i) = rng.uniform(-r2, r2);
    return mlp(std::move(p));
  }

  EmbedderKind kind() const { return kind_; }
  bool is_identity() const { return kind_ == EmbedderKind::Identity; }
  const MlpParams& params() const { return params_; }
  MlpParams& mutable_params() { return params_; }

  Vector operator()(std::span<const double> v) const {
    if (is_identity()) return Vector(v.begin(), v.end());
    require(static_cast<Eigen::Index>(v.size()) == params_.input_dim(),
            "embed: input length " + std::to_string(v.size()) + " does not match G = " + std::to_string(params_.input_dim()));
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    const Eigen::VectorXd z = params_.w2 * (params_.w1 * x + params_.b1).array().tanh().matrix() + params_.b2;
    return Vector(z.data(), z.data() + z.size());
  }

 private:
  EmbedderKind kind_ = EmbedderKind::Identity;
  MlpParams params_;
};

inline Vector embed(const Embedder& e, std::span<const double> v) { return e(v); }

struct Episode {
  std::vector<LabeledVector> support;
  std::vector<LabeledVector> query;
};

struct LossAndGradient {
  double loss = 0.0;
  MlpParams grad;  // zero-sized for the identity embedder
};

namespace detail {

struct ForwardCache {
  Eigen::VectorXd input;
  Eigen::VectorXd hidden;  // tanh activations
  Eigen::VectorXd output;
};

inline ForwardCache forward(const Embedder& e, const Vector& v) {
  ForwardCache c;
  c.input = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (e.is_identity()) {
    c.output = c.input;
    return c;
  }
  const auto& p = e.params();
  require(c.input.size() == p.input_dim(), "episode vector length does not match embedder input dimension");
  c.hidden = (p.w1 * c.input + p.b1).array().tanh().matrix();
  c.output = p.w2 * c.hidden + p.b2;
  return c;
}

inline void backward(const MlpParams& p, const ForwardCache& c, const Eigen::VectorXd& grad_out, MlpParams& grad) {
  grad.w2.noalias() += grad_out * c.hidden.transpose();
  grad.b2 += grad_out;
  const Eigen::VectorXd grad_pre = ((p.w2.transpose() * grad_out).array() * (1.0 - c.hidden.array().square())).matrix();
  grad.w1.noalias() += grad_pre * c.input.transpose();
  grad.b1 += grad_pre;
}

}  // namespace detail

// Mean over query points of -log P(true class | embedded query), with P the
// softmax over negative Euclidean distances to prototypes built from the
// embedded support set. Returns the analytic gradient for MLP embedders.
inline LossAndGradient proto_loss(const Embedder& e, const Episode& ep) {
  require(!ep.query.empty(), "episode needs at least one query point");
  std::map<SubcategoryId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ep.support.size(); ++i) members[ep.support[i].cls].push_back(i);
  require(members.size() >= 2, "episode needs at least two distinct support classes");
  for (const auto& q : ep.query)
    if (!members.count(q.cls)) throw ValidationError("query class " + q.cls.name() + " is missing from the support set");

  std::vector<detail::ForwardCache> support_fw, query_fw;
  for (const auto& s : ep.support) support_fw.push_back(detail::forward(e, s.v));
  for (const auto& q : ep.query) query_fw.push_back(detail::forward(e, q.v));
  const Eigen::Index dim = support_fw.front().output.size();

  std::vector<SubcategoryId> classes;
  std::vector<Eigen::VectorXd> protos;
  std::map<SubcategoryId, std::size_t> pos;
  for (const auto& [cls, idx] : members) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(dim);
    for (auto i : idx) p += support_fw[i].output;
    p /= static_cast<double>(idx.size());
    pos[cls] = classes.size();
    classes.push_back(cls);
    protos.push_back(std::move(p));
  }

  const auto k_classes = classes.size();
  const double inv_q = 1.0 / static_cast<double>(ep.query.size());
  LossAndGradient out;
  if (!e.is_identity()) {
    const auto& p = e.params();
    out.grad = MlpParams::zeros(p.input_dim(), p.hidden_dim(), p.output_dim());
  }
  std::vector<Eigen::VectorXd> grad_proto(k_classes, Eigen::VectorXd::Zero(dim));

  for (std::size_t qi = 0; qi < ep.query.size(); ++qi) {
    const auto& z = query_fw[qi].output;
    std::vector<double> d(k_classes);
    std::vector<Eigen::VectorXd> diff(k_classes);
    double d_min = 0.0;
    for (std::size_t k = 0; k < k_classes; ++k) {
      diff[k] = z - protos[k];
      d[k] = diff[k].norm();
      if (k == 0 || d[k] < d_min) d_min = d[k];
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < k_classes; ++k) sum += std::exp(d_min - d[k]);
    const std::size_t y = pos.at(ep.query[qi].cls);
    out.loss += inv_q * (d[y] - d_min + std::log(sum));

    if (e.is_identity()) continue;
    Eigen::VectorXd grad_z = Eigen::VectorXd::Zero(dim);
    for (std::size_t k = 0; k < k_classes; ++k) {
      if (d[k] == 0.0) continue;  // the norm has no gradient at 0; take the zero subgradient
      const double prob = std::exp(d_min - d[k]) / sum;
      const double grad_d = inv_q * ((k == y ? 1.0 : 0.0) - prob);
      const Eigen::VectorXd unit = diff[k] / d[k];
      grad_z += grad_d * unit;
      grad_proto[k] -= grad_d * unit;
    }
    detail::backward(e.params(), query_fw[qi], grad_z, out.grad);
  }

  if (!e.is_identity()) {
    for (std::size_t k = 0; k < k_classes; ++k) {
      const auto& idx = members.at(classes[k]);
      const Eigen::VectorXd grad_member = grad_proto[k] / static_cast<double>(idx.size());
      for (auto i : idx) detail::backward(e.params(), support_fw[i], grad_member, out.grad);
    }
  }
  return out;
}

struct EmbedderTrainConfig {
  int hidden = 32;
  int output = 16;
  int episodes = 200;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    require(hidden >= 1 && output >= 1, "embedder hidden and output sizes must be >= 1");
    require(episodes >= 0, "episode count must be >= 0");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be > 0");
  }
};

struct TrainedEmbedder {
  Embedder embedder;
  std::vector<double> episode_losses;  // loss of each episode before its update
};

// Episodes draw, for each class, one support and one query vector without
// replacement. Weights start from Embedder::mlp_random(seed); episode sampling
// uses an independent stream derived from the same seed.
inline TrainedEmbedder train_embedder(std::span<const LabeledVector> labeled, const EmbedderTrainConfig& cfg) {
  cfg.validate();
  std::map<SubcategoryId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labeled.size(); ++i) by_class[labeled[i].cls].push_back(i);
  require(by_class.size() >= 2, "embedder training needs at least two classes");
  for (const auto& [cls, idx] : by_class)
    require(idx.size() >= 2, "embedder training needs at least 2 labeled samples of class " + cls.name());
  const auto input_dim = labeled.front().v.size();
  for (const auto& lv : labeled) require(lv.v.size() == input_dim, "labeled vectors must share one length");

  TrainedEmbedder out{Embedder::mlp_random(static_cast<int>(input_dim), cfg.hidden, cfg.output, cfg.seed), {}};
  Xoshiro256 rng(derive_seed(cfg.seed, 1));
  for (int e = 0; e < cfg.episodes; ++e) {
    Episode ep;
    for (auto& [cls, idx] : by_class) {
      // Partial Fisher-Yates: bring two random members to the front.
      for (std::size_t i = 0; i < 2; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      ep.support.push_back(labeled[idx[0]]);
      ep.query.push_back(labeled[idx[1]]);
    }
    auto lg = proto_loss(out.embedder, ep);
    out.episode_losses.push_back(lg.loss);
    auto& p = out.embedder.mutable_params();
    p.w1 -= cfg.learning_rate * lg.grad.w1;
    p.b1 -= cfg.learning_rate * lg.grad.b1;
    p.w2 -= cfg.learning_rate * lg.grad.w2;
    p.b2 -= cfg.learning_rate * lg.grad.b2;
  }
  return out;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  auto v = j.get<std::vector<std::vector<double>>>();
  require(static_cast<Eigen::Index>(v.size()) == rows, "embedder matrix has the wrong number of rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    require(static_cast<Eigen::Index>(v[static_cast<std::size_t>(i)].size()) == cols, "embedder matrix has the wrong number of columns");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = v[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index n) {
  auto v = j.get<std::vector<double>>();
  require(static_cast<Eigen::Index>(v.size()) == n, "embedder bias has the wrong length");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

}  // namespace detail

inline nlohmann::json to_json(const Embedder& e) {
  if (e.is_identity()) return {{"kind", "identity"}};
  const auto& p = e.params();
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"kind", "mlp"},
          {"dims", {p.input_dim(), p.hidden_dim(), p.output_dim()}},
          {"W1", detail::matrix_to_json(p.w1)},
          {"b1", vec(p.b1)},
          {"W2", detail::matrix_to_json(p.w2)},
          {"b2", vec(p.b2)}};
}

inline Embedder embedder_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "identity") return Embedder::identity();
    require(kind == "mlp", "unknown embedder kind \"" + kind + "\"");
    const auto dims = j.at("dims").get<std::vector<Eigen::Index>>();
    require(dims.size() == 3 && dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, "embedder dims must be [G,H,D], all positive");
    MlpParams p{detail::matrix_from_json(j.at("W1"), dims[1], dims[0]), detail::vector_from_json(j.at("b1"), dims[1]),
                detail::matrix_from_json(j.at("W2"), dims[2], dims[1]), detail::vector_from_json(j.at("b2"), dims[2])};
    return Embedder::mlp(std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed embedder: ") + e.what());
  }
}

}  // namespace thermoproto
