#pragma once

// Prototype classification with unlabeled-data center refinement.
//
//   c_m   = mean of the labeled vectors of class m
//   P(m|v) = softmax_m(-||v - c_m||_2)
//   c'_m  = alpha * c_m + (1 - alpha) * mean{v_j : argmax P(.|v_j) = m}
//
// Classes with no unlabeled vector assigned keep c'_m = c_m.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/subcategory.hpp"

namespace thermoproto {

using Vector = std::vector<double>;

struct LabeledVector {
  Vector v;
  SubcategoryId cls;
};

inline double distance(std::span<const double> v, std::span<const double> c) {
  require(v.size() == c.size(), "distance: vector lengths differ (" + std::to_string(v.size()) + " vs " +
                                    std::to_string(c.size()) + ")");
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - c[i];
    ss += d * d;
  }
  return std::sqrt(ss);
}

struct Posterior {
  std::vector<double> probs;  // aligned with PrototypeModel::classes()
  SubcategoryId predicted;
  std::size_t predicted_pos = 0;
};

class PrototypeModel {
 public:
  PrototypeModel(std::vector<SubcategoryId> classes, std::vector<Vector> centers_labeled, double alpha)
      : PrototypeModel(classes, centers_labeled, centers_labeled, alpha) {}

  PrototypeModel(std::vector<SubcategoryId> classes, std::vector<Vector> centers_labeled,
                 std::vector<Vector> centers_refined, double alpha)
      : classes_(std::move(classes)),
        centers_labeled_(std::move(centers_labeled)),
        centers_refined_(std::move(centers_refined)),
        alpha_(alpha) {
    require(!classes_.empty(), "prototype model needs at least one class");
    require(centers_labeled_.size() == classes_.size() && centers_refined_.size() == classes_.size(),
            "prototype model: one labeled and one refined center per class");
    require(alpha_ >= 0.0 && alpha_ <= 1.0, "alpha must lie in [0, 1]");
    feature_dim_ = centers_labeled_.front().size();
    require(feature_dim_ >= 1, "prototype centers must be non-empty");
    for (std::size_t k = 0; k < classes_.size(); ++k) {
      for (std::size_t j = 0; j < k; ++j)
        require(classes_[j] != classes_[k], "duplicate class " + classes_[k].name() + " in prototype model");
      for (const auto* c : {&centers_labeled_[k], &centers_refined_[k]}) {
        require(c->size() == feature_dim_, "prototype centers must all have the same length");
        for (double x : *c) require(std::isfinite(x), "prototype center has a non-finite entry");
      }
    }
  }

  const std::vector<SubcategoryId>& classes() const { return classes_; }
  const std::vector<Vector>& centers_labeled() const { return centers_labeled_; }
  const std::vector<Vector>& centers_refined() const { return centers_refined_; }
  const std::vector<Vector>& centers(bool refined) const { return refined ? centers_refined_ : centers_labeled_; }
  double alpha() const { return alpha_; }
  std::size_t feature_dim() const { return feature_dim_; }

 private:
  std::vector<SubcategoryId> classes_;
  std::vector<Vector> centers_labeled_;
  std::vector<Vector> centers_refined_;
  double alpha_;
  std::size_t feature_dim_ = 0;
};

// Per-class means, classes ordered by subcategory index. Every class listed in
// `required` must have at least one vector.
inline PrototypeModel compute_centers(std::span<const LabeledVector> labeled, std::span<const SubcategoryId> required,
                                      double alpha = 1.0) {
  std::map<SubcategoryId, std::pair<Vector, std::size_t>> acc;
  for (const auto& c : required) acc.try_emplace(c);
  std::size_t dim = 0;
  for (const auto& lv : labeled) {
    if (dim == 0) dim = lv.v.size();
    require(lv.v.size() == dim && dim > 0, "labeled vectors must share one non-zero length");
    auto& [sum, n] = acc[lv.cls];
    if (sum.empty()) sum.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += lv.v[i];
    ++n;
  }
  std::vector<SubcategoryId> classes;
  std::vector<Vector> centers;
  for (auto& [cls, entry] : acc) {
    auto& [sum, n] = entry;
    if (n == 0) throw ValidationError("class " + cls.name() + " has no labeled samples; its center is undefined");
    for (auto& x : sum) x /= static_cast<double>(n);
    classes.push_back(cls);
    centers.push_back(std::move(sum));
  }
  require(!classes.empty(), "compute_centers needs at least one labeled vector");
  return PrototypeModel(std::move(classes), std::move(centers), alpha);
}

inline PrototypeModel compute_centers(std::span<const LabeledVector> labeled, double alpha = 1.0) {
  return compute_centers(labeled, std::span<const SubcategoryId>{}, alpha);
}

inline Posterior posterior_over(std::span<const double> v, const std::vector<SubcategoryId>& classes,
                                const std::vector<Vector>& centers) {
  std::vector<double> d(centers.size());
  std::size_t best = 0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    d[k] = distance(v, centers[k]);
    if (d[k] < d[best] || (d[k] == d[best] && classes[k].index() < classes[best].index())) best = k;
  }
  // Max-shifted softmax over -d: the nearest class gets exp(0) = 1.
  Posterior p;
  p.probs.resize(d.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    p.probs[k] = std::exp(d[best] - d[k]);
    sum += p.probs[k];
  }
  for (auto& x : p.probs) x /= sum;
  p.predicted = classes[best];
  p.predicted_pos = best;
  return p;
}

inline Posterior posterior(std::span<const double> v, const PrototypeModel& model, bool use_refined) {
  require(v.size() == model.feature_dim(), "feature length " + std::to_string(v.size()) +
                                               " does not match model dimension " + std::to_string(model.feature_dim()));
  return posterior_over(v, model.classes(), model.centers(use_refined));
}

inline Posterior classify(std::span<const double> v, const PrototypeModel& model) { return posterior(v, model, true); }

// Assign every unlabeled vector to its most probable class, then blend each
// labeled center with the mean of its assigned vectors. The first pass assigns
// against the labeled centers; further passes (iterations > 1) reassign
// against the current refined centers and blend with c_m again.
inline PrototypeModel refine_centers(const PrototypeModel& model, std::span<const Vector> unlabeled, int iterations = 1) {
  require(iterations >= 1, "refinement needs at least one iteration");
  const auto& classes = model.classes();
  const std::size_t dim = model.feature_dim();
  const double alpha = model.alpha();
  std::vector<Vector> refined = model.centers_labeled();

  for (int it = 0; it < iterations; ++it) {
    std::vector<Vector> sums(classes.size(), Vector(dim, 0.0));
    std::vector<std::size_t> counts(classes.size(), 0);
    for (const auto& v : unlabeled) {
      require(v.size() == dim, "unlabeled vector length does not match model dimension");
      const auto k = posterior_over(v, classes, it == 0 ? model.centers_labeled() : refined).predicted_pos;
      for (std::size_t i = 0; i < dim; ++i) sums[k][i] += v[i];
      ++counts[k];
    }
    std::vector<Vector> next = model.centers_labeled();
    for (std::size_t k = 0; k < classes.size(); ++k) {
      if (counts[k] == 0) continue;
      for (std::size_t i = 0; i < dim; ++i)
        next[k][i] = alpha * model.centers_labeled()[k][i] + (1.0 - alpha) * (sums[k][i] / static_cast<double>(counts[k]));
    }
    refined = std::move(next);
  }
  return PrototypeModel(classes, model.centers_labeled(), std::move(refined), alpha);
}

// Supervised model: refined centers are the labeled centers, alpha = 1.
inline PrototypeModel supervised_model(const PrototypeModel& model) {
  return PrototypeModel(model.classes(), model.centers_labeled(), 1.0);
}

inline PrototypeModel with_alpha(const PrototypeModel& model, double alpha) {
  return PrototypeModel(model.classes(), model.centers_labeled(), alpha);
}

inline nlohmann::json to_json(const PrototypeModel& model) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : model.classes())
    classes.push_back({{"equipment_type", std::string(to_string(c.equipment_type))}, {"status", std::string(to_string(c.status))}});
  return {{"alpha", model.alpha()},
          {"feature_dim", model.feature_dim()},
          {"classes", classes},
          {"centers_labeled", model.centers_labeled()},
          {"centers_refined", model.centers_refined()}};
}

inline PrototypeModel prototype_model_from_json(const nlohmann::json& j) {
  try {
    std::vector<SubcategoryId> classes;
    for (const auto& c : j.at("classes"))
      classes.push_back({parse_equipment_type(c.at("equipment_type").get<std::string>()), parse_status(c.at("status").get<std::string>())});
    PrototypeModel model(std::move(classes), j.at("centers_labeled").get<std::vector<Vector>>(),
                         j.at("centers_refined").get<std::vector<Vector>>(), j.at("alpha").get<double>());
    require(model.feature_dim() == j.at("feature_dim").get<std::size_t>(), "feature_dim does not match center length");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
}

}  // namespace thermoproto
