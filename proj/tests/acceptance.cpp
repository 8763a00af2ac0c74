// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance <path to thermoproto binary>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "test_util.hpp"

using namespace thermoproto;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> random_samples(Xoshiro256& rng, std::size_t n) {
  const double centre = rng.uniform(-10.0, 80.0), spread = rng.uniform(0.1, 8.0);
  std::vector<double> s(n);
  for (auto& x : s) x = rng.normal(centre, spread);
  return s;
}

// 1. KDE integrates to 1 and matches a brute-force sum.
Outcome kde_correctness() {
  const auto start = std::chrono::steady_clock::now();
  Xoshiro256 rng(101);
  double worst_mass = 0.0, worst_point = 0.0;
  for (int set = 0; set < 100; ++set) {
    const auto samples = random_samples(rng, 1 + rng.below(500));
    const double w = rng.uniform(0.05, 2.0);
    const KdeEstimator est(samples, w);
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *lo_it - 8 * w, hi = *hi_it + 8 * w;
    const int n = 20000 + static_cast<int>((hi - lo) / w) * 20;
    const double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) integral += (i == 0 || i == n ? 0.5 : 1.0) * kde_at(est, lo + i * h);
    worst_mass = std::max(worst_mass, std::abs(integral * h - 1.0));
    for (int p = 0; p < 20; ++p) {
      const double x = rng.uniform(lo, hi);
      long double sum = 0;
      for (double xi : samples) {
        const long double u = (static_cast<long double>(x) - xi) / w;
        sum += std::exp(-0.5L * u * u) / std::sqrt(2.0L * 3.14159265358979323846264338327950288L);
      }
      const double brute = static_cast<double>(sum / (samples.size() * static_cast<long double>(w)));
      worst_point = std::max(worst_point, std::abs(kde_at(est, x) - brute));
    }
  }
  const double t = seconds_since(start);
  return {worst_mass < 1e-6 && worst_point < 1e-12 && t < 10.0,
          fmt("max |integral-1| %.2e, max |kde-brute| %.2e, %.1f s", worst_mass, worst_point, t)};
}

// 2. Histogram probabilities, the CDF difference identity and full-range mass.
Outcome histogram_cdf() {
  Xoshiro256 rng(202);
  double worst_sum = 0.0;
  bool identity = true, full = true;
  for (int set = 0; set < 200; ++set) {
    const auto samples = random_samples(rng, 1 + rng.below(400));
    const auto h = histogram(samples, rng.uniform(-1.0, 1.0), rng.uniform(0.05, 3.0));
    double sum = 0.0;
    for (double p : h.probs()) sum += p;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    full = full && interval_probability(h, h.theta_min(), h.theta_max()) == 1.0;
    for (int k = 0; k < 50; ++k) {
      double a = rng.uniform(h.theta_min(), h.theta_max() + 1), b = rng.uniform(h.theta_min(), h.theta_max() + 1);
      if (a > b) std::swap(a, b);
      const double lhs = interval_probability(h, a, b);
      const double rhs = interval_probability(h, h.theta_min(), b) - interval_probability(h, h.theta_min(), a);
      identity = identity && lhs == rhs;
    }
  }
  return {worst_sum < 1e-12 && identity && full,
          fmt("max |sum p - 1| %.2e, identity %s, F(theta_min, theta_max) = 1 %s", worst_sum, identity ? "exact" : "broken",
              full ? "yes" : "no")};
}

// Brute-force version of the prototype equations over plain arrays.
struct BruteModel {
  std::vector<int> classes;
  std::vector<Vector> centers, refined;
};

double brute_dist(const Vector& a, const Vector& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<long double>(a[i]) - b[i]) * (static_cast<long double>(a[i]) - b[i]);
  return static_cast<double>(std::sqrt(s));
}

std::size_t brute_pick(const Vector& v, const std::vector<Vector>& centers) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < centers.size(); ++k)
    if (brute_dist(v, centers[k]) < brute_dist(v, centers[best])) best = k;
  return best;
}

BruteModel brute_fit(const std::vector<std::pair<Vector, int>>& labeled, const std::vector<Vector>& unlabeled, double alpha) {
  BruteModel b;
  for (int m = 0; m < kNumSubcategories; ++m) {
    Vector sum;
    int n = 0;
    for (const auto& [v, c] : labeled) {
      if (c != m) continue;
      if (sum.empty()) sum.assign(v.size(), 0.0);
      for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
      ++n;
    }
    if (n == 0) continue;
    for (auto& x : sum) x /= n;
    b.classes.push_back(m);
    b.centers.push_back(sum);
  }
  b.refined = b.centers;
  for (std::size_t k = 0; k < b.classes.size(); ++k) {
    Vector sum(b.centers[k].size(), 0.0);
    int n = 0;
    for (const auto& v : unlabeled) {
      if (brute_pick(v, b.centers) != k) continue;
      for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
      ++n;
    }
    if (n == 0) continue;
    for (std::size_t i = 0; i < sum.size(); ++i) b.refined[k][i] = alpha * b.centers[k][i] + (1 - alpha) * (sum[i] / n);
  }
  return b;
}

// 3. Exhaustive small instances against the brute-force model.
Outcome prototype_oracle() {
  Xoshiro256 rng(303);
  double worst = 0.0;
  int instances = 0, empty_fallbacks = 0, alpha_one = 0;
  bool labels_match = true, collapse = true;
  for (int k = 1; k <= 4; ++k)
    for (int total = k; total <= 6; ++total)
      for (std::size_t dim = 1; dim <= 3; ++dim)
        for (double alpha : {0.0, 0.3, 0.5, 1.0})
          for (int rep = 0; rep < 40; ++rep) {
            ++instances;
            std::vector<std::pair<Vector, int>> lab;
            std::vector<LabeledVector> labeled;
            for (int c = 0; c < k; ++c) {
              Vector v(dim);
              for (auto& x : v) x = static_cast<double>(rng.below(5)) - 2.0;
              const int m = static_cast<int>((c * 3 + rep) % kNumSubcategories);
              lab.push_back({v, m});
              labeled.push_back({v, SubcategoryId::from_index(m)});
            }
            std::vector<Vector> unlabeled;
            for (int j = k; j < total; ++j) {
              Vector v(dim);
              for (auto& x : v) x = (static_cast<double>(rng.below(9)) - 4.0) * 0.5;
              unlabeled.push_back(v);
            }
            const auto b = brute_fit(lab, unlabeled, alpha);
            const auto model = refine_centers(compute_centers(labeled, alpha), unlabeled);
            if (model.classes().size() != b.classes.size()) return {false, "class sets differ"};
            for (std::size_t c = 0; c < b.classes.size(); ++c) {
              labels_match = labels_match && model.classes()[c].index() == b.classes[c];
              if (b.refined[c] == b.centers[c]) ++empty_fallbacks;
              for (std::size_t i = 0; i < dim; ++i) {
                worst = std::max(worst, std::abs(model.centers_labeled()[c][i] - b.centers[c][i]));
                worst = std::max(worst, std::abs(model.centers_refined()[c][i] - b.refined[c][i]));
              }
            }
            if (alpha == 1.0) {
              ++alpha_one;
              collapse = collapse && model.centers_refined() == model.centers_labeled();
            }
            for (int qn = 0; qn < 3; ++qn) {
              Vector v(dim);
              for (auto& x : v) x = (static_cast<double>(rng.below(9)) - 4.0) * 0.5;
              const auto p = classify(v, model);
              long double z = 0;
              for (const auto& c : b.refined) z += std::exp(-static_cast<long double>(brute_dist(v, c)));
              for (std::size_t c = 0; c < b.refined.size(); ++c)
                worst = std::max(worst, std::abs(p.probs[c] - static_cast<double>(std::exp(-static_cast<long double>(brute_dist(v, b.refined[c]))) / z)));
              labels_match = labels_match && p.predicted.index() == b.classes[brute_pick(v, b.refined)];
            }
          }
  return {worst < 1e-12 && labels_match && collapse && empty_fallbacks > 0,
          fmt("%d instances, max deviation %.2e, %d empty-assignment fallbacks, alpha=1 collapse in %d", instances, worst,
              empty_fallbacks, alpha_one)};
}

// 4. Posterior invariants on random cases.
Outcome posterior_invariants() {
  Xoshiro256 rng(404);
  double worst_sum = 0.0, worst_shift = 0.0;
  bool argmin = true, ties = true;
  const int cases = 2000;
  for (int trial = 0; trial < cases; ++trial) {
    const std::size_t dim = 1 + rng.below(6);
    const int k = 2 + static_cast<int>(rng.below(9));
    std::vector<SubcategoryId> classes;
    std::vector<Vector> centers;
    for (int m = 0; m < k; ++m) {
      classes.push_back(SubcategoryId::from_index(k - 1 - m));
      Vector c(dim);
      for (auto& x : c) x = rng.uniform(-5, 5);
      centers.push_back(c);
    }
    Vector v(dim);
    for (auto& x : v) x = rng.uniform(-5, 5);
    if (trial % 10 == 0) centers[1] = centers[0], v = centers[0];  // forced tie
    const auto p = posterior(v, PrototypeModel(classes, centers, 1.0), false);
    double sum = 0.0;
    for (double x : p.probs) sum += x;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    double best = INFINITY;
    int best_class = kNumSubcategories;
    for (int m = 0; m < k; ++m) {
      const double d = distance(v, centers[m]);
      if (d < best || (d == best && classes[m].index() < best_class)) best = d, best_class = classes[m].index();
    }
    argmin = argmin && p.predicted.index() == best_class;
    if (trial % 10 == 0) ties = ties && p.predicted.index() == std::min(classes[0].index(), classes[1].index());
    Vector t(dim);
    for (auto& x : t) x = rng.uniform(-100, 100);
    auto shifted = centers;
    for (auto& c : shifted)
      for (std::size_t i = 0; i < dim; ++i) c[i] += t[i];
    for (std::size_t i = 0; i < dim; ++i) v[i] += t[i];
    const auto q = posterior(v, PrototypeModel(classes, shifted, 1.0), false);
    for (int m = 0; m < k; ++m) worst_shift = std::max(worst_shift, std::abs(q.probs[m] - p.probs[m]));
  }
  return {worst_sum < 1e-12 && argmin && ties && worst_shift < 1e-9,
          fmt("%d cases, max |sum-1| %.2e, argmax=argmin %s, ties to lowest index %s, max shift change %.2e", cases, worst_sum,
              argmin ? "yes" : "no", ties ? "yes" : "no", worst_shift)};
}

// 5. Analytic vs central-difference gradients of the prototype loss.
Outcome gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  Xoshiro256 rng(505);
  const double delta = 1e-5;
  double worst = 0.0;
  const int networks = 60;
  for (int net = 0; net < networks; ++net) {
    const int g = 1 + static_cast<int>(rng.below(8)), h = 1 + static_cast<int>(rng.below(4)), d = 1 + static_cast<int>(rng.below(3));
    auto e = Embedder::mlp_random(g, h, d, rng());
    Episode ep;
    const int k = 2 + static_cast<int>(rng.below(3));
    for (int m = 0; m < k; ++m)
      for (auto* list : {&ep.support, &ep.query}) {
        Vector v(static_cast<std::size_t>(g));
        for (auto& x : v) x = rng.uniform(-1, 1);
        list->push_back({v, SubcategoryId::from_index(m)});
      }
    const auto grad = proto_loss(e, ep).grad;
    auto& p = e.mutable_params();
    std::vector<std::pair<double*, double>> entries;
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) entries.push_back({p.w1.data() + i, grad.w1.data()[i]});
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) entries.push_back({p.b1.data() + i, grad.b1.data()[i]});
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) entries.push_back({p.w2.data() + i, grad.w2.data()[i]});
    for (Eigen::Index i = 0; i < p.b2.size(); ++i) entries.push_back({p.b2.data() + i, grad.b2.data()[i]});
    for (auto [ptr, analytic] : entries) {
      const double saved = *ptr;
      *ptr = saved + delta;
      const double up = proto_loss(e, ep).loss;
      *ptr = saved - delta;
      const double down = proto_loss(e, ep).loss;
      *ptr = saved;
      const double numeric = (up - down) / (2 * delta);
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 30.0, fmt("%d networks, max relative error %.2e, %.2f s", networks, worst, t)};
}

// 6. Weak mode beats supervised mode on the default synthetic protocol.
Outcome weak_supervision_benefit() {
  const auto start = std::chrono::steady_clock::now();
  double total = 0.0;
  int wins = 0;
  const int seeds = 20;
  for (int s = 1; s <= seeds; ++s) {
    ExperimentConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto [sup, weak] = run_both(cfg);
    const double delta = *weak.overall.acc_average() - *sup.overall.acc_average();
    total += delta;
    wins += delta >= 0.0;
  }
  const double mean = total / seeds, t = seconds_since(start);
  return {mean > 0.0 && wins >= 13 && t < 120.0,
          fmt("mean weak - supervised %+.4f, weak >= supervised in %d/%d seeds, %.1f s", mean, wins, seeds, t)};
}

// 7. Well separated subcategories are classified perfectly.
Outcome separable_sanity() {
  int perfect = 0;
  for (int s = 1; s <= 5; ++s) {
    ExperimentConfig cfg;
    cfg.source = thermoproto::testing::separable_synth();
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto [sup, weak] = run_both(cfg);
    perfect += *sup.overall.acc_average() == 1.0 && *weak.overall.acc_average() == 1.0;
  }
  return {perfect == 5, fmt("both modes at accuracy 1.0 on %d/5 seeds", perfect)};
}

// 8. Field-case scenes: fault-region density modes sit above normal ones.
Outcome case_studies() {
  std::string detail;
  bool ok = true;
  for (auto type : {EquipmentType::Arrester, EquipmentType::Bushing}) {
    int held = 0;
    double worst_gap = INFINITY;
    for (int s = 1; s <= 10; ++s) {
      auto cfg = SynthConfig::case_study(type);
      cfg.seed = static_cast<std::uint64_t>(s);
      const auto records = extract_records(synthesize(cfg).to_dataset(), FeatureGrid{}, std::nullopt);
      double normal_max = -INFINITY, fault_min = INFINITY;
      for (const auto& r : records) {
        if (r.region.equipment_type != type || !r.region.status) continue;
        const auto& v = r.feature.values;
        const double mode = r.feature.grid.at(static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()));
        if (*r.region.status == Status::Normal) normal_max = std::max(normal_max, mode);
        else fault_min = std::min(fault_min, mode);
      }
      held += fault_min > normal_max;
      worst_gap = std::min(worst_gap, fault_min - normal_max);
    }
    ok = ok && held == 10;
    detail += fmt("%s %d/10 seeds (smallest gap %.2f degC)%s", std::string(to_string(type)).c_str(), held, worst_gap,
                  type == EquipmentType::Arrester ? "; " : "");
  }
  return {ok, detail};
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  return out;
}

// 9. The full CLI chain is byte-reproducible.
Outcome cli_determinism(const std::string& cli) {
  thermoproto::testing::TempDir tmp("tp_accept");
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* name : {"first", "second"}) {
    const auto root = tmp.path() / name;
    auto p = [&](const std::string& rel) { return "\"" + (root / rel).string() + "\""; };
    const std::vector<std::string> steps = {
        "synth --out " + p("data") + " --seed 42",
        "extract --manifest " + p("data/manifest.json") + " --out " + p("features.jsonl"),
        "train --features " + p("features.jsonl") + " --out " + p("model.json") + " --seed 42",
        "train --features " + p("features.jsonl") + " --out " + p("mlp/model.json") + " --embedder mlp --episodes 20 --seed 42",
        "classify --model " + p("model.json") + " --features " + p("features.jsonl") + " --out " + p("predictions.jsonl"),
        "classify --model " + p("mlp/model.json") + " --embedder " + p("mlp/model.embedder.json") + " --features " +
            p("features.jsonl") + " --out " + p("mlp/predictions.jsonl"),
        "eval --out " + p("reports") + " --seed 42",
    };
    for (const auto& step : steps)
      if (const int code = run_cli(cli, step); code != 0) return {false, fmt("exit %d from: %s", code, step.c_str())};
    trees.push_back(snapshot(root));
  }
  return {trees[0] == trees[1] && !trees[0].empty(),
          fmt("%zu artifacts, %s", trees[0].size(), trees[0] == trees[1] ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <thermoproto binary>\n");
    return 2;
  }
  const std::string cli = argv[1];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"KDE correctness", kde_correctness},
      {"histogram and CDF identities", histogram_cdf},
      {"prototype oracle equivalence", prototype_oracle},
      {"posterior invariants", posterior_invariants},
      {"embedding gradient check", gradient_check},
      {"weak supervision benefit", weak_supervision_benefit},
      {"separable sanity", separable_sanity},
      {"case-study modes", case_studies},
      {"end-to-end determinism", [&] { return cli_determinism(cli); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
