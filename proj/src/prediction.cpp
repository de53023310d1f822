#include "labscreen/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "labscreen/errors.hpp"

namespace labscreen {

namespace {

constexpr double kRecentStart = -14.0;
constexpr double kReferenceStart = -60.0;
constexpr double kReferenceEnd = -30.0;
constexpr double kRidgePenalty = 1e-4;
constexpr double kCoefTol = 1e-8;
constexpr int kMaxIterations = 100;
constexpr int kMaxRidgeIterations = 1000;
constexpr double kSeparationEta = 35.0;

double mean_where(const SubjectObservations& s, double lo, double hi) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (s.times[i] >= lo && s.times[i] <= hi) {
      sum += s.values[i];
      ++n;
    }
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

double ols_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  const double tbar = std::accumulate(t.begin(), t.end(), 0.0) / n;
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - tbar) * (y[i] - ybar);
    sxx += (t[i] - tbar) * (t[i] - tbar);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

void check_labels(std::span<const int> labels, long& n_cases, long& n_controls) {
  n_cases = n_controls = 0;
  for (int l : labels) {
    if (l == 1) {
      ++n_cases;
    } else if (l == 0) {
      ++n_controls;
    } else {
      throw Error(ErrorKind::InvalidInput, fmt::format("label {} is not 0 or 1", l));
    }
  }
  if (n_cases == 0 || n_controls == 0) {
    throw Error(ErrorKind::DegenerateLabels, "labels contain a single class");
  }
}

// 1-based ranks with ties sharing their average rank.
std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// DeLong structural components: placement of each case among controls and
// of each control among cases.
struct Placements {
  std::vector<double> cases;     // V10
  std::vector<double> controls;  // V01
  double auc = 0.5;
};

Placements placements(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? xs : ys).push_back(scores[i]);
  const auto n1 = static_cast<double>(xs.size());
  const auto n0 = static_cast<double>(ys.size());
  const auto all = midranks(scores);
  const auto rx = midranks(xs);
  const auto ry = midranks(ys);
  Placements p;
  std::size_t ix = 0, iy = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      p.cases.push_back((all[i] - rx[ix++]) / n0);
    } else {
      p.controls.push_back(1.0 - (all[i] - ry[iy++]) / n1);
    }
  }
  p.auc = std::accumulate(p.cases.begin(), p.cases.end(), 0.0) / n1;
  return p;
}

double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (n < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (n - 1.0);
}

double bernoulli_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    ll += y(i) * e - (std::max(e, 0.0) + std::log1p(std::exp(-std::fabs(e))));
  }
  return ll;
}

struct NewtonOutcome {
  Eigen::VectorXd coef;
  bool converged = false;
  int iterations = 0;
};

// Penalized Newton-Raphson (IRLS) with step halving; the intercept is unpenalized.
NewtonOutcome newton(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double ridge, int max_iter) {
  const Eigen::Index k = Z.cols();
  NewtonOutcome out;
  out.coef = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k, ridge);
  penalty(0) = 0.0;
  auto objective = [&](const Eigen::VectorXd& b) {
    return bernoulli_loglik(Z * b, y) - 0.5 * (penalty.array() * b.array().square()).sum();
  };
  double current = objective(out.coef);
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    const Eigen::VectorXd eta = Z * out.coef;
    const Eigen::VectorXd mu = (1.0 + (-eta.array()).exp()).inverse().matrix();
    const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).matrix();
    Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z;
    H.diagonal() += penalty;
    const Eigen::VectorXd grad = Z.transpose() * (y - mu) - penalty.cwiseProduct(out.coef);
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) return out;
    double scale = 1.0;
    Eigen::VectorXd next = out.coef + step;
    double value = objective(next);
    while (!(value >= current - 1e-12 * std::fabs(current)) && scale > 1e-10) {
      scale *= 0.5;
      next = out.coef + scale * step;
      value = objective(next);
    }
    const double change = (next - out.coef).cwiseAbs().maxCoeff();
    out.coef = next;
    current = value;
    if (!out.coef.allFinite()) return out;
    if (change < kCoefTol) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

}  // namespace

MarkerReference fit_marker_reference(std::span<const SubjectObservations> subjects) {
  std::vector<SubjectObservations> with_data;
  for (const auto& s : subjects) {
    if (!s.times.empty()) {
      SubjectObservations copy = s;
      copy.is_case = false;
      copy.covariates.clear();
      with_data.push_back(std::move(copy));
    }
  }
  MarkerReference ref;
  try {
    const DesignSpec linear{KnotVector{}, {}, false, false};
    ref.fit = fit_lmm(design_matrix(with_data, linear));
  } catch (const Error&) {
    ref.fit.reset();
  }
  return ref;
}

FeatureSet build_features(std::span<const SubjectObservations> subjects,
                          const std::vector<std::string>& demographic_names,
                          const MarkerReference& reference) {
  FeatureSet fs;
  fs.names = demographic_names;
  fs.names.insert(fs.names.end(), kMarkerFeatures.begin(), kMarkerFeatures.end());
  fs.n_demographic = static_cast<int>(demographic_names.size());
  const auto n = static_cast<Eigen::Index>(subjects.size());
  fs.X.setZero(n, static_cast<Eigen::Index>(fs.names.size()));

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = subjects[static_cast<std::size_t>(i)];
    fs.ids.push_back(s.id);
    fs.labels.push_back(s.is_case ? 1 : 0);
    Eigen::Index col = 0;
    for (const auto& name : demographic_names) {
      auto it = s.covariates.find(name);
      if (it == s.covariates.end()) {
        throw Error(ErrorKind::MissingCovariate,
                    fmt::format("subject {} is missing covariate '{}'", s.id, name));
      }
      fs.X(i, col++) = it->second;
    }
    const std::size_t count = s.values.size();
    if (count == 0) {
      fs.X(i, col + 4) = 1.0;
      continue;
    }
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(count);
    const double slope = count >= 2 ? ols_slope(s.times, s.values) : 0.0;

    double departure = 0.0;
    const double recent = mean_where(s, kRecentStart, 0.0);
    if (!std::isnan(recent)) {
      double earlier = mean_where(s, kReferenceStart, kReferenceEnd);
      if (std::isnan(earlier)) {
        earlier = mean_where(s, -kWindowDays, std::nextafter(kRecentStart, -kWindowDays));
      }
      if (!std::isnan(earlier)) departure = recent - earlier;
    }

    double shrunken = 0.0;
    if (reference.fit) {
      const auto& f = *reference.fit;
      double resid = 0.0;
      for (std::size_t j = 0; j < count; ++j) resid += s.values[j] - f.beta(0) - f.beta(1) * s.times[j];
      shrunken = f.lambda / (1.0 + f.lambda * static_cast<double>(count)) * resid;
    }

    fs.X(i, col++) = mean;
    fs.X(i, col++) = slope;
    fs.X(i, col++) = departure;
    fs.X(i, col++) = shrunken;
    fs.X(i, col++) = count < 2 ? 1.0 : 0.0;
  }
  return fs;
}

Eigen::VectorXd LogisticFit::linear_predictor(const Eigen::MatrixXd& X) const {
  if (X.cols() + 1 != coef.size()) {
    throw Error(ErrorKind::InconsistentInput, "feature count differs from the fitted model");
  }
  return (X * coef.tail(coef.size() - 1)).array() + coef(0);
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows()) {
    throw Error(ErrorKind::InconsistentInput, "labels and features differ in length");
  }
  long n_cases = 0, n_controls = 0;
  check_labels(labels, n_cases, n_controls);

  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  std::vector<Eigen::Index> active;
  Eigen::VectorXd centre = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd spread = Eigen::VectorXd::Ones(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    centre(j) = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - centre(j)).square().sum() / static_cast<double>(n));
    if (sd > 1e-12 * std::max(1.0, std::fabs(centre(j)))) {
      spread(j) = sd;
      active.push_back(j);
    }
  }
  Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(active.size()) + 1);
  Z.col(0).setOnes();
  for (std::size_t a = 0; a < active.size(); ++a) {
    const Eigen::Index j = active[a];
    Z.col(static_cast<Eigen::Index>(a) + 1) = (X.col(j).array() - centre(j)) / spread(j);
  }
  if (Z.cols() > 1) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < Z.cols()) {
      throw Error(ErrorKind::SingularDesign, "logistic design is rank deficient after standardization");
    }
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];

  LogisticFit fit;
  NewtonOutcome outcome = newton(Z, y, 0.0, kMaxIterations);
  const bool diverged = !outcome.converged || !outcome.coef.allFinite() ||
                        (Z * outcome.coef).cwiseAbs().maxCoeff() > kSeparationEta;
  if (diverged) {
    outcome = newton(Z, y, kRidgePenalty, kMaxRidgeIterations);
    fit.separable = true;
  }
  fit.iterations = outcome.iterations;

  fit.coef = Eigen::VectorXd::Zero(k + 1);
  double intercept = outcome.coef(0);
  for (std::size_t a = 0; a < active.size(); ++a) {
    const Eigen::Index j = active[a];
    const double b = outcome.coef(static_cast<Eigen::Index>(a) + 1) / spread(j);
    fit.coef(j + 1) = b;
    intercept -= b * centre(j);
  }
  fit.coef(0) = intercept;
  return fit;
}

RocResult c_statistic(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::InconsistentInput, "scores and labels differ in length");
  }
  RocResult r;
  check_labels(labels, r.n_cases, r.n_controls);
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i]) rank_sum += ranks[i];
  }
  const auto n1 = static_cast<double>(r.n_cases);
  const auto n0 = static_cast<double>(r.n_controls);
  r.c = (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
  r.scores.assign(scores.begin(), scores.end());
  r.labels.assign(labels.begin(), labels.end());
  return r;
}

AucComparison compare_auc(std::span<const double> base, std::span<const double> augmented,
                          std::span<const int> labels) {
  if (base.size() != augmented.size() || base.size() != labels.size()) {
    throw Error(ErrorKind::Pairing,
                fmt::format("paired comparison needs equal lengths (base {}, augmented {}, labels {})",
                            base.size(), augmented.size(), labels.size()));
  }
  long n_cases = 0, n_controls = 0;
  check_labels(labels, n_cases, n_controls);
  const auto pb = placements(base, labels);
  const auto pa = placements(augmented, labels);

  AucComparison out;
  out.c_base = pb.auc;
  out.c_augmented = pa.auc;
  const double s10 = sample_cov(pa.cases, pa.cases) + sample_cov(pb.cases, pb.cases) -
                     2.0 * sample_cov(pa.cases, pb.cases);
  const double s01 = sample_cov(pa.controls, pa.controls) + sample_cov(pb.controls, pb.controls) -
                     2.0 * sample_cov(pa.controls, pb.controls);
  out.variance = std::max(0.0, s10 / static_cast<double>(n_cases) + s01 / static_cast<double>(n_controls));
  const double diff = out.c_augmented - out.c_base;
  if (out.variance > 0.0) {
    out.z = diff / std::sqrt(out.variance);
    out.p = 0.5 * std::erfc(out.z / std::sqrt(2.0));
  } else {
    out.z = diff > 0.0 ? std::numeric_limits<double>::infinity()
                       : (diff < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    out.p = diff > 0.0 ? 0.0 : (diff < 0.0 ? 1.0 : 0.5);
  }
  return out;
}

ValidationResult validate_marker(const std::string& marker, const LabeledSet& train,
                                 const LabeledSet& validation,
                                 const std::vector<std::string>& demographic_names) {
  if (train.strata.size() != train.subjects.size() ||
      validation.strata.size() != validation.subjects.size()) {
    throw Error(ErrorKind::InconsistentInput, "strata list must parallel the subjects");
  }
  const std::set<std::string> train_strata(train.strata.begin(), train.strata.end());
  for (const auto& s : validation.strata) {
    if (train_strata.count(s)) {
      throw Error(ErrorKind::InconsistentInput,
                  fmt::format("stratum {} appears in both training and validation", s));
    }
  }

  const MarkerReference reference = fit_marker_reference(train.subjects);
  const FeatureSet ftrain = build_features(train.subjects, demographic_names, reference);
  const FeatureSet fval = build_features(validation.subjects, demographic_names, reference);
  const Eigen::Index nd = ftrain.n_demographic;

  const LogisticFit base = fit_logistic(ftrain.X.leftCols(nd), ftrain.labels);
  const LogisticFit full = fit_logistic(ftrain.X, ftrain.labels);
  const Eigen::VectorXd sb = base.linear_predictor(fval.X.leftCols(nd));
  const Eigen::VectorXd sf = full.linear_predictor(fval.X);

  const auto cmp = compare_auc(std::span(sb.data(), static_cast<std::size_t>(sb.size())),
                               std::span(sf.data(), static_cast<std::size_t>(sf.size())), fval.labels);
  ValidationResult r;
  r.marker = marker;
  r.c_base = cmp.c_base;
  r.c_marker = cmp.c_augmented;
  r.p_improvement = cmp.p;
  r.separable = base.separable || full.separable;
  for (int l : fval.labels) (l ? r.n_cases : r.n_controls)++;
  return r;
}

}  // namespace labscreen
