#include "labscreen/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "labscreen/errors.hpp"

namespace labscreen {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct GroupLayout {
  std::vector<int> sizes;  // indexed by group id
  int nonempty = 0;
};

GroupLayout layout_groups(std::span<const int> groups, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(groups.size()) != rows) {
    throw Error(ErrorKind::InconsistentInput,
                fmt::format("group index has {} entries for {} rows", groups.size(), rows));
  }
  GroupLayout layout;
  int max_id = -1;
  for (int g : groups) {
    if (g < 0) throw Error(ErrorKind::InvalidInput, "negative group id");
    max_id = std::max(max_id, g);
  }
  layout.sizes.assign(static_cast<std::size_t>(max_id + 1), 0);
  for (int g : groups) ++layout.sizes[static_cast<std::size_t>(g)];
  layout.nonempty = static_cast<int>(
      std::count_if(layout.sizes.begin(), layout.sizes.end(), [](int n) { return n > 0; }));
  return layout;
}

// Upper-triangular factor of the rows of `rows` (R'R = rows'rows), at most
// cols x cols.
Eigen::MatrixXd triangular_factor(const Eigen::MatrixXd& rows) {
  const Eigen::Index cols = rows.cols();
  if (rows.rows() == 0) return Eigen::MatrixXd(0, cols);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(rows);
  const Eigen::Index keep = std::min(rows.rows(), cols);
  Eigen::MatrixXd r = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
  return r;
}

// Sufficient statistics for the profiled likelihood of [X | y].
//
// Z'(I - w_g J)Z summed over groups splits into a within-group part
// (fixed) and a between-group part weighted by a_g = 1 / (1 + lambda n_g).
// Groups of equal size share a_g, so the between rows are compressed per
// distinct size. Each evaluation is one small QR of the stacked factors.
class ProfiledLikelihood {
 public:
  ProfiledLikelihood(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& y, std::span<const int> groups,
                     const GroupLayout& layout)
      : n_obs_(Xs.rows()), p_(Xs.cols()) {
    const Eigen::Index cols = p_ + 1;
    const auto n_groups = static_cast<Eigen::Index>(layout.sizes.size());
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(n_groups, cols);
    for (Eigen::Index i = 0; i < n_obs_; ++i) {
      const auto g = groups[static_cast<std::size_t>(i)];
      means.row(g).head(p_) += Xs.row(i);
      means(g, p_) += y(i);
    }
    for (Eigen::Index g = 0; g < n_groups; ++g) {
      const int n = layout.sizes[static_cast<std::size_t>(g)];
      if (n > 0) means.row(g) /= n;
    }
    Eigen::MatrixXd centered(n_obs_, cols);
    for (Eigen::Index i = 0; i < n_obs_; ++i) {
      const auto g = groups[static_cast<std::size_t>(i)];
      centered.row(i).head(p_) = Xs.row(i) - means.row(g).head(p_);
      centered(i, p_) = y(i) - means(g, p_);
    }
    within_ = triangular_factor(centered);

    std::map<int, std::vector<Eigen::Index>> by_size;
    for (Eigen::Index g = 0; g < n_groups; ++g) {
      const int n = layout.sizes[static_cast<std::size_t>(g)];
      if (n > 0) by_size[n].push_back(g);
    }
    for (const auto& [n, ids] : by_size) {
      Eigen::MatrixXd rows(static_cast<Eigen::Index>(ids.size()), cols);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        rows.row(static_cast<Eigen::Index>(k)) = std::sqrt(static_cast<double>(n)) * means.row(ids[k]);
      }
      between_.push_back({n, static_cast<double>(ids.size()), triangular_factor(rows)});
    }
    stacked_rows_ = within_.rows();
    for (const auto& b : between_) stacked_rows_ += b.factor.rows();
  }

  struct Evaluation {
    double deviance = 0.0;
    double rss = 0.0;  // generalized residual sum of squares at the GLS beta
    Eigen::MatrixXd r;  // (p+1) x (p+1) upper factor of the weighted [X | y]
  };

  Evaluation evaluate(double lambda) const {
    const Eigen::Index cols = p_ + 1;
    Eigen::MatrixXd stacked(stacked_rows_, cols);
    Eigen::Index at = 0;
    stacked.middleRows(at, within_.rows()) = within_;
    at += within_.rows();
    double logdet = 0.0;
    for (const auto& b : between_) {
      const double growth = 1.0 + lambda * b.size;
      stacked.middleRows(at, b.factor.rows()) = b.factor / std::sqrt(growth);
      at += b.factor.rows();
      logdet += b.count * std::log(growth);
    }
    Evaluation e;
    e.r = triangular_factor(stacked);
    if (e.r.rows() < cols) {
      Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(cols, cols);
      padded.topRows(e.r.rows()) = e.r;
      e.r = padded;
    }
    e.rss = e.r(p_, p_) * e.r(p_, p_);
    const auto n = static_cast<double>(n_obs_);
    if (!(e.rss > 0.0)) {
      throw Error(ErrorKind::Domain, "residual variance is zero (response fitted exactly)");
    }
    e.deviance = n * kLog2Pi + n * std::log(e.rss / n) + n + logdet;
    return e;
  }

  double deviance(double lambda) const { return evaluate(lambda).deviance; }

  Eigen::Index n_obs() const { return n_obs_; }
  Eigen::Index n_coef() const { return p_; }

 private:
  struct SizeClass {
    int size;
    double count;
    Eigen::MatrixXd factor;
  };

  Eigen::Index n_obs_;
  Eigen::Index p_;
  Eigen::MatrixXd within_;
  std::vector<SizeClass> between_;
  Eigen::Index stacked_rows_ = 0;
};

std::string describe_column(const std::vector<std::string>& names, Eigen::Index j) {
  if (j < static_cast<Eigen::Index>(names.size())) {
    return fmt::format("{} ('{}')", j, names[static_cast<std::size_t>(j)]);
  }
  return fmt::format("{}", j);
}

Eigen::VectorXd column_scales(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
  Eigen::VectorXd scale(X.cols());
  std::string zero_cols;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    scale(j) = X.col(j).cwiseAbs().maxCoeff();
    if (!(scale(j) > 0.0)) {
      zero_cols += (zero_cols.empty() ? "" : ", ") + describe_column(names, j);
    }
  }
  if (!zero_cols.empty()) {
    throw Error(ErrorKind::SingularDesign, "singular design: all-zero columns " + zero_cols);
  }
  return scale;
}

void check_rank(const Eigen::MatrixXd& Xs, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  if (rank == Xs.cols()) return;
  std::string dependent;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = rank; k < Xs.cols(); ++k) {
    dependent += (dependent.empty() ? "" : ", ") + describe_column(names, perm(k));
  }
  throw Error(ErrorKind::SingularDesign,
              fmt::format("singular design: rank {} of {}; dependent columns {}", rank, Xs.cols(),
                          dependent));
}

// Golden-section minimisation on [lo, hi].
template <typename F>
std::pair<double, double> golden_section(F&& f, double lo, double hi, double tol, int& evals) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  evals += 2;
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
    ++evals;
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace

long LmmFit::n_obs() const {
  long n = 0;
  for (int s : group_sizes) n += s;
  return n;
}

LmmFit fit_lmm(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::span<const int> groups,
               const LmmOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) {
    throw Error(ErrorKind::InconsistentInput,
                fmt::format("response has {} rows, design has {}", y.size(), n));
  }
  if (n <= p) {
    throw Error(ErrorKind::Underdetermined,
                fmt::format("underdetermined: {} rows for {} fixed effects", n, p));
  }
  const GroupLayout layout = layout_groups(groups, n);
  if (layout.nonempty < 2) {
    throw Error(ErrorKind::InvalidInput, "random-intercept model needs at least 2 groups");
  }
  if (!y.allFinite() || !X.allFinite()) {
    throw Error(ErrorKind::InvalidInput, "non-finite values in response or design");
  }

  const Eigen::VectorXd scale = column_scales(X, options.column_names);
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  check_rank(Xs, options.column_names);

  const ProfiledLikelihood profile(Xs, y, groups, layout);
  SearchDiagnostics diag;
  auto dev_log = [&](double log_lambda) { return profile.deviance(std::exp(log_lambda)); };

  const double lower = options.log_lambda_lower;
  const double upper = options.log_lambda_upper;
  // Coarse unit grid on log(lambda) locates the basin; golden section refines it.
  const int steps = std::max(1, static_cast<int>(std::ceil(upper - lower)));
  std::vector<double> grid_dev(static_cast<std::size_t>(steps + 1));
  for (int k = 0; k <= steps; ++k) {
    const double x = lower + (upper - lower) * k / steps;
    grid_dev[static_cast<std::size_t>(k)] = dev_log(x);
  }
  diag.evaluations = steps + 1;
  diag.deviance_at_lower = grid_dev.front();
  diag.deviance_at_upper = grid_dev.back();
  const auto best_k = static_cast<int>(
      std::min_element(grid_dev.begin(), grid_dev.end()) - grid_dev.begin());
  const double step = (upper - lower) / steps;
  const double lo = std::max(lower, lower + step * (best_k - 1));
  const double hi = std::min(upper, lower + step * (best_k + 1));
  auto [x_best, d_best] = golden_section(dev_log, lo, hi, options.log_lambda_tol, diag.evaluations);

  double lambda = std::exp(x_best);
  double dev = d_best;
  if (grid_dev.front() < dev) {
    lambda = std::exp(lower);
    dev = grid_dev.front();
  }
  if (grid_dev.back() < dev) {
    lambda = std::exp(upper);
    dev = grid_dev.back();
  }
  diag.deviance_at_zero = profile.deviance(0.0);
  ++diag.evaluations;
  if (diag.deviance_at_zero <= dev) {
    lambda = 0.0;
    dev = diag.deviance_at_zero;
  }

  const auto best = profile.evaluate(lambda);
  diag.deviance_at_optimum = best.deviance;

  const Eigen::MatrixXd rxx = best.r.topLeftCorner(p, p);
  const Eigen::VectorXd rxy = best.r.col(p).head(p);
  const auto tri = rxx.triangularView<Eigen::Upper>();
  const Eigen::VectorXd beta_s = tri.solve(rxy);
  const double sigma2 = best.rss / static_cast<double>(n);
  const Eigen::MatrixXd rinv = tri.solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd cov_s = sigma2 * rinv * rinv.transpose();

  LmmFit fit;
  const Eigen::VectorXd inv_scale = scale.cwiseInverse();
  fit.beta = beta_s.cwiseProduct(inv_scale);
  fit.cov_beta = inv_scale.asDiagonal() * cov_s * inv_scale.asDiagonal();
  fit.cov_beta = 0.5 * (fit.cov_beta + fit.cov_beta.transpose());
  fit.sigma2 = sigma2;
  fit.lambda = lambda;
  fit.loglik = -0.5 * best.deviance;
  fit.n_params = static_cast<int>(p) + 2;
  fit.group_sizes = layout.sizes;
  fit.column_names = options.column_names;
  fit.search = diag;
  return fit;
}

LmmFit fit_lmm(const ModelData& data) {
  LmmOptions options;
  options.column_names = data.column_names;
  return fit_lmm(data.y, data.X, data.groups, options);
}

double loglik_at(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::span<const int> groups,
                 const Eigen::VectorXd& beta, double sigma2, double lambda) {
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::Domain, "sigma2 must be positive");
  if (!(lambda >= 0.0)) throw Error(ErrorKind::Domain, "lambda must be non-negative");
  if (X.cols() != beta.size() || y.size() != X.rows()) {
    throw Error(ErrorKind::InconsistentInput, "loglik_at: dimension mismatch");
  }
  const GroupLayout layout = layout_groups(groups, X.rows());
  const Eigen::VectorXd r = y - X * beta;
  std::vector<double> sum(layout.sizes.size(), 0.0);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    sum[static_cast<std::size_t>(groups[static_cast<std::size_t>(i)])] += r(i);
    ss += r(i) * r(i);
  }
  double quad = ss;
  double logdet = 0.0;
  for (std::size_t g = 0; g < sum.size(); ++g) {
    const double ng = layout.sizes[g];
    if (ng == 0) continue;
    const double w = lambda / (1.0 + lambda * ng);
    quad -= w * sum[g] * sum[g];
    logdet += std::log1p(lambda * ng);
  }
  const auto n = static_cast<double>(r.size());
  return -0.5 * (n * kLog2Pi + n * std::log(sigma2) + logdet + quad / sigma2);
}

double profiled_deviance(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                         std::span<const int> groups, double lambda) {
  const GroupLayout layout = layout_groups(groups, X.rows());
  const Eigen::VectorXd scale = column_scales(X, {});
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  return ProfiledLikelihood(Xs, y, groups, layout).deviance(lambda);
}

Eigen::VectorXd blup_intercepts(const LmmFit& fit, const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& X, std::span<const int> groups) {
  if (X.cols() != fit.beta.size() || y.size() != X.rows()) {
    throw Error(ErrorKind::InconsistentInput, "blup_intercepts: dimension mismatch with fit");
  }
  const GroupLayout layout = layout_groups(groups, X.rows());
  if (layout.sizes != fit.group_sizes) {
    throw Error(ErrorKind::InconsistentInput, "blup_intercepts: groups differ from the fitted data");
  }
  const Eigen::VectorXd r = y - X * fit.beta;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.sizes.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) b(groups[static_cast<std::size_t>(i)]) += r(i);
  for (Eigen::Index g = 0; g < b.size(); ++g) {
    const double ng = layout.sizes[static_cast<std::size_t>(g)];
    b(g) *= fit.lambda / (1.0 + fit.lambda * ng);
  }
  return b;
}

PredictedCurve predict_curve(const LmmFit& fit, const DesignSpec& spec, Group group,
                             const std::map<std::string, double>& covariate_profile,
                             std::span<const double> grid) {
  spec.validate();
  if (fit.beta.size() != spec.n_columns()) {
    throw Error(ErrorKind::InconsistentInput,
                fmt::format("fit has {} coefficients, design spec needs {}", fit.beta.size(),
                            spec.n_columns()));
  }
  std::vector<double> cov;
  for (const auto& name : spec.covariate_names) {
    auto it = covariate_profile.find(name);
    if (it == covariate_profile.end()) {
      throw Error(ErrorKind::MissingCovariate,
                  fmt::format("covariate profile is missing '{}'", name));
    }
    cov.push_back(it->second);
  }
  PredictedCurve curve;
  for (double t : grid) {
    if (!(t >= -kWindowDays && t <= 0.0)) {
      throw Error(ErrorKind::InvalidInput, fmt::format("grid point {} outside [-180, 0]", t));
    }
    const Eigen::RowVectorXd x = design_row(t, group == Group::Case, cov, spec);
    const double mean = x.dot(fit.beta);
    const double var = std::max(0.0, (x * fit.cov_beta * x.transpose())(0, 0));
    const double half = 1.96 * std::sqrt(var);
    curve.grid.push_back(t);
    curve.mean.push_back(mean);
    curve.lower.push_back(mean - half);
    curve.upper.push_back(mean + half);
  }
  return curve;
}

}  // namespace labscreen
