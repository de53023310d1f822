#include "labscreen/spline_basis.hpp"

#include <cmath>

#include <fmt/core.h>

#include "labscreen/errors.hpp"

namespace labscreen {

KnotVector KnotVector::from_list(std::vector<double> knots) {
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const double k = knots[i];
    if (!std::isfinite(k) || k < -kWindowDays || k >= 0.0) {
      throw Error(ErrorKind::InvalidKnots,
                  fmt::format("knot {} outside [-{}, 0)", k, kWindowDays));
    }
    if (i > 0 && !(knots[i - 1] < k)) {
      throw Error(ErrorKind::InvalidKnots,
                  fmt::format("knots must be strictly increasing ({} then {})", knots[i - 1], k));
    }
  }
  KnotVector out;
  out.knots_ = std::move(knots);
  return out;
}

KnotVector make_knots(const KnotMode& mode) {
  struct Visitor {
    KnotVector operator()(const DefaultKnots&) const {
      return KnotVector::from_list({-150.0, -90.0, -60.0, -30.0, -14.0});
    }
    KnotVector operator()(const ScanPrefix& p) const {
      if (p.count < 0 || !(p.step_days > 0.0)) {
        throw Error(ErrorKind::InvalidKnots,
                    fmt::format("scan prefix needs count >= 0 and step > 0 (got {}, {})", p.count,
                                p.step_days));
      }
      std::vector<double> knots;
      knots.reserve(static_cast<std::size_t>(p.count));
      for (int m = p.count; m >= 1; --m) knots.push_back(-p.step_days * m);
      return KnotVector::from_list(std::move(knots));
    }
    KnotVector operator()(const ExplicitKnots& e) const { return KnotVector::from_list(e.knots); }
  };
  return std::visit(Visitor{}, mode);
}

BasisMatrix tps_basis(std::span<const double> times, const KnotVector& knots) {
  const auto n = static_cast<Eigen::Index>(times.size());
  const auto k = static_cast<Eigen::Index>(knots.size());
  BasisMatrix basis(n, k + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    if (!std::isfinite(t)) {
      throw Error(ErrorKind::InvalidInput, fmt::format("non-finite time at position {}", i));
    }
    basis(i, 0) = t;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double tp = std::pow(t - knots.values()[static_cast<std::size_t>(j)], 3.0);
      basis(i, j + 1) = tp > 0.0 ? tp : 0.0;
    }
  }
  return basis;
}

void DesignSpec::validate() const {
  if (case_interaction && !case_shift) {
    throw Error(ErrorKind::InvalidInput, "case x spline interaction requires the case shift term");
  }
}

int DesignSpec::n_columns() const {
  const int q = basis_columns();
  return 1 + (case_shift ? 1 : 0) + q + (case_interaction ? q : 0) +
         static_cast<int>(covariate_names.size());
}

std::vector<std::string> DesignSpec::column_names() const {
  std::vector<std::string> names{"intercept"};
  if (case_shift) names.emplace_back("case");
  std::vector<std::string> basis{"t"};
  for (double k : knots.values()) basis.push_back(fmt::format("tp({:g})", k));
  names.insert(names.end(), basis.begin(), basis.end());
  if (case_interaction) {
    for (const auto& b : basis) names.push_back("case:" + b);
  }
  names.insert(names.end(), covariate_names.begin(), covariate_names.end());
  return names;
}

Eigen::RowVectorXd design_row(double t, bool is_case, std::span<const double> covariates,
                              const DesignSpec& spec) {
  const int q = spec.basis_columns();
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(spec.n_columns());
  const BasisMatrix basis = tps_basis(std::span<const double>(&t, 1), spec.knots);
  int col = 0;
  row(col++) = 1.0;
  if (spec.case_shift) row(col++) = is_case ? 1.0 : 0.0;
  row.segment(col, q) = basis.row(0);
  col += q;
  if (spec.case_interaction) {
    if (is_case) row.segment(col, q) = basis.row(0);
    col += q;
  }
  for (double c : covariates) row(col++) = c;
  return row;
}

ModelData design_matrix(std::span<const SubjectObservations> subjects, const DesignSpec& spec) {
  spec.validate();
  const int q = spec.basis_columns();
  const int p = spec.n_columns();

  Eigen::Index total = 0;
  for (const auto& s : subjects) {
    if (s.times.size() != s.values.size()) {
      throw Error(ErrorKind::InvalidInput,
                  fmt::format("subject {}: {} times but {} values", s.id, s.times.size(),
                              s.values.size()));
    }
    total += static_cast<Eigen::Index>(s.times.size());
  }

  ModelData out;
  out.y.resize(total);
  out.X.setZero(total, p);
  out.groups.reserve(static_cast<std::size_t>(total));
  out.column_names = spec.column_names();

  Eigen::Index row = 0;
  for (std::size_t g = 0; g < subjects.size(); ++g) {
    const auto& s = subjects[g];
    std::vector<double> cov;
    cov.reserve(spec.covariate_names.size());
    for (const auto& name : spec.covariate_names) {
      auto it = s.covariates.find(name);
      if (it == s.covariates.end() || !std::isfinite(it->second)) {
        throw Error(ErrorKind::MissingCovariate,
                    fmt::format("subject {} is missing covariate '{}'", s.id, name));
      }
      cov.push_back(it->second);
    }
    for (double t : s.times) {
      if (!(t >= -kWindowDays && t <= 0.0)) {
        throw Error(ErrorKind::InvalidInput,
                    fmt::format("subject {}: time {} outside [-{}, 0]", s.id, t, kWindowDays));
      }
    }
    const BasisMatrix basis = tps_basis(s.times, spec.knots);
    const auto n = static_cast<Eigen::Index>(s.times.size());
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = s.values[static_cast<std::size_t>(j)];
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::InvalidInput, fmt::format("subject {}: non-finite value", s.id));
      }
      out.y(row) = v;
      int col = 0;
      out.X(row, col++) = 1.0;
      if (spec.case_shift) out.X(row, col++) = s.is_case ? 1.0 : 0.0;
      out.X.row(row).segment(col, q) = basis.row(j);
      col += q;
      if (spec.case_interaction) {
        if (s.is_case) out.X.row(row).segment(col, q) = basis.row(j);
        col += q;
      }
      for (double c : cov) out.X(row, col++) = c;
      out.groups.push_back(static_cast<int>(g));
      ++row;
    }
  }
  return out;
}

}  // namespace labscreen
