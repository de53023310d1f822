#pragma once

#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace labscreen {

/// Lookback window length in days. Times are days relative to the index
/// date, so every windowed measurement lies in [-kWindowDays, 0].
inline constexpr double kWindowDays = 180.0;

/// Ordered knot locations in days relative to the index date.
/// Strictly increasing, each in [-180, 0). Empty means the pure-linear model.
class KnotVector {
 public:
  KnotVector() = default;

  /// Throws InvalidKnots on unsorted, duplicated, non-finite or out-of-window values.
  static KnotVector from_list(std::vector<double> knots);

  std::span<const double> values() const { return knots_; }
  std::size_t size() const { return knots_.size(); }
  bool empty() const { return knots_.empty(); }
  double leftmost() const { return knots_.front(); }

  friend bool operator==(const KnotVector&, const KnotVector&) = default;

 private:
  std::vector<double> knots_;
};

struct DefaultKnots {};
/// `count` knots at -step, -2*step, ... (count = 0 gives the linear model).
struct ScanPrefix {
  int count = 0;
  double step_days = 14.0;
};
struct ExplicitKnots {
  std::vector<double> knots;
};
using KnotMode = std::variant<DefaultKnots, ScanPrefix, ExplicitKnots>;

/// Default placement is {-150, -90, -60, -30, -14}.
KnotVector make_knots(const KnotMode& mode);

/// rows = times, cols = 1 + K: column 0 is t, column k is max(t - knot_k, 0)^3.
/// No intercept column.
using BasisMatrix = Eigen::MatrixXd;

BasisMatrix tps_basis(std::span<const double> times, const KnotVector& knots);

/// Fixed-effect layout for the case/control spline model:
///   [intercept, case (opt), basis(t), case x basis(t) (opt), covariates...]
struct DesignSpec {
  KnotVector knots;
  std::vector<std::string> covariate_names;
  bool case_shift = true;
  bool case_interaction = true;

  /// Interaction without the case shift breaks model hierarchy.
  void validate() const;
  int basis_columns() const { return static_cast<int>(knots.size()) + 1; }
  int n_columns() const;
  std::vector<std::string> column_names() const;
};

/// One subject's (or one cohort record's) windowed series for a single marker.
struct SubjectObservations {
  std::string id;
  bool is_case = false;
  std::vector<double> times;
  std::vector<double> values;
  std::map<std::string, double> covariates;
};

struct ModelData {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<int> groups;  ///< row -> subject position in the input span
  std::vector<std::string> column_names;
};

/// Design row for time `t`. `covariates` follows spec.covariate_names order.
Eigen::RowVectorXd design_row(double t, bool is_case, std::span<const double> covariates,
                              const DesignSpec& spec);

/// Stacks every subject's rows. Subjects with no measurements contribute no
/// rows but keep their group slot. Throws MissingCovariate naming the subject,
/// InvalidInput for times outside [-180, 0] or non-finite values.
ModelData design_matrix(std::span<const SubjectObservations> subjects, const DesignSpec& spec);

}  // namespace labscreen
