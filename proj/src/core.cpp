#include "cmc/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cmc/error.hpp"

namespace cmc {

namespace {

void check_points(const Matrix& points) {
  if (points.cols() < 1) throw std::invalid_argument("sample set must hold at least one point");
  if (points.rows() < 1) throw std::invalid_argument("sample dimension must be positive");
  if (!points.allFinite()) throw std::invalid_argument("sample points must be finite");
}

}  // namespace

WeightedSampleSet::WeightedSampleSet(Matrix points, std::optional<std::vector<double>> unnorm,
                                     std::vector<double> norm)
    : points_(std::move(points)), unnorm_weights_(std::move(unnorm)), norm_weights_(std::move(norm)) {}

WeightedSampleSet WeightedSampleSet::unweighted(Matrix points) {
  check_points(points);
  const auto n = static_cast<std::size_t>(points.cols());
  std::vector<double> norm(n, 1.0 / static_cast<double>(n));
  return WeightedSampleSet(std::move(points), std::nullopt, std::move(norm));
}

WeightedSampleSet WeightedSampleSet::weighted(Matrix points, std::vector<double> unnorm_weights) {
  check_points(points);
  if (unnorm_weights.size() != static_cast<std::size_t>(points.cols())) {
    throw std::invalid_argument("weight count does not match point count");
  }
  auto norm = normalize_weights(unnorm_weights);
  return WeightedSampleSet(std::move(points), std::move(unnorm_weights), std::move(norm));
}

std::span<const double> WeightedSampleSet::unnorm_weights() const {
  if (!unnorm_weights_) throw std::logic_error("sample set carries no unnormalized weights");
  return *unnorm_weights_;
}

MomentFamily::MomentFamily(std::vector<Integrand> functions, std::vector<double> loss_weights)
    : functions_(std::move(functions)), loss_weights_(std::move(loss_weights)) {
  if (functions_.empty()) throw std::invalid_argument("moment family needs at least one function");
  if (functions_.size() != loss_weights_.size()) {
    throw std::invalid_argument("one loss weight per moment function required");
  }
  for (double xi : loss_weights_) {
    if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("loss weights must be positive");
  }
}

MomentFamily MomentFamily::powers(std::size_t max_power, std::size_t coord) {
  std::vector<Integrand> fs;
  for (std::size_t r = 1; r <= max_power; ++r) {
    const int p = static_cast<int>(r);
    const auto c = static_cast<Eigen::Index>(coord);
    fs.emplace_back([p, c](const VectorRef& x) { return std::pow(x[c], p); });
  }
  return MomentFamily(std::move(fs), std::vector<double>(max_power, 1.0));
}

MomentFamily MomentFamily::with_loss_weights(std::vector<double> loss_weights) const {
  return MomentFamily(functions_, std::move(loss_weights));
}

std::vector<double> normalize_weights(std::span<const double> w) {
  double total = 0.0;
  for (double v : w) {
    if (!std::isfinite(v)) throw NumericalError("degenerate weights");
    if (v < 0.0) throw std::invalid_argument("weights must be nonnegative");
    total += v;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("degenerate weights");
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / total;
  return out;
}

std::vector<double> exp_shift(std::span<const double> log_w, double& log_shift) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_w) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) throw NumericalError("degenerate weights");
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) throw NumericalError("degenerate weights");
  log_shift = mx;
  std::vector<double> out(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) out[i] = std::exp(log_w[i] - mx);
  return out;
}

double mc_estimate(const WeightedSampleSet& s, const Integrand& h) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = h(s.point(i));
    if (!std::isfinite(v)) throw NumericalError("non-finite integrand");
    acc += s.norm_weight(i) * v;
  }
  return acc;
}

double marginal_likelihood(const WeightedSampleSet& s) {
  if (!s.has_unnorm_weights()) throw std::invalid_argument("Z unavailable for unweighted samples");
  double acc = 0.0;
  for (double w : s.unnorm_weights()) acc += w;
  return acc / static_cast<double>(s.size());
}

Matrix points_from_scalars(std::span<const double> xs) {
  Matrix m(1, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = xs[i];
  return m;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

std::string write_samples_csv(const WeightedSampleSet& s) {
  std::string out;
  for (std::size_t k = 0; k < s.dim(); ++k) {
    if (k) out += ',';
    out += 'x';
    out += std::to_string(k + 1);
  }
  if (s.has_unnorm_weights()) out += ",w";
  out += '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t k = 0; k < s.dim(); ++k) {
      if (k) out += ',';
      out += format_double(s.points()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
    }
    if (s.has_unnorm_weights()) {
      out += ',';
      out += format_double(s.unnorm_weights()[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& field) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw ConfigError("malformed number in CSV: '" + field + "'");
  return v;
}

}  // namespace

WeightedSampleSet read_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty sample CSV");
  const auto header = split_fields(line);
  std::size_t dim = header.size();
  bool has_w = false;
  if (!header.empty() && header.back() == "w") {
    has_w = true;
    --dim;
  }
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[k] != "x" + std::to_string(k + 1)) throw ConfigError("unexpected CSV column '" + header[k] + "'");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) throw ConfigError("CSV row has wrong field count");
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double(f));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("sample CSV holds no rows");
  Matrix pts(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
  std::vector<double> w;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < dim; ++k) pts(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = rows[i][k];
    if (has_w) w.push_back(rows[i][dim]);
  }
  if (has_w) return WeightedSampleSet::weighted(std::move(pts), std::move(w));
  return WeightedSampleSet::unweighted(std::move(pts));
}

}  // namespace cmc
