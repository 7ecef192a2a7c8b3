#include "cmc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cmc/compress.hpp"
#include "cmc/core.hpp"
#include "cmc/error.hpp"
#include "cmc/filters.hpp"
#include "cmc/fusion.hpp"
#include "cmc/loss.hpp"
#include "cmc/partition.hpp"
#include "cmc/random.hpp"
#include "cmc/samplers.hpp"
#include "cmc/targets.hpp"

namespace cmc {

namespace {

using nlohmann::json;

// Defaults for one experiment merged with user overrides. Every override key
// must exist in the defaults and keep its JSON kind (a number may stand in for
// a one-element list).
class Params {
 public:
  Params(const std::string& overrides_text, json defaults) : values_(std::move(defaults)) {
    json overrides;
    try {
      overrides = json::parse(overrides_text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!overrides.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
      if (it.key() == "threads") continue;
      if (!values_.contains(it.key())) throw ConfigError("unknown config key: " + it.key());
      json& slot = values_[it.key()];
      json v = it.value();
      if (slot.is_array() && v.is_number()) v = json::array({v});
      const bool same_kind = (slot.is_array() && v.is_array()) || (slot.is_number() && v.is_number()) ||
                             (slot.is_string() && v.is_string()) || (slot.is_boolean() && v.is_boolean());
      if (!same_kind) throw ConfigError("config key has the wrong type: " + it.key());
      if (slot.is_array()) {
        if (v.empty()) throw ConfigError("config list is empty: " + it.key());
        const bool want_string = !slot.empty() && slot.front().is_string();
        for (const auto& e : v) {
          if (want_string ? !e.is_string() : !e.is_number()) throw ConfigError("config list has the wrong type: " + it.key());
        }
      }
      slot = v;
    }
  }

  std::size_t count(const std::string& key) const { return to_count(key, values_.at(key)); }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& v : values_.at(key)) out.push_back(to_count(key, v));
    return out;
  }

  double real(const std::string& key) const {
    const double v = values_.at(key).get<double>();
    if (!std::isfinite(v)) throw ConfigError("config value must be finite: " + key);
    return v;
  }

  double positive(const std::string& key) const {
    const double v = real(key);
    if (!(v > 0.0)) throw ConfigError("config value must be positive: " + key);
    return v;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& v : values_.at(key)) {
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw ConfigError("config value must be finite: " + key);
      out.push_back(x);
    }
    return out;
  }

  std::string text(const std::string& key) const { return values_.at(key).get<std::string>(); }

  std::vector<std::string> texts(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& v : values_.at(key)) out.push_back(v.get<std::string>());
    return out;
  }

  const json& resolved() const { return values_; }

 private:
  static std::size_t to_count(const std::string& key, const json& v) {
    if (!v.is_number_integer() && !(v.is_number_float() && v.get<double>() == std::floor(v.get<double>()))) {
      throw ConfigError("config value must be a whole number: " + key);
    }
    const double d = v.get<double>();
    if (!(d >= 1.0)) throw ConfigError("config count must be positive: " + key);
    return static_cast<std::size_t>(d);
  }

  json values_;
};

PartitionStrategy partition_from(const std::string& name) {
  try {
    return parse_partition_strategy(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("unknown partition strategy: " + name);
  }
}

KernelKind kernel_from(const std::string& name) {
  if (name == "full") return KernelKind::full;
  if (name == "shared_diagonal") return KernelKind::shared_diagonal;
  throw ConfigError("unknown kernel: " + name);
}

std::size_t worker_count(std::size_t requested, std::size_t runs) {
  std::size_t n = requested;
  if (n == 0) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, runs));
}

// Calls f(r) for r in [0, runs) on a worker pool and returns results in run order.
template <typename F>
auto run_indexed(std::size_t runs, std::size_t threads, F&& f) {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out(runs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= runs) return;
      try {
        out[r] = f(r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = runs;
        return;
      }
    }
  };
  const std::size_t n = worker_count(threads, runs);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct Summary {
  double mean = 0.0;
  double se = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

std::uint64_t run_seed(std::uint64_t base, std::size_t r) { return derive_seed(base, r); }

// ---- exp1: loss in the first five moments ----

ExperimentOutput exp1(const ExperimentConfig& cfg) {
  const bool paper = cfg.scale == Scale::paper;
  Params p(cfg.overrides_json, {{"N", paper ? 100000 : 10000},
                                {"runs", paper ? 500 : 100},
                                {"M", json::array({4, 8, 16, 32})},
                                {"targets", json::array({"gamma", "mixture"})},
                                {"partitions", json::array({"P1", "P2"})}});
  const std::size_t n = p.count("N");
  const std::size_t runs = p.count("runs");
  const auto ms = p.counts("M");
  const auto targets = p.texts("targets");
  std::vector<PartitionStrategy> parts;
  for (const auto& name : p.texts("partitions")) parts.push_back(partition_from(name));
  for (const auto& t : targets) {
    if (t != "gamma" && t != "mixture") throw ConfigError("unknown exp1 target: " + t);
  }
  for (auto m : ms) {
    if (m > n) throw ConfigError("exp1 needs M <= N");
  }
  std::vector<std::string> methods{"BS"};
  for (auto part : parts) {
    methods.push_back(to_string(part) + "-stochastic");
    methods.push_back(to_string(part) + "-deterministic");
  }
  const MomentFamily fam = MomentFamily::powers(5);
  const std::size_t per_run = targets.size() * ms.size() * methods.size();

  auto losses = run_indexed(runs, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rs = run_seed(cfg.seed, r);
    std::vector<double> out;
    out.reserve(per_run);
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      Rng rng(derive_seed(rs, ti));
      std::vector<double> xs(n);
      if (targets[ti] == "gamma") {
        std::gamma_distribution<double> g(4.0, 0.5);
        for (double& x : xs) x = g(rng.engine());
      } else {
        for (double& x : xs) x = rng.uniform() < 0.5 ? -2.0 + rng.normal() : 4.0 + 0.5 * rng.normal();
      }
      const auto s = WeightedSampleSet::unweighted(points_from_scalars(xs));
      for (std::size_t mi = 0; mi < ms.size(); ++mi) {
        const std::uint64_t ms_seed = derive_seed(rs, 1000 + 100 * ti + mi);
        out.push_back(loss_family(s, bootstrap_compress(s, ms[mi], derive_seed(ms_seed, 0)), fam));
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
          const Partition part = build_partition(s, parts[pi], ms[mi], derive_seed(ms_seed, 1 + 2 * pi));
          const Assignment a = assign(part, s);
          out.push_back(loss_family(s, compress(s, a, StochasticRule{derive_seed(ms_seed, 2 + 2 * pi)}), fam));
          out.push_back(loss_family(s, compress(s, a, DeterministicRule{}), fam));
        }
      }
    }
    return out;
  });

  Table t{"exp1", {"target", "M", "method", "mean_L5", "se"}, {}};
  std::size_t k = 0;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    for (std::size_t mi = 0; mi < ms.size(); ++mi) {
      for (const auto& method : methods) {
        std::vector<double> v;
        for (const auto& run : losses) v.push_back(run[k]);
        const Summary sm = summarize(v);
        t.rows.push_back({targets[ti], fmt(ms[mi]), method, fmt(sm.mean), fmt(sm.se)});
        ++k;
      }
    }
  }
  ExperimentOutput out;
  out.tables.push_back(std::move(t));
  out.resolved_json = p.resolved().dump();
  return out;
}

// ---- exp2: parallel PMC nodes in a sensor network ----

// Mean (2), covariance (3), skewness (2) and kurtosis (2) of a weighted 2-D set.
std::vector<double> nine_moments(const Matrix& x, std::span<const double> w) {
  Vector mu = Vector::Zero(2);
  for (Eigen::Index i = 0; i < x.cols(); ++i) mu += w[static_cast<std::size_t>(i)] * x.col(i);
  Matrix cov = Matrix::Zero(2, 2);
  Vector m3 = Vector::Zero(2);
  Vector m4 = Vector::Zero(2);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Vector c = x.col(i) - mu;
    const double wi = w[static_cast<std::size_t>(i)];
    cov += wi * c * c.transpose();
    m3 += wi * c.array().cube().matrix();
    m4 += wi * c.array().square().square().matrix();
  }
  std::vector<double> out{mu[0], mu[1], cov(0, 0), cov(0, 1), cov(1, 1)};
  for (Eigen::Index k = 0; k < 2; ++k) out.push_back(cov(k, k) > 0.0 ? m3[k] / std::pow(cov(k, k), 1.5) : 0.0);
  for (Eigen::Index k = 0; k < 2; ++k) out.push_back(cov(k, k) > 0.0 ? m4[k] / (cov(k, k) * cov(k, k)) : 0.0);
  return out;
}

double nine_moment_loss(const CompressedSet& reference, const CompressedSet& approx) {
  const auto a = nine_moments(reference.particles(), reference.weights());
  const auto b = nine_moments(approx.particles(), approx.weights());
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s / static_cast<double>(a.size());
}

struct SweepPoint {
  std::string sweep;
  std::string variable;
  std::size_t value;
  std::size_t nodes;
  std::size_t n_local;
  std::size_t m_local;
};

ExperimentOutput exp2(const ExperimentConfig& cfg) {
  const bool paper = cfg.scale == Scale::paper;
  Params p(cfg.overrides_json, {{"runs", paper ? 200 : 50},
                                {"L", 10},
                                {"M_l_sweep", json::array({5, 10, 20, 50, 100})},
                                {"N_l", 1000},
                                {"eta", 100},
                                {"M_l_fixed_rate_sweep", json::array({1, 2, 5, 10, 20})},
                                {"M_l", 10},
                                {"N_l_sweep", json::array({20, 50, 100, 500, 1000, 2000})},
                                {"L_sweep", json::array({1, 2, 5, 10, 20})},
                                {"pmc_iterations", 20},
                                {"proposal_sd", 2.0}});
  const std::size_t runs = p.count("runs");
  const std::size_t big_l = p.count("L");
  const std::size_t n_l = p.count("N_l");
  const std::size_t m_l = p.count("M_l");
  const std::size_t eta = p.count("eta");
  const std::size_t iters = p.count("pmc_iterations");
  const double sd = p.positive("proposal_sd");
  std::vector<SweepPoint> points;
  for (auto m : p.counts("M_l_sweep")) points.push_back({"a", "M_l", m, big_l, n_l, m});
  for (auto m : p.counts("M_l_fixed_rate_sweep")) points.push_back({"b", "M_l", m, big_l, eta * m, m});
  for (auto n : p.counts("N_l_sweep")) points.push_back({"c", "N_l", n, big_l, n, m_l});
  for (auto l : p.counts("L_sweep")) points.push_back({"d", "L", l, l, n_l, m_l});
  for (const auto& pt : points) {
    if (pt.m_local > pt.n_local) throw ConfigError("exp2 needs M_l <= N_l at every sweep point");
  }
  Vector truth(2);
  truth << 2.5, 2.5;

  auto losses = run_indexed(runs, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rs = run_seed(cfg.seed, r);
    const SensorNetworkTarget target = SensorNetworkTarget::standard(truth, derive_seed(rs, 0));
    const LogDensity log_target = [&](const VectorRef& x) { return target.log_target(x); };
    const double half = target.box_half_width();
    std::vector<double> out;
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
      const auto& pt = points[pi];
      const std::uint64_t ps = derive_seed(rs, 1 + pi);
      std::vector<LogWeightedSamples> local;
      double shift = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < pt.nodes; ++l) {
        const std::uint64_t ns = derive_seed(ps, l);
        Rng init(derive_seed(ns, 0));
        PmcConfig pc;
        pc.samples_per_iter = pt.n_local;
        pc.iterations = iters;
        pc.proposal_sd = sd;
        pc.seed = derive_seed(ns, 1);
        pc.initial_means.resize(2, static_cast<Eigen::Index>(pt.n_local));
        for (Eigen::Index i = 0; i < pc.initial_means.cols(); ++i) {
          pc.initial_means(0, i) = init.uniform(-half, half);
          pc.initial_means(1, i) = init.uniform(-half, half);
        }
        local.push_back(pmc(log_target, pc));
        shift = std::max(shift, local.back().max_log_weight());
      }
      std::vector<LocalReport> full, cmc_reports, bs_reports;
      for (std::size_t l = 0; l < pt.nodes; ++l) {
        const std::uint64_t ns = derive_seed(ps, l);
        const WeightedSampleSet s = local[l].to_sample_set(shift);
        const Partition part = build_voronoi_kmeans(s, pt.m_local, derive_seed(ns, 2));
        cmc_reports.push_back(LocalReport::from_compressed(compress(s, assign(part, s), DeterministicRule{}), pt.n_local,
                                                           std::to_string(l)));
        bs_reports.push_back(
            LocalReport::from_compressed(bootstrap_compress(s, pt.m_local, derive_seed(ns, 3)), pt.n_local, std::to_string(l)));
        full.push_back(LocalReport::from_samples(s, std::to_string(l)));
      }
      const CompressedSet reference = fuse_parallel(full);
      out.push_back(nine_moment_loss(reference, fuse_parallel(cmc_reports)));
      out.push_back(nine_moment_loss(reference, fuse_parallel(bs_reports)));
    }
    return out;
  });

  Table t{"exp2", {"sweep", "variable", "value", "L", "N_l", "M_l", "method", "mean_loss", "se"}, {}};
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const auto& pt = points[pi];
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> v;
      for (const auto& run : losses) v.push_back(run[2 * pi + k]);
      const Summary sm = summarize(v);
      t.rows.push_back({pt.sweep, pt.variable, fmt(pt.value), fmt(pt.nodes), fmt(pt.n_local), fmt(pt.m_local),
                        k == 0 ? "C-MC" : "BS", fmt(sm.mean), fmt(sm.se)});
    }
  }
  ExperimentOutput out;
  out.tables.push_back(std::move(t));
  out.resolved_json = p.resolved().dump();
  return out;
}

// ---- exp3: number of planets by CLAIS evidence ----

// Truth parameters [K, P, e, w] for up to three planets.
const double kPlanets[3][4] = {{8.0, 50.0, 0.1, 0.5}, {6.0, 120.0, 0.2, -1.0}, {5.0, 250.0, 0.3, 2.0}};
constexpr double kSystemVelocity = 2.0;

Vector planet_truth(std::size_t planets) {
  Vector x(static_cast<Eigen::Index>(1 + 4 * planets));
  x[0] = kSystemVelocity;
  for (std::size_t i = 0; i < planets; ++i) {
    const auto b = static_cast<Eigen::Index>(1 + 4 * i);
    for (Eigen::Index k = 0; k < 4; ++k) x[b + k] = kPlanets[i][k];
  }
  return x;
}

// Chain start: V, then each planet in turn, picked as the best of `draws`
// prior draws with the earlier coordinates held fixed.
Vector greedy_start(const RadialVelocityModel& model, std::size_t draws, Rng& rng) {
  Vector x = model.sample_prior(rng);
  const auto bounds = model.prior_bounds();
  auto search = [&](Eigen::Index first, Eigen::Index last) {
    Vector best = x;
    double best_lp = model.log_target(x);
    for (std::size_t k = 0; k < draws; ++k) {
      Vector cand = x;
      for (Eigen::Index j = first; j < last; ++j) {
        const auto& b = bounds[static_cast<std::size_t>(j)];
        cand[j] = b.lo + (b.hi - b.lo) * rng.uniform_open();
      }
      const double lp = model.log_target(cand);
      if (lp > best_lp) {
        best_lp = lp;
        best = cand;
      }
    }
    x = best;
  };
  // Planets absent from the first pass contribute through their prior draw, so
  // zero their amplitudes until they are searched.
  for (std::size_t i = 0; i < model.planets(); ++i) x[static_cast<Eigen::Index>(1 + 4 * i)] = 0.0;
  search(0, 1);
  for (std::size_t i = 0; i < model.planets(); ++i) {
    const auto b = static_cast<Eigen::Index>(1 + 4 * i);
    search(b, b + 4);
  }
  return x;
}

ExperimentOutput exp3(const ExperimentConfig& cfg) {
  const bool paper = cfg.scale == Scale::paper;
  Params p(cfg.overrides_json, {{"runs", paper ? 100 : 20},
                                {"T", paper ? 200000 : 20000},
                                {"M", 10},
                                {"true_planets", json::array({0, 1, 2, 3})},
                                {"max_planets", 3},
                                {"observations", 50},
                                {"time_span", 730.0},
                                {"noise_sd", 1.0},
                                {"init_draws", 5000},
                                {"proposal_scale", 0.005},
                                {"delta", 0.1},
                                {"partition", "P2"},
                                {"compress", "means"}});
  const std::size_t runs = p.count("runs");
  const std::size_t t_len = p.count("T");
  const std::size_t m = p.count("M");
  const std::size_t n_obs = p.count("observations");
  const double span = p.positive("time_span");
  const double noise = p.positive("noise_sd");
  const std::size_t draws = p.count("init_draws");
  const double scale = p.positive("proposal_scale");
  const double delta = p.positive("delta");
  const PartitionStrategy part = partition_from(p.text("partition"));
  const std::string set_name = p.text("compress");
  if (set_name != "means" && set_name != "samples") throw ConfigError("exp3 compress must be means or samples");
  const std::size_t max_np = p.count("max_planets");
  std::vector<std::size_t> truths;
  for (const auto& v : p.resolved().at("true_planets")) {
    const double d = v.get<double>();
    if (d < 0.0 || d != std::floor(d) || d > 3.0) throw ConfigError("true_planets entries must be 0..3");
    truths.push_back(static_cast<std::size_t>(d));
  }
  if (max_np > 3) throw ConfigError("max_planets must be at most 3");
  if (m > t_len) throw ConfigError("exp3 needs M <= T");
  std::vector<double> times(n_obs);
  for (std::size_t j = 0; j < n_obs; ++j) {
    times[j] = n_obs > 1 ? span * static_cast<double>(j) / static_cast<double>(n_obs - 1) : 0.0;
  }
  const std::size_t models = max_np + 1;

  auto log_zs = run_indexed(runs, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rs = run_seed(cfg.seed, r);
    std::vector<double> out;
    for (std::size_t ti = 0; ti < truths.size(); ++ti) {
      Rng data_rng(derive_seed(rs, 100 + truths[ti]));
      const auto y = RadialVelocityModel::simulate(planet_truth(truths[ti]), truths[ti], times, noise, data_rng);
      for (std::size_t np = 0; np < models; ++np) {
        const RadialVelocityModel model(np, times, y, noise);
        const std::uint64_t ms = derive_seed(rs, 1000 + 10 * ti + np);
        Rng init_rng(derive_seed(ms, 0));
        const auto bounds = model.prior_bounds();
        Vector sd(static_cast<Eigen::Index>(bounds.size()));
        for (std::size_t k = 0; k < bounds.size(); ++k) sd[static_cast<Eigen::Index>(k)] = scale * (bounds[k].hi - bounds[k].lo);
        ClaisConfig cc;
        cc.chain.length = t_len;
        cc.chain.proposal_cov = sd.array().square().matrix().asDiagonal();
        cc.chain.initial = greedy_start(model, draws, init_rng);
        cc.chain.seed = derive_seed(ms, 1);
        cc.regions = m;
        cc.delta = delta;
        cc.partition = part;
        cc.compress_set = set_name == "means" ? ClaisCompressionSet::means : ClaisCompressionSet::samples;
        const ClaisResult res = clais([&](const VectorRef& x) { return model.log_target(x); }, cc);
        out.push_back(res.log_Z);
      }
    }
    return out;
  });

  Table per_run{"exp3_runs", {"true_planets", "run", "N_P", "log_Z", "posterior_mass"}, {}};
  Table summary{"exp3", {"true_planets", "N_P", "mean_posterior_mass", "argmax_frequency"}, {}};
  const std::vector<std::size_t> counts(models, t_len);
  for (std::size_t ti = 0; ti < truths.size(); ++ti) {
    std::vector<double> mass_sum(models, 0.0);
    std::vector<double> wins(models, 0.0);
    for (std::size_t r = 0; r < runs; ++r) {
      std::vector<double> lz(log_zs[r].begin() + static_cast<std::ptrdiff_t>(ti * models),
                             log_zs[r].begin() + static_cast<std::ptrdiff_t>((ti + 1) * models));
      const auto post = model_posterior_from_log(lz, counts);
      const auto best = static_cast<std::size_t>(std::max_element(post.begin(), post.end()) - post.begin());
      wins[best] += 1.0;
      for (std::size_t np = 0; np < models; ++np) {
        mass_sum[np] += post[np];
        per_run.rows.push_back({fmt(truths[ti]), fmt(r), fmt(np), fmt(lz[np]), fmt(post[np])});
      }
    }
    for (std::size_t np = 0; np < models; ++np) {
      summary.rows.push_back({fmt(truths[ti]), fmt(np), fmt(mass_sum[np] / static_cast<double>(runs)),
                              fmt(wins[np] / static_cast<double>(runs))});
    }
  }
  ExperimentOutput out;
  out.tables.push_back(std::move(summary));
  out.tables.push_back(std::move(per_run));
  out.resolved_json = p.resolved().dump();
  return out;
}

// ---- exp4: C-PF against the bootstrap filter on the scalar model ----

ExperimentOutput exp4(const ExperimentConfig& cfg) {
  const bool paper = cfg.scale == Scale::paper;
  Params p(cfg.overrides_json, {{"runs", paper ? 5000 : 500},
                                {"N", json::array({100, 1000})},
                                {"T", 100},
                                {"M_over_N", json::array({0.02, 0.05, 0.1, 0.15, 0.2, 0.5, 1.0})},
                                {"partitions", json::array({"equal_count", "P2"})}});
  const std::size_t runs = p.count("runs");
  const auto ns = p.counts("N");
  const std::size_t t_len = p.count("T");
  const auto fractions = p.reals("M_over_N");
  std::vector<PartitionStrategy> parts;
  for (const auto& name : p.texts("partitions")) parts.push_back(partition_from(name));
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("M_over_N entries must lie in (0, 1]");
  }
  for (auto n : ns) {
    if (n < 2) throw ConfigError("exp4 needs N >= 2");
  }
  auto m_of = [](std::size_t n, double f) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n)))); };
  const ScalarAbsLogModel model;
  const std::size_t per_n = 1 + fractions.size() * parts.size();

  struct RunOut {
    std::vector<double> mse;
    std::vector<double> evals;
  };
  auto results = run_indexed(runs, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rs = run_seed(cfg.seed, r);
    const Trajectory tr = simulate(model, t_len, derive_seed(rs, 0));
    RunOut out;
    for (std::size_t ni = 0; ni < ns.size(); ++ni) {
      const std::uint64_t fs = derive_seed(rs, 1 + ni);
      const FilterResult b = bpf(model, tr.observations, ns[ni], fs);
      out.mse.push_back(mse(b, tr.states));
      out.evals.push_back(static_cast<double>(b.total_evaluations()));
      for (auto part : parts) {
        FilterOptions o;
        o.partition = part;
        for (double f : fractions) {
          const FilterResult c = cpf(model, tr.observations, ns[ni], m_of(ns[ni], f), fs, o);
          out.mse.push_back(mse(c, tr.states));
          out.evals.push_back(static_cast<double>(c.total_evaluations()));
        }
      }
    }
    return out;
  });

  Table t{"exp4", {"N", "M_over_N", "M", "filter", "partition", "mse", "se", "eval_fraction"}, {}};
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    auto column = [&](std::size_t k) {
      std::vector<double> v, e;
      for (const auto& run : results) {
        v.push_back(run.mse[ni * per_n + k]);
        e.push_back(run.evals[ni * per_n + k]);
      }
      return std::pair{summarize(v), summarize(e).mean / static_cast<double>(ns[ni] * t_len)};
    };
    const auto [bs, be] = column(0);
    t.rows.push_back({fmt(ns[ni]), fmt(1.0), fmt(ns[ni]), "BPF", "none", fmt(bs.mean), fmt(bs.se), fmt(be)});
    std::size_t k = 1;
    for (auto part : parts) {
      for (double f : fractions) {
        const auto [cs, ce] = column(k++);
        t.rows.push_back(
            {fmt(ns[ni]), fmt(f), fmt(m_of(ns[ni], f)), "C-PF", to_string(part), fmt(cs.mean), fmt(cs.se), fmt(ce)});
      }
    }
  }
  ExperimentOutput out;
  out.tables.push_back(std::move(t));
  out.resolved_json = p.resolved().dump();
  return out;
}

// ---- exp5: I-GPF against GPF on bearings-only tracking ----

ExperimentOutput exp5(const ExperimentConfig& cfg) {
  const bool paper = cfg.scale == Scale::paper;
  Params p(cfg.overrides_json, {{"runs", paper ? 100000 : 1000},
                                {"N", 1000},
                                {"T", 15},
                                {"M", json::array({5, 10, 20, 30})},
                                {"delta", 0.1},
                                {"partition", "P2"},
                                {"prior_mean", json::array({-0.05, 0.001, 0.7, -0.055})},
                                {"prior_var", json::array({1.0, 1.0, 1.0, 1.0})}});
  const std::size_t runs = p.count("runs");
  const std::size_t n = p.count("N");
  const std::size_t t_len = p.count("T");
  const auto ms = p.counts("M");
  FilterOptions o;
  o.delta = p.positive("delta");
  o.partition = partition_from(p.text("partition"));
  const auto pm = p.reals("prior_mean");
  const auto pv = p.reals("prior_var");
  if (pm.size() != 4 || pv.size() != 4) throw ConfigError("BOT prior needs four entries");
  BearingsOnlyModel::Params bp;
  bp.prior.mean = Eigen::Map<const Vector>(pm.data(), 4);
  bp.prior.cov = Eigen::Map<const Vector>(pv.data(), 4).asDiagonal();
  if ((bp.prior.cov.diagonal().array() < 0.0).any()) throw ConfigError("prior variances must be nonnegative");
  for (auto m : ms) {
    if (m > n) throw ConfigError("exp5 needs M <= N");
  }
  const BearingsOnlyModel model(bp);

  auto results = run_indexed(runs, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rs = run_seed(cfg.seed, r);
    const Trajectory tr = simulate(model, t_len, derive_seed(rs, 0));
    const std::uint64_t fs = derive_seed(rs, 1);
    std::vector<double> out{mse(gpf(model, tr.observations, n, fs, o), tr.states)};
    for (auto m : ms) out.push_back(mse(igpf(model, tr.observations, n, m, fs, o), tr.states));
    return out;
  });

  Table t{"exp5", {"method", "M", "mse", "se"}, {}};
  for (std::size_t k = 0; k <= ms.size(); ++k) {
    std::vector<double> v;
    for (const auto& run : results) v.push_back(run[k]);
    const Summary sm = summarize(v);
    t.rows.push_back({k == 0 ? "GPF" : "I-GPF", fmt(k == 0 ? std::size_t{1} : ms[k - 1]), fmt(sm.mean), fmt(sm.se)});
  }
  ExperimentOutput out;
  out.tables.push_back(std::move(t));
  out.resolved_json = p.resolved().dump();
  return out;
}

// ---- exp6: distributed filtering with compressed node reports ----

ExperimentOutput exp6(const ExperimentConfig& cfg) {
  const bool paper = cfg.scale == Scale::paper;
  Params p(cfg.overrides_json, {{"runs", paper ? 10000 : 1000},
                                {"N", 1000},
                                {"T", 10},
                                {"M", 4},
                                {"L", json::array({4, 4, 8})},
                                {"K", json::array({8, 16, 16})},
                                {"delta", 0.1},
                                {"partition", "P2"},
                                {"kernel", "full"}});
  const std::size_t runs = p.count("runs");
  const std::size_t n = p.count("N");
  const std::size_t t_len = p.count("T");
  const std::size_t m = p.count("M");
  const auto ls = p.counts("L");
  const auto ks = p.counts("K");
  if (ls.size() != ks.size()) throw ConfigError("exp6 needs one K per L (cells are (L[i], K[i]))");
  DpfOptions base;
  base.regions = m;
  base.delta = p.positive("delta");
  base.partition = partition_from(p.text("partition"));
  base.kernel = kernel_from(p.text("kernel"));
  for (std::size_t c = 0; c < ls.size(); ++c) {
    if (n % ls[c] != 0) throw ConfigError("exp6 needs N divisible by every L");
    if (ks[c] % 4 != 0) throw ConfigError("exp6 needs K to be a multiple of 4");
    if (m > n / ls[c]) throw ConfigError("exp6 needs M <= N / L");
  }

  auto results = run_indexed(runs, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rs = run_seed(cfg.seed, r);
    std::vector<double> out;
    for (std::size_t c = 0; c < ls.size(); ++c) {
      const std::uint64_t cs = derive_seed(rs, c);
      Rng sensor_rng(derive_seed(cs, 0));
      const CoordinatedTurnModel model(CoordinatedTurnModel::random_sensors(ks[c], sensor_rng));
      const Trajectory tr = simulate(model, t_len, derive_seed(cs, 1));
      DpfOptions o = base;
      o.processors = ls[c];
      o.particles_per_node = n / ls[c];
      o.method = DpfMethod::single_gaussian;
      out.push_back(mse(dpf(model, tr.observations, o, derive_seed(cs, 2)), tr.states));
      o.method = DpfMethod::cmc;
      out.push_back(mse(dpf(model, tr.observations, o, derive_seed(cs, 2)), tr.states));
    }
    return out;
  });

  Table t{"exp6", {"L", "K", "method", "mse", "se"}, {}};
  for (std::size_t c = 0; c < ls.size(); ++c) {
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> v;
      for (const auto& run : results) v.push_back(run[2 * c + k]);
      const Summary sm = summarize(v);
      t.rows.push_back({fmt(ls[c]), fmt(ks[c]), k == 0 ? "single-Gaussian" : "CMC-DPF", fmt(sm.mean), fmt(sm.se)});
    }
  }
  ExperimentOutput out;
  out.tables.push_back(std::move(t));
  out.resolved_json = p.resolved().dump();
  return out;
}

}  // namespace

Scale parse_scale(const std::string& name) {
  if (name == "desk") return Scale::desk;
  if (name == "paper") return Scale::paper;
  throw ConfigError("scale must be desk or paper");
}

std::string to_string(Scale s) { return s == Scale::paper ? "paper" : "desk"; }

std::size_t Table::column(const std::string& col) const {
  const auto it = std::find(columns.begin(), columns.end(), col);
  if (it == columns.end()) throw std::out_of_range("no column " + col + " in table " + name);
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<const std::vector<std::string>*> Table::select(
    const std::vector<std::pair<std::string, std::string>>& where) const {
  std::vector<std::pair<std::size_t, std::string>> keys;
  for (const auto& [c, v] : where) keys.emplace_back(column(c), v);
  std::vector<const std::vector<std::string>*> out;
  for (const auto& row : rows) {
    if (std::all_of(keys.begin(), keys.end(), [&](const auto& k) { return row[k.first] == k.second; })) out.push_back(&row);
  }
  return out;
}

double Table::value(const std::vector<std::pair<std::string, std::string>>& where, const std::string& col) const {
  const auto hits = select(where);
  if (hits.size() != 1) throw std::out_of_range("expected one matching row in table " + name);
  return std::stod((*hits.front())[column(col)]);
}

const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"exp1", "exp2", "exp3", "exp4", "exp5", "exp6"};
  return ids;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  static const std::map<std::string, ExperimentOutput (*)(const ExperimentConfig&)> table{
      {"exp1", exp1}, {"exp2", exp2}, {"exp3", exp3}, {"exp4", exp4}, {"exp5", exp5}, {"exp6", exp6}};
  const auto it = table.find(cfg.id);
  if (it == table.end()) throw ConfigError("unknown experiment: " + cfg.id);
  ExperimentOutput out = it->second(cfg);
  out.id = cfg.id;
  out.seed = cfg.seed;
  std::ostringstream hash;
  hash << std::hex;
  hash.width(16);
  hash.fill('0');
  hash << fnv1a64(cfg.id + "|" + to_string(cfg.scale) + "|" + out.resolved_json);
  out.config_hash = hash.str();
  return out;
}

std::string table_to_csv(const ExperimentOutput& out, const Table& t) {
  std::string s = "# cmc " + std::string(kVersion) + " experiment=" + out.id + " seed=" + std::to_string(out.seed) +
                  " config_hash=" + out.config_hash + "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
  s += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
    s += "\n";
  }
  return s;
}

std::vector<std::string> write_output(const ExperimentOutput& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& t : out.tables) {
    const auto path = (std::filesystem::path(dir) / (t.name + ".csv")).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << table_to_csv(out, t);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace cmc
