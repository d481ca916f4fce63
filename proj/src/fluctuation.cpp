#include "twoscale/fluctuation.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(std::span<const double> v, std::size_t m) {
  return {v.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)};
}

// Maps requested times onto indices of the uniform simulation grid.
std::vector<std::size_t> record_indices(std::span<const double> times, double T, std::size_t steps) {
  std::vector<std::size_t> idx;
  for (double t : times) {
    if (t < 0.0 || t > T * (1.0 + 1e-12)) throw std::invalid_argument("record time outside [0, T]");
    idx.push_back(static_cast<std::size_t>(std::llround(t / T * static_cast<double>(steps))));
  }
  return idx;
}

std::vector<double> default_times(std::vector<double> times, double T) {
  if (times.empty()) return dyadic_times(T);
  if (!std::is_sorted(times.begin(), times.end())) throw std::invalid_argument("record times must be increasing");
  return times;
}

void interpolate(const std::vector<double>& grid, const std::vector<double>& table, std::size_t width, double t,
                 std::span<double> out) {
  const std::size_t n = grid.size();
  if (n == 1) {
    std::copy(table.begin(), table.begin() + static_cast<std::ptrdiff_t>(width), out.begin());
    return;
  }
  t = std::clamp(t, grid.front(), grid.back());
  auto it = std::upper_bound(grid.begin(), grid.end(), t);
  auto i = static_cast<std::size_t>(std::distance(grid.begin(), it));
  i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
  const double s = std::clamp((t - grid[i]) / (grid[i + 1] - grid[i]), 0.0, 1.0);
  for (std::size_t e = 0; e < width; ++e) out[e] = (1.0 - s) * table[i * width + e] + s * table[(i + 1) * width + e];
}

}  // namespace

std::vector<double> dyadic_times(double T, std::size_t levels) {
  std::vector<double> out{0.0};
  for (std::size_t l = levels; l-- > 1;) out.push_back(T / std::pow(2.0, static_cast<double>(l)));
  out.push_back(T);
  return out;
}

EnsembleSummary summarize(std::span<const double> data, std::size_t n_paths, std::size_t n_times, std::size_t m) {
  EnsembleSummary s;
  s.mean.assign(n_times, std::vector<double>(m, 0.0));
  s.cov.assign(n_times, std::vector<std::vector<double>>(m, std::vector<double>(m, 0.0)));
  if (n_paths == 0) return s;
  std::vector<double> buf(n_paths);
  for (std::size_t t = 0; t < n_times; ++t) {
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t p = 0; p < n_paths; ++p) buf[p] = data[(p * n_times + t) * m + k];
      s.mean[t][k] = pairwise_sum(buf) / static_cast<double>(n_paths);
    }
    if (n_paths < 2) continue;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a; b < m; ++b) {
        for (std::size_t p = 0; p < n_paths; ++p) {
          buf[p] = (data[(p * n_times + t) * m + a] - s.mean[t][a]) * (data[(p * n_times + t) * m + b] - s.mean[t][b]);
        }
        const double c = pairwise_sum(buf) / static_cast<double>(n_paths - 1);
        s.cov[t][a][b] = c;
        s.cov[t][b][a] = c;
      }
    }
  }
  return s;
}

std::vector<double> FluctuationEnsemble::marginal(std::size_t time, std::size_t k) const {
  std::vector<double> out(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) out[p] = at(p, time, k);
  return out;
}

std::vector<double> OUEnsemble::marginal(std::size_t time, std::size_t k) const {
  std::vector<double> out(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) out[p] = paths[(p * times.size() + time) * slow_dim + k];
  return out;
}

FluctuationEnsemble eta_ensemble(const MultiscaleSystem& sys, const ScaleSchedule& sched, const LimitOrbit& orbit,
                                 std::span<const double> y0, double T, double dt, std::size_t n_paths,
                                 std::uint64_t seed, const EnsembleOptions& opts) {
  if (!(sched.beta > 0.0)) throw std::invalid_argument("eta_ensemble: beta must be positive");
  if (orbit.times.back() < T * (1.0 - 1e-12)) throw std::invalid_argument("eta_ensemble: orbit does not cover [0, T]");
  const std::size_t m = sys.slow_dim;
  if (orbit.slow_dim != m) throw std::invalid_argument("eta_ensemble: orbit dimension mismatch");

  FluctuationEnsemble ens;
  ens.sched = sched;
  ens.slow_dim = m;
  ens.n_paths = n_paths;
  ens.times = default_times(opts.record_times, T);
  const std::size_t steps = step_count(T, dt);
  ens.dt = T / static_cast<double>(steps);
  const auto idx = record_indices(ens.times, T, steps);
  const std::size_t n_times = ens.times.size();
  ens.eta.assign(n_paths * n_times * m, 0.0);
  ens.sup_errors.assign(n_paths, 0.0);

  parallel_for(n_paths, [&](std::size_t p) {
    SimulationOptions sim = opts.sim;
    sim.path_index = p;
    std::vector<double> xbar(m);
    std::size_t next = 0;
    double sup = 0.0;
    integrate_path(sys, sched, orbit.x0, y0, T, dt, seed, sim,
                   [&](std::size_t i, double t, std::span<const double> x, std::span<const double>) {
                     orbit.state_at(t, xbar);
                     double dev = 0.0;
                     for (std::size_t k = 0; k < m; ++k) dev += (x[k] - xbar[k]) * (x[k] - xbar[k]);
                     sup = std::max(sup, std::sqrt(dev));
                     while (next < n_times && idx[next] == i) {
                       for (std::size_t k = 0; k < m; ++k) {
                         ens.eta[(p * n_times + next) * m + k] = (x[k] - xbar[k]) / sched.beta;
                       }
                       ++next;
                     }
                   });
    ens.sup_errors[p] = sup;
  });
  ens.summary = summarize(ens.eta, n_paths, n_times, m);
  return ens;
}

// ---------------------------------------------------------------- limit equation

void OULimit::A_at(double t, std::span<double> out) const { interpolate(grid, A, slow_dim * slow_dim, t, out); }
void OULimit::J_bar_at(double t, std::span<double> out) const { interpolate(grid, J_bar, slow_dim, t, out); }
void OULimit::q_bar_at(double t, std::span<double> out) const { interpolate(grid, q_bar, slow_dim * slow_dim, t, out); }
void OULimit::q_bar_sqrt_at(double t, std::span<double> out) const {
  interpolate(grid, q_bar_sqrt, slow_dim * slow_dim, t, out);
}

OULimit ou_limit(const HomogenizedModel& model, const LimitOrbit& orbit, const ScaleSchedule& sched,
                 std::size_t stride) {
  OULimit lim;
  const std::size_t m = model.slow_dim();
  lim.slow_dim = m;
  lim.drift_weight = sched.drift_weight();
  lim.noise_on = sched.noise_on();
  stride = std::max<std::size_t>(1, stride);
  const std::size_t last = orbit.times.size() - 1;
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < last; i += stride) nodes.push_back(i);
  nodes.push_back(last);
  for (std::size_t i : nodes) {
    const auto x = orbit.state(i);
    const auto A = model.D_lambda_bar(x);
    const auto point = model.at(x);
    lim.grid.push_back(orbit.times[i]);
    lim.A.insert(lim.A.end(), A.begin(), A.end());
    lim.J_bar.insert(lim.J_bar.end(), point->coeffs.J_bar.begin(), point->coeffs.J_bar.end());
    lim.q_bar.insert(lim.q_bar.end(), point->coeffs.q_bar.begin(), point->coeffs.q_bar.end());
    lim.q_bar_sqrt.insert(lim.q_bar_sqrt.end(), point->coeffs.q_bar_sqrt.begin(), point->coeffs.q_bar_sqrt.end());
  }
  return lim;
}

OULimit ou_limit(std::size_t m, const MatrixFunction& A, const MatrixFunction& J_bar, const MatrixFunction& q_bar,
                 double T, std::size_t n_nodes, double drift_weight, bool noise_on) {
  if (n_nodes == 0 || !(T > 0.0)) throw std::invalid_argument("ou_limit: need T > 0 and at least one interval");
  OULimit lim;
  lim.slow_dim = m;
  lim.drift_weight = drift_weight;
  lim.noise_on = noise_on;
  for (std::size_t i = 0; i <= n_nodes; ++i) {
    const double t = T * static_cast<double>(i) / static_cast<double>(n_nodes);
    const auto a = A(t), j = J_bar(t), q = q_bar(t);
    if (a.size() != m * m || j.size() != m || q.size() != m * m) throw std::invalid_argument("ou_limit: bad shapes");
    const auto r = psd_sqrt(q, m);
    lim.grid.push_back(t);
    lim.A.insert(lim.A.end(), a.begin(), a.end());
    lim.J_bar.insert(lim.J_bar.end(), j.begin(), j.end());
    lim.q_bar.insert(lim.q_bar.end(), q.begin(), q.end());
    lim.q_bar_sqrt.insert(lim.q_bar_sqrt.end(), r.begin(), r.end());
  }
  return lim;
}

OULimit ou_limit_constant(std::span<const double> A, std::span<const double> J_bar, std::span<const double> q_bar,
                          double T, double drift_weight, bool noise_on) {
  std::vector<double> a(A.begin(), A.end()), j(J_bar.begin(), J_bar.end()), q(q_bar.begin(), q_bar.end());
  return ou_limit(
      j.size(), [a](double) { return a; }, [j](double) { return j; }, [q](double) { return q; }, T, 1, drift_weight,
      noise_on);
}

OUEnsemble simulate_limit_ou(const OULimit& limit, double T, double dt, std::size_t n_paths, std::uint64_t seed,
                             std::vector<double> record_times) {
  const std::size_t m = limit.slow_dim;
  OUEnsemble out;
  out.slow_dim = m;
  out.n_paths = n_paths;
  out.times = default_times(std::move(record_times), T);
  const std::size_t steps = step_count(T, dt);
  const double h = T / static_cast<double>(steps);
  out.dt = h;
  const auto idx = record_indices(out.times, T, steps);
  const std::size_t n_times = out.times.size();
  out.paths.assign(n_paths * n_times * m, 0.0);

  parallel_for(n_paths, [&](std::size_t p) {
    RandomStream rng(seed, p, StreamPurpose::limit_noise);
    std::vector<double> eta(m, 0.0), A(m * m), J(m), R(m * m), dW(m), next_eta(m);
    std::size_t next = 0;
    auto record = [&](std::size_t i) {
      while (next < n_times && idx[next] == i) {
        std::copy(eta.begin(), eta.end(), out.paths.begin() + static_cast<std::ptrdiff_t>((p * n_times + next) * m));
        ++next;
      }
    };
    record(0);
    for (std::size_t s = 0; s < steps; ++s) {
      const double t = h * static_cast<double>(s);
      limit.A_at(t, A);
      limit.J_bar_at(t, J);
      limit.q_bar_sqrt_at(t, R);
      rng.fill_normal(dW, std::sqrt(h));
      for (std::size_t i = 0; i < m; ++i) {
        double drift = limit.drift_weight * J[i];
        double noise = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          drift += A[i * m + j] * eta[j];
          noise += R[i * m + j] * dW[j];
        }
        next_eta[i] = eta[i] + h * drift + (limit.noise_on ? noise : 0.0);
      }
      eta.swap(next_eta);
      record(s + 1);
    }
  });
  out.summary = summarize(out.paths, n_paths, n_times, m);
  return out;
}

DuhamelResult duhamel_solution(const OULimit& limit, double T, double dt, std::size_t n_paths, std::uint64_t seed,
                               std::vector<double> record_times) {
  const std::size_t m = limit.slow_dim;
  const auto M = static_cast<Eigen::Index>(m);
  const std::size_t steps = step_count(T, dt);
  const double h = T / static_cast<double>(steps);

  DuhamelResult res;
  res.times.resize(steps + 1);
  res.Psi.resize((steps + 1) * m * m);
  res.H.resize((steps + 1) * m);
  // Psi^-1 and Psi^-1 qbar^{1/2} at every node, shared by all paths.
  std::vector<double> inv_noise((steps + 1) * m * m);

  std::vector<double> Abuf(m * m);
  auto A_at = [&](double t) {
    limit.A_at(t, Abuf);
    return RowMatrix(as_matrix(Abuf, m));
  };
  RowMatrix Psi = RowMatrix::Identity(M, M);
  Eigen::VectorXd integral_J = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd prev_term = Eigen::VectorXd::Zero(M);
  std::vector<double> Jb(m), Rb(m * m);
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = s == steps ? T : h * static_cast<double>(s);
    res.times[s] = t;
    if (s > 0) {
      const double t0 = h * static_cast<double>(s - 1);
      const RowMatrix A0 = A_at(t0), Am = A_at(t0 + 0.5 * h), A1 = A_at(t);
      const RowMatrix k1 = A0 * Psi;
      const RowMatrix k2 = Am * (Psi + 0.5 * h * k1);
      const RowMatrix k3 = Am * (Psi + 0.5 * h * k2);
      const RowMatrix k4 = A1 * (Psi + h * k3);
      Psi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Eigen::JacobiSVD<RowMatrix> svd(Psi);
    const auto sv = svd.singularValues();
    const double cond = sv(0) / std::max(sv(M - 1), 1e-300);
    res.max_condition = std::max(res.max_condition, cond);
    if (!(cond <= kPsiConditionLimit)) {
      std::ostringstream os;
      os << "fundamental solution is ill-conditioned (cond " << cond << " at t = " << t << ")";
      throw std::runtime_error(os.str());
    }
    const RowMatrix Pinv = Psi.inverse();
    limit.J_bar_at(t, Jb);
    limit.q_bar_sqrt_at(t, Rb);
    const Eigen::VectorXd term = Pinv * Eigen::Map<const Eigen::VectorXd>(Jb.data(), M);
    if (s > 0) integral_J += 0.5 * h * (prev_term + term);
    prev_term = term;
    const Eigen::VectorXd Hs = Psi * integral_J;
    std::copy(Psi.data(), Psi.data() + m * m, res.Psi.begin() + static_cast<std::ptrdiff_t>(s * m * m));
    std::copy(Hs.data(), Hs.data() + m, res.H.begin() + static_cast<std::ptrdiff_t>(s * m));
    const RowMatrix N = Pinv * as_matrix(Rb, m);
    std::copy(N.data(), N.data() + m * m, inv_noise.begin() + static_cast<std::ptrdiff_t>(s * m * m));
  }

  OUEnsemble& out = res.eta;
  out.slow_dim = m;
  out.n_paths = n_paths;
  out.dt = h;
  out.times = default_times(std::move(record_times), T);
  const auto idx = record_indices(out.times, T, steps);
  const std::size_t n_times = out.times.size();
  out.paths.assign(n_paths * n_times * m, 0.0);

  parallel_for(n_paths, [&](std::size_t p) {
    RandomStream rng(seed, p, StreamPurpose::limit_noise);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(M);
    std::vector<double> dW(m);
    std::size_t next = 0;
    auto record = [&](std::size_t s) {
      while (next < n_times && idx[next] == s) {
        const Eigen::VectorXd theta = as_matrix(std::span<const double>(res.Psi).subspan(s * m * m, m * m), m) * acc;
        for (std::size_t k = 0; k < m; ++k) {
          double v = limit.drift_weight * res.H[s * m + k];
          if (limit.noise_on) v += theta(static_cast<Eigen::Index>(k));
          out.paths[(p * n_times + next) * m + k] = v;
        }
        ++next;
      }
    };
    record(0);
    for (std::size_t s = 0; s < steps; ++s) {
      rng.fill_normal(dW, std::sqrt(h));
      acc += as_matrix(std::span<const double>(inv_noise).subspan(s * m * m, m * m), m) *
             Eigen::Map<const Eigen::VectorXd>(dW.data(), M);
      record(s + 1);
    }
  });
  out.summary = summarize(out.paths, n_paths, n_times, m);
  return res;
}

CovarianceTable ou_covariance(const OULimit& limit, double T, double dt) {
  if (!limit.noise_on) throw std::invalid_argument("ou_covariance: the limit has no noise (ell = 0)");
  const std::size_t m = limit.slow_dim;
  const auto M = static_cast<Eigen::Index>(m);
  const std::size_t steps = step_count(T, dt);
  const double h = T / static_cast<double>(steps);
  CovarianceTable tab;
  tab.slow_dim = m;
  std::vector<double> Ab(m * m), Qb(m * m);
  auto rhs = [&](double t, const RowMatrix& S) {
    limit.A_at(t, Ab);
    limit.q_bar_at(t, Qb);
    const auto A = as_matrix(Ab, m);
    return RowMatrix(A * S + S * A.transpose() + as_matrix(Qb, m));
  };
  RowMatrix S = RowMatrix::Zero(M, M);
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = s == steps ? T : h * static_cast<double>(s);
    if (s > 0) {
      const double t0 = h * static_cast<double>(s - 1);
      const RowMatrix k1 = rhs(t0, S);
      const RowMatrix k2 = rhs(t0 + 0.5 * h, S + 0.5 * h * k1);
      const RowMatrix k3 = rhs(t0 + 0.5 * h, S + 0.5 * h * k2);
      const RowMatrix k4 = rhs(t, S + h * k3);
      S += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    tab.times.push_back(t);
    tab.sigma.insert(tab.sigma.end(), S.data(), S.data() + m * m);
  }
  return tab;
}

std::vector<double> ou_mean(const OULimit& limit, double T, double dt) {
  const std::size_t m = limit.slow_dim;
  const auto M = static_cast<Eigen::Index>(m);
  const std::size_t steps = step_count(T, dt);
  const double h = T / static_cast<double>(steps);
  std::vector<double> Ab(m * m), Jb(m);
  auto rhs = [&](double t, const Eigen::VectorXd& v) {
    limit.A_at(t, Ab);
    limit.J_bar_at(t, Jb);
    return Eigen::VectorXd(as_matrix(Ab, m) * v + limit.drift_weight * Eigen::Map<const Eigen::VectorXd>(Jb.data(), M));
  };
  Eigen::VectorXd v = Eigen::VectorXd::Zero(M);
  for (std::size_t s = 0; s < steps; ++s) {
    const double t0 = h * static_cast<double>(s);
    const Eigen::VectorXd k1 = rhs(t0, v);
    const Eigen::VectorXd k2 = rhs(t0 + 0.5 * h, v + 0.5 * h * k1);
    const Eigen::VectorXd k3 = rhs(t0 + 0.5 * h, v + 0.5 * h * k2);
    const Eigen::VectorXd k4 = rhs(t0 + h, v + h * k3);
    v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return std::vector<double>(v.data(), v.data() + m);
}

void write_ensemble_json(const FluctuationEnsemble& ens, std::span<const double> ks, std::ostream& os) {
  nlohmann::ordered_json j;
  j["epsilon"] = ens.sched.epsilon;
  j["regime"] = static_cast<int>(ens.sched.regime);
  j["beta"] = ens.sched.beta;
  if (ens.sched.ell_class == EllClass::infinite) {
    j["ell"] = "inf";
  } else {
    j["ell"] = ens.sched.ell;
  }
  j["times"] = ens.times;
  j["mean"] = ens.summary.mean;
  j["cov"] = ens.summary.cov;
  j["ks"] = std::vector<double>(ks.begin(), ks.end());
  os << j.dump(2) << '\n';
}

void write_terminal_csv(const FluctuationEnsemble& ens, std::ostream& os) {
  os << "path_id,eta_value\n";
  os.precision(17);
  const std::size_t last = ens.times.size() - 1;
  for (std::size_t p = 0; p < ens.n_paths; ++p) os << p << ',' << ens.at(p, last, 0) << '\n';
}

}  // namespace twoscale
