#include "adrop/theory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "adrop/errors.hpp"
#include "adrop/masking.hpp"
#include "adrop/rng.hpp"

namespace adrop {

double activation_coexpectation(std::span<const double> a,
                                std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("activation_coexpectation: length mismatch");
  double na = 0.0, nb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    ab += a[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = std::clamp(ab / std::sqrt(na * nb), -1.0, 1.0);
  const double angle = std::acos(c);
  constexpr double kPi = 3.141592653589793238462643383279502884;
  return (kPi - angle) / (2.0 * kPi);
}

double mc_activation_coexpectation(std::span<const double> a,
                                   std::span<const double> b,
                                   std::uint64_t draws, std::uint64_t seed) {
  if (a.size() != b.size())
    throw DimensionError("mc_activation_coexpectation: length mismatch");
  Rng rng(seed);
  std::vector<double> w(a.size());
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < draws; ++t) {
    for (auto& v : w) v = rng.normal();
    double da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      da += a[i] * w[i];
      db += b[i] * w[i];
    }
    hits += (da >= 0.0 && db >= 0.0);
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

NtkMatrix ntk_infty(std::span<const PatchedInput> xs) {
  const std::size_t n = xs.size();
  NtkMatrix k;
  k.n = n;
  k.h.assign(n * n, 0.0);
  if (n == 0) return k;
  const std::size_t p = xs[0].cols;
  const double inv_p2 = 1.0 / (static_cast<double>(p) * static_cast<double>(p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = i; c < n; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const auto a = xs[i].column(j);
        const auto b = xs[c].column(j);
        double ab = 0.0;
        for (std::size_t t = 0; t < a.size(); ++t) ab += a[t] * b[t];
        if (ab == 0.0) continue;
        s += ab * activation_coexpectation(a, b);
      }
      k.h[i * n + c] = s * inv_p2;
      k.h[c * n + i] = s * inv_p2;
    }
  }
  k.lambda0 = smallest_eigenvalue(k.h, n);
  return k;
}

NtkMatrix finite_ntk(const CnnModel& model, const ModelParams& w,
                     std::span<const PatchedInput> xs) {
  const auto* W = w.find("conv.filters");
  if (!W || W->rows != model.filters || W->cols != model.patch_rows)
    throw DimensionError("finite_ntk: parameter shape mismatch");
  const std::size_t n = xs.size();
  const std::size_t p = model.pixels;
  NtkMatrix k;
  k.n = n;
  k.h.assign(n * n, 0.0);

  // active[i][j] per filter r, with the closed indicator 1{z >= 0}.
  std::vector<std::uint8_t> act(n * p);
  std::vector<double> arj_sum(n * p);
  for (std::size_t r = 0; r < model.filters; ++r) {
    const std::span<const double> wr{W->values.data() + r * W->cols, W->cols};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const auto xj = xs[i].column(j);
        double z = 0.0;
        for (std::size_t t = 0; t < xj.size(); ++t) z += xj[t] * wr[t];
        act[i * p + j] = z >= 0.0;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = i; c < n; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
          if (!act[i * p + j]) continue;
          const auto xij = xs[i].column(j);
          for (std::size_t jp = 0; jp < p; ++jp) {
            if (!act[c * p + jp]) continue;
            const auto xcj = xs[c].column(jp);
            double ab = 0.0;
            for (std::size_t t = 0; t < xij.size(); ++t) ab += xij[t] * xcj[t];
            s += model.a_at(r, j) * model.a_at(r, jp) * ab;
          }
        }
        k.h[i * n + c] += s;
        if (c != i) k.h[c * n + i] += s;
      }
    }
  }
  (void)arj_sum;
  k.lambda0 = smallest_eigenvalue(k.h, n);
  return k;
}

double smallest_eigenvalue(std::span<const double> matrix, std::size_t n) {
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          matrix[i * n + j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    throw NumericError("smallest_eigenvalue: eigensolve failed");
  return solver.eigenvalues()(0);
}

TheoryTrace run_theory_trace(const TheoryRunConfig& cfg) {
  const Dataset data =
      gen_synthetic(cfg.n, cfg.channels, cfg.pixels, cfg.patch_width,
                    cfg.label_bound, derive_seed(cfg.seed, 0xDA7A));
  const auto xs = patch_dataset(data, cfg.patch_width);
  const auto kernel = ntk_infty(xs);
  if (kernel.lambda0 <= 0.0)
    throw ContractError("run_theory_trace: data violates distinctness (lambda0 <= 0)");

  TheoryTrace trace;
  trace.lambda0 = kernel.lambda0;
  trace.theta = theta(cfg.keep_rate, cfg.subnetworks);
  trace.eta = cfg.eta > 0.0
                  ? cfg.eta
                  : kernel.lambda0 /
                        (4.0 * static_cast<double>(cfg.n) * static_cast<double>(cfg.n));

  Rng init_rng(derive_seed(cfg.seed, 0x1417));
  CnnModel model = make_cnn(cfg.filters, cfg.patch_width, cfg.channels,
                            cfg.pixels, cfg.kappa, cfg.keep_rate, init_rng);
  ModelParams w = init_cnn_params(model, init_rng);
  const ModelParams w0 = w;

  auto record_loss = [&](const ModelParams& cur) {
    const auto u = cnn_outputs(model, cur, xs, nullptr);
    trace.losses.push_back(mse_loss(u, data.targets));
  };
  auto record_drift = [&](const ModelParams& cur) {
    const auto& g = cur.groups[0];
    const auto& g0 = w0.groups[0];
    double mx = 0.0;
    for (std::size_t r = 0; r < g.rows; ++r) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) {
        const double d = g.at(r, c) - g0.at(r, c);
        d2 += d * d;
      }
      mx = std::max(mx, std::sqrt(d2));
    }
    trace.max_drift.push_back(mx);
  };
  record_loss(w);
  record_drift(w);

  Rng mask_rng(derive_seed(cfg.seed, 0x3A5C));
  std::deque<ModelParams> history;  // history.back() == current
  history.push_back(w);

  for (std::size_t t = 0; t < cfg.merges; ++t) {
    const std::size_t delta =
        cfg.max_staleness == 0
            ? 0
            : std::min(t % (cfg.max_staleness + 1), t);
    trace.staleness.push_back(delta);
    const ModelParams& stale = history[history.size() - 1 - delta];

    // Surrogate gradients of S independent subnetworks at the stale
    // snapshot, averaged per unit by the normalizer N_r.
    ModelParams accum;
    accum.groups.push_back(make_group("conv.filters", model.filters,
                                      model.patch_rows, UnitAxis::Row, 0));
    std::vector<std::uint32_t> keepers(model.filters, 0);
    for (std::size_t s = 0; s < cfg.subnetworks; ++s) {
      const DropoutMask mask =
          random_mask(model.filters, cfg.keep_rate, cfg.mask_mode,
                      mask_rng.next_u64());
      for (std::size_t r = 0; r < model.filters; ++r) keepers[r] += mask.kept[r];
      const ModelParams g = cnn_gradient(model, stale, xs, data.targets, &mask);
      auto& dst = accum.groups[0].values;
      const auto& src = g.groups[0].values;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    auto& acc = accum.groups[0];
    for (std::size_t r = 0; r < model.filters; ++r) {
      if (keepers[r] <= 1) continue;  // N_r = max(sum, 1); Nperp factor is 0/1
      const double inv = 1.0 / static_cast<double>(keepers[r]);
      for (std::size_t c = 0; c < acc.cols; ++c) acc.at(r, c) *= inv;
    }

    axpy_update(w, accum, trace.eta);
    history.push_back(w);
    while (history.size() > cfg.max_staleness + 1) history.pop_front();
    record_loss(w);
    record_drift(w);
  }
  return trace;
}

EnvelopeReport envelope_check(std::span<const double> losses, double theta_v,
                              double eta, double lambda0,
                              double slack_fraction) {
  if (losses.empty()) throw ContractError("envelope_check: empty trace");
  if (lambda0 <= 0.0)
    throw ContractError("envelope_check: lambda0 must be positive");
  EnvelopeReport rep;
  const double initial = losses[0];
  // Empirical additive floor: median of the trace tail (final 10%).
  const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
  std::vector<double> t(losses.end() - static_cast<std::ptrdiff_t>(tail),
                        losses.end());
  std::sort(t.begin(), t.end());
  rep.floor = t.size() % 2 == 1
                  ? t[t.size() / 2]
                  : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
  rep.slack = slack_fraction * initial;
  const double rate = 1.0 - theta_v * eta * lambda0 / 4.0;
  double envelope = initial;
  rep.compliant = true;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (losses[i] > envelope + rep.floor + rep.slack) {
      ++rep.violations;
      if (rep.first_violation < 0)
        rep.first_violation = static_cast<std::ptrdiff_t>(i);
      rep.compliant = false;
    }
    envelope *= rate;
  }
  rep.decay_ratio = losses.back() / initial;
  return rep;
}

InitialMseReport initial_mse_check(const TheoryRunConfig& cfg,
                                   std::size_t ensembles, std::uint64_t seed) {
  if (ensembles < 2)
    throw ConfigError("initial_mse_check: need at least 2 initializations");
  const Dataset data =
      gen_synthetic(cfg.n, cfg.channels, cfg.pixels, cfg.patch_width,
                    cfg.label_bound, derive_seed(seed, 0xDA7A));
  const auto xs = patch_dataset(data, cfg.patch_width);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t e = 0; e < ensembles; ++e) {
    Rng rng(derive_seed(seed, 0x5EED, e));
    const CnnModel model = make_cnn(cfg.filters, cfg.patch_width, cfg.channels,
                                    cfg.pixels, cfg.kappa, cfg.keep_rate, rng);
    const ModelParams w = init_cnn_params(model, rng);
    const auto u = cnn_outputs(model, w, xs, nullptr);
    const double loss = mse_loss(u, data.targets);
    s1 += loss;
    s2 += loss * loss;
  }
  InitialMseReport rep;
  const double n = static_cast<double>(ensembles);
  rep.empirical_mean = s1 / n;
  const double var = std::max(0.0, s2 / n - rep.empirical_mean * rep.empirical_mean);
  rep.sem = std::sqrt(var / n);
  rep.bound = (1.0 / static_cast<double>(cfg.pixels) +
               cfg.label_bound * cfg.label_bound) *
              static_cast<double>(cfg.n);
  const double allowance =
      rep.empirical_mean > 0.0 ? 1.0 + 3.0 * rep.sem / rep.empirical_mean : 1.0;
  rep.pass = rep.empirical_mean <= rep.bound * allowance;
  return rep;
}

DriftReport drift_monitor(std::span<const double> max_drift_per_step,
                          double radius) {
  DriftReport rep;
  rep.radius = radius;
  rep.max_drift.assign(max_drift_per_step.begin(), max_drift_per_step.end());
  for (std::size_t i = 0; i < rep.max_drift.size(); ++i) {
    if (rep.max_drift[i] > radius) {
      rep.within_radius = false;
      if (rep.first_excess < 0) rep.first_excess = static_cast<std::ptrdiff_t>(i);
      break;
    }
  }
  return rep;
}

std::string TheoryReport::text() const {
  std::ostringstream os;
  os << "=== theory report ===\n";
  os << "lambda0              " << lambda0 << "\n";
  os << "eta                  " << eta << "\n";
  os << "theta                " << theta << "\n";
  os << "ntk closed-vs-mc     max |err| = " << ntk_max_abs_error << " ("
     << (ntk_pass ? "pass" : "FAIL") << ")\n";
  os << "lambda0 > 1e-10      " << (lambda0_positive ? "pass" : "FAIL") << "\n";
  os << "envelope compliant   " << (envelope.compliant ? "pass" : "FAIL")
     << " (floor=" << envelope.floor << ", slack=" << envelope.slack
     << ", violations=" << envelope.violations << ")\n";
  os << "loss decay ratio     " << envelope.decay_ratio << "\n";
  os << "initial mse          mean=" << initial_mse.empirical_mean
     << " bound=" << initial_mse.bound << " ("
     << (initial_mse.pass ? "pass" : "FAIL") << ")\n";
  return os.str();
}

std::string TheoryReport::csv_header() const {
  return "lambda0,eta,theta,ntk_max_abs_error,ntk_pass,lambda0_positive,"
         "envelope_floor,envelope_compliant,envelope_violations,decay_ratio,"
         "initial_mse_mean,initial_mse_bound,initial_mse_pass";
}

std::string TheoryReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << lambda0 << ',' << eta << ',' << theta << ',' << ntk_max_abs_error << ','
     << (ntk_pass ? 1 : 0) << ',' << (lambda0_positive ? 1 : 0) << ','
     << envelope.floor << ',' << (envelope.compliant ? 1 : 0) << ','
     << envelope.violations << ',' << envelope.decay_ratio << ','
     << initial_mse.empirical_mean << ',' << initial_mse.bound << ','
     << (initial_mse.pass ? 1 : 0);
  return os.str();
}

}  // namespace adrop
