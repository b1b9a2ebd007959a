#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <mutex>
#include <thread>
#include <vector>

#include <json.hpp>

#include "isac/beamform.hpp"
#include "isac/channel.hpp"
#include "isac/grid.hpp"
#include "isac/rng.hpp"
#include "isac/sensing.hpp"

namespace isac {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { estimate, prob_sweep, mse_sweep, beamform, rate_sweep, convergence };

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "estimate") return ExperimentKind::estimate;
  if (s == "prob-sweep") return ExperimentKind::prob_sweep;
  if (s == "mse-sweep") return ExperimentKind::mse_sweep;
  if (s == "beamform") return ExperimentKind::beamform;
  if (s == "rate-sweep") return ExperimentKind::rate_sweep;
  if (s == "convergence") return ExperimentKind::convergence;
  throw ConfigError("unknown experiment kind: " + s);
}

inline const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::estimate: return "estimate";
    case ExperimentKind::prob_sweep: return "prob-sweep";
    case ExperimentKind::mse_sweep: return "mse-sweep";
    case ExperimentKind::beamform: return "beamform";
    case ExperimentKind::rate_sweep: return "rate-sweep";
    case ExperimentKind::convergence: return "convergence";
  }
  return "?";
}

/// Flat JSON experiment configuration. Defaults reproduce the reference
/// simulation setup: 64x16 grid at 15 kHz spacing, 8x8 IRS, 4 BS antennas,
/// 4 paths per hop, 28 GHz carrier, 120 km/h, SNR 20 dB, 1000 trials.
/// gamma1 is the sensing MSE target in Doppler-bin^2 units (multiples of
/// (1/(N t_s))^2).
struct ExperimentConfig {
  int m = 64;
  int n = 16;
  double delta_f_hz = 15e3;
  int k_p = -1;  ///< -1: center (n/2)
  int l_p = -1;  ///< -1: center (m/2)
  int l_max = 8;
  int n_b = 4;
  int n_i1 = 8;
  int n_i2 = 8;
  int l_ui = 4;
  int l_ib = 4;
  double v_max_kmh = 120.0;
  double f_c_hz = 28e9;
  std::vector<double> snr_db = {20.0};
  int trials = 1000;
  std::uint64_t seed = 1;
  double gamma1 = 1e-3;
  int t1 = 10;
  double eps1 = 1e-6;
  std::string kind = "estimate";

  int resolved_k_p() const { return k_p >= 0 ? k_p : n / 2; }
  int resolved_l_p() const { return l_p >= 0 ? l_p : m / 2; }

  OtfsGrid grid() const {
    OtfsGrid g{m, n, delta_f_hz, resolved_k_p(), resolved_l_p(), l_max};
    return g;
  }

  ScenarioParams scenario_params(double sigma2) const {
    ScenarioParams p;
    p.grid = grid();
    p.n_b = n_b;
    p.n_i1 = n_i1;
    p.n_i2 = n_i2;
    p.l_ui = l_ui;
    p.l_ib = l_ib;
    p.v_max_mps = v_max_kmh / 3.6;
    p.f_c_hz = f_c_hz;
    p.x_p = 1.0;
    p.sigma2 = sigma2;
    return p;
  }

  double sigma2_for(double snr) const { return std::pow(10.0, -snr / 10.0); }

  /// MSE target converted to Hz^2.
  double gamma1_hz2() const {
    const double bin = grid().doppler_resolution();
    return gamma1 * bin * bin;
  }

  void validate() const {
    if (m < 1) throw ConfigError("config field m must be >= 1");
    if (n < 3) throw ConfigError("config field n must be >= 3");
    if (!(delta_f_hz > 0)) throw ConfigError("config field delta_f_hz must be > 0");
    if (l_max < 0) throw ConfigError("config field l_max must be >= 0");
    if (resolved_k_p() < 0 || resolved_k_p() >= n) throw ConfigError("config field k_p out of [0, n)");
    if (resolved_l_p() - l_max < 0 || resolved_l_p() + l_max >= m)
      throw ConfigError("config fields l_p/l_max: guard band does not fit the frame");
    if (n_b < 1) throw ConfigError("config field n_b must be >= 1");
    if (n_i1 < 1 || n_i2 < 1) throw ConfigError("config fields n_i1/n_i2 must be >= 1");
    if (l_ui < 1 || l_ib < 1) throw ConfigError("config fields l_ui/l_ib must be >= 1");
    if ((l_ui > 1 || l_ib > 1) && l_max < 2)
      throw ConfigError("config field l_max too small for multipath delay taps");
    if (!(v_max_kmh >= 0)) throw ConfigError("config field v_max_kmh must be >= 0");
    if (!(f_c_hz > 0)) throw ConfigError("config field f_c_hz must be > 0");
    if (max_doppler_hz(v_max_kmh / 3.6, f_c_hz) >= 0.5 * delta_f_hz)
      throw ConfigError("config field v_max_kmh exceeds the representable Doppler range");
    if (snr_db.empty()) throw ConfigError("config field snr_db must be nonempty");
    if (trials < 1) throw ConfigError("config field trials must be >= 1");
    if (!(gamma1 > 0)) throw ConfigError("config field gamma1 must be > 0");
    if (t1 < 1) throw ConfigError("config field t1 must be >= 1");
    if (!(eps1 > 0)) throw ConfigError("config field eps1 must be > 0");
    parse_kind(kind);
  }

  nlohmann::json resolved_json() const {
    nlohmann::json j;
    j["m"] = m;
    j["n"] = n;
    j["delta_f_hz"] = delta_f_hz;
    j["k_p"] = resolved_k_p();
    j["l_p"] = resolved_l_p();
    j["l_max"] = l_max;
    j["n_b"] = n_b;
    j["n_i1"] = n_i1;
    j["n_i2"] = n_i2;
    j["l_ui"] = l_ui;
    j["l_ib"] = l_ib;
    j["v_max_kmh"] = v_max_kmh;
    j["f_c_hz"] = f_c_hz;
    j["snr_db"] = snr_db;
    j["trials"] = trials;
    j["seed"] = seed;
    j["gamma1"] = gamma1;
    j["t1"] = t1;
    j["eps1"] = eps1;
    j["kind"] = kind;
    return j;
  }

  /// FNV-1a of the canonical resolved config, carried on every CSV row.
  std::string hash() const {
    const std::string dump = resolved_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  const auto num = [&](const char* key, auto& field) {
    if (!j.at(key).is_number()) throw ConfigError(std::string("config field ") + key + " must be numeric");
    field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "m") num("m", c.m);
    else if (key == "n") num("n", c.n);
    else if (key == "delta_f_hz") num("delta_f_hz", c.delta_f_hz);
    else if (key == "k_p") num("k_p", c.k_p);
    else if (key == "l_p") num("l_p", c.l_p);
    else if (key == "l_max") num("l_max", c.l_max);
    else if (key == "n_b") num("n_b", c.n_b);
    else if (key == "n_i1") num("n_i1", c.n_i1);
    else if (key == "n_i2") num("n_i2", c.n_i2);
    else if (key == "l_ui") num("l_ui", c.l_ui);
    else if (key == "l_ib") num("l_ib", c.l_ib);
    else if (key == "v_max_kmh") num("v_max_kmh", c.v_max_kmh);
    else if (key == "f_c_hz") num("f_c_hz", c.f_c_hz);
    else if (key == "trials") num("trials", c.trials);
    else if (key == "seed") num("seed", c.seed);
    else if (key == "gamma1") num("gamma1", c.gamma1);
    else if (key == "t1") num("t1", c.t1);
    else if (key == "eps1") num("eps1", c.eps1);
    else if (key == "snr_db") {
      if (value.is_number()) c.snr_db = {value.get<double>()};
      else if (value.is_array() && !value.empty()) {
        c.snr_db.clear();
        for (const auto& v : value) {
          if (!v.is_number()) throw ConfigError("config field snr_db must hold numbers");
          c.snr_db.push_back(v.get<double>());
        }
      } else throw ConfigError("config field snr_db must be a number or nonempty array");
    } else if (key == "kind") {
      if (!value.is_string()) throw ConfigError("config field kind must be a string");
      c.kind = value.get<std::string>();
    } else {
      throw ConfigError("unknown config field: " + key);
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  return config_from_json(j);
}

/// Numeric result table; the resolved config hash rides along on every row.
struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::string config_hash;
};

inline void emit_csv(const ResultTable& t, std::ostream& out) {
  for (const auto& c : t.columns) out << c << ',';
  out << "config_hash\n";
  char buf[32];
  for (const auto& row : t.rows) {
    for (double v : row) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << t.config_hash << '\n';
  }
}

inline void emit_csv(const ResultTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot write " + path);
  emit_csv(t, out);
}

inline std::string csv_string(const ResultTable& t) {
  std::ostringstream ss;
  emit_csv(t, ss);
  return ss.str();
}

inline ResultTable parse_csv(std::istream& in) {
  ResultTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_csv: empty input");
  std::stringstream hs(line);
  std::string cell;
  std::vector<std::string> cols;
  while (std::getline(hs, cell, ',')) cols.push_back(cell);
  if (cols.empty() || cols.back() != "config_hash")
    throw std::runtime_error("parse_csv: missing config_hash column");
  cols.pop_back();
  t.columns = cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> row;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      if (!std::getline(ls, cell, ',')) throw std::runtime_error("parse_csv: short row");
      row.push_back(std::stod(cell));
    }
    if (!std::getline(ls, cell)) throw std::runtime_error("parse_csv: missing hash");
    t.config_hash = cell;
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Standalone matplotlib script that reads only the emitted CSV.
inline void emit_plot_script(const ResultTable& t, const std::string& path,
                             const std::string& csv_path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_plot_script: cannot write " + path);
  out << "#!/usr/bin/env python3\n"
      << "import csv\n"
      << "import matplotlib\n"
      << "matplotlib.use('Agg')\n"
      << "import matplotlib.pyplot as plt\n\n"
      << "csv_path = " << nlohmann::json(csv_path).dump() << "\n"
      << "with open(csv_path) as f:\n"
      << "    rows = list(csv.DictReader(f))\n"
      << "cols = [c for c in rows[0].keys() if c != 'config_hash'] if rows else []\n"
      << "x = [float(r[cols[0]]) for r in rows]\n"
      << "fig, ax = plt.subplots()\n"
      << "series = {c: [float(r[c]) for r in rows] for c in cols[1:]}\n"
      << "positive = all(v > 0 for vs in series.values() for v in vs)\n"
      << "spread = (max(max(vs) for vs in series.values()) /\n"
      << "          max(min(min(vs) for vs in series.values()), 1e-300)) if series else 1\n"
      << "plot = ax.semilogy if positive and spread > 1e3 else ax.plot\n"
      << "for name, vs in series.items():\n"
      << "    plot(x, vs, marker='o', label=name)\n"
      << "ax.set_xlabel(cols[0] if cols else '')\n"
      << "ax.grid(True, which='both', alpha=0.3)\n"
      << "ax.legend()\n"
      << "out_path = csv_path.rsplit('.', 1)[0] + '.png'\n"
      << "fig.savefig(out_path, dpi=150, bbox_inches='tight')\n"
      << "print('wrote', out_path)\n";
}

namespace detail {

/// Deterministic parallel map: slot i is written by whichever worker claims
/// trial i, then reduced in index order by the caller.
template <typename F>
void parallel_for_trials(int count, int n_threads, F&& fn) {
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, count));
  if (n_threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  pool.reserve(n_threads);
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

/// One sensing Monte Carlo trial with strongest-path beams.
struct SenseTrial {
  double nu_true = 0.0;
  double nu_hat = 0.0;
  double err = 0.0;
  bool event_ok = false;    ///< peak and correct side peak identified
  bool closed_valid = false;
  double p_closed = 0.0;
  double mse_a = 0.0, mse_u = 0.0, d_lo = 0.0, d_hi = 0.0;
};

inline SenseTrial run_sense_trial(const ScenarioParams& params, std::uint64_t seed, int trial) {
  Rng rng = trial_rng(seed, static_cast<std::uint64_t>(trial));
  const Scenario scn = random_scenario(params, rng);
  const OtfsGrid& g = scn.grid;
  const BeamPair bp = baseline_strongest(scn);
  const CMat y = simulate_rx(pilot_frame(g, scn.x_p), scn, bp.r, bp.xi, rng);
  const Eigen::VectorXd z = extract_los_bin(y, g, scn.los_delay_bin());
  const SenseReport rep = ratio_estimate(z, g);

  SenseTrial out;
  out.nu_true = scn.los_ui().doppler_hz;
  out.nu_hat = rep.nu_hat_hz;
  out.err = rep.nu_hat_hz - out.nu_true;

  const FractionalOffset fo = fractional_offset(out.nu_true, g);
  const int k1s = ((g.k_p + fo.kappa) % g.n + g.n) % g.n;
  out.event_ok = (rep.k1 == k1s) && (fo.chi >= 0.0 ? rep.side_right : !rep.side_right);

  const double habs = std::abs(path_pair_coeff(scn.los_ui(), scn.los_ib(), g) *
                               beta_gain(bp.r, bp.xi, scn.los_ui(), scn.los_ib(), scn.n_i1, scn.n_i2));
  const KernelAmps amps = kernel_amps(out.nu_true, g, scn.x_p);
  const double z1p = habs * amps.a_k1;
  const double zbig = habs * kernel_amp_larger_side(amps);
  if (zbig > 0.0 && z1p > zbig) {
    out.closed_valid = true;
    out.p_closed = p_eff_closed(habs * amps.a_k2, habs * amps.a_k3, scn.sigma2);
    out.mse_a = mse_approx(amps, z1p, zbig, scn.sigma2, g);
    out.mse_u = mse_upper(amps, z1p, zbig, scn.sigma2, g);
    const auto sand = mse_error_sandwich(amps, z1p, zbig, scn.sigma2, g);
    out.d_lo = sand.first;
    out.d_hi = sand.second;
  }
  return out;
}

}  // namespace detail

/// Run the configured experiment; deterministic for a fixed (config, seed)
/// regardless of n_threads (0 = hardware concurrency).
inline ResultTable run_experiment(const ExperimentConfig& cfg, int n_threads = 0) {
  cfg.validate();
  const ExperimentKind kind = parse_kind(cfg.kind);
  const OtfsGrid g = cfg.grid();
  ResultTable table;
  table.config_hash = cfg.hash();

  switch (kind) {
    case ExperimentKind::estimate: {
      table.columns = {"trial", "nu_true_hz", "nu_hat_hz", "err_hz"};
      const ScenarioParams params = cfg.scenario_params(cfg.sigma2_for(cfg.snr_db.front()));
      std::vector<detail::SenseTrial> res(cfg.trials);
      detail::parallel_for_trials(cfg.trials, n_threads, [&](int i) {
        res[i] = detail::run_sense_trial(params, cfg.seed, i);
      });
      for (int i = 0; i < cfg.trials; ++i)
        table.rows.push_back({static_cast<double>(i), res[i].nu_true, res[i].nu_hat, res[i].err});
      break;
    }
    case ExperimentKind::prob_sweep: {
      table.columns = {"snr_db", "p_eff_mc", "p_eff_closed", "ci95"};
      for (double snr : cfg.snr_db) {
        const ScenarioParams params = cfg.scenario_params(cfg.sigma2_for(snr));
        std::vector<detail::SenseTrial> res(cfg.trials);
        detail::parallel_for_trials(cfg.trials, n_threads, [&](int i) {
          res[i] = detail::run_sense_trial(params, cfg.seed, i);
        });
        double hits = 0.0, closed = 0.0;
        int n_closed = 0;
        for (const auto& r : res) {
          hits += r.event_ok ? 1.0 : 0.0;
          if (r.closed_valid) {
            closed += r.p_closed;
            ++n_closed;
          }
        }
        const double p = hits / cfg.trials;
        const double ci = 1.96 * std::sqrt(std::max(0.0, p * (1.0 - p) / cfg.trials));
        table.rows.push_back({snr, p, n_closed ? closed / n_closed : 0.0, ci});
      }
      break;
    }
    case ExperimentKind::mse_sweep: {
      table.columns = {"snr_db",     "mse_mc",    "mse_cond_mc", "mse_approx",
                       "mse_upper",  "delta_lower", "delta_upper"};
      for (double snr : cfg.snr_db) {
        const ScenarioParams params = cfg.scenario_params(cfg.sigma2_for(snr));
        std::vector<detail::SenseTrial> res(cfg.trials);
        detail::parallel_for_trials(cfg.trials, n_threads, [&](int i) {
          res[i] = detail::run_sense_trial(params, cfg.seed, i);
        });
        double se_all = 0.0, se_cond = 0.0, ma = 0.0, mu = 0.0, dl = 0.0, du = 0.0;
        int n_cond = 0, n_closed = 0;
        for (const auto& r : res) {
          se_all += r.err * r.err;
          if (r.event_ok) {
            se_cond += r.err * r.err;
            ++n_cond;
            if (r.closed_valid) {
              ma += r.mse_a;
              mu += r.mse_u;
              dl += r.d_lo;
              du += r.d_hi;
              ++n_closed;
            }
          }
        }
        table.rows.push_back({snr, se_all / cfg.trials,
                              n_cond ? se_cond / n_cond : 0.0,
                              n_closed ? ma / n_closed : 0.0,
                              n_closed ? mu / n_closed : 0.0,
                              n_closed ? dl / n_closed : 0.0,
                              n_closed ? du / n_closed : 0.0});
      }
      break;
    }
    case ExperimentKind::beamform: {
      table.columns = {"trial", "objective", "rate", "iterations", "admm_used", "feasible"};
      const ScenarioParams params = cfg.scenario_params(cfg.sigma2_for(cfg.snr_db.front()));
      const double gamma = 1.0 / params.sigma2;
      std::vector<std::vector<double>> rows(cfg.trials);
      detail::parallel_for_trials(cfg.trials, n_threads, [&](int i) {
        Rng rng = trial_rng(cfg.seed, static_cast<std::uint64_t>(i));
        const Scenario scn = random_scenario(params, rng);
        const OptimizeResult r = optimize(scn, cfg.gamma1_hz2(), cfg.t1, cfg.eps1);
        const CMat h = effective_channel(scn, r.r, r.xi, /*truncated=*/true);
        rows[i] = {static_cast<double>(i), r.objective_trace.back(), rate(h, gamma),
                   static_cast<double>(r.iterations), r.admm_used ? 1.0 : 0.0,
                   r.feasible ? 1.0 : 0.0};
      });
      table.rows = std::move(rows);
      break;
    }
    case ExperimentKind::rate_sweep: {
      table.columns = {"snr_db", "rate_subspace", "rate_strongest", "rate_random"};
      for (double snr : cfg.snr_db) {
        const ScenarioParams params = cfg.scenario_params(cfg.sigma2_for(snr));
        const double gamma = 1.0 / params.sigma2;
        std::vector<std::array<double, 3>> rows(cfg.trials);
        detail::parallel_for_trials(cfg.trials, n_threads, [&](int i) {
          Rng rng = trial_rng(cfg.seed, static_cast<std::uint64_t>(i));
          const Scenario scn = random_scenario(params, rng);
          const OptimizeResult r = optimize(scn, cfg.gamma1_hz2(), cfg.t1, cfg.eps1);
          const BeamPair st = baseline_strongest(scn);
          const BeamPair rd = baseline_random(scn, rng);
          rows[i] = {rate(effective_channel(scn, r.r, r.xi, true), gamma),
                     rate(effective_channel(scn, st.r, st.xi, true), gamma),
                     rate(effective_channel(scn, rd.r, rd.xi, true), gamma)};
        });
        double a = 0, b = 0, c = 0;
        for (const auto& r : rows) {
          a += r[0];
          b += r[1];
          c += r[2];
        }
        table.rows.push_back({snr, a / cfg.trials, b / cfg.trials, c / cfg.trials});
      }
      break;
    }
    case ExperimentKind::convergence: {
      table.columns = {"iter", "objective", "rate"};
      const ScenarioParams params = cfg.scenario_params(cfg.sigma2_for(cfg.snr_db.front()));
      const double gamma = 1.0 / params.sigma2;
      Rng rng = trial_rng(cfg.seed, 0);
      const Scenario scn = random_scenario(params, rng);
      OptimizeOptions opt;
      opt.record_iterates = true;
      const OptimizeResult r = optimize(scn, cfg.gamma1_hz2(), cfg.t1, cfg.eps1, opt);
      for (std::size_t it = 0; it < r.iterates.size(); ++it) {
        const CMat h = effective_channel(scn, r.iterates[it].r, r.iterates[it].xi, true);
        table.rows.push_back({static_cast<double>(it), r.objective_trace[it], rate(h, gamma)});
      }
      break;
    }
  }
  return table;
}

}  // namespace isac
