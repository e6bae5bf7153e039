// Command-line front end: bounds, ci, check-wald, simulate, replicate-tables.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "tvlate/identified_set.hpp"
#include "tvlate/inference.hpp"
#include "tvlate/io.hpp"
#include "tvlate/simulation.hpp"

using namespace tvlate;

namespace {

struct CommonData {
  std::string input, schema = "y=y,t=t,z=z";
  bool lenient = false;
};

Regime parse_regime(const std::string& s) {
  if (s == "unconditional") return Regime::unconditional;
  if (s == "conditional") return Regime::conditional;
  if (s == "with_r") return Regime::with_r;
  if (s == "no_t") return Regime::no_t;
  throw ValidationError("unknown regime '" + s + "'");
}

PartitionVariant variant_for(Regime r) {
  switch (r) {
    case Regime::with_r: return PartitionVariant::with_t_r;
    case Regime::no_t: return PartitionVariant::y_only;
    default: return PartitionVariant::with_t;
  }
}

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  if (const char* env = std::getenv("REPLICATE_THREADS")) {
    const int k = std::atoi(env);
    if (k > 0) return k;
  }
  return hardware_threads();
}

void emit(const json& out, const std::string& path) {
  if (path.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << out.dump(2) << "\n";
  }
}

void emit_csv(const std::string& body, const std::string& path) {
  if (path.empty()) {
    std::cout << body;
  } else {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << body;
  }
}

std::string config_comment(const json& cfg) {
  std::string line = "# config:";
  for (const auto& [k, v] : cfg.items()) line += " " + k + "=" + v.dump();
  return line + "\n";
}

std::vector<double> parse_theta_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("bad theta value '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("empty theta list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sharp LATE bounds and uniform confidence intervals under "
               "treatment misclassification"};
  app.set_config("--config", "", "key = value configuration file");
  app.require_subcommand(1);

  CommonData data;
  std::string regime_s = "unconditional";
  std::string output;
  int k_n = 4, v_cells = 0, threads = 0;
  bool equal_width = false;
  double eta = 0.01, tau_mult = 2.0;
  double alpha = 0.05, delta = 0.01;
  int b_reps = 1000, grid_points = 401, m_candidates = 0;
  double theta_lo = 0.0, theta_hi = 0.0;
  std::uint64_t seed = 0;
  double selection_beta = 0.0;
  double gamma = 0.0, rho = 0.25;
  std::size_t n_rows = 500, n_mc = 1000000;
  int sims = 1000;
  std::string theta_list_s = "0,1,2,3,4,5,6";
  int k_cells = kPopulationCells;

  auto add_data_opts = [&](CLI::App* cmd) {
    cmd->add_option("--input", data.input, "CSV input path");
    cmd->add_option("--schema", data.schema,
                    "y=<col>,t=<col>,z=<col>[,r=<col>][,v=<c1;c2;...>]");
    cmd->add_flag("--lenient", data.lenient,
                  "drop malformed rows instead of failing");
    cmd->add_option("--gamma", gamma,
                    "draw the sample from the built-in design instead of a "
                    "file (requires --seed)");
    cmd->add_option("--n", n_rows, "rows for the built-in design");
    cmd->add_option("--rho", rho, "copula parameter for the built-in design");
  };
  auto resolve_table = [&](CLI::App* cmd, Regime regime,
                           std::size_t& dropped) -> ObservationTable {
    const bool dgp_mode = cmd->count("--gamma") > 0;
    if (dgp_mode == !data.input.empty())
      throw ValidationError("supply exactly one of --input or --gamma");
    if (dgp_mode) {
      if (cmd->count("--seed") == 0 && seed == 0)
        throw ValidationError("the built-in design needs --seed");
      DgpConfig cfg;
      cfg.gamma = gamma;
      cfg.rho = rho;
      cfg.with_r = regime == Regime::with_r;
      cfg.n = n_rows;
      cfg.seed = seed;
      dropped = 0;
      return simulate(cfg);
    }
    auto rep = load_csv(data.input, parse_schema(data.schema), data.lenient);
    dropped = rep.dropped_rows;
    return std::move(rep.table);
  };
  auto add_part_opts = [&](CLI::App* cmd) {
    cmd->add_option("--k-n", k_n, "outcome cells");
    cmd->add_option("--v-cells", v_cells, "covariate cells per column");
    cmd->add_flag("--equal-width", equal_width,
                  "equally spaced cut points instead of quantiles");
  };

  auto* cmd_bounds = app.add_subcommand("bounds", "plug-in sharp identified set");
  add_data_opts(cmd_bounds);
  add_part_opts(cmd_bounds);
  cmd_bounds->add_option("--regime", regime_s,
                         "unconditional | conditional | with_r | no_t");
  cmd_bounds->add_option("--eta", eta, "propensity clip margin");
  cmd_bounds->add_option("--theta-lo", theta_lo, "parameter space lower bound");
  cmd_bounds->add_option("--theta-hi", theta_hi, "parameter space upper bound");
  cmd_bounds->add_option("--seed", seed, "seed for the built-in design");
  cmd_bounds->add_option("--output", output, "write JSON here (default stdout)");

  auto* cmd_ci = app.add_subcommand("ci", "test-inversion confidence interval");
  add_data_opts(cmd_ci);
  add_part_opts(cmd_ci);
  cmd_ci->add_option("--regime", regime_s);
  cmd_ci->add_option("--alpha", alpha, "test size");
  cmd_ci->add_option("--delta", delta,
                     "nuisance level; 0 holds pi at the plug-in fit");
  cmd_ci->add_option("--b-reps", b_reps, "bootstrap repetitions");
  cmd_ci->add_option("--seed", seed, "root seed")->required();
  cmd_ci->add_option("--theta-lo", theta_lo)->required();
  cmd_ci->add_option("--theta-hi", theta_hi)->required();
  cmd_ci->add_option("--grid-points", grid_points);
  cmd_ci->add_option("--m-candidates", m_candidates,
                     "propensity candidates (default 2d+1)");
  cmd_ci->add_option("--selection-beta", selection_beta,
                     "optional moment pre-selection level (0 = off)");
  cmd_ci->add_option("--eta", eta);
  cmd_ci->add_option("--threads", threads);
  cmd_ci->add_option("--output", output);

  auto* cmd_wald = app.add_subcommand("check-wald", "Wald validity check");
  add_data_opts(cmd_wald);
  add_part_opts(cmd_wald);
  cmd_wald->add_option("--tau-mult", tau_mult,
                       "cell tolerance in standard errors (0 = exact)");
  cmd_wald->add_option("--seed", seed, "seed for the built-in design");
  cmd_wald->add_option("--output", output);

  auto* cmd_sim = app.add_subcommand("simulate", "coverage experiment, CSV out");
  cmd_sim->add_option("--gamma", gamma, "misclassification rate")->required();
  cmd_sim->add_option("--regime", regime_s);
  cmd_sim->add_option("--theta-list", theta_list_s, "comma separated");
  cmd_sim->add_option("--n", n_rows, "sample size per replication");
  cmd_sim->add_option("--sims", sims, "replications");
  cmd_sim->add_option("--b-reps", b_reps);
  cmd_sim->add_option("--k-n", k_n);
  cmd_sim->add_option("--alpha", alpha);
  cmd_sim->add_option("--rho", rho, "copula parameter");
  cmd_sim->add_option("--seed", seed)->required();
  cmd_sim->add_option("--selection-beta", selection_beta);
  cmd_sim->add_option("--threads", threads);
  cmd_sim->add_option("--output", output);

  auto* cmd_tab =
      app.add_subcommand("replicate-tables", "population objects, CSV out");
  cmd_tab->add_option("--n-mc", n_mc, "Monte Carlo draws per cell");
  cmd_tab->add_option("--k-cells", k_cells, "outcome cells for the plug-in TV");
  cmd_tab->add_option("--seed", seed)->required();
  cmd_tab->add_option("--output", output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    json err{{"error", "invalid arguments"}, {"detail", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }

  try {
    if (*cmd_bounds) {
      const Regime regime = parse_regime(regime_s);
      std::size_t dropped = 0;
      const auto tab = resolve_table(cmd_bounds, regime, dropped);
      const auto part = build_partition(tab, k_n, variant_for(regime), v_cells,
                                        equal_width);
      std::optional<PropensityModel> pi;
      if (regime == Regime::conditional) pi = fit_lpm(tab, eta);
      std::optional<ParameterSpace> space;
      if (theta_lo < theta_hi) space = ParameterSpace{theta_lo, theta_hi};
      const auto set =
          sharp_set(tab, part, pi ? &*pi : nullptr, space, regime);
      const auto validity = part.split_by_t && !part.split_by_r
                                ? std::optional<WaldValidity>(
                                      wald_validity_check(tab, part, tau_mult))
                                : std::nullopt;
      json cfg{{"command", "bounds"},   {"input", data.input},
               {"schema", data.schema}, {"regime", regime_s},
               {"k_n", k_n},            {"v_cells", v_cells},
               {"equal_width", equal_width}, {"eta", eta},
               {"lenient", data.lenient}};
      if (cmd_bounds->count("--gamma") > 0)
        cfg["dgp"] = json{{"gamma", gamma}, {"rho", rho}, {"n", n_rows},
                          {"seed", seed}};
      json out{{"config", cfg},
               {"result", to_json(set, regime, k_n, tab.n)},
               {"partition", to_json(part)},
               {"dropped_rows", dropped}};
      if (pi) out["propensity"] = to_json(*pi);
      if (validity)
        out["wald_validity"] = json{{"holds", validity->holds},
                                    {"violating_cells", validity->violating_cells}};
      emit(out, output);
    } else if (*cmd_ci) {
      const Regime regime = parse_regime(regime_s);
      std::size_t dropped = 0;
      const auto tab = resolve_table(cmd_ci, regime, dropped);
      const auto part = build_partition(tab, k_n, variant_for(regime), v_cells,
                                        equal_width);
      PropensityCandidateSet cands;
      if (delta > 0.0) {
        cands = propensity_region(tab, delta, std::max(b_reps, 200),
                                  m_candidates, CounterRng(seed).fork(1).seed(),
                                  eta);
      } else {
        cands.delta = 0.0;
        cands.candidates.push_back(fit_lpm(tab, eta));
      }
      const auto ci = confidence_interval(
          tab, part, cands, ParameterSpace{theta_lo, theta_hi}, alpha,
          grid_points, b_reps, CounterRng(seed).fork(2).seed(), selection_beta,
          resolve_threads(threads));
      json cfg{{"command", "ci"},       {"input", data.input},
               {"schema", data.schema}, {"regime", regime_s},
               {"k_n", k_n},            {"alpha", alpha},
               {"delta", delta},        {"b_reps", b_reps},
               {"seed", seed},          {"theta_lo", theta_lo},
               {"theta_hi", theta_hi},  {"grid_points", grid_points},
               {"selection_beta", selection_beta}, {"eta", eta},
               {"equal_width", equal_width}, {"v_cells", v_cells},
               {"lenient", data.lenient}};
      if (cmd_ci->count("--gamma") > 0)
        cfg["dgp"] = json{{"gamma", gamma}, {"rho", rho}, {"n", n_rows},
                          {"seed", seed}};
      json out{{"config", cfg},
               {"result", to_json(ci)},
               {"candidates", to_json(cands)},
               {"dropped_rows", dropped}};
      emit(out, output);
    } else if (*cmd_wald) {
      std::size_t dropped = 0;
      const auto tab = resolve_table(cmd_wald, Regime::unconditional, dropped);
      const auto part = build_partition(tab, k_n, PartitionVariant::with_t, 0,
                                        equal_width);
      const auto check = wald_validity_check(tab, part, tau_mult);
      json cfg{{"command", "check-wald"}, {"input", data.input},
               {"schema", data.schema},   {"k_n", k_n},
               {"tau_mult", tau_mult},    {"equal_width", equal_width},
               {"lenient", data.lenient}};
      if (cmd_wald->count("--gamma") > 0)
        cfg["dgp"] = json{{"gamma", gamma}, {"rho", rho}, {"n", n_rows},
                          {"seed", seed}};
      json out{{"config", cfg},
               {"holds", check.holds},
               {"violating_cells", check.violating_cells},
               {"wald", json_real(wald(tab))},
               {"dropped_rows", dropped}};
      emit(out, output);
    } else if (*cmd_sim) {
      const Regime regime = parse_regime(regime_s);
      const auto thetas = parse_theta_list(theta_list_s);
      const auto rows = coverage_experiment(
          gamma, regime, thetas, n_rows, sims, b_reps, k_n, alpha, seed,
          resolve_threads(threads), selection_beta, rho);
      json cfg{{"command", "simulate"}, {"gamma", gamma},
               {"regime", regime_s},    {"n", n_rows},
               {"sims", sims},          {"b_reps", b_reps},
               {"k_n", k_n},            {"alpha", alpha},
               {"rho", rho},            {"seed", seed},
               {"selection_beta", selection_beta},
               {"theta_list", theta_list_s}};
      std::string csv = config_comment(cfg);
      csv += "theta,coverage,sims,n,k_n,alpha,gamma,regime\n";
      char buf[160];
      for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.6f,%d,%zu,%d,%g,%g,%s\n",
                      row.theta, row.coverage, sims, n_rows, k_n, alpha, gamma,
                      regime_s.c_str());
        csv += buf;
      }
      emit_csv(csv, output);
    } else if (*cmd_tab) {
      json cfg{{"command", "replicate-tables"},
               {"n_mc", n_mc},
               {"k_cells", k_cells},
               {"seed", seed}};
      std::string csv = config_comment(cfg);
      csv +=
          "table,gamma,late,identified_lo,identified_hi,wald,target_hi,tol_hi,"
          "target_wald,tol_wald,pass\n";
      struct Row { int table; Regime regime; bool with_r; double gamma, hi, w, tw; };
      const double hi4[] = {2.00, 2.41, 2.64}, hi5[] = {2.00, 2.26, 2.62},
                   hi6[] = {2.67, 2.67, 2.68};
      const double wald_t[] = {2.00, 3.01, 8.72}, wald_tol[] = {0.05, 0.10, 0.50};
      const double gammas[] = {0.0, 0.2, 0.4};
      char buf[256];
      std::uint64_t run = 0;
      for (int t = 0; t < 3; ++t) {
        for (int k = 0; k < 3; ++k) {
          const Regime regime = t == 0 ? Regime::unconditional
                                       : t == 1 ? Regime::with_r : Regime::no_t;
          const double target_hi = t == 0 ? hi4[k] : t == 1 ? hi5[k] : hi6[k];
          const auto pop =
              population_objects(gammas[k], t == 1, regime, n_mc,
                                 CounterRng(seed).fork(++run).seed(), k_cells);
          const bool pass =
              std::fabs(pop.identified_hi - target_hi) <= 0.05 &&
              std::fabs(pop.identified_lo - 1.00) <= 0.02 &&
              std::fabs(pop.wald - wald_t[k]) <= wald_tol[k];
          std::snprintf(buf, sizeof buf,
                        "%d,%g,%.2f,%.4f,%.4f,%.4f,%.2f,0.05,%.2f,%.2f,%s\n",
                        4 + t, gammas[k], pop.late, pop.identified_lo,
                        pop.identified_hi, pop.wald, target_hi, wald_t[k],
                        wald_tol[k], pass ? "yes" : "no");
          csv += buf;
        }
      }
      emit_csv(csv, output);
    }
  } catch (const ValidationError& e) {
    json err{{"error", "validation"}, {"detail", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err{{"error", "internal"}, {"detail", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
