#include "estnet/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "estnet/errors.hpp"
#include "estnet/harness.hpp"

namespace estnet {

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitSolver = 4;

struct ModelSource {
  std::string config;
  std::optional<double> g;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Model JSON file");
    app->add_option("--g", g, "Use the built-in three-subsystem example with coupling scale g");
  }

  InterconnectedModel load() const {
    if (!config.empty() && g) throw ConfigError("give either --config or --g, not both");
    if (g) return example_system(*g);
    if (config.empty()) throw ConfigError("a model is required (--config <file> or --g <value>)");
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot open model file '" + config + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_model(ss.str());
  }
};

struct RunOptions {
  SimulationConfig cfg;
  std::string mode = "delayed";
  std::string init = "zero";

  void attach(CLI::App* app, bool with_runs) {
    app->add_option("--horizon", cfg.horizon, "Number of estimation steps")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Base seed")->capture_default_str();
    app->add_option("--mode", mode, "ideal or delayed")->capture_default_str();
    app->add_option("--lambda", cfg.lambda, "Stability parameter lambda in (0, 1)")->capture_default_str();
    app->add_option("--eta", cfg.eta, "Gain norm cap")->capture_default_str();
    app->add_option("--rho", cfg.rho, "Beta slack for subsystems with unassigned neighbors")->capture_default_str();
    app->add_option("--p0", cfg.p0, "Initial covariance bound scale")->capture_default_str();
    app->add_option("--init", init, "Initial true state: zero or gaussian")->capture_default_str();
    if (with_runs) {
      app->add_option("--runs", cfg.runs, "Monte Carlo runs")->capture_default_str();
      app->add_option("--threads", cfg.threads, "Worker threads (0 = all cores)")->capture_default_str();
    }
  }

  SimulationConfig resolve() const {
    SimulationConfig c = cfg;
    c.mode = parse_mode(mode);
    if (init == "zero") {
      c.init = InitPolicy::zero;
    } else if (init == "gaussian") {
      c.init = InitPolicy::gaussian;
    } else {
      throw ConfigError("unknown --init '" + init + "' (expected zero or gaussian)");
    }
    c.validate();
    return c;
  }
};

// Opens `path` for writing; "-" means the given stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_.open(path);
      if (!file_) throw ConfigError("cannot open '" + path + "' for writing");
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + cell + "' in --g list");
    }
  }
  if (out.empty()) throw ConfigError("--g list is empty");
  return out;
}

int run_failure_code(const RunResult& r, std::ostream& err) {
  if (!r.failure) return 0;
  err << "error: " << r.failure->message << '\n';
  return r.failure->kind == RunFailure::Kind::solver ? kExitSolver : kExitInfeasible;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed stability-constrained estimation for interconnected systems"};
  app.require_subcommand(1);

  double ex_g = 1.0;
  std::string ex_emit;
  auto* example = app.add_subcommand("example", "Emit the three-subsystem example as model JSON");
  example->add_option("--g", ex_g, "Coupling scale")->capture_default_str();
  example->add_option("--emit", ex_emit, "Output path (stdout when omitted)");

  ModelSource sim_src;
  RunOptions sim_opts;
  std::string sim_out, sim_gains, sim_report;
  auto* simulate = app.add_subcommand("simulate", "One run: truth, estimates, gains and a design report");
  sim_src.attach(simulate);
  sim_opts.attach(simulate, false);
  simulate->add_option("--out", sim_out, "Trace CSV (k,subsystem,component,x,xhat)");
  simulate->add_option("--gains", sim_gains, "Gains CSV (k,subsystem,row,col,value)");
  simulate->add_option("--report", sim_report, "Run report JSON");

  ModelSource mc_src;
  RunOptions mc_opts;
  std::string mc_out;
  auto* mc = app.add_subcommand("mc", "Monte Carlo MSE curve");
  mc_src.attach(mc);
  mc_opts.attach(mc, true);
  mc->add_option("--out", mc_out, "MSE CSV (k,mse)");

  RunOptions sw_opts;
  std::string sw_g = "0.5,1,1.5,2,2.5,3,3.5,4";
  std::string sw_out, sw_beta;
  auto* sweep = app.add_subcommand("sweep-g", "AMSE of the example system across coupling scales");
  sw_opts.attach(sweep, true);
  sweep->add_option("--g", sw_g, "Comma-separated coupling scales")->capture_default_str();
  sweep->add_option("--out", sw_out, "AMSE CSV (g,amse)");
  sweep->add_option("--beta-out", sw_beta, "Beta table CSV (g,subsystem,alpha,beta)");

  ModelSource beta_src;
  double beta_lambda = 0.6;
  double beta_rho = 0.4;
  std::string beta_out;
  auto* beta = app.add_subcommand("beta", "Offline beta assignment as CSV (subsystem,alpha,beta)");
  beta_src.attach(beta);
  beta->add_option("--lambda", beta_lambda, "Stability parameter lambda")->capture_default_str();
  beta->add_option("--rho", beta_rho, "Slack for subsystems with unassigned neighbors")->capture_default_str();
  beta->add_option("--out", beta_out, "Output path (stdout when omitted)");

  ModelSource chk_src;
  std::string chk_gains;
  double chk_lambda = 0.6;
  double chk_eta = 100.0;
  std::optional<double> chk_rho;
  auto* check = app.add_subcommand("check", "Re-check recorded gains against the stability conditions");
  chk_src.attach(check);
  check->add_option("--gains", chk_gains, "Gains CSV")->required();
  check->add_option("--lambda", chk_lambda, "Stability parameter lambda")->capture_default_str();
  check->add_option("--eta", chk_eta, "Gain norm cap")->capture_default_str();
  check->add_option("--rho", chk_rho, "Also check the beta caps computed with this slack");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*example) {
      Output o(ex_emit, out);
      o.get() << emit_model(example_system(ex_g)) << '\n';
      return 0;
    }

    if (*simulate) {
      const auto model = sim_src.load();
      const auto cfg = sim_opts.resolve();
      const auto r = run(model, cfg);
      if (!sim_out.empty()) {
        Output o(sim_out, out);
        write_trace_csv(o.get(), model, r.trace);
      }
      if (!sim_gains.empty()) {
        Output o(sim_gains, out);
        write_gains_csv(o.get(), model, r.gains);
      }
      if (!sim_report.empty()) {
        Output o(sim_report, out);
        o.get() << run_report_json(model, cfg, r) << '\n';
      }
      if (const int code = run_failure_code(r, err)) return code;
      out << "steps " << r.gains.size() << ", designs " << r.records.size() << '\n';
      return 0;
    }

    if (*mc) {
      const auto model = mc_src.load();
      const auto cfg = mc_opts.resolve();
      const auto rep = monte_carlo(model, cfg);
      if (!mc_out.empty()) {
        Output o(mc_out, out);
        write_mse_csv(o.get(), rep);
      }
      out << "amse " << format_number(rep.amse) << '\n';
      return 0;
    }

    if (*sweep) {
      const auto cfg = sw_opts.resolve();
      const auto rows = sweep_g(parse_list(sw_g), cfg);
      Output o(sw_out, out);
      write_amse_csv(o.get(), rows);
      if (!sw_beta.empty()) {
        Output b(sw_beta, out);
        b.get() << "g,subsystem,alpha,beta\n";
        for (const auto& row : rows)
          for (std::size_t i = 0; i < row.beta.size(); ++i)
            b.get() << format_number(row.g) << ',' << i + 1 << ',' << format_number(row.alpha[i]) << ','
                    << format_number(row.beta[i]) << '\n';
      }
      return 0;
    }

    if (*beta) {
      const auto model = beta_src.load();
      const auto bounds = compute_bounds(model, 1000);
      const auto b = compute_beta(model, bounds, beta_lambda, epsilon_bar(model, bounds), beta_rho);
      Output o(beta_out, out);
      write_beta_csv(o.get(), model, b);
      return 0;
    }

    if (*check) {
      const auto model = chk_src.load();
      std::ifstream in(chk_gains);
      if (!in) throw ConfigError("cannot open gains file '" + chk_gains + "'");
      const auto gains = read_gains_csv(in, model);
      const StabilityParams params{chk_lambda, chk_eta, Mode::ideal};
      params.validate();
      std::optional<BetaAssignment> b;
      if (chk_rho) {
        const auto bounds = compute_bounds(model, static_cast<Step>(gains.size()) + 1);
        b = compute_beta(model, bounds, chk_lambda, epsilon_bar(model, bounds), *chk_rho);
      }
      bool all = true;
      auto verdict = [&](bool ok) {
        all = all && ok;
        return ok ? "pass" : "fail";
      };
      out << "k,check,subject,value,verdict\n";
      for (std::size_t s = 0; s < gains.size(); ++s) {
        const Step k = static_cast<Step>(s) + 1;
        const auto rep = check_distributed(k, gains[s], model, params, epsilon_feasible(model, k));
        const auto snap = evaluate(model, k);
        for (const auto& v : rep.local) {
          const auto& name = model.subsystem(v.subsystem).name;
          out << k << ",local," << name << ',' << format_number(v.residual_norm) << ','
              << verdict(v.residual_norm <= chk_lambda + kNsdTolerance) << '\n';
          out << k << ",gain," << name << ',' << format_number(v.gain_norm) << ','
              << verdict(v.gain_norm <= chk_eta + kNsdTolerance) << '\n';
          if (b) {
            const auto i = v.subsystem;
            const double r = spectral_norm(residual_matrix(gains[s][i], snap.C[i]));
            out << k << ",corollary," << name << ',' << format_number(r) << ','
                << verdict(check_corollary(gains[s][i], snap.C[i], b->beta[i], chk_eta)) << '\n';
          }
        }
        for (const auto& p : rep.pairs) {
          out << k << ",pair," << model.subsystem(p.i).name << '-' << model.subsystem(p.j).name << ','
              << format_number(p.max_eigenvalue) << ',' << verdict(p.passes) << '\n';
        }
        const auto c = centralized_condition(k, gains[s], model, chk_lambda, chk_eta);
        out << k << ",centralized,all," << format_number(c.residual_norm) << ',' << verdict(c.passes) << '\n';
      }
      return all ? 0 : kExitCheckFailed;
    }
  } catch (const InfeasibleBeta& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const GainInfeasible& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const SolverFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitSolver;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}

}  // namespace estnet
