// Command-line front end: dataset simulation, estimation sweeps over the
// number of components, and analytic/approximate oracle values.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "thames/estimator.hpp"
#include "thames/io.hpp"
#include "thames/oracle.hpp"
#include "thames/relabel.hpp"
#include "thames/sampler.hpp"
#include "thames/simulate.hpp"

namespace fs = std::filesystem;
using namespace thames;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Manifest {
  std::string command;
  std::string data_path;
  std::string model = "uni-hier";
  int g = 0;
  std::string g_range;
  int iters = 12000;
  int burnin = 2000;
  int thin = 1;
  std::uint64_t seed = 1;
  double scale = 0.0;
  std::string out_dir = ".";
  bool dot = false;
  bool json_out = false;
  bool save_runs = false;
  bool per_g_priors = false;
  int mc_n = 0;
  // simulate only
  std::string scenario = "uni-toy";
  int n = 10;
  int d = 1;
  double rho = 0.0;
};

std::vector<int> g_values(const Manifest& m) {
  std::vector<int> gs;
  if (!m.g_range.empty()) {
    auto colon = m.g_range.find(':');
    if (colon == std::string::npos)
      throw config_error("--g-range expects A:B");
    int a = std::stoi(m.g_range.substr(0, colon));
    int b = std::stoi(m.g_range.substr(colon + 1));
    if (a < 1 || b < a) throw config_error("--g-range must be increasing and positive");
    for (int g = a; g <= b; ++g) gs.push_back(g);
  } else if (m.g > 0) {
    gs.push_back(m.g);
  } else {
    throw config_error("one of --g or --g-range is required");
  }
  return gs;
}

// values from a JSON config file fill in flags not given on the command line
void merge_config(const std::string& path, const CLI::App& app, Manifest& m) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open config file: " + path);
  json cfg = json::parse(in, nullptr, true, true);
  auto absent = [&](const std::string& flag) {
    auto* opt = app.get_option_no_throw(flag);
    return opt && opt->count() == 0;
  };
  if (cfg.contains("data") && absent("--data")) m.data_path = cfg["data"];
  if (cfg.contains("model") && absent("--model")) m.model = cfg["model"];
  if (cfg.contains("g") && absent("--g")) m.g = cfg["g"];
  if (cfg.contains("g-range") && absent("--g-range")) m.g_range = cfg["g-range"];
  if (cfg.contains("iters") && absent("--iters")) m.iters = cfg["iters"];
  if (cfg.contains("burnin") && absent("--burnin")) m.burnin = cfg["burnin"];
  if (cfg.contains("thin") && absent("--thin")) m.thin = cfg["thin"];
  if (cfg.contains("seed") && absent("--seed")) m.seed = cfg["seed"];
  if (cfg.contains("scale") && absent("--scale")) m.scale = cfg["scale"];
  if (cfg.contains("out") && absent("--out")) m.out_dir = cfg["out"];
  if (cfg.contains("mc-n") && absent("--mc-n")) m.mc_n = cfg["mc-n"];
  if (cfg.contains("dot") && absent("--dot")) m.dot = cfg["dot"];
  if (cfg.contains("json") && absent("--json")) m.json_out = cfg["json"];
  if (cfg.contains("save-runs") && absent("--save-runs")) m.save_runs = cfg["save-runs"];
  if (cfg.contains("per-g-priors") && absent("--per-g-priors"))
    m.per_g_priors = cfg["per-g-priors"];
  if (cfg.contains("scenario") && absent("--scenario")) m.scenario = cfg["scenario"];
  if (cfg.contains("n") && absent("--n")) m.n = cfg["n"];
  if (cfg.contains("d") && absent("--d")) m.d = cfg["d"];
  if (cfg.contains("rho") && absent("--rho")) m.rho = cfg["rho"];
}

int cmd_simulate(const Manifest& m) {
  fs::create_directories(m.out_dir);
  MixtureScenario sc;
  if (m.scenario == "uni-toy") {
    sc = uni_toy_scenario(m.g > 0 ? m.g : 2, m.rho);
  } else if (m.scenario == "mvn-sep") {
    sc = separated_scenario(m.g > 0 ? m.g : 2, m.d);
  } else {
    throw config_error("unknown scenario: " + m.scenario + " (use uni-toy or mvn-sep)");
  }
  SimulatedDataset ds = simulate_mixture(sc, m.n, m.seed);
  std::string base = (fs::path(m.out_dir) / ("sim_" + m.scenario)).string();
  write_matrix_csv(ds.data, base + ".csv");

  json truth;
  truth["scenario"] = m.scenario;
  truth["G_true"] = sc.G();
  truth["n"] = m.n;
  truth["d"] = sc.d();
  truth["seed"] = m.seed;
  if (m.scenario == "uni-toy") truth["rho"] = m.rho;
  std::vector<std::vector<double>> means;
  for (const auto& mu : sc.means)
    means.emplace_back(mu.data(), mu.data() + mu.size());
  truth["means"] = means;
  truth["tau"] = std::vector<double>(sc.tau.data(), sc.tau.data() + sc.tau.size());
  std::vector<int> labels1;
  for (int l : ds.labels) labels1.push_back(l + 1);
  truth["labels"] = labels1;
  if (m.scenario == "uni-toy" &&
      m.n * std::log(static_cast<double>(sc.G())) <= std::log(1e7)) {
    truth["exact_log_z"] = exact_marglik_bruteforce(ds.data, sc.G());
  }
  if (m.scenario == "mvn-sep") {
    ModelSpec spec = make_spec(Family::MvnFull, sc.G(), ds.data);
    truth["wellsep_log_z"] = wellsep_marglik(ds.data, spec, ds.labels);
    ModelSpec diag = make_spec(Family::MvnDiag, sc.G(), ds.data);
    truth["wellsep_log_z_diag"] = wellsep_marglik(ds.data, diag, ds.labels);
  }
  write_text_file(truth.dump(2) + "\n", base + ".truth.json");
  std::cout << "wrote " << base << ".csv and sidecar truth file\n";
  return 0;
}

int cmd_estimate(const Manifest& m) {
  if (m.data_path.empty()) throw config_error("--data is required");
  Eigen::MatrixXd data = ingest_csv(m.data_path, m.scale);
  fs::create_directories(m.out_dir);
  std::vector<int> gs = g_values(m);

  ChainConfig cc;
  cc.iterations = m.iters;
  cc.burn_in = m.burnin;
  cc.thin = m.thin;

  Family family = family_from_name(m.model);
  // one component prior for the whole sweep (taken at the largest G) keeps
  // the empty-component recursion applicable; --per-g-priors restores
  // per-G data-driven defaults and disables the recursion automatically
  HyperParams shared;
  if (!m.per_g_priors) shared = default_hyperparameters(data, gs.back(), family);

  std::vector<ThamesResult> rows;
  ThamesResult prev;
  bool have_prev = false;
  bool all_ok = true;
  for (int g : gs) {
    ThamesResult res;
    res.G = g;
    try {
      cc.seed = Rng(m.seed).derive(g).uniform() * 1e18;  // per-G chain stream
      ModelSpec spec;
      spec.family = family;
      spec.G = g;
      spec.d = family == Family::MvnFull || family == Family::MvnDiag
                   ? static_cast<int>(data.cols())
                   : 1;
      spec.hyper = m.per_g_priors ? default_hyperparameters(data, g, family) : shared;
      spec.hyper.e = Eigen::VectorXd::Ones(g);
      validate_spec(spec);
      PosteriorRun run = run_chain(spec, data, cc);
      RelabelledRun rr = ecr_relabel(run);
      ThamesConfig tcfg;
      tcfg.seed = m.seed + 1000003ULL * g;
      if (m.mc_n > 0) tcfg.N = m.mc_n;
      EstimateArtifacts art;
      res = estimate(rr, data, tcfg, have_prev ? &prev : nullptr, &art);
      if (m.dot) {
        write_text_file(overlap_graph_to_dot(art.overlap),
                        (fs::path(m.out_dir) / ("overlap_G" + std::to_string(g) + ".dot")).string());
        write_text_file(delta_to_dot(art.delta),
                        (fs::path(m.out_dir) / ("delta_G" + std::to_string(g) + ".dot")).string());
      }
      if (m.json_out) {
        write_text_file(result_to_json(res).dump(2) + "\n",
                        (fs::path(m.out_dir) / ("estimate_G" + std::to_string(g) + ".json")).string());
        write_text_file(omega_to_csv(art.omega),
                        (fs::path(m.out_dir) / ("omega_G" + std::to_string(g) + ".csv")).string());
        write_permutations_csv(rr,
                               (fs::path(m.out_dir) / ("perms_G" + std::to_string(g) + ".csv")).string());
      }
      if (m.save_runs)
        save_run(run, (fs::path(m.out_dir) / ("run_G" + std::to_string(g) + ".jsonl")).string());
    } catch (const std::exception& ex) {
      res.status = std::string("failed: ") + ex.what();
    }
    if (res.ok()) {
      prev = res;
      have_prev = true;
    } else {
      all_ok = false;
    }
    rows.push_back(res);
    std::cout << "G=" << g << "  " << (res.ok() ? "log_z=" + format_double(res.log_z)
                                               : res.status)
              << "\n";
  }
  write_sweep_csv(rows, (fs::path(m.out_dir) / "sweep.csv").string(), timestamp());
  std::cout << "wrote " << (fs::path(m.out_dir) / "sweep.csv").string() << "\n";
  return all_ok ? 0 : kExitNumerical;
}

int cmd_oracle(const Manifest& m) {
  if (m.data_path.empty()) throw config_error("--data is required");
  Eigen::MatrixXd data = ingest_csv(m.data_path, m.scale);
  fs::create_directories(m.out_dir);
  Family family = family_from_name(m.model);
  std::vector<ThamesResult> rows;
  for (int g : g_values(m)) {
    ThamesResult res;
    res.G = g;
    if (family == Family::UniFixedSigma) {
      res.log_z = exact_marglik_bruteforce(data, g);
      res.se_log_z = 0.0;
      res.provenance = "oracle-exact";
    } else if (family == Family::MvnFull || family == Family::MvnDiag) {
      ChainConfig cc;
      cc.iterations = m.iters;
      cc.burn_in = m.burnin;
      cc.thin = m.thin;
      cc.seed = m.seed;
      ModelSpec spec = make_spec(family, g, data);
      PosteriorRun run = run_chain(spec, data, cc);
      if (!check_separation(run))
        res.status = "warning: allocations not separated; approximation invalid";
      res.log_z = wellsep_marglik(data, spec, map_allocation(run, data));
      res.se_log_z = 0.0;
      res.provenance = "oracle-wellsep";
    } else {
      throw config_error("no oracle for family " + m.model);
    }
    rows.push_back(res);
    std::cout << "G=" << g << "  oracle log_z=" << format_double(res.log_z) << "  ("
              << res.status << ")\n";
  }
  write_sweep_csv(rows, (fs::path(m.out_dir) / "oracle.csv").string(), timestamp());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marginal likelihoods for Gaussian mixtures from MCMC output"};
  app.require_subcommand(1);
  Manifest m;
  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--data", m.data_path, "input CSV (rows = observations)");
    cmd->add_option("--model", m.model,
                    "model family: uni-fixed, uni-hier, mvn-full, mvn-diag");
    cmd->add_option("--g", m.g, "number of components");
    cmd->add_option("--g-range", m.g_range, "sweep A:B over component counts");
    cmd->add_option("--iters", m.iters, "total Gibbs sweeps");
    cmd->add_option("--burnin", m.burnin, "discarded sweeps");
    cmd->add_option("--thin", m.thin, "keep-every stride");
    cmd->add_option("--seed", m.seed, "master RNG seed");
    cmd->add_option("--scale", m.scale, "divide every data value by this");
    cmd->add_option("--out", m.out_dir, "output directory");
    cmd->add_option("--config", config_path, "JSON config supplying any flag");
    cmd->add_option("--mc-n", m.mc_n, "volume MC sample size (default: retained draws)");
  };

  CLI::App* sim = app.add_subcommand("simulate", "draw a dataset from a known scenario");
  add_common(sim);
  sim->add_option("--scenario", m.scenario, "uni-toy or mvn-sep");
  sim->add_option("--n", m.n, "number of observations");
  sim->add_option("--d", m.d, "data dimension (mvn-sep)");
  sim->add_option("--rho", m.rho, "overlap level in [0,1] (uni-toy)");

  CLI::App* est = app.add_subcommand("estimate", "sweep the estimator over G");
  add_common(est);
  est->add_flag("--dot", m.dot, "write overlap/precedence graphs as DOT");
  est->add_flag("--json", m.json_out, "write per-G JSON diagnostics and CSV exports");
  est->add_flag("--save-runs", m.save_runs, "persist posterior runs as JSON lines");
  est->add_flag("--per-g-priors", m.per_g_priors,
                "recompute data-driven hyperparameters at every G (disables the "
                "empty-component recursion across the sweep)");

  CLI::App* orc = app.add_subcommand("oracle", "analytic or well-separated ground truth");
  add_common(orc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    if (!config_path.empty()) merge_config(config_path, *active, m);
    if (sim->parsed()) return cmd_simulate(m);
    if (est->parsed()) return cmd_estimate(m);
    if (orc->parsed()) return cmd_oracle(m);
    return kExitUsage;
  } catch (const config_error& e) {
    std::cerr << "error (usage): " << e.what() << "\n";
    return kExitUsage;
  } catch (const data_error& e) {
    std::cerr << "error (data): " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return kExitNumerical;
  }
}
