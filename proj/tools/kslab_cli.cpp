// kslab command-line driver.
//
//   kslab <subcommand> --config <file.json> [--out DIR] [--seed N] [--threads K]
//
// Subcommands map one-to-one onto the experiment tags a config file may
// declare; invoking a subcommand whose tag differs from the config's is
// treated as a configuration error so a stale config cannot silently run the
// wrong study.  Exit codes: 0 = all gates passed, 2 = a gate failed,
// 3 = suspected blow-up, 4 = configuration or usage error.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "kslab/experiments.hpp"
#include "kslab/version.hpp"

namespace {

struct Subcommand {
  const char* name;
  const char* help;
  kslab::ExperimentTag tag;
};

constexpr Subcommand kSubcommands[] = {
    {"run", "integrate one PDE configuration and record diagnostics",
     kslab::ExperimentTag::SingleRun},
    {"pme-oracle", "porous-medium accuracy check against the self-similar solution",
     kslab::ExperimentTag::PmeOracle},
    {"sweep-epsilon", "mollification error scaling in eps_k, eps_p",
     kslab::ExperimentTag::EpsilonSweep},
    {"sweep-sigma", "vanishing-viscosity Cauchy study", kslab::ExperimentTag::SigmaSweep},
    {"sweep-eta", "eta-approximation convergence", kslab::ExperimentTag::EtaSweep},
    {"particles", "interacting particles against the mean-field PDE",
     kslab::ExperimentTag::ParticleMeanfield},
    {"commutator", "mollifier commutator ratio study", kslab::ExperimentTag::Commutator},
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"kslab: numerical laboratory for degenerate Keller-Segel dynamics"};
  app.set_version_flag("--version", std::string(kslab::version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  for (const Subcommand& s : kSubcommands) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "experiment configuration (JSON)")
        ->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config's out_dir)");
    sub->add_option("--seed", seed, "RNG seed (overrides the config's params.seed)");
    sub->add_option("--threads", threads,
                    "worker threads; accepted for interface stability, this build "
                    "computes on one")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e); // prints the usage message
    return 4;
  }

  const CLI::App* sub = app.get_subcommands().front();
  kslab::ExperimentTag tag = kslab::ExperimentTag::SingleRun;
  for (const Subcommand& s : kSubcommands)
    if (sub->get_name() == s.name) tag = s.tag;

  try {
    kslab::ExperimentConfig cfg = kslab::load_config(config_path);
    if (cfg.experiment != tag) {
      std::fprintf(stderr, "kslab: config declares experiment \"%s\" but \"%s\" was invoked\n",
                   kslab::experiment_tag_name(cfg.experiment), sub->get_name().c_str());
      return 4;
    }
    if (sub->count("--out") > 0) cfg.out_dir = out_dir;
    if (sub->count("--seed") > 0) cfg.params.seed = seed;

    const kslab::RunReport rep = kslab::run_experiment(cfg, cfg.out_dir);
    for (const std::string& n : rep.notes) std::printf("note: %s\n", n.c_str());
    for (const std::string& g : rep.gates) std::printf("%s\n", g.c_str());
    const int code = kslab::report_exit_code(rep);
    std::printf("result: %s (report in %s/report.csv)\n",
                code == 0 ? "pass" : (code == 3 ? "suspected_blowup" : "fail"),
                cfg.out_dir.c_str());
    return code;
  } catch (const kslab::ConfigError& e) {
    std::fprintf(stderr, "kslab: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "kslab: invalid configuration: %s\n", e.what());
    return 4;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "kslab: invalid configuration: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "kslab: error: %s\n", e.what());
    return 4;
  }
}
