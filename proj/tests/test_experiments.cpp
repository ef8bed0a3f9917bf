#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kslab/core.hpp"
#include "kslab/experiments.hpp"
#include "kslab/field_io.hpp"

using namespace kslab;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "kslab-test-experiments" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const char* kFullConfig = R"json({
  "schema_version": 1,
  "experiment": "epsilon_sweep",
  "params": {"d": 2, "m": 2.0, "sigma": 0.05, "eps_k": 0.1, "eps_p": 0.1,
             "lambda": 0.02, "eta": 0.0, "chi": 1.0, "t_end": 0.04, "seed": 7},
  "grid": {"n": 256, "half_width": 1.6},
  "chi_on": true,
  "initial": {"kind": "gaussian", "s0": 0.08, "mass": 0.05},
  "snapshots": [0.0, 0.02, 0.04],
  "sweep": {"eps": [0.4, 0.2, 0.1, 0.05]},
  "out_dir": "runs/eps"
})json";

} // namespace

TEST_CASE("config parsing is strict and typed") {
  SECTION("a full config parses into the expected fields") {
    const ExperimentConfig c = parse_config(kFullConfig);
    CHECK(c.schema_version == 1);
    CHECK(c.experiment == ExperimentTag::EpsilonSweep);
    CHECK(c.params.sigma == 0.05);
    CHECK(c.params.eps_k == 0.1);
    CHECK(c.params.seed == 7);
    CHECK(c.n == 256);
    CHECK(c.half_width == 1.6);
    CHECK(c.chi_on);
    CHECK(c.initial.kind == "gaussian");
    CHECK(c.initial.s0 == 0.08);
    CHECK(c.initial.mass == 0.05);
    CHECK(c.snapshots == std::vector<double>{0.0, 0.02, 0.04});
    CHECK(c.eps_list == std::vector<double>{0.4, 0.2, 0.1, 0.05});
    CHECK(c.sigma_list.empty());
    CHECK(c.out_dir == "runs/eps");
  }

  SECTION("mollification radii default to zero, not the struct defaults") {
    const ExperimentConfig c = parse_config(
        R"({"schema_version": 1, "experiment": "single_run", "params": {"sigma": 0.1}})");
    CHECK(c.params.eps_k == 0.0);
    CHECK(c.params.eps_p == 0.0);
    CHECK(infer_system_kind(c.params) == SystemKind::Regularized);
    // a default-constructed config agrees with the parser's defaults
    CHECK(ExperimentConfig{}.params.eps_k == 0.0);
    CHECK(ExperimentConfig{}.params.eps_p == 0.0);
  }

  SECTION("unknown keys are errors, not warnings") {
    CHECK_THROWS_WITH(parse_config(R"({"schema_version":1,"experiment":"single_run","sigma":1})"),
                      ContainsSubstring("unknown key \"sigma\""));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run","params":{"sigm":0.1}})"),
        ContainsSubstring("unknown key \"sigm\""));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run","sweep":{"epsilon":[1]}})"),
        ContainsSubstring("unknown key \"epsilon\""));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run",
                "initial":{"kind":"gaussian","t0":0.1}})"),
        ContainsSubstring("unknown key \"t0\""));
  }

  SECTION("schema and tag requirements") {
    CHECK_THROWS_WITH(parse_config(R"({"experiment":"single_run"})"),
                      ContainsSubstring("missing schema_version"));
    CHECK_THROWS_WITH(parse_config(R"({"schema_version":2,"experiment":"single_run"})"),
                      ContainsSubstring("unsupported schema_version"));
    CHECK_THROWS_WITH(parse_config(R"({"schema_version":1})"),
                      ContainsSubstring("missing experiment"));
    CHECK_THROWS_WITH(parse_config(R"({"schema_version":1,"experiment":"warp_drive"})"),
                      ContainsSubstring("unknown experiment"));
    CHECK_THROWS_AS(parse_config("not json at all"), ConfigError);
    CHECK_THROWS_AS(parse_config("[1,2,3]"), ConfigError);
  }

  SECTION("type mismatches are reported") {
    CHECK_THROWS_WITH(
        parse_config(R"({"schema_version":1,"experiment":"single_run","grid":{"n":"big"}})"),
        ContainsSubstring("must be an integer"));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run","snapshots":[0.0,"x"]})"),
        ContainsSubstring("entries must be numbers"));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run","params":{"seed":-3}})"),
        ContainsSubstring("nonnegative integer"));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run","chi_on":"yes"})"),
        ContainsSubstring("must be a boolean"));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"single_run","initial":{"kind":"plateau"}})"),
        ContainsSubstring("unknown initial kind"));
    CHECK_THROWS_WITH(
        parse_config(
            R"({"schema_version":1,"experiment":"particle_meanfield",
                "particles":{"counts":[10.5]}})"),
        ContainsSubstring("positive integers"));
  }
}

TEST_CASE("config emission round-trips") {
  SECTION("parse(emit(parse(text))) == parse(text)") {
    const ExperimentConfig c = parse_config(kFullConfig);
    const ExperimentConfig again = parse_config(emit_config(c).dump());
    CHECK(again == c);
  }

  SECTION("programmatic configs round-trip too") {
    ExperimentConfig c;
    c.experiment = ExperimentTag::ParticleMeanfield;
    c.params.sigma = 0.05;
    c.params.eps_k = 0.25;
    c.params.eps_p = 0.2;
    c.params.lambda = 0.1;
    c.params.t_end = 0.2;
    c.params.seed = 11;
    c.n = 128;
    c.half_width = 1.6;
    c.initial.kind = "gaussian";
    c.initial.s0 = 0.3;
    c.initial.mass = 1.0;
    c.particles.counts = {1000, 4000, 16000};
    c.particles.seeds = {1, 2, 3, 4, 5, 6, 7, 8};
    c.particles.dt_max = 5e-3;
    c.dt_max = 0.25;
    c.blowup_linf_factor = 50.0;
    c.out_dir = "runs/particles";
    const ExperimentConfig again = parse_config(emit_config(c).dump());
    CHECK(again == c);
  }

  SECTION("manifest embeds the config and version") {
    const ExperimentConfig c = parse_config(kFullConfig);
    const std::string m = manifest_text(c);
    CHECK_THAT(m, ContainsSubstring("\"version\""));
    CHECK_THAT(m, ContainsSubstring("\"epsilon_sweep\""));
    const auto j = nlohmann::json::parse(m);
    CHECK(parse_config_json(j.at("config")) == c);
  }
}

TEST_CASE("single run writes files and reproduces bytes") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::SingleRun;
  c.params.d = 2;
  c.params.m = 2.0;
  c.params.sigma = 0.0;
  c.params.eps_k = c.params.eps_p = 0.0;
  c.params.t_end = 0.02;
  c.chi_on = false;
  c.n = 64;
  c.half_width = 1.25;
  c.initial.kind = "barenblatt";
  c.initial.t0 = 0.1;
  c.initial.mass = 1.0;

  const fs::path a = fresh_dir("single_a");
  const fs::path b = fresh_dir("single_b");
  const RunReport ra = run_single(c, a.string());
  const RunReport rb = run_single(c, b.string());
  CHECK(ra.pass);
  CHECK(report_exit_code(ra) == 0);

  for (const char* f : {"manifest.json", "report.csv", "diagnostics.csv", "u_0000.ksf",
                        "u_0004.ksf"})
    CHECK(fs::exists(a / f));
  CHECK(slurp(a / "diagnostics.csv") == slurp(b / "diagnostics.csv"));
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK_THAT(slurp(a / "report.csv"), ContainsSubstring("system,degenerate"));
  CHECK_THAT(slurp(a / "diagnostics.csv"),
             ContainsSubstring("t,mass,l1,l2,l2m,linf,min,dt"));

  SECTION("the t=0 snapshot equals the initial datum bit for bit") {
    const SnapshotData s = read_snapshot(a / "u_0000.ksf");
    const Grid g(2, 1.25, 64);
    ScalarField u0(g);
    u0.fill([&](const double* x) { return barenblatt(x, 0.1, 2.0, 2, 1.0); });
    CHECK(s.time == 0.0);
    REQUIRE(s.field.v.size() == u0.v.size());
    std::size_t mismatches = 0;
    for (std::size_t q = 0; q < u0.v.size(); ++q)
      if (s.field.v[q] != u0.v[q]) ++mismatches;
    CHECK(mismatches == 0);
  }

  SECTION("missing output directory is a config error") {
    CHECK_THROWS_AS(run_single(c, ""), ConfigError);
  }
}

TEST_CASE("single run surfaces suspected blow-up") {
  // a flat plateau under pure aggregation grows like u^2 and trips a tight
  // sup-norm tripwire on the first step; fed in through the file initial
  const Grid g(2, 1.0, 32);
  ScalarField plateau(g);
  plateau.fill([](const double* x) {
    return (std::fabs(x[0]) < 0.4 && std::fabs(x[1]) < 0.4) ? 1.0 : 0.0;
  });
  const fs::path seed_dir = fresh_dir("blowup_seed");
  write_snapshot(seed_dir / "plateau.ksf", plateau, 0.0);

  ExperimentConfig c;
  c.experiment = ExperimentTag::SingleRun;
  c.params.sigma = 0.05;
  c.params.eps_k = c.params.eps_p = 0.0;
  c.params.t_end = 1.0;
  c.n = 32;
  c.half_width = 1.0;
  c.chi_on = true;
  c.blowup_linf_factor = 1.0 + 1e-5;
  c.initial.kind = "file";
  c.initial.path = (seed_dir / "plateau.ksf").string();

  const fs::path out = fresh_dir("blowup_out");
  const RunReport r = run_single(c, out.string());
  CHECK(r.status == SolveStatus::SuspectedBlowup);
  CHECK(report_exit_code(r) == 3);
  CHECK(fs::exists(out / "u_0000.ksf")); // last healthy state is preserved
  CHECK_THAT(slurp(out / "report.csv"), ContainsSubstring("result,suspected_blowup"));

  SECTION("grid mismatch between file and config is a config error") {
    c.n = 64;
    CHECK_THROWS_WITH(run_single(c, out.string()),
                      ContainsSubstring("does not match the configured grid"));
  }
}

TEST_CASE("sweep validation errors") {
  ExperimentConfig c;
  c.params.sigma = 0.05;
  c.n = 64;
  c.half_width = 1.6;

  c.experiment = ExperimentTag::EpsilonSweep;
  c.eps_list = {0.4};
  CHECK_THROWS_WITH(run_epsilon_sweep(c, fresh_dir("err").string()),
                    ContainsSubstring("need >= 3 points"));

  c.experiment = ExperimentTag::SigmaSweep;
  c.sigma_list = {0.1, 0.05};
  CHECK_THROWS_WITH(run_sigma_sweep(c, fresh_dir("err").string()),
                    ContainsSubstring("need >= 3 points"));
  c.sigma_list = {0.1, 0.05, 0.025};
  c.params.m = 2.5;
  CHECK_THROWS_WITH(run_sigma_sweep(c, fresh_dir("err").string()),
                    ContainsSubstring("m = 2 or m >= 3"));
  c.params.m = 2.0;

  c.experiment = ExperimentTag::EtaSweep;
  c.eta_list = {1e-2, 1e-3};
  CHECK_THROWS_WITH(run_eta_sweep(c, fresh_dir("err").string()),
                    ContainsSubstring("need >= 3 points"));

  c.experiment = ExperimentTag::ParticleMeanfield;
  c.particles.counts = {500};
  CHECK_THROWS_WITH(run_particle_meanfield(c, fresh_dir("err").string()),
                    ContainsSubstring("need >= 2 particle counts"));
  c.particles.counts = {200, 800};
  CHECK_THROWS_WITH(run_particle_meanfield(c, fresh_dir("err").string()),
                    ContainsSubstring("need >= 1 seed"));

  c.experiment = ExperimentTag::Commutator;
  c.eps_list = {0.2};
  CHECK_THROWS_WITH(run_commutator(c, fresh_dir("err").string()),
                    ContainsSubstring("need >= 2 epsilons"));
  c.eps_list = {0.2, 0.002};
  CHECK_THROWS_WITH(run_commutator(c, fresh_dir("err").string()),
                    ContainsSubstring("grid too coarse"));
}

TEST_CASE("epsilon sweep emits a rate fit and reproducible report") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::EpsilonSweep;
  c.params.sigma = 0.05;
  c.params.t_end = 0.01;
  c.n = 64;
  c.half_width = 1.6;
  c.initial.kind = "gaussian";
  c.initial.s0 = 0.15;
  c.initial.mass = 0.3;
  c.eps_list = {0.4, 0.3, 0.2};

  const fs::path a = fresh_dir("eps_a");
  const RunReport r = run_epsilon_sweep(c, a.string());
  CHECK(r.status == SolveStatus::Completed);
  REQUIRE(r.rows.size() == 4); // three sweep rows plus the rate-fit row
  CHECK_THAT(r.rows.back(), ContainsSubstring("epsilon_sweep,"));
  CHECK_THAT(slurp(a / "report.csv"), ContainsSubstring("eps,sup_l2_error"));
  // the documented default lambda rule fires when the config leaves it at 0
  bool noted = false;
  for (const std::string& n : r.notes)
    if (n.find("lambda used:") != std::string::npos) noted = true;
  CHECK(noted);
  CHECK(fs::exists(a / "reference_sigma" / "diagnostics.csv"));
  CHECK(fs::exists(a / "eps_0.4" / "diagnostics.csv"));

  const fs::path b = fresh_dir("eps_b");
  run_epsilon_sweep(c, b.string());
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
}

TEST_CASE("eta sweep passes its monotonicity gate end to end") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::EtaSweep;
  c.params.sigma = 0.05;
  c.params.t_end = 0.02;
  c.n = 64;
  c.half_width = 1.6;
  c.initial.kind = "gaussian";
  c.initial.s0 = 0.15;
  c.initial.mass = 0.3;
  c.eta_list = {1e-2, 1e-3, 1e-4};

  const fs::path out = fresh_dir("eta");
  const RunReport r = run_eta_sweep(c, out.string());
  CHECK(r.pass);
  CHECK(report_exit_code(r) == 0);
  CHECK_THAT(slurp(out / "report.csv"),
             ContainsSubstring("l1_distance_strictly_decreasing,pass"));
}

TEST_CASE("sigma sweep reports cauchy differences and the uniform bound") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::SigmaSweep;
  c.params.m = 2.0;
  c.params.t_end = 0.02;
  c.n = 64;
  c.half_width = 2.4;
  c.initial.kind = "gaussian";
  c.initial.s0 = 0.3;
  c.initial.mass = 0.5;
  c.sigma_list = {0.08, 0.04, 0.02};

  const fs::path out = fresh_dir("sigma");
  const RunReport r = run_sigma_sweep(c, out.string());
  CHECK(r.status == SolveStatus::Completed);
  const std::string report = slurp(out / "report.csv");
  CHECK_THAT(report, ContainsSubstring("sigma,max_linf"));
  CHECK_THAT(report, ContainsSubstring("diff_pair_0,"));
  CHECK_THAT(report, ContainsSubstring("diff_pair_1,"));
  CHECK_THAT(report, ContainsSubstring("linf_spread_le_20pct"));
  int diff_rows = 0;
  for (const std::string& row : r.rows)
    if (row.rfind("diff_", 0) == 0) ++diff_rows;
  CHECK(diff_rows == 2);
}

TEST_CASE("particle meanfield compares KDE against the PDE") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::ParticleMeanfield;
  c.params.sigma = 0.05;
  c.params.eps_k = 0.25;
  c.params.eps_p = 0.2;
  c.params.lambda = 0.1;
  c.params.t_end = 0.05;
  c.n = 64;
  c.half_width = 1.6;
  c.initial.kind = "gaussian";
  c.initial.s0 = 0.3;
  c.initial.mass = 1.0;
  c.particles.counts = {200, 800};
  c.particles.seeds = {1, 2};
  c.particles.dt_max = 5e-3;

  const fs::path out = fresh_dir("particles");
  const RunReport r = run_particle_meanfield(c, out.string());
  CHECK(r.status == SolveStatus::Completed);
  REQUIRE(r.rows.size() == 6); // (2 seeds + 1 mean) x 2 counts
  CHECK(fs::exists(out / "ensemble_N200_seed1.csv"));
  CHECK(fs::exists(out / "ensemble_N800_seed2.csv"));
  CHECK(fs::exists(out / "reference_pde" / "diagnostics.csv"));
  const std::string ens = slurp(out / "ensemble_N200_seed1.csv");
  CHECK_THAT(ens, ContainsSubstring("# t="));
  CHECK_THAT(ens, ContainsSubstring("seed=1"));
  CHECK_THAT(ens, ContainsSubstring("id,x1,x2"));
  // with these frozen seeds the Monte Carlo error drops from N=200 to N=800
  CHECK(r.pass);

  SECTION("non-unit mass is rejected") {
    c.initial.mass = 0.5;
    CHECK_THROWS_WITH(run_particle_meanfield(c, fresh_dir("err2").string()),
                      ContainsSubstring("unit mass"));
  }
}

TEST_CASE("commutator experiment bounds the ratio across epsilon") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::Commutator;
  c.params.seed = 3;
  c.n = 256;
  c.half_width = 1.0;
  c.eps_list = {0.2, 0.1};

  const fs::path out = fresh_dir("commutator");
  const RunReport r = run_commutator(c, out.string());
  REQUIRE(r.rows.size() == 40); // 10 pairs x 2 norms x 2 epsilons
  CHECK(r.pass);
  CHECK_THAT(slurp(out / "report.csv"),
             ContainsSubstring("ratio_bounded_by_1.05x_largest_eps,pass"));
}

TEST_CASE("run_experiment dispatches on the tag") {
  ExperimentConfig c;
  c.experiment = ExperimentTag::SingleRun;
  c.params.t_end = 0.005;
  c.chi_on = false;
  c.n = 32;
  c.half_width = 1.25;
  c.initial.kind = "barenblatt";
  const RunReport r = run_experiment(c, fresh_dir("dispatch").string());
  CHECK(r.pass);

  c.experiment = ExperimentTag::EpsilonSweep;
  c.eps_list.clear();
  CHECK_THROWS_AS(run_experiment(c, fresh_dir("dispatch2").string()), ConfigError);
}

TEST_CASE("system kind inference") {
  SimParams p;
  p.eps_k = p.eps_p = 0.0;
  p.sigma = 0.0;
  CHECK(infer_system_kind(p) == SystemKind::Degenerate);
  p.sigma = 0.1;
  CHECK(infer_system_kind(p) == SystemKind::Regularized);
  p.eta = 1e-3;
  CHECK(infer_system_kind(p) == SystemKind::EtaApprox);
  p.eps_k = p.eps_p = 0.2;
  p.lambda = 0.1;
  CHECK(infer_system_kind(p) == SystemKind::NonLocal);
}
