// Command-line driver for the trimer-monomer localization experiments.
//
// Stages: spectrum -> ldos -> evolve/explore -> breaktime -> sweep -> report.
// All outputs are plot-ready CSV/JSON; heavy decompositions are cached under
// the stage cache and reused across runs with the same parameters.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tmbh/io.hpp"
#include "tmbh/pipeline.hpp"
#include "tmbh/quantum.hpp"
#include "tmbh/rng.hpp"
#include "tmbh/timegrid.hpp"

namespace fs = std::filesystem;
using tmbh::RunConfig;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string cache;
    int workers = 0;
    std::optional<int> scale;  // override N, preserving u and k
};

RunConfig load_config(const GlobalArgs& g) {
    RunConfig c = g.config_path.empty() ? RunConfig{}
                                        : RunConfig::from_json_file(g.config_path);
    if (g.seed) c.seed = *g.seed;
    if (!g.out.empty()) c.out = g.out;
    if (!g.cache.empty()) c.cache = g.cache;
    if (g.workers > 0) c.workers = g.workers;
    if (g.scale) {
        const double u = c.model.u(), k = c.model.k(), K = c.model.K;
        c.model = tmbh::ModelParams::from_u(*g.scale, u, K, k);
    }
#ifdef _OPENMP
    if (c.workers > 0) omp_set_num_threads(c.workers);
#endif
    return c;
}

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "run configuration (JSON)");
    cmd->add_option("--seed", g.seed, "override the base seed");
    cmd->add_option("--out", g.out, "output directory");
    cmd->add_option("--stage-cache", g.cache, "stage cache directory");
    cmd->add_option("--workers", g.workers, "worker thread count");
    cmd->add_option("--scale", g.scale, "override the particle count N (keeps u, k)");
}

int cmd_spectrum(const RunConfig& config) {
    tmbh::Manifest manifest;
    auto stage = tmbh::run_spectrum(config, &manifest, true);
    fs::create_directories(config.out);
    tmbh::write_chaos_map_csv(config.out / "chaos_map.csv", stage->chaos);

    nlohmann::ordered_json j;
    j["eps0"] = stage->eps0;
    j["window"] = {stage->window_lo, stage->window_hi};
    j["cells"] = stage->grid.size();
    j["quantum"] = stage->quantum_available;
    j["cache_hit"] = stage->spectrum_cache_hit;
    j["mean_level_spacing"] = stage->level_spacing;
    j["heisenberg_time"] = stage->heisenberg_time;
    if (stage->quantum_available) {
        const auto& eig = *stage->eigensystem;
        const tmbh::XMoments moments = tmbh::eigenstate_x_moments(eig, stage->grid);
        tmbh::CsvWriter csv(config.out / "eigenstate_moments.csv",
                            {"eps_alpha", "mean_x", "var_x"});
        for (int a = 0; a < eig.dimension(); ++a) {
            const double row[] = {moments.eps(a), moments.mean_x(a), moments.var_x(a)};
            csv.row(row);
        }
    }
    std::ofstream f(config.out / "spectrum.json");
    f << j.dump(2) << "\n";
    manifest.begin_stage("spectrum_outputs");
    manifest.add_file(config.out / "chaos_map.csv");
    manifest.add_file(config.out / "spectrum.json");
    manifest.end_stage();
    manifest.write(config.out / "manifest.json", config.config_hash());
    std::printf("spectrum: %d cells, eps0=%.6g, t_H=%.6g, cache_hit=%d\n",
                stage->grid.size(), stage->eps0, stage->heisenberg_time,
                int(stage->spectrum_cache_hit));
    return 0;
}

int cmd_ldos(const RunConfig& config) {
    tmbh::Manifest manifest;
    auto stage = tmbh::run_spectrum(config, &manifest, config.eps0_auto);
    if (!stage->quantum_available)
        throw std::runtime_error("ldos: the quantum stage is unavailable (dimension cap?)");
    auto res = tmbh::run_point(config, *stage, config.x0, &manifest, true);
    manifest.write(config.out / "manifest.json", config.config_hash());
    std::printf("ldos: x0=%d N_inf=%.4g N_E=%.4g F_qm=%.4g\n", config.x0,
                res.ldos->participating_states, res.shell.shell_states,
                res.report.quantum_ergodicity.value_or(std::nan("")));
    return 0;
}

int cmd_evolve(const RunConfig& config, const std::string& which) {
    tmbh::Manifest manifest;
    auto stage = tmbh::run_spectrum(config, &manifest, config.eps0_auto);
    if (which == "quantum" && !stage->quantum_available)
        throw std::runtime_error(
            "evolve: quantum requested but the spectrum stage has no "
            "diagonalization (run `spectrum` with a feasible dimension first)");
    auto res = tmbh::run_point(config, *stage, config.x0, &manifest, true);
    manifest.write(config.out / "manifest.json", config.config_hash());
    if (which == "quantum" && res.quantum)
        std::printf("evolve quantum: Omega_inf=%.5g L_inf=%.5g\n",
                    res.quantum->cells_sat, res.quantum->x_sat);
    else if (which == "classical")
        std::printf("evolve classical: Omega_cl_inf=%.5g saturated=%d\n",
                    res.exploration.saturation, int(res.exploration.saturated));
    else
        std::printf("evolve semiclassical: Omega_sc_inf=%.5g L_inf=%.5g\n",
                    res.semiclassical.cells_sat, res.semiclassical.x_sat);
    return 0;
}

int cmd_breaktime(const RunConfig& config) {
    tmbh::Manifest manifest;
    auto stage = tmbh::run_spectrum(config, &manifest, config.eps0_auto);
    auto res = tmbh::run_point(config, *stage, config.x0, &manifest, true);
    manifest.write(config.out / "manifest.json", config.config_hash());
    if (res.report.has_breaktime)
        std::printf("breaktime: t*=%.6g (t*/t_H=%.4g) predicted F_s=%.4g%s\n",
                    res.report.t_star, res.report.t_star_over_th,
                    res.report.predicted_localization,
                    res.report.measured_localization
                        ? (" measured F_s=" +
                           tmbh::format_full(*res.report.measured_localization))
                              .c_str()
                        : "");
    else
        std::printf("breaktime: none before classical saturation; predicted F_s=%.4g\n",
                    res.report.predicted_localization);
    return 0;
}

int cmd_sweep(const RunConfig& config) {
    tmbh::Manifest manifest;
    auto sweep = tmbh::run_sweep(config, &manifest);
    manifest.write(config.out / "manifest.json", config.config_hash());
    std::printf("sweep: %zu points, fs_erg(calibrated)=%.4g, edges:",
                sweep.profile.reports.size(), sweep.fs_calibrated);
    for (double e : sweep.profile.edges) std::printf(" %.3g", e);
    std::printf("\n summary: %s\n", sweep.summary_csv.string().c_str());
    if (!sweep.failed_points.empty()) {
        std::printf(" failed points:");
        for (int x : sweep.failed_points) std::printf(" %d", x);
        std::printf("\n");
    }
    return 0;
}

int cmd_report(const RunConfig& config, double threshold) {
    // re-run the edge finder on stored per-point reports
    std::vector<tmbh::BreaktimeReport> reports;
    for (const auto& entry : fs::directory_iterator(config.out)) {
        if (!entry.is_directory()) continue;
        const fs::path p = entry.path() / "breaktime.json";
        if (!fs::exists(p)) continue;
        std::ifstream f(p);
        const auto j = nlohmann::ordered_json::parse(f);
        tmbh::BreaktimeReport r;
        r.x0 = j["x0"].get<int>();
        r.eps0 = j["eps0"].get<double>();
        r.has_breaktime = j["has_breaktime"].get<bool>();
        if (r.has_breaktime) {
            r.t_star = j["t_star"].get<double>();
            r.t_star_over_th = j["t_star_over_th"].get<double>();
        }
        r.spreading_at_breaktime = j["spreading_at_breaktime"].get<double>();
        r.predicted_saturation = j["predicted_quantum_saturation"].get<double>();
        r.predicted_localization = j["predicted_localization"].get<double>();
        if (!j["measured_localization"].is_null())
            r.measured_localization = j["measured_localization"].get<double>();
        r.classical_ergodicity = j["classical_ergodicity"].get<double>();
        if (!j["quantum_ergodicity"].is_null())
            r.quantum_ergodicity = j["quantum_ergodicity"].get<double>();
        r.constants.fqm = j["constants"]["fqm_erg"].get<double>();
        r.constants.fs = j["constants"]["fs_erg"].get<double>();
        r.exploration_saturation = j["exploration_saturation"].get<double>();
        r.spreading_saturation = j["spreading_saturation"].get<double>();
        reports.push_back(std::move(r));
    }
    if (reports.size() < 3)
        throw std::runtime_error("report: fewer than 3 stored points under " +
                                 config.out.string());
    tmbh::ErgodicConstants consts = reports.front().constants;
    auto prof = tmbh::mobility_sweep(reports, threshold, consts);
    std::printf("x0    F_cl    F_qm    t*/t_H   F_s(meas)  F_s(pred)\n");
    for (const auto& r : prof.reports) {
        std::printf("%-5d %-7.3f %-7.3f %-8.3g %-10.3f %-9.3f\n", r.x0,
                    r.classical_ergodicity, r.quantum_ergodicity.value_or(std::nan("")),
                    r.has_breaktime ? r.t_star_over_th : std::nan(""),
                    r.measured_localization.value_or(std::nan("")),
                    r.predicted_localization);
    }
    std::printf("mobility edges (threshold %.2f of plateau %.3f):", prof.threshold,
                prof.plateau);
    for (double e : prof.edges) std::printf(" %.3g", e);
    std::printf("\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trimer-monomer Bose-Hubbard localization toolkit"};
    app.require_subcommand(1);

    GlobalArgs g_spectrum, g_ldos, g_evolve, g_explore, g_breaktime, g_sweep, g_report;
    std::string evolve_which = "quantum";
    double report_threshold = 0.5;

    auto* spectrum = app.add_subcommand("spectrum", "diagonalize and map the chaos landscape");
    add_global_flags(spectrum, g_spectrum);
    auto* ldos = app.add_subcommand("ldos", "local density of states for the configured cell");
    add_global_flags(ldos, g_ldos);
    auto* evolve = app.add_subcommand("evolve", "time evolution for the configured cell");
    add_global_flags(evolve, g_evolve);
    evolve->add_option("--which", evolve_which, "quantum | semiclassical | classical")
        ->check(CLI::IsMember({"quantum", "semiclassical", "classical"}));
    auto* explore = app.add_subcommand("explore", "classical exploration (alias of evolve --which classical)");
    add_global_flags(explore, g_explore);
    auto* breaktime = app.add_subcommand("breaktime", "QCC breaktime and localization prediction");
    add_global_flags(breaktime, g_breaktime);
    auto* sweep = app.add_subcommand("sweep", "x0 sweep producing the mobility profile");
    add_global_flags(sweep, g_sweep);
    auto* report = app.add_subcommand("report", "tabulate stored reports and mobility edges");
    add_global_flags(report, g_report);
    report->add_option("--threshold", report_threshold, "edge threshold as a fraction of the plateau");

    CLI11_PARSE(app, argc, argv);

    try {
        if (spectrum->parsed()) return cmd_spectrum(load_config(g_spectrum));
        if (ldos->parsed()) return cmd_ldos(load_config(g_ldos));
        if (evolve->parsed()) return cmd_evolve(load_config(g_evolve), evolve_which);
        if (explore->parsed()) return cmd_evolve(load_config(g_explore), "classical");
        if (breaktime->parsed()) return cmd_breaktime(load_config(g_breaktime));
        if (sweep->parsed()) return cmd_sweep(load_config(g_sweep));
        if (report->parsed()) return cmd_report(load_config(g_report), report_threshold);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
