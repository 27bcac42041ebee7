#include "tmbh/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tmbh/io.hpp"
#include "tmbh/quantum.hpp"
#include "tmbh/rng.hpp"
#include "tmbh/timegrid.hpp"

namespace tmbh {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kReferenceHeisenbergTime = 663.0;  // N=60 headline run

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

json model_json(const ModelParams& m) {
    return json{{"N", m.N}, {"U", m.U}, {"K", m.K}, {"Kc", m.Kc}};
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

std::string RunConfig::to_json_text() const {
    json j;
    j["model"] = model_json(model);
    j["sector"] = to_string(sector);
    if (eps0_auto)
        j["eps0"] = "auto";
    else
        j["eps0"] = eps0;
    j["x0"] = x0;
    if (x0_range) j["x0_range"] = json::array({x0_range->first, x0_range->second});
    j["horizons"] = {{"classical", classical_horizon},
                     {"quantum", quantum_horizon},
                     {"semiclassical", semiclassical_horizon},
                     {"scale_with_th", scale_horizons}};
    j["ensembles"] = {{"cloud", cloud_size},
                      {"exploration", exploration_ensemble},
                      {"microcanonical", microcanonical_samples}};
    j["dt"] = dt;
    j["seed"] = seed;
    j["smoothing_level_spacings"] = smoothing_spacings;
    j["integrator_tolerance"] = integrator_tol;
    j["delta0_window"] = delta0_window;
    j["constants"] = {{"fqm_erg", constants.fqm},
                      {"fs_erg", constants.fs},
                      {"calibrate_fs", calibrate_fs}};
    j["quantum"] = quantum;
    j["max_quantum_dim"] = max_quantum_dim;
    j["time_points"] = time_points;
    j["workers"] = workers;
    j["out"] = out.string();
    j["cache"] = cache.string();
    return j.dump(2);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config parse error: ") + e.what());
    }
    RunConfig c;
    try {
        if (j.contains("model")) {
            const auto& m = j["model"];
            const int N = m.value("N", 60);
            const double K = m.value("K", 1.0);
            if (m.contains("u")) {
                const double kc = m.contains("k") ? m["k"].get<double>()
                                                  : m.value("Kc", 0.1 * K) / K;
                c.model = ModelParams::from_u(N, m["u"].get<double>(), K, kc);
            } else {
                c.model.N = N;
                c.model.K = K;
                c.model.U = m.value("U", c.model.U);
                c.model.Kc = m.value("Kc", c.model.Kc);
                c.model.validate();
            }
        }
        if (j.contains("sector")) c.sector = sector_from_string(j["sector"].get<std::string>());
        if (j.contains("eps0")) {
            if (j["eps0"].is_string()) {
                if (j["eps0"].get<std::string>() != "auto")
                    throw std::runtime_error("eps0 must be a number or \"auto\"");
                c.eps0_auto = true;
            } else {
                c.eps0 = j["eps0"].get<double>();
            }
        }
        c.x0 = j.value("x0", c.x0);
        if (j.contains("x0_range"))
            c.x0_range = std::make_pair(j["x0_range"][0].get<int>(),
                                        j["x0_range"][1].get<int>());
        if (j.contains("horizons")) {
            const auto& h = j["horizons"];
            c.classical_horizon = h.value("classical", c.classical_horizon);
            c.quantum_horizon = h.value("quantum", c.quantum_horizon);
            c.semiclassical_horizon = h.value("semiclassical", c.semiclassical_horizon);
            c.scale_horizons = h.value("scale_with_th", c.scale_horizons);
        }
        if (j.contains("ensembles")) {
            const auto& e = j["ensembles"];
            c.cloud_size = e.value("cloud", c.cloud_size);
            c.exploration_ensemble = e.value("exploration", c.exploration_ensemble);
            c.microcanonical_samples = e.value("microcanonical", c.microcanonical_samples);
        }
        c.dt = j.value("dt", c.dt);
        c.seed = j.value("seed", c.seed);
        c.smoothing_spacings = j.value("smoothing_level_spacings", c.smoothing_spacings);
        c.integrator_tol = j.value("integrator_tolerance", c.integrator_tol);
        c.delta0_window = j.value("delta0_window", c.delta0_window);
        if (j.contains("constants")) {
            const auto& k = j["constants"];
            c.constants.fqm = k.value("fqm_erg", c.constants.fqm);
            c.constants.fs = k.value("fs_erg", c.constants.fs);
            c.calibrate_fs = k.value("calibrate_fs", c.calibrate_fs);
        }
        c.quantum = j.value("quantum", c.quantum);
        c.max_quantum_dim = j.value("max_quantum_dim", c.max_quantum_dim);
        c.time_points = j.value("time_points", c.time_points);
        c.workers = j.value("workers", c.workers);
        if (j.contains("out")) c.out = j["out"].get<std::string>();
        if (j.contains("cache")) {
            const std::string s = j["cache"].get<std::string>();
            if (!s.empty()) c.cache = s;
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("config field error: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::from_json_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string RunConfig::spectrum_key() const {
    json j;
    j["model"] = model_json(model);
    j["sector"] = to_string(sector);
    j["eps0"] = eps0_auto ? json("auto") : json(eps0);
    j["delta0_window"] = delta0_window;
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return hex;
}

std::string RunConfig::config_hash() const {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json_text())));
    return hex;
}

double RunConfig::point_horizon_factor(int x0_value) const {
    const double f = static_cast<double>(x0_value) / model.N;
    if (f <= 25.0 / 60.0) return 2.5;
    if (f <= 26.0 / 60.0) return 2.0;
    return 1.0;
}

// ---------------------------------------------------------------------------
// Manifest

void Manifest::begin_stage(const std::string& name, bool cache_hit) {
    Stage s;
    s.name = name;
    s.cache_hit = cache_hit;
    s.t0 = now_ms();
    stages_.push_back(std::move(s));
}

void Manifest::add_file(const fs::path& path) {
    if (stages_.empty()) begin_stage("unnamed");
    StageFile f;
    f.path = path.string();
    f.checksum = checksum_file(path);
    f.bytes = fs::file_size(path);
    stages_.back().files.push_back(std::move(f));
}

void Manifest::end_stage() {
    if (!stages_.empty()) stages_.back().wall_ms = now_ms() - stages_.back().t0;
}

void Manifest::add_failure(const std::string& what) { failures_.push_back(what); }

void Manifest::write(const fs::path& path, const std::string& config_hash) {
    json j;
    j["config_hash"] = config_hash;
    j["artifact_version"] = "0.1.0";
    j["stages"] = json::array();
    for (const auto& s : stages_) {
        json js;
        js["name"] = s.name;
        js["cache_hit"] = s.cache_hit;
        js["wall_ms"] = s.wall_ms;
        js["files"] = json::array();
        for (const auto& f : s.files)
            js["files"].push_back({{"path", f.path},
                                   {"checksum", f.checksum},
                                   {"bytes", f.bytes}});
        j["stages"].push_back(std::move(js));
    }
    j["failures"] = failures_;
    std::ofstream f(path);
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Spectrum stage

void write_chaos_map_csv(const fs::path& path, const std::vector<ChaosMapRow>& map) {
    CsvWriter csv(path, {"x", "eps_lo", "eps_hi", "eps_center", "levels", "gap_ratio"});
    for (const auto& r : map) {
        const double row[] = {static_cast<double>(r.x), r.eps_lo, r.eps_hi,
                              r.eps_center, static_cast<double>(r.levels), r.ratio};
        csv.row(row);
    }
}

namespace {

double resolve_eps0(const RunConfig& config, std::vector<ChaosMapRow>& chaos) {
    if (!config.eps0_auto) return config.eps0;
    if (chaos.empty()) chaos = chaos_map(config.model);
    for (int x = config.model.N; x >= 0; --x) {
        if (auto band = chaotic_band(chaos, x)) {
            return 0.5 * (band->first + band->second);
        }
    }
    throw std::runtime_error("eps0=auto: no chaotic band found in the unperturbed map");
}

// window around eps0, widened to the full grid range when too few cells
std::pair<double, double> resolve_window(const RunConfig& config,
                                         const CellGrid& grid, double eps0) {
    double lo = eps0 - 0.5 * config.delta0_window;
    double hi = eps0 + 0.5 * config.delta0_window;
    long count = 0;
    double gmin = 0, gmax = 0;
    bool first = true;
    for (const auto& b : grid.blocks)
        for (int i = 0; i < b.levels.size(); ++i) {
            const double e = b.levels(i);
            if (first) {
                gmin = gmax = e;
                first = false;
            }
            gmin = std::min(gmin, e);
            gmax = std::max(gmax, e);
            if (e >= lo && e <= hi) ++count;
        }
    if (count < 10) return {gmin, gmax};
    return {lo, hi};
}

bool load_cached_eigensystem(const RunConfig& config, const std::string& key,
                             EigenSystem& eig) {
    const fs::path dir = config.cache_dir();
    const fs::path meta_p = dir / (key + ".meta.json");
    const fs::path vals_p = dir / (key + ".eigvals.bin");
    const fs::path vecs_p = dir / (key + ".eigvecs.bin");
    if (!fs::exists(meta_p) || !fs::exists(vals_p) || !fs::exists(vecs_p)) return false;
    try {
        std::ifstream f(meta_p);
        json meta = json::parse(f);
        if (meta.value("key", "") != key) return false;
        if (meta["checksums"]["eigvals"] != checksum_file(vals_p)) return false;
        if (meta["checksums"]["eigvecs"] != checksum_file(vecs_p)) return false;
        eig.values = read_vector(vals_p);
        eig.vectors = read_matrix(vecs_p);
        eig.sector = sector_from_string(meta["sector"].get<std::string>());
        eig.energy_scale = meta["energy_scale"].get<double>();
        eig.window_lo = meta["window_lo"].get<double>();
        eig.window_hi = meta["window_hi"].get<double>();
        eig.mean_level_spacing = meta["mean_level_spacing"].get<double>();
        eig.heisenberg_time = meta["heisenberg_time"].get<double>();
        return true;
    } catch (...) {
        return false;
    }
}

void store_eigensystem(const RunConfig& config, const std::string& key,
                       const EigenSystem& eig) {
    const fs::path dir = config.cache_dir();
    fs::create_directories(dir);
    const fs::path vals_p = dir / (key + ".eigvals.bin");
    const fs::path vecs_p = dir / (key + ".eigvecs.bin");
    write_vector(vals_p, eig.values);
    write_matrix(vecs_p, eig.vectors);
    json meta;
    meta["key"] = key;
    meta["model"] = model_json(config.model);
    meta["sector"] = to_string(eig.sector);
    meta["energy_scale"] = eig.energy_scale;
    meta["window_lo"] = eig.window_lo;
    meta["window_hi"] = eig.window_hi;
    meta["mean_level_spacing"] = eig.mean_level_spacing;
    meta["heisenberg_time"] = eig.heisenberg_time;
    meta["checksums"] = {{"eigvals", checksum_file(vals_p)},
                         {"eigvecs", checksum_file(vecs_p)}};
    std::ofstream f(dir / (key + ".meta.json"));
    f << meta.dump(2) << "\n";
}

}  // namespace

std::unique_ptr<SpectrumStage> run_spectrum(const RunConfig& config,
                                            Manifest* manifest, bool with_chaos_map) {
    auto stage = std::make_unique<SpectrumStage>();
    stage->config = config;
    stage->grid = build_cell_grid(config.model, config.sector);
    if (with_chaos_map) stage->chaos = chaos_map(config.model);
    stage->eps0 = resolve_eps0(config, stage->chaos);
    auto [lo, hi] = resolve_window(config, stage->grid, stage->eps0);
    stage->window_lo = lo;
    stage->window_hi = hi;

    const bool want_quantum =
        config.quantum && stage->grid.size() <= config.max_quantum_dim;
    if (manifest) manifest->begin_stage("spectrum");
    if (want_quantum) {
        const std::string key = config.spectrum_key();
        EigenSystem eig;
        if (load_cached_eigensystem(config, key, eig)) {
            stage->spectrum_cache_hit = true;
            stage->eigensystem = std::move(eig);
        } else {
            FockBasis basis = enumerate_basis(config.model, config.sector);
            SparseMatrix H = build_h0(basis, config.model);
            H += build_hc(basis, config.model);
            stage->eigensystem =
                diagonalize(H, config.model, config.sector, std::make_pair(lo, hi));
            store_eigensystem(config, key, *stage->eigensystem);
        }
        stage->quantum_available = true;
        stage->level_spacing = stage->eigensystem->mean_level_spacing;
        stage->heisenberg_time = stage->eigensystem->heisenberg_time;
        stage->overlap = std::make_unique<CellOverlap>(*stage->eigensystem, stage->grid);
    } else {
        stage->level_spacing = grid_level_spacing(stage->grid, lo, hi);
        stage->heisenberg_time = 2.0 * std::numbers::pi / stage->level_spacing;
    }
    if (manifest) {
        if (stage->quantum_available) {
            const std::string key = config.spectrum_key();
            for (const char* suffix : {".eigvals.bin", ".eigvecs.bin", ".meta.json"}) {
                const fs::path p = config.cache_dir() / (key + suffix);
                if (fs::exists(p)) manifest->add_file(p);
            }
        }
        // record the cache state on the stage itself
        manifest->end_stage();
    }
    return stage;
}

// ---------------------------------------------------------------------------
// Point pipeline

fs::path point_dir(const RunConfig& config, int x0) {
    return config.out / ("x0_" + std::to_string(x0));
}

namespace {

Cloud load_or_sample_cloud(const RunConfig& config, const CellGrid& grid,
                           int r0, int x0, const fs::path& dir) {
    const fs::path bin = dir / "cloud.bin";
    const fs::path meta_p = dir / "cloud.json";
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(x0), 1);
    if (fs::exists(bin) && fs::exists(meta_p)) {
        try {
            std::ifstream f(meta_p);
            json meta = json::parse(f);
            if (meta.value("cell", -1) == r0 &&
                meta.value("seed", std::uint64_t{0}) == seed &&
                meta.value("count", -1) == config.cloud_size &&
                meta.value("checksum", "") == checksum_file(bin)) {
                Matrix pts = read_matrix(bin);
                Cloud cloud;
                cloud.cell = r0;
                cloud.seed = seed;
                cloud.acceptance = meta.value("acceptance", 1.0);
                cloud.points.resize(static_cast<std::size_t>(pts.rows()));
                for (Eigen::Index i = 0; i < pts.rows(); ++i)
                    for (int j = 0; j < 8; ++j)
                        cloud.points[static_cast<std::size_t>(i)].z[static_cast<std::size_t>(j)] =
                            pts(i, j);
                return cloud;
            }
        } catch (...) {
        }
    }
    Cloud cloud = sample_cell(r0, grid, config.model, config.cloud_size, seed);
    return cloud;
}

void save_cloud(const Cloud& cloud, const RunConfig& config, const fs::path& dir) {
    Matrix pts(static_cast<Eigen::Index>(cloud.points.size()), 8);
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        for (int j = 0; j < 8; ++j)
            pts(static_cast<Eigen::Index>(i), j) = cloud.points[i].z[static_cast<std::size_t>(j)];
    const fs::path bin = dir / "cloud.bin";
    write_matrix(bin, pts);
    json meta;
    meta["cell"] = cloud.cell;
    meta["seed"] = cloud.seed;
    meta["count"] = static_cast<int>(cloud.points.size());
    meta["acceptance"] = cloud.acceptance;
    meta["model"] = model_json(config.model);
    meta["checksum"] = checksum_file(bin);
    std::ofstream f(dir / "cloud.json");
    f << meta.dump(2) << "\n";
}

json report_json(const BreaktimeReport& rep, const ShellGeometry& shell,
                 const PointResult& res) {
    json j;
    j["x0"] = rep.x0;
    j["eps0"] = rep.eps0;
    j["cell"] = rep.cell;
    j["has_breaktime"] = rep.has_breaktime;
    if (rep.has_breaktime) {
        j["t_star"] = rep.t_star;
        j["t_star_over_th"] = rep.t_star_over_th;
    } else {
        j["t_star"] = nullptr;
        j["t_star_over_th"] = nullptr;
    }
    j["spreading_at_breaktime"] = rep.spreading_at_breaktime;
    j["predicted_quantum_saturation"] = rep.predicted_saturation;
    j["predicted_localization"] = rep.predicted_localization;
    j["measured_localization"] =
        rep.measured_localization ? json(*rep.measured_localization) : json(nullptr);
    j["classical_ergodicity"] = rep.classical_ergodicity;
    j["quantum_ergodicity"] =
        rep.quantum_ergodicity ? json(*rep.quantum_ergodicity) : json(nullptr);
    j["constants"] = {{"fqm_erg", rep.constants.fqm}, {"fs_erg", rep.constants.fs}};
    j["shell"] = {{"center", shell.center},
                  {"width", shell.shell_width},
                  {"time", shell.shell_time},
                  {"states", shell.shell_states},
                  {"surface_volume", shell.surface_volume},
                  {"volume", shell.shell_volume},
                  {"level_spacing", shell.level_spacing}};
    j["heisenberg_time"] = rep.heisenberg_time;
    j["exploration_saturation"] = rep.exploration_saturation;
    j["spreading_saturation"] = rep.spreading_saturation;
    j["quantum_saturation"] =
        rep.quantum_saturation ? json(*rep.quantum_saturation) : json(nullptr);
    j["diagnostics"] = {{"exploration_dt_sensitivity", res.exploration.dt_sensitivity},
                        {"exploration_saturated", res.exploration.saturated},
                        {"exploration_clamped_samples", res.exploration.clamped_samples},
                        {"cloud_clamped_samples", res.cloud_clamped},
                        {"quantum_horizon_warning",
                         res.quantum ? res.quantum->horizon_warning : false}};
    // crossing curves on the exploration grid
    json curves;
    curves["t"] = res.exploration.times;
    curves["omega_cl"] = res.exploration.values;
    curves["allowed"] = res.exploration_allowed;
    j["qcc_curves"] = std::move(curves);
    return j;
}

}  // namespace

PointResult run_point(const RunConfig& config, const SpectrumStage& stage,
                      int x0, Manifest* manifest, bool write_outputs) {
    const ModelParams& params = config.model;
    const CellGrid& grid = stage.grid;
    const fs::path dir = point_dir(config, x0);
    if (write_outputs) fs::create_directories(dir);

    bool edge = false;
    const int r0 = grid.locate(x0, stage.eps0, &edge);

    const double th_factor =
        (config.scale_horizons && params.N != 60)
            ? stage.heisenberg_time / kReferenceHeisenbergTime
            : 1.0;
    const double point_factor = config.point_horizon_factor(x0);
    const double classical_T = config.classical_horizon * th_factor;
    const double sc_T = config.semiclassical_horizon * th_factor * point_factor;
    const double qm_T = config.quantum_horizon * th_factor * point_factor;

    IntegratorOptions iopt;
    iopt.rel_tol = config.integrator_tol;
    iopt.abs_tol = config.integrator_tol;

    PointResult res;

    // cloud + shell
    Cloud cloud = load_or_sample_cloud(config, grid, r0, x0, dir);
    if (write_outputs) save_cloud(cloud, config, dir);
    MicrocanonicalOptions mc_opt;
    res.shell = shell_geometry(cloud, grid, params, stage.level_spacing, nullptr,
                               derive_seed(config.seed, static_cast<std::uint64_t>(x0), 2),
                               config.microcanonical_samples, mc_opt);

    // classical exploration
    res.exploration = classical_exploration(
        r0, grid, params, classical_T, config.dt, config.exploration_ensemble,
        derive_seed(config.seed, static_cast<std::uint64_t>(x0), 3), iopt);
    const double prefactor =
        config.constants.fqm * res.shell.shell_states / res.shell.surface_volume;
    res.exploration_allowed.reserve(res.exploration.values.size());
    for (double v : res.exploration.values) res.exploration_allowed.push_back(prefactor * v);

    // semiclassical spreading
    const double t_min_sc = std::min(res.shell.shell_time / 10.0, sc_T / 100.0);
    const std::vector<double> sc_times =
        log_time_grid(std::max(t_min_sc, sc_T * 1e-6), sc_T, config.time_points, 8);
    SemiclassicalRun sc = semiclassical_spreading(cloud, grid, params, sc_times, iopt);
    res.semiclassical = sc.series;
    res.cloud_clamped = sc.clamped_samples;

    // quantum side
    if (stage.quantum_available) {
        const CellOverlap& overlap = *stage.overlap;
        res.ldos = quantum_ldos(r0, overlap, config.smoothing_spacings);

        const double t_min_qm = std::min(res.shell.shell_time / 10.0, qm_T / 100.0);
        const std::vector<double> qm_times =
            log_time_grid(std::max(t_min_qm, qm_T * 1e-6), qm_T, config.time_points, 8);
        const std::vector<CellDistribution> dists = propagate(overlap, r0, qm_times);
        SpreadingSeries qs = spreading_volumes(dists, grid);
        saturation_average(qs, stage.heisenberg_time);
        res.quantum = qs;

        // survival on a uniform grid dense enough for the exploration kernel
        const double step = res.shell.shell_time / 12.0;
        const int n_fine = std::min(400000, static_cast<int>(std::ceil(qm_T / step)) + 2);
        std::vector<double> fine(static_cast<std::size_t>(n_fine));
        for (int i = 0; i < n_fine; ++i) fine[static_cast<std::size_t>(i)] = step * i;
        const std::vector<double> surv =
            survival_probability(res.ldos->weights, *stage.eigensystem, fine);
        std::vector<double> queries;
        for (double t : qm_times)
            if (t > 0.0 && t <= fine.back()) queries.push_back(t);
        res.nqm_times = queries;
        res.nqm_values = hilbert_exploration(surv, step, res.shell.shell_time, queries);
    }

    // breaktime + prediction
    const Breaktime bt = breaktime(res.exploration, res.shell, config.constants);
    res.report = predict_localization(bt, res.semiclassical,
                                      res.quantum ? &*res.quantum : nullptr,
                                      config.constants);
    res.report.x0 = x0;
    res.report.eps0 = stage.eps0;
    res.report.cell = r0;
    res.report.classical_ergodicity = classical_ergodicity(res.exploration, res.shell);
    if (res.ldos)
        res.report.quantum_ergodicity =
            quantum_ergodicity(*res.ldos, res.shell.shell_states);
    res.report.shell_states = res.shell.shell_states;
    res.report.surface_volume = res.shell.surface_volume;
    res.report.shell_volume = res.shell.shell_volume;
    res.report.shell_time = res.shell.shell_time;
    res.report.heisenberg_time = stage.heisenberg_time;
    res.report.exploration_saturation = res.exploration.saturation;
    if (res.report.has_breaktime)
        res.report.t_star_over_th = res.report.t_star / stage.heisenberg_time;

    if (write_outputs) {
        {
            CsvWriter csv(dir / "exploration.csv", {"t", "omega_cl", "allowed"});
            for (std::size_t i = 0; i < res.exploration.times.size(); ++i) {
                const double row[] = {res.exploration.times[i], res.exploration.values[i],
                                      res.exploration_allowed[i]};
                csv.row(row);
            }
        }
        {
            CsvWriter csv(dir / "spreading_sc.csv", {"t", "omega_sc", "l_sc"});
            for (std::size_t i = 0; i < res.semiclassical.times.size(); ++i) {
                const double row[] = {res.semiclassical.times[i], res.semiclassical.cells[i],
                                      res.semiclassical.x_cells[i]};
                csv.row(row);
            }
        }
        write_vector(dir / "sc_saturation.bin", sc.saturation_distribution);
        if (res.quantum) {
            CsvWriter csv(dir / "spreading_qm.csv", {"t", "omega_qm", "l_qm"});
            for (std::size_t i = 0; i < res.quantum->times.size(); ++i) {
                const double row[] = {res.quantum->times[i], res.quantum->cells[i],
                                      res.quantum->x_cells[i]};
                csv.row(row);
            }
        }
        if (stage.quantum_available) {
            write_vector(dir / "qm_saturation.bin",
                         saturation_profile(*stage.overlap, r0));
            {
                CsvWriter csv(dir / "ldos_weights.csv", {"eps_alpha", "p_alpha"});
                for (int a = 0; a < res.ldos->weights.size(); ++a) {
                    const double row[] = {stage.eigensystem->values(a), res.ldos->weights(a)};
                    csv.row(row);
                }
            }
            {
                // semiclassical envelope on the quantum mesh for comparison
                CsvWriter csv(dir / "ldos_density.csv", {"eps", "rho_qm", "rho_sc"});
                for (int i = 0; i < res.ldos->mesh.size(); ++i) {
                    const double e = res.ldos->mesh(i);
                    double rho_sc = 0.0;
                    if (!res.shell.fractions.empty()) {
                        const int b = static_cast<int>((e - res.shell.bin_lo) / res.shell.bin_width);
                        if (b >= 0 && b < static_cast<int>(res.shell.fractions.size()))
                            rho_sc = res.shell.fractions[static_cast<std::size_t>(b)] /
                                     res.shell.bin_width;
                    }
                    const double row[] = {e, res.ldos->density(i), rho_sc};
                    csv.row(row);
                }
            }
            {
                CsvWriter csv(dir / "hilbert_exploration.csv", {"t", "n_qm", "n_sc"});
                for (std::size_t i = 0; i < res.nqm_times.size(); ++i) {
                    const double row[] = {res.nqm_times[i], res.nqm_values[i],
                                          res.nqm_times[i] / res.shell.shell_time};
                    csv.row(row);
                }
            }
        }
        {
            // x-projection of the saturation profiles against the level density
            const double half = 0.5 * res.shell.shell_width / grid.energy_scale;
            std::vector<double> g(grid.blocks.size(), 0.0);
            double gsum = 0.0;
            for (const auto& b : grid.blocks) {
                for (int i = 0; i < b.levels.size(); ++i)
                    if (std::abs(b.levels(i) - res.shell.center) <= half)
                        g[static_cast<std::size_t>(b.x)] += 1.0;
                gsum += g[static_cast<std::size_t>(b.x)];
            }
            Vector qm_profile;
            if (stage.quantum_available) qm_profile = saturation_profile(*stage.overlap, r0);
            CsvWriter csv(dir / "profile_x.csv", {"x", "g", "p_sc", "p_qm"});
            for (const auto& b : grid.blocks) {
                double psc = 0.0, pqm = 0.0;
                for (int i = 0; i < b.levels.size(); ++i) {
                    psc += sc.saturation_distribution(b.offset + i);
                    if (qm_profile.size() > 0) pqm += qm_profile(b.offset + i);
                }
                const double row[] = {static_cast<double>(b.x),
                                      gsum > 0 ? g[static_cast<std::size_t>(b.x)] / gsum : 0.0,
                                      psc, pqm};
                csv.row(row);
            }
        }
        {
            std::ofstream f(dir / "breaktime.json");
            f << report_json(res.report, res.shell, res).dump(2) << "\n";
        }
        if (manifest) {
            manifest->begin_stage("point_x0_" + std::to_string(x0));
            for (const auto& entry : fs::directory_iterator(dir))
                if (entry.is_regular_file()) manifest->add_file(entry.path());
            manifest->end_stage();
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Sweep

SweepResult run_sweep(const RunConfig& config, Manifest* manifest) {
    auto stage = run_spectrum(config, manifest, config.eps0_auto);
    const auto range = config.x0_range.value_or(
        std::make_pair(std::max(1, static_cast<int>(std::lround(0.42 * config.model.N))),
                       config.model.N));
    if (range.second < range.first)
        throw std::invalid_argument("run_sweep: empty x0 range");
    const int n_points = range.second - range.first + 1;

    std::vector<std::optional<PointResult>> results(static_cast<std::size_t>(n_points));
    std::vector<std::string> errors(static_cast<std::size_t>(n_points));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (config.workers > 1)
#endif
    for (int i = 0; i < n_points; ++i) {
        const int x0 = range.first + i;
        try {
            results[static_cast<std::size_t>(i)] =
                run_point(config, *stage, x0, nullptr, true);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] =
                "x0=" + std::to_string(x0) + ": " + e.what();
        }
    }

    SweepResult sweep;
    std::vector<BreaktimeReport> reports;
    for (int i = 0; i < n_points; ++i) {
        if (results[static_cast<std::size_t>(i)]) {
            reports.push_back(results[static_cast<std::size_t>(i)]->report);
        } else {
            sweep.failed_points.push_back(range.first + i);
            if (manifest) manifest->add_failure(errors[static_cast<std::size_t>(i)]);
        }
    }
    if (reports.size() < 3)
        throw std::runtime_error("run_sweep: fewer than 3 points succeeded");

    // calibrate the spreading plateau from the ergodic points
    ErgodicConstants consts = config.constants;
    if (config.calibrate_fs) {
        std::vector<double> plateau;
        for (const auto& r : reports) {
            if (!r.measured_localization) continue;
            const bool late = !r.has_breaktime ||
                              r.spreading_at_breaktime >= 0.9 * r.spreading_saturation;
            if (late) plateau.push_back(*r.measured_localization);
        }
        if (plateau.size() >= 3) {
            std::sort(plateau.begin(), plateau.end());
            consts.fs = plateau[plateau.size() / 2];
        }
    }
    sweep.fs_calibrated = consts.fs;
    for (auto& r : reports) {
        r.constants = consts;
        if (r.has_breaktime) {
            r.predicted_saturation = consts.fs * r.spreading_at_breaktime;
            r.predicted_localization =
                std::min(1.0, r.predicted_saturation / r.spreading_saturation);
        } else {
            r.predicted_localization = consts.fs;
            r.predicted_saturation = consts.fs * r.spreading_saturation;
        }
    }

    sweep.profile = mobility_sweep(reports, 0.5, consts);

    fs::create_directories(config.out);
    sweep.summary_csv = config.out / "summary.csv";
    {
        CsvWriter csv(sweep.summary_csv,
                      {"x0", "F_cl", "exploration_spreading_ratio", "t_star_over_th",
                       "F_qm", "Fs_measured", "Fs_predicted"});
        for (const auto& r : sweep.profile.reports) {
            const double ratio = r.exploration_saturation / r.spreading_saturation;
            const double row[] = {
                static_cast<double>(r.x0),
                r.classical_ergodicity,
                ratio,
                r.has_breaktime ? r.t_star_over_th : std::nan(""),
                r.quantum_ergodicity ? *r.quantum_ergodicity : std::nan(""),
                r.measured_localization ? *r.measured_localization : std::nan(""),
                r.predicted_localization};
            csv.row(row);
        }
    }
    {
        json j;
        j["fs_calibrated"] = sweep.fs_calibrated;
        j["threshold"] = sweep.profile.threshold;
        j["plateau"] = sweep.profile.plateau;
        j["edges"] = sweep.profile.edges;
        j["failed_points"] = sweep.failed_points;
        std::ofstream f(config.out / "profile.json");
        f << j.dump(2) << "\n";
    }
    if (!stage->chaos.empty())
        write_chaos_map_csv(config.out / "chaos_map.csv", stage->chaos);
    if (manifest) {
        manifest->begin_stage("sweep_summary");
        manifest->add_file(sweep.summary_csv);
        manifest->add_file(config.out / "profile.json");
        manifest->end_stage();
    }
    return sweep;
}

}  // namespace tmbh
