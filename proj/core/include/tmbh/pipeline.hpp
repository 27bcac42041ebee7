#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tmbh/localization.hpp"

namespace tmbh {

// Run configuration. Defaults mirror the headline experiment: N=60, u=6.3,
// K=1, Kc=0.1, antisymmetric sector, eps0=1.181, cloud 50,000, exploration
// ensemble 5,000, horizons 2e4 (classical) / 1e4 (quantum, semiclassical),
// LDOS smoothing over 50 level spacings.
struct RunConfig {
    ModelParams model = ModelParams::from_u(60, 6.3, 1.0, 0.1);
    Sector sector = Sector::Antisymmetric;
    double eps0 = 1.181;
    bool eps0_auto = false;
    int x0 = 55;
    std::optional<std::pair<int, int>> x0_range;

    double classical_horizon = 20000.0;
    double quantum_horizon = 10000.0;
    double semiclassical_horizon = 10000.0;
    bool scale_horizons = true;  // rescale with t_H when N != 60

    int cloud_size = 50000;
    int exploration_ensemble = 5000;
    int microcanonical_samples = 20000;

    double dt = 0.5;
    std::uint64_t seed = 1;
    double smoothing_spacings = 50.0;
    double integrator_tol = 1e-12;
    double delta0_window = 0.3;  // full scaled width around eps0

    ErgodicConstants constants;
    bool calibrate_fs = true;
    bool quantum = true;
    int max_quantum_dim = 26000;
    int time_points = 400;
    int workers = 0;

    std::filesystem::path out = "runs/default";
    std::filesystem::path cache;  // empty -> out/cache

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_json_file(const std::filesystem::path& path);
    std::string to_json_text() const;

    std::filesystem::path cache_dir() const { return cache.empty() ? out / "cache" : cache; }
    std::string spectrum_key() const;  // cache key of the diagonalization stage
    std::string config_hash() const;

    // quantum/semiclassical horizons carry per-point multipliers for the
    // slow peripheral preparations (x0/N <= 25/60 -> 2.5x, <= 26/60 -> 2x)
    double point_horizon_factor(int x0_value) const;
};

struct StageFile {
    std::string path;
    std::string checksum;
    std::uintmax_t bytes = 0;
};

class Manifest {
public:
    void begin_stage(const std::string& name, bool cache_hit = false);
    void add_file(const std::filesystem::path& path);
    void end_stage();
    void add_failure(const std::string& what);
    void write(const std::filesystem::path& path, const std::string& config_hash);

private:
    struct Stage {
        std::string name;
        bool cache_hit = false;
        double wall_ms = 0.0;
        std::vector<StageFile> files;
        double t0 = 0.0;
    };
    std::vector<Stage> stages_;
    std::vector<std::string> failures_;
};

// Diagonalization + grid + window data shared by every point of a run.
struct SpectrumStage {
    RunConfig config;
    CellGrid grid;
    std::optional<EigenSystem> eigensystem;
    std::unique_ptr<CellOverlap> overlap;  // set when the quantum side runs
    std::vector<ChaosMapRow> chaos;        // filled on demand
    double eps0 = 0.0;          // resolved preparation energy
    double window_lo = 0.0, window_hi = 0.0;
    double level_spacing = 0.0;  // bare Delta_0 inside the window
    double heisenberg_time = 0.0;
    bool quantum_available = false;
    bool spectrum_cache_hit = false;

    SpectrumStage() = default;
    SpectrumStage(const SpectrumStage&) = delete;
    SpectrumStage& operator=(const SpectrumStage&) = delete;
};

std::unique_ptr<SpectrumStage> run_spectrum(const RunConfig& config,
                                            Manifest* manifest = nullptr,
                                            bool with_chaos_map = false);

struct PointResult {
    BreaktimeReport report;
    ShellGeometry shell;
    ExplorationSeries exploration;
    SpreadingSeries semiclassical;
    std::optional<SpreadingSeries> quantum;
    std::optional<LdosRecord> ldos;
    std::vector<double> exploration_allowed;  // fqm (N_E/Omega_E) Omega_cl_t
    std::vector<double> nqm_times;
    std::vector<double> nqm_values;
    long cloud_clamped = 0;
};

PointResult run_point(const RunConfig& config, const SpectrumStage& stage,
                      int x0, Manifest* manifest = nullptr,
                      bool write_outputs = true);

struct SweepResult {
    MobilityProfile profile;
    double fs_calibrated = 2.0 / 3.0;
    std::vector<int> failed_points;
    std::filesystem::path summary_csv;
};

SweepResult run_sweep(const RunConfig& config, Manifest* manifest = nullptr);

// Fig 1b-style chaos map export; also used to resolve eps0 = "auto".
void write_chaos_map_csv(const std::filesystem::path& path,
                         const std::vector<ChaosMapRow>& map);

std::filesystem::path point_dir(const RunConfig& config, int x0);

}  // namespace tmbh
