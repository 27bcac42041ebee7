#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tmbh/model.hpp"
#include "tmbh/quantum.hpp"
#include "tmbh/spectral.hpp"

namespace tmbh {

struct IntegratorOptions {
    double rel_tol = 1e-12;
    double abs_tol = 1e-12;
};

// Adaptive RKF78 integration with sampling of the state at t = k*dt.
// The observer sees every sample including t = 0.
void integrate_sampled(ClassicalPoint& pt, const ModelParams& params,
                       double t_end, double dt, const IntegratorOptions& opt,
                       const std::function<void(double, const ClassicalPoint&)>& observer);

// Adaptive integration to a single time (negative t integrates the reversed
// flow by momentum inversion).
ClassicalPoint integrate_to(ClassicalPoint pt, const ModelParams& params,
                            double t, const IntegratorOptions& opt = {});

// Observes the state at each of the given ascending times.
void integrate_times(ClassicalPoint& pt, const ModelParams& params,
                     std::span<const double> times, const IntegratorOptions& opt,
                     const std::function<void(double, const ClassicalPoint&)>& observer);

// Cell assignment: x = round(n1+n2+n3) clamped to [0,N]; the eps bin is the
// nearest unperturbed level of the x block (edges at midpoints). Energies
// beyond the edge bins clamp and set the flag.
int cell_of(const ClassicalPoint& pt, const CellGrid& grid,
            const ModelParams& params, bool* clamped = nullptr);

struct Cloud {
    std::vector<ClassicalPoint> points;
    int cell = -1;          // origin cell, -1 for microcanonical ensembles
    std::uint64_t seed = 0;
    double acceptance = 1.0;
};

// Uniform sample of the cell region: trimer occupations uniform on the
// x0-occupation simplex, phases uniform, monomer holding the remainder;
// proposals accepted iff cell_of lands in r0.
Cloud sample_cell(int r0, const CellGrid& grid, const ModelParams& params,
                  int count, std::uint64_t seed);

struct ExplorationSeries {
    std::vector<double> times;
    std::vector<double> values;  // ensemble-mean visited-cell participation
    double dt = 0.5;
    int ensemble = 0;
    double saturation = 0.0;   // tail average
    bool saturated = false;    // late-time slope criterion
    double dt_sensitivity = 0.0;  // relative change under dt -> dt/2
    long clamped_samples = 0;
    long total_samples = 0;
};

// Accumulated visit histogram per trajectory; participation of the
// visit-time distribution, averaged over an ensemble launched inside r0.
// Samples at dt/2 are kept alongside the dt samples so the dt-halving
// convergence rule is checked in the same pass (throws above 2%).
ExplorationSeries classical_exploration(int r0, const CellGrid& grid,
                                        const ModelParams& params,
                                        double horizon, double dt, int ensemble,
                                        std::uint64_t seed,
                                        const IntegratorOptions& opt = {},
                                        std::span<const double> output_times = {},
                                        double dt_tolerance = 0.02);

struct SemiclassicalRun {
    std::vector<CellDistribution> snapshots;
    SpreadingSeries series;
    Vector saturation_distribution;  // tail-averaged P_inf
    long clamped_samples = 0;
};

SemiclassicalRun semiclassical_spreading(const Cloud& cloud, const CellGrid& grid,
                                         const ModelParams& params,
                                         std::span<const double> times,
                                         const IntegratorOptions& opt = {},
                                         double tail_fraction = 0.5);

struct MicrocanonicalOptions {
    int burn_in = 2000;
    int thinning = 16;              // Metropolis steps between kept samples
    double sigma_over_width = 0.1;  // energy kernel width / shell width
    // Hamiltonian-flow move between kept samples: conserves the energy, so it
    // leaves the kernel target invariant while chaos decorrelates the chain
    // along the surface even for needle-thin kernels.
    double flow_time_lo = 2.0;
    double flow_time_hi = 6.0;
    double flow_tol = 1e-9;
    int chains = 2;
    double chain_tolerance = 0.15;  // max relative spread of per-chain volumes
};

struct Microcanonical {
    Vector density;          // rho_sc(r|E) over flat cells
    double surface_volume = 1.0;  // participation number of the density
    double eps = 0.0;        // scaled target energy
    double acceptance = 0.0;
    long samples = 0;
};

// Metropolis walk on the fixed-N sphere in quadrature coordinates with a
// Gaussian energy kernel; chain agreement is checked before merging.
Microcanonical microcanonical_volume(double eps_target, const CellGrid& grid,
                                     const ModelParams& params, int samples,
                                     std::uint64_t seed,
                                     double kernel_width_eps,
                                     const MicrocanonicalOptions& opt = {});

struct ShellGeometry {
    int cell = -1;
    // histogram of scaled full-H energies of the cell cloud
    double bin_lo = 0.0, bin_width = 0.0;
    std::vector<double> fractions;
    double center = 0.0;          // mean scaled energy of the shell
    double shell_width = 0.0;     // Delta_E, bare units
    double shell_time = 0.0;      // t_E = 2 pi / Delta_E
    double shell_states = 0.0;    // N_E = Delta_E / Delta_0
    double surface_volume = 0.0;  // Omega_E
    double shell_volume = 0.0;    // Omega_sc_E = sqrt(N_E^2 + Omega_E^2)
    double level_spacing = 0.0;   // Delta_0 used, bare units
};

// Delta_E from a normalized histogram with bin width w (bare energy units):
// Delta_E = w / sum f^2, the participation width of the distribution.
double shell_width_from_histogram(double bin_width,
                                  std::span<const double> fractions);

inline double shell_volume(double shell_states, double surface_volume) {
    return std::hypot(shell_states, surface_volume);
}

// Shell geometry of the preparation cloud. The histogram bin starts at one
// level spacing and is refined until Delta_E stabilizes (error beyond 5%
// sensitivity). Omega_E comes from microcanonical sampling at the shell
// center unless a precomputed estimate is supplied.
ShellGeometry shell_geometry(const Cloud& cloud, const CellGrid& grid,
                             const ModelParams& params, double level_spacing,
                             const Microcanonical* precomputed = nullptr,
                             std::uint64_t seed = 1,
                             int microcanonical_samples = 20000,
                             const MicrocanonicalOptions& mc_opt = {});

// Linear law N_t = t / t_E.
std::vector<double> semiclassical_exploration(const ShellGeometry& shell,
                                              std::span<const double> times);

// Transient-accurate form: survival from the Fourier transform of the shell
// histogram fed through the same kernel as the quantum exploration.
std::vector<double> semiclassical_exploration_full(const ShellGeometry& shell,
                                                   std::span<const double> times);

}  // namespace tmbh
