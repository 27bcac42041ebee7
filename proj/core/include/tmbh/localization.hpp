#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tmbh/classical.hpp"

namespace tmbh {

struct ErgodicConstants {
    double fqm = 1.0 / 3.0;  // GOE eigenvector participation factor
    double fs = 2.0 / 3.0;   // spreading calibration, measured per system
};

// F_cl = Omega_cl_inf / Omega_E
double classical_ergodicity(const ExplorationSeries& exploration,
                            const ShellGeometry& shell);

// F_s = Omega_qm_inf / Omega_sc_inf (both from the participation-first,
// average-second saturation rule)
double dynamical_localization(const SpreadingSeries& quantum,
                              const SpreadingSeries& semiclassical);

struct Breaktime {
    bool found = false;
    double t_star = 0.0;
    double lhs_over_rhs_at_horizon = 0.0;  // exploration margin diagnostics
};

// Earliest time where t/t_E >= fqm * (N_E/Omega_E) * Omega_cl_t, located on
// the log-time grid by linear interpolation of the log difference. Returns
// not-found when the exploration stays above the line through a saturated
// horizon; throws when the horizon ends inside an unresolved approach.
Breaktime breaktime(const ExplorationSeries& exploration,
                    const ShellGeometry& shell,
                    const ErgodicConstants& consts = {});

struct BreaktimeReport {
    int x0 = -1;
    double eps0 = 0.0;
    int cell = -1;
    bool has_breaktime = false;
    double t_star = 0.0;
    double t_star_over_th = 0.0;
    double spreading_at_breaktime = 0.0;   // Omega_sc at t*
    double predicted_saturation = 0.0;     // predicted Omega_qm_inf
    double predicted_localization = 0.0;   // predicted F_s
    std::optional<double> measured_localization;  // F_s when quantum ran
    double classical_ergodicity = 0.0;     // F_cl
    std::optional<double> quantum_ergodicity;     // F_qm
    ErgodicConstants constants;
    double shell_states = 0.0;       // N_E
    double surface_volume = 0.0;     // Omega_E
    double shell_volume = 0.0;       // Omega_sc_E
    double shell_time = 0.0;         // t_E
    double heisenberg_time = 0.0;    // t_H
    double exploration_saturation = 0.0;   // Omega_cl_inf
    double spreading_saturation = 0.0;     // Omega_sc_inf
    std::optional<double> quantum_saturation;  // Omega_qm_inf
};

// Predicted quantum saturation: Omega_qm_inf = fs * Omega_sc(t*); without a
// breaktime the prediction is the ergodic plateau itself. Throws when t*
// falls beyond the semiclassical horizon.
BreaktimeReport predict_localization(const Breaktime& bt,
                                     const SpreadingSeries& semiclassical,
                                     const SpreadingSeries* quantum = nullptr,
                                     const ErgodicConstants& consts = {});

enum class DiffusionVerdict { Localized, Delocalized };

struct DiffusionResult {
    DiffusionVerdict verdict = DiffusionVerdict::Localized;
    std::optional<double> t_star;
    double g = 0.0;  // v0 * t_E, meaningful for d > 2
};

// Closed forms for homogeneous diffusion: d=1 gives t* = t_E^2 D0; d=2
// (volume t/ln t) always localizes; d>2 (volume c0 + v0 t) localizes iff
// g = v0 t_E < 1.
DiffusionResult diffusion_reference(int dimension, double coefficient,
                                    double c0, double t_E);

// Generic crossing of t/t_E against an arbitrary exploration law, bracketed
// on a log grid and refined by bisection. Shared oracle for the closed forms.
std::optional<double> crossing_time(const std::function<double(double)>& volume,
                                    double t_E, double t_lo, double t_hi);

struct MobilityProfile {
    std::vector<BreaktimeReport> reports;       // ascending x0
    std::vector<double> edges;                  // interpolated x0 crossings
    double threshold = 0.5;                     // fraction of the plateau
    double plateau = 2.0 / 3.0;
};

// Mobility edges where the predicted F_s crosses threshold * plateau.
MobilityProfile mobility_sweep(std::vector<BreaktimeReport> reports,
                               double threshold_fraction = 0.5,
                               const ErgodicConstants& consts = {});

}  // namespace tmbh
