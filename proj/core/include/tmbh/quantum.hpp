#pragma once

#include <span>
#include <vector>

#include "tmbh/spectral.hpp"

namespace tmbh {

enum class Provenance { Quantum, Semiclassical };

struct CellDistribution {
    double time = 0.0;
    Vector p;  // probability over flat cell indices
    Provenance source = Provenance::Quantum;
};

struct SpreadingSeries {
    std::vector<double> times;
    std::vector<double> cells;    // participation over r
    std::vector<double> x_cells;  // participation of the x projection
    double cells_sat = 0.0;       // time-averaged saturation (tail window)
    double x_sat = 0.0;
    double tail_fraction = 0.5;
    bool horizon_warning = false;  // averaging horizon shorter than 5 t_H
};

// P_t(r|r0) = |<r|exp(-iHt)|r0>|^2 via the eigendecomposition. The
// eigenphases use bare energies eps*N*K so that K=1 sets the clock.
std::vector<CellDistribution> propagate(const CellOverlap& overlap, int r0,
                                        std::span<const double> times);

// Infinite-time-average profile P_inf(r|r0) = sum_a rho(r|E_a) rho(r0|E_a).
Vector saturation_profile(const CellOverlap& overlap, int r0);

SpreadingSeries spreading_volumes(const std::vector<CellDistribution>& dists,
                                  const CellGrid& grid);

// Participation first, time average second: the saturation value is the time
// average of the participation series over the trailing window, not the
// participation of the averaged distribution.
void saturation_average(SpreadingSeries& series, double heisenberg_time,
                        double tail_fraction = 0.5);

// Survival probability P(t) = |sum_a p_a exp(-i E_a N K t)|^2.
std::vector<double> survival_probability(const Vector& weights,
                                         const EigenSystem& eig,
                                         std::span<const double> times);

// Hilbert-space exploration N_t = [ (2/t) int_0^t (1 - tau/t) P(tau) dtau ]^-1
// from a survival series sampled on the uniform grid t_k = k*step. Throws if
// step > t_E/10 (the kernel quadrature would be unresolved).
std::vector<double> hilbert_exploration(std::span<const double> survival,
                                        double step, double t_E,
                                        std::span<const double> query_times);

}  // namespace tmbh
