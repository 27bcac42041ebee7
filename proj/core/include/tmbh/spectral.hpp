#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tmbh/model.hpp"

namespace tmbh {

// Dense eigendecomposition of a scaled Hamiltonian. Eigenvalues are stored in
// units of eps = E/(N K); bare energies (which drive the dynamics) are
// eps * energy_scale. The mean level spacing is measured inside the analysis
// window only and is kept in bare units, so t_H = 2 pi / mean_level_spacing
// is in K=1 time units.
struct EigenSystem {
    Vector values;   // scaled, ascending
    Matrix vectors;  // column alpha
    Sector sector = Sector::Full;
    double energy_scale = 1.0;
    double window_lo = 0.0, window_hi = 0.0;  // scaled
    double mean_level_spacing = 0.0;          // bare
    double heisenberg_time = 0.0;

    int dimension() const { return static_cast<int>(values.size()); }
};

EigenSystem diagonalize(const SparseMatrix& H, const ModelParams& params,
                        Sector sector,
                        std::optional<std::pair<double, double>> window = std::nullopt);

// Unperturbed Planck-cell labeling r = (x, eps). For each trimer occupation
// x the levels are the x-particle trimer spectrum plus the monomer shift
// (U/2)(N-x)^2, scaled by N K. The unperturbed eigenvectors live on the rows
// of the 4-site basis with monomer occupation N-x.
class CellGrid {
public:
    struct Block {
        int x = 0;
        Vector levels;          // scaled eps, ascending
        Matrix vectors;         // trimer eigenvectors, column per level
        std::vector<int> rows;  // 4-site sector-basis row per trimer basis row
        int offset = 0;         // flat index of the first cell in this block
    };

    int particles = 0;
    Sector sector = Sector::Full;
    double energy_scale = 1.0;
    std::vector<Block> blocks;  // indexed by x = 0..N (possibly empty blocks)

    int size() const { return total_; }
    const Block& block(int x) const { return blocks.at(static_cast<std::size_t>(x)); }
    int flat_index(int x, int level) const { return block(x).offset + level; }
    std::pair<int, int> cell_coords(int flat) const;  // (x, level index)
    double level_of_cell(int flat) const;
    int x_of_cell(int flat) const;

    // Nearest-level bin in the x block, bin edges at midpoints between
    // adjacent levels. Energies beyond the edge bins clamp (flag set).
    int locate(int x, double eps, bool* clamped = nullptr) const;

    void finalize();  // recompute offsets and totals

private:
    int total_ = 0;
};

CellGrid build_cell_grid(const ModelParams& params, Sector sector);

// Mean level spacing (bare units) obtained by counting grid cells in a scaled
// window; the Planck-cell analogue of the quantum mean spacing, used when no
// diagonalization of the perturbed Hamiltonian is available.
double grid_level_spacing(const CellGrid& grid, double eps_lo, double eps_hi);

// Overlap kernel W[r, alpha] = <r|E_alpha>, organized by grid block. For
// moderate dimensions the kernel is materialized; above the threshold it is
// applied block by block from the trimer eigenvectors.
class CellOverlap {
public:
    CellOverlap(const EigenSystem& eig, const CellGrid& grid,
                std::ptrdiff_t materialize_limit = 8000);

    int cells() const { return grid_->size(); }
    int states() const { return eig_->dimension(); }

    Vector row(int r) const;  // <r|E_alpha> for all alpha
    // out[r] = sum_alpha W[r,alpha]^2 * w[alpha]
    Vector apply_squared(const Vector& w) const;
    // A = W * B for a batch of columns
    Matrix apply(const Matrix& B) const;

    const EigenSystem& eigensystem() const { return *eig_; }
    const CellGrid& grid() const { return *grid_; }

private:
    const EigenSystem* eig_;
    const CellGrid* grid_;
    Matrix W_;  // empty when not materialized
};

struct LdosRecord {
    int cell = -1;
    Vector weights;                      // p_alpha = |<r0|E_alpha>|^2
    double participating_states = 1.0;   // N_inf = 1/sum p^2
    Vector mesh;                         // scaled energy mesh
    Vector density;                      // boxcar-smoothed, integral d eps = 1
    double smoothing_spacings = 50.0;
};

LdosRecord quantum_ldos(int r0, const EigenSystem& eig, const CellGrid& grid,
                        double smoothing_spacings = 50.0);
LdosRecord quantum_ldos(int r0, const CellOverlap& overlap,
                        double smoothing_spacings = 50.0);

// Mean adjacent-gap ratio <min(s,s')/max(s,s')>. ~0.5307 for GOE,
// ~0.3863 (= 2 ln 2 - 1) for Poisson.
double gap_ratio(std::span<const double> levels);

// Gap ratio of the x-block levels inside a scaled window. Requires at least
// min_levels levels. The unfolding-free ratio statistic is used throughout.
double level_spacing_chaos(const CellGrid& grid, int x, double eps_lo,
                           double eps_hi, int min_levels = 50);

struct ChaosMapRow {
    int x = 0;
    double eps_lo = 0, eps_hi = 0, eps_center = 0;
    int levels = 0;
    double ratio = 0;
};

// Sliding-window gap ratios for every x block, pooling the two mirror sectors
// of the trimer so that small blocks still carry enough levels.
std::vector<ChaosMapRow> chaos_map(const ModelParams& params,
                                   int window_levels = 100,
                                   int min_levels = 50);

// Longest contiguous chaotic window (ratio >= threshold) of the given x
// block; returns (eps_lo, eps_hi).
std::optional<std::pair<double, double>> chaotic_band(
    const std::vector<ChaosMapRow>& map, int x, double threshold = 0.48);

struct XMoments {
    Vector mean_x;  // <x>_alpha
    Vector var_x;   // var(x)_alpha
    Vector eps;     // = E_alpha (scaled)
};

XMoments eigenstate_x_moments(const EigenSystem& eig, const CellGrid& grid);

// F^qm = N_inf / N_E
inline double quantum_ergodicity(const LdosRecord& rec, double shell_states) {
    return rec.participating_states / shell_states;
}

// Participation over cells of |<r|psi>|^2 for a state given by eigenbasis
// coefficients (real and imaginary parts).
double cell_participation_of_state(const CellOverlap& overlap,
                                   const Vector& coeff_re,
                                   const Vector& coeff_im);

// Ergodicity of the eigenstate alpha in r space (the LDOS read column-wise),
// normalized by the cell count of the matching energy surface.
double inverse_ldos_ergodicity(const CellOverlap& overlap, int alpha,
                               double surface_volume);

}  // namespace tmbh
