#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace tmbh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Four-site trimer-monomer Bose-Hubbard parameters. Site 0 is the monomer,
// sites 1-2-3 form the trimer chain. K sets the unit of time (hbar = 1).
struct ModelParams {
    int N = 60;        // particle count
    double U = 0.105;  // on-site interaction per particle
    double K = 1.0;    // intra-trimer hopping
    double Kc = 0.1;   // trimer-monomer hopping

    double u() const { return N * U / K; }   // dimensionless interaction
    double k() const { return Kc / K; }      // dimensionless coupling
    double energy_scale() const { return N * K; }  // eps = E / (N K)

    static ModelParams from_u(int N, double u, double K = 1.0, double k = 0.1) {
        ModelParams p;
        p.N = N;
        p.K = K;
        p.U = u * K / N;
        p.Kc = k * K;
        p.validate();
        return p;
    }
    void validate() const;
};

// Occupations (n0, n1, n2, n3); n0 is the monomer.
using FockState = std::array<int, 4>;

inline int trimer_occupation(const FockState& s) { return s[1] + s[2] + s[3]; }

// Mirror symmetry: swap the outer trimer sites.
inline FockState mirror(const FockState& s) { return {s[0], s[3], s[2], s[1]}; }

enum class Sector { Full, Antisymmetric, Symmetric };

std::string to_string(Sector s);
Sector sector_from_string(const std::string& s);

std::int64_t full_dimension(int N);  // binomial(N+3, 3)

// Ordered enumeration of the N-particle four-site Fock space, optionally
// reduced to a mirror-symmetry sector. A sector state is either a fixed
// point of the mirror (n1 == n3, symmetric sector only) or the combination
// (|a> +- |Ma>)/sqrt(2) over a representative pair with n1 > n3.
class FockBasis {
public:
    FockBasis(int N, Sector sector);

    int particles() const { return N_; }
    Sector sector() const { return sector_; }
    int size() const { return static_cast<int>(states_.size()); }
    int full_size() const { return static_cast<int>(full_states_.size()); }

    const FockState& representative(int i) const { return full_states_[states_[i].rep]; }
    bool is_mirror_fixed(int i) const { return states_[i].fixed; }
    int x_of(int i) const { return trimer_occupation(representative(i)); }

    // Sector index of the state whose representative is s (for sector bases,
    // s itself must be a representative). Returns -1 when absent.
    int index_of(const FockState& s) const;
    int full_index_of(const FockState& s) const;
    const FockState& full_state(int i) const { return full_states_[i]; }

    // Isometry P (full_size x size): columns are the sector states expressed
    // in the full basis. A sector operator is P^T A P.
    SparseMatrix sector_isometry() const;

private:
    struct SectorState {
        int rep;     // full-basis index of the representative
        int partner; // full-basis index of the mirror partner (== rep if fixed)
        bool fixed;
    };
    int N_;
    Sector sector_;
    std::vector<FockState> full_states_;
    std::vector<SectorState> states_;
    std::unordered_map<std::uint64_t, int> full_index_;
    std::unordered_map<std::uint64_t, int> sector_index_;
};

FockBasis enumerate_basis(const ModelParams& params, Sector sector);

// Decoupled Hamiltonian: (U/2) sum n_j^2 - (K/2)(a3+ a2 + a2+ a1 + h.c.)
SparseMatrix build_h0(const FockBasis& basis, const ModelParams& params);
// Coupling: -(Kc/2) sum_{j=1..3} (a0+ aj + h.c.)
SparseMatrix build_hc(const FockBasis& basis, const ModelParams& params);
// Trimer occupation operator x = n1+n2+n3 (diagonal in any mirror sector).
SparseMatrix build_x_operator(const FockBasis& basis);

// ---------------------------------------------------------------------------
// Classical limit. a_j -> (q_j + i p_j)/sqrt(2), n_j = (q_j^2 + p_j^2)/2.
// The quadrature representation is singularity free at empty sites and makes
// the Hamiltonian polynomial; all four sites are evolved, the global phase
// redundancy is harmless.

struct ClassicalPoint {
    std::array<double, 8> z{};  // q0..q3, p0..p3

    double q(int j) const { return z[j]; }
    double p(int j) const { return z[4 + j]; }
    double occupation(int j) const { return 0.5 * (q(j) * q(j) + p(j) * p(j)); }
    double phase(int j) const;  // in [0, 2pi)
    double total() const {
        return occupation(0) + occupation(1) + occupation(2) + occupation(3);
    }
    double trimer_total() const {
        return occupation(1) + occupation(2) + occupation(3);
    }

    static ClassicalPoint from_occupations(const std::array<double, 4>& n,
                                           const std::array<double, 4>& phi);
};

enum class HamiltonianPart { H0, Coupling, Total };

double classical_energy(const ClassicalPoint& pt, const ModelParams& params,
                        HamiltonianPart part = HamiltonianPart::Total);
inline double classical_energy_scaled(const ClassicalPoint& pt,
                                      const ModelParams& params,
                                      HamiltonianPart part = HamiltonianPart::Total) {
    return classical_energy(pt, params, part) / params.energy_scale();
}

// Canonical flow dq/dt = dH/dp, dp/dt = -dH/dq in quadrature coordinates.
void equations_of_motion(const std::array<double, 8>& z,
                         std::array<double, 8>& dzdt,
                         const ModelParams& params);
std::array<double, 8> equations_of_motion(const ClassicalPoint& pt,
                                          const ModelParams& params);

}  // namespace tmbh
