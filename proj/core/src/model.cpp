#include "tmbh/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tmbh {

namespace {

std::uint64_t pack(const FockState& s) {
    return (static_cast<std::uint64_t>(s[0]) << 48) |
           (static_cast<std::uint64_t>(s[1]) << 32) |
           (static_cast<std::uint64_t>(s[2]) << 16) |
           static_cast<std::uint64_t>(s[3]);
}

// true if s is the representative of its mirror pair (n1 >= n3)
bool is_representative(const FockState& s) { return s[1] >= s[3]; }

}  // namespace

void ModelParams::validate() const {
    if (N < 1) throw std::invalid_argument("ModelParams: N must be >= 1");
    if (!(K > 0.0)) throw std::invalid_argument("ModelParams: K must be > 0");
    if (Kc < 0.0) throw std::invalid_argument("ModelParams: Kc must be >= 0");
}

std::string to_string(Sector s) {
    switch (s) {
        case Sector::Full: return "full";
        case Sector::Antisymmetric: return "antisymmetric";
        case Sector::Symmetric: return "symmetric";
    }
    return "full";
}

Sector sector_from_string(const std::string& s) {
    if (s == "full") return Sector::Full;
    if (s == "antisymmetric") return Sector::Antisymmetric;
    if (s == "symmetric") return Sector::Symmetric;
    throw std::invalid_argument("unknown sector: " + s);
}

std::int64_t full_dimension(int N) {
    // binomial(N+3, 3)
    const std::int64_t n = N;
    return (n + 1) * (n + 2) * (n + 3) / 6;
}

FockBasis::FockBasis(int N, Sector sector) : N_(N), sector_(sector) {
    if (N < 1) throw std::invalid_argument("FockBasis: N must be >= 1");
    full_states_.reserve(static_cast<std::size_t>(full_dimension(N)));
    for (int n0 = N; n0 >= 0; --n0)
        for (int n1 = N - n0; n1 >= 0; --n1)
            for (int n2 = N - n0 - n1; n2 >= 0; --n2)
                full_states_.push_back({n0, n1, n2, N - n0 - n1 - n2});
    full_index_.reserve(full_states_.size() * 2);
    for (int i = 0; i < static_cast<int>(full_states_.size()); ++i)
        full_index_[pack(full_states_[i])] = i;

    for (int i = 0; i < static_cast<int>(full_states_.size()); ++i) {
        const FockState& s = full_states_[i];
        const bool fixed = s[1] == s[3];
        switch (sector_) {
            case Sector::Full:
                states_.push_back({i, i, fixed});
                break;
            case Sector::Antisymmetric:
                if (s[1] > s[3])
                    states_.push_back({i, full_index_.at(pack(mirror(s))), false});
                break;
            case Sector::Symmetric:
                if (fixed)
                    states_.push_back({i, i, true});
                else if (s[1] > s[3])
                    states_.push_back({i, full_index_.at(pack(mirror(s))), false});
                break;
        }
    }
    sector_index_.reserve(states_.size() * 2);
    for (int i = 0; i < static_cast<int>(states_.size()); ++i)
        sector_index_[pack(full_states_[states_[i].rep])] = i;
}

int FockBasis::index_of(const FockState& s) const {
    auto it = sector_index_.find(pack(s));
    return it == sector_index_.end() ? -1 : it->second;
}

int FockBasis::full_index_of(const FockState& s) const {
    auto it = full_index_.find(pack(s));
    return it == full_index_.end() ? -1 : it->second;
}

SparseMatrix FockBasis::sector_isometry() const {
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(states_.size() * 2);
    for (int j = 0; j < static_cast<int>(states_.size()); ++j) {
        const SectorState& st = states_[j];
        if (st.fixed) {
            trip.emplace_back(st.rep, j, 1.0);
        } else {
            const double sign = sector_ == Sector::Antisymmetric ? -1.0 : 1.0;
            trip.emplace_back(st.rep, j, inv_sqrt2);
            trip.emplace_back(st.partner, j, sign * inv_sqrt2);
        }
    }
    SparseMatrix P(full_size(), size());
    P.setFromTriplets(trip.begin(), trip.end());
    return P;
}

FockBasis enumerate_basis(const ModelParams& params, Sector sector) {
    params.validate();
    return FockBasis(params.N, sector);
}

namespace {

// Assemble a Hamiltonian over the full enumeration, then project onto the
// requested sector with the isometry. Hopping bonds are given as directed
// (target, source) pairs; the h.c. partner must be listed too.
SparseMatrix assemble(const FockBasis& basis, double diag_u,
                      const std::vector<std::pair<int, int>>& bonds,
                      double hop_coeff) {
    const int D = basis.full_size();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(D) * (1 + bonds.size()));
    for (int i = 0; i < D; ++i) {
        const FockState& s = basis.full_state(i);
        if (diag_u != 0.0) {
            double d = 0.0;
            for (int j = 0; j < 4; ++j) d += static_cast<double>(s[j]) * s[j];
            trip.emplace_back(i, i, 0.5 * diag_u * d);
        }
        for (auto [t, f] : bonds) {
            if (s[f] == 0) continue;
            FockState m = s;
            --m[f];
            ++m[t];
            const int j = basis.full_index_of(m);
            if (j < 0)
                throw std::runtime_error("assemble: hop leaves the basis (sector mismatch)");
            trip.emplace_back(j, i, hop_coeff * std::sqrt(double(s[t] + 1) * s[f]));
        }
    }
    SparseMatrix H(D, D);
    H.setFromTriplets(trip.begin(), trip.end());
    if (basis.sector() == Sector::Full) return H;
    SparseMatrix P = basis.sector_isometry();
    SparseMatrix Hs = P.transpose() * H * P;
    Hs.prune(0.0, 1e-300);
    return Hs;
}

}  // namespace

SparseMatrix build_h0(const FockBasis& basis, const ModelParams& params) {
    params.validate();
    static const std::vector<std::pair<int, int>> bonds{{3, 2}, {2, 3}, {2, 1}, {1, 2}};
    return assemble(basis, params.U, bonds, -0.5 * params.K);
}

SparseMatrix build_hc(const FockBasis& basis, const ModelParams& params) {
    params.validate();
    static const std::vector<std::pair<int, int>> bonds{
        {0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}};
    return assemble(basis, 0.0, bonds, -0.5 * params.Kc);
}

SparseMatrix build_x_operator(const FockBasis& basis) {
    const int D = basis.size();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(D);
    for (int i = 0; i < D; ++i)
        trip.emplace_back(i, i, static_cast<double>(basis.x_of(i)));
    SparseMatrix X(D, D);
    X.setFromTriplets(trip.begin(), trip.end());
    return X;
}

double ClassicalPoint::phase(int j) const {
    double ph = std::atan2(p(j), q(j));
    if (ph < 0.0) ph += 2.0 * std::numbers::pi;
    return ph;
}

ClassicalPoint ClassicalPoint::from_occupations(const std::array<double, 4>& n,
                                                const std::array<double, 4>& phi) {
    ClassicalPoint pt;
    for (int j = 0; j < 4; ++j) {
        if (n[j] < 0.0)
            throw std::invalid_argument("ClassicalPoint: negative occupation");
        const double r = std::sqrt(2.0 * n[j]);
        pt.z[j] = r * std::cos(phi[j]);
        pt.z[4 + j] = r * std::sin(phi[j]);
    }
    return pt;
}

double classical_energy(const ClassicalPoint& pt, const ModelParams& params,
                        HamiltonianPart part) {
    const auto& z = pt.z;
    const double* q = z.data();
    const double* p = z.data() + 4;
    double e = 0.0;
    if (part != HamiltonianPart::Coupling) {
        double inter = 0.0;
        for (int j = 0; j < 4; ++j) {
            const double n = 0.5 * (q[j] * q[j] + p[j] * p[j]);
            inter += n * n;
        }
        e += 0.5 * params.U * inter;
        e -= 0.5 * params.K * (q[3] * q[2] + p[3] * p[2] + q[2] * q[1] + p[2] * p[1]);
    }
    if (part != HamiltonianPart::H0) {
        double c = 0.0;
        for (int j = 1; j < 4; ++j) c += q[0] * q[j] + p[0] * p[j];
        e -= 0.5 * params.Kc * c;
    }
    return e;
}

void equations_of_motion(const std::array<double, 8>& z,
                         std::array<double, 8>& dzdt,
                         const ModelParams& params) {
    const double* q = z.data();
    const double* p = z.data() + 4;
    const double U = params.U, K = params.K, Kc = params.Kc;

    double hq[4], hp[4];  // dH/dq_j, dH/dp_j
    for (int j = 0; j < 4; ++j) {
        const double n = 0.5 * (q[j] * q[j] + p[j] * p[j]);
        hq[j] = U * n * q[j];
        hp[j] = U * n * p[j];
    }
    // trimer chain bonds 3-2 and 2-1
    hq[3] += -0.5 * K * q[2];
    hq[2] += -0.5 * K * (q[3] + q[1]);
    hq[1] += -0.5 * K * q[2];
    hp[3] += -0.5 * K * p[2];
    hp[2] += -0.5 * K * (p[3] + p[1]);
    hp[1] += -0.5 * K * p[2];
    // monomer coupling
    hq[0] += -0.5 * Kc * (q[1] + q[2] + q[3]);
    hp[0] += -0.5 * Kc * (p[1] + p[2] + p[3]);
    for (int j = 1; j < 4; ++j) {
        hq[j] += -0.5 * Kc * q[0];
        hp[j] += -0.5 * Kc * p[0];
    }
    for (int j = 0; j < 4; ++j) {
        dzdt[j] = hp[j];        // dq/dt = dH/dp
        dzdt[4 + j] = -hq[j];   // dp/dt = -dH/dq
    }
}

std::array<double, 8> equations_of_motion(const ClassicalPoint& pt,
                                          const ModelParams& params) {
    std::array<double, 8> d;
    equations_of_motion(pt.z, d, params);
    return d;
}

}  // namespace tmbh
