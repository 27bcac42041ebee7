#include "tmbh/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#ifdef TMBH_WITH_LAPACKE
#include <lapacke.h>
#endif

namespace tmbh {

namespace {

// Dense symmetric eigensolve, values ascending, vectors in columns.
void dense_eigh(Matrix& A, Vector& values) {
    const int n = static_cast<int>(A.rows());
#ifdef TMBH_WITH_LAPACKE
    values.resize(n);
    Matrix Z(n, n);
    int m = 0;
    std::vector<int> isuppz(static_cast<std::size_t>(2 * std::max(1, n)));
    const int info = LAPACKE_dsyevr(
        LAPACK_COL_MAJOR, 'V', 'A', 'L', n, A.data(), n, 0.0, 0.0, 0, 0, 0.0,
        &m, values.data(), Z.data(), n, isuppz.data());
    if (info != 0 || m != n)
        throw std::runtime_error("dense_eigh: dsyevr failed, info=" + std::to_string(info));
    A = std::move(Z);
#else
    Eigen::SelfAdjointEigenSolver<Matrix> solver(A);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("dense_eigh: eigensolver did not converge");
    values = solver.eigenvalues();
    A = solver.eigenvectors();
#endif
}

}  // namespace

EigenSystem diagonalize(const SparseMatrix& H, const ModelParams& params,
                        Sector sector,
                        std::optional<std::pair<double, double>> window) {
    if (H.rows() != H.cols())
        throw std::invalid_argument("diagonalize: matrix not square");
    const int n = static_cast<int>(H.rows());
    const double scale = params.energy_scale();

    EigenSystem out;
    out.sector = sector;
    out.energy_scale = scale;
    out.vectors = Matrix(H) / scale;  // scaled Hamiltonian, overwritten by vectors
    dense_eigh(out.vectors, out.values);

    // residual spot check against ||H||_2 ~ max |eigenvalue|
    const double norm = std::max(std::abs(out.values(0)),
                                 std::abs(out.values(n - 1))) * scale;
    const SparseMatrix Hs = H;
    const int checks = n <= 1500 ? n : 64;
    for (int c = 0; c < checks; ++c) {
        const int i = checks == n ? c : static_cast<int>((static_cast<long>(c) * n) / checks);
        const Vector v = out.vectors.col(i);
        const double resid = (Hs * v - (out.values(i) * scale) * v).norm();
        if (!(resid <= 1e-8 * std::max(norm, 1.0)))
            throw std::runtime_error("diagonalize: residual " + std::to_string(resid) +
                                     " exceeds tolerance at pair " + std::to_string(i));
    }

    double lo = out.values(0), hi = out.values(n - 1);
    if (window) {
        lo = window->first;
        hi = window->second;
        if (!(hi > lo)) throw std::invalid_argument("diagonalize: empty window");
    }
    out.window_lo = lo;
    out.window_hi = hi;

    const auto begin = std::lower_bound(out.values.data(), out.values.data() + n, lo);
    const auto end = std::upper_bound(out.values.data(), out.values.data() + n, hi);
    const long count = end - begin;
    if (count < 2)
        throw std::runtime_error("diagonalize: window holds fewer than 2 levels");
    out.mean_level_spacing = (*(end - 1) - *begin) / static_cast<double>(count - 1) * scale;
    if (!(out.mean_level_spacing > 0.0))
        throw std::runtime_error("diagonalize: degenerate window spacing");
    out.heisenberg_time = 2.0 * std::numbers::pi / out.mean_level_spacing;
    return out;
}

// ---------------------------------------------------------------------------
// Trimer blocks and the cell grid

namespace {

struct TrimerBasis {
    std::vector<std::array<int, 3>> states;  // representatives (n1 >= n3 in sectors)
    std::vector<bool> fixed;
};

TrimerBasis trimer_basis(int x, Sector sector) {
    TrimerBasis b;
    for (int n1 = x; n1 >= 0; --n1)
        for (int n2 = x - n1; n2 >= 0; --n2) {
            const int n3 = x - n1 - n2;
            const bool fx = n1 == n3;
            switch (sector) {
                case Sector::Full:
                    b.states.push_back({n1, n2, n3});
                    b.fixed.push_back(fx);
                    break;
                case Sector::Antisymmetric:
                    if (n1 > n3) {
                        b.states.push_back({n1, n2, n3});
                        b.fixed.push_back(false);
                    }
                    break;
                case Sector::Symmetric:
                    if (n1 >= n3) {
                        b.states.push_back({n1, n2, n3});
                        b.fixed.push_back(fx);
                    }
                    break;
            }
        }
    return b;
}

// Dense x-particle trimer Hamiltonian in the given mirror sector. A sector
// state is w(|a> + sigma|Ma>) with w = 1/sqrt(2) (or |a> for mirror-fixed
// states). Applying H to the representative component alone and folding each
// image back onto representatives gives exactly half the pair-state matrix
// element, hence the factor 2 for pair sources.
Matrix trimer_hamiltonian(const TrimerBasis& basis, Sector sector,
                          const ModelParams& params) {
    const int d = static_cast<int>(basis.states.size());
    Matrix H = Matrix::Zero(d, d);
    std::unordered_map<std::int64_t, int> index;
    index.reserve(basis.states.size() * 2);
    auto key = [](const std::array<int, 3>& s) {
        return (static_cast<std::int64_t>(s[0]) << 32) |
               (static_cast<std::int64_t>(s[1]) << 16) | s[2];
    };
    for (int i = 0; i < d; ++i) index[key(basis.states[i])] = i;

    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const double sigma = sector == Sector::Antisymmetric ? -1.0 : 1.0;
    // directed bonds on the chain (index 0,1,2 = sites 1,2,3)
    static const std::array<std::pair<int, int>, 4> bonds{
        std::pair{2, 1}, {1, 2}, {1, 0}, {0, 1}};
    for (int i = 0; i < d; ++i) {
        const auto& s = basis.states[i];
        H(i, i) += 0.5 * params.U *
                   (double(s[0]) * s[0] + double(s[1]) * s[1] + double(s[2]) * s[2]);
        const bool pair_i = sector != Sector::Full && !basis.fixed[i];
        const double wi = pair_i ? inv_sqrt2 : 1.0;
        const double source_factor = pair_i ? 2.0 : 1.0;
        for (auto [t, f] : bonds) {
            if (s[f] == 0) continue;
            std::array<int, 3> m = s;
            --m[f];
            ++m[t];
            const double val =
                -0.5 * params.K * std::sqrt(double(s[t] + 1) * s[f]) * wi * source_factor;
            std::array<int, 3> rep = m;
            double fold = 1.0;
            if (sector != Sector::Full && rep[0] < rep[2]) {
                std::swap(rep[0], rep[2]);
                fold = sigma;
            }
            auto it = index.find(key(rep));
            if (it == index.end()) {
                if (sector == Sector::Antisymmetric && m[0] == m[2]) continue;
                throw std::runtime_error("trimer_hamiltonian: image outside sector basis");
            }
            const int j = it->second;
            const bool pair_j = sector != Sector::Full && !basis.fixed[j];
            const double wj = pair_j ? inv_sqrt2 : 1.0;
            H(j, i) += fold * val * wj;
        }
    }
    H = 0.5 * (H + H.transpose()).eval();
    return H;
}

}  // namespace

std::pair<int, int> CellGrid::cell_coords(int flat) const {
    for (const auto& b : blocks) {
        if (flat >= b.offset && flat < b.offset + b.levels.size())
            return {b.x, flat - b.offset};
    }
    throw std::out_of_range("CellGrid: flat index out of range");
}

double CellGrid::level_of_cell(int flat) const {
    auto [x, k] = cell_coords(flat);
    return blocks[static_cast<std::size_t>(x)].levels(k);
}

int CellGrid::x_of_cell(int flat) const { return cell_coords(flat).first; }

int CellGrid::locate(int x, double eps, bool* clamped) const {
    if (clamped) *clamped = false;
    if (x < 0 || x >= static_cast<int>(blocks.size()))
        throw std::out_of_range("CellGrid::locate: x out of range");
    const Block& b = blocks[static_cast<std::size_t>(x)];
    const int n = static_cast<int>(b.levels.size());
    if (n == 0) throw std::out_of_range("CellGrid::locate: empty x block");
    if (n == 1) return b.offset;
    // nearest level; equivalent to midpoint bins
    const double* lo = b.levels.data();
    const double* hi = lo + n;
    const double* it = std::lower_bound(lo, hi, eps);
    int k;
    if (it == lo)
        k = 0;
    else if (it == hi)
        k = n - 1;
    else {
        const int j = static_cast<int>(it - lo);
        k = (eps - lo[j - 1] <= lo[j] - eps) ? j - 1 : j;
    }
    if (clamped && (eps < lo[0] - 0.5 * (lo[1] - lo[0]) ||
                    eps > lo[n - 1] + 0.5 * (lo[n - 1] - lo[n - 2])))
        *clamped = true;
    return b.offset + k;
}

void CellGrid::finalize() {
    int off = 0;
    for (auto& b : blocks) {
        b.offset = off;
        off += static_cast<int>(b.levels.size());
    }
    total_ = off;
}

CellGrid build_cell_grid(const ModelParams& params, Sector sector) {
    params.validate();
    const int N = params.N;
    const double scale = params.energy_scale();
    FockBasis basis(N, sector);

    CellGrid grid;
    grid.particles = N;
    grid.sector = sector;
    grid.energy_scale = scale;
    grid.blocks.resize(static_cast<std::size_t>(N) + 1);

    for (int x = 0; x <= N; ++x) {
        CellGrid::Block& blk = grid.blocks[static_cast<std::size_t>(x)];
        blk.x = x;
        TrimerBasis tb = trimer_basis(x, sector);
        const int d = static_cast<int>(tb.states.size());
        if (d == 0) continue;
        Matrix Ht = trimer_hamiltonian(tb, sector, params);
        Vector vals;
        dense_eigh(Ht, vals);
        const double shift = 0.5 * params.U * double(N - x) * double(N - x);
        blk.levels = (vals.array() + shift) / scale;
        blk.vectors = std::move(Ht);
        blk.rows.resize(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            const auto& t = tb.states[i];
            const FockState s{N - x, t[0], t[1], t[2]};
            const int row = sector == Sector::Full ? basis.full_index_of(s)
                                                   : basis.index_of(s);
            if (row < 0)
                throw std::runtime_error("build_cell_grid: trimer state missing from basis");
            blk.rows[static_cast<std::size_t>(i)] = row;
        }
    }
    grid.finalize();
    if (grid.size() != basis.size())
        throw std::runtime_error("build_cell_grid: block dimensions do not sum to basis size");
    return grid;
}

double grid_level_spacing(const CellGrid& grid, double eps_lo, double eps_hi) {
    if (!(eps_hi > eps_lo))
        throw std::invalid_argument("grid_level_spacing: empty window");
    long count = 0;
    for (const auto& b : grid.blocks)
        for (int i = 0; i < b.levels.size(); ++i)
            if (b.levels(i) >= eps_lo && b.levels(i) <= eps_hi) ++count;
    if (count < 2)
        throw std::runtime_error("grid_level_spacing: window holds fewer than 2 cells");
    return (eps_hi - eps_lo) / static_cast<double>(count) * grid.energy_scale;
}

// ---------------------------------------------------------------------------
// Overlap kernel

CellOverlap::CellOverlap(const EigenSystem& eig, const CellGrid& grid,
                         std::ptrdiff_t materialize_limit)
    : eig_(&eig), grid_(&grid) {
    if (eig.dimension() != grid.size())
        throw std::invalid_argument("CellOverlap: eigensystem and grid dimensions differ");
    if (grid.size() <= materialize_limit) {
        W_.resize(grid.size(), eig.dimension());
        for (const auto& b : grid.blocks) {
            if (b.levels.size() == 0) continue;
            Matrix V(b.rows.size(), eig.dimension());
            for (std::size_t r = 0; r < b.rows.size(); ++r)
                V.row(static_cast<Eigen::Index>(r)) = eig.vectors.row(b.rows[r]);
            W_.middleRows(b.offset, b.levels.size()).noalias() = b.vectors.transpose() * V;
        }
    }
}

Vector CellOverlap::row(int r) const {
    if (W_.size() > 0) return W_.row(r);
    auto [x, k] = grid_->cell_coords(r);
    const auto& b = grid_->block(x);
    Vector out = Vector::Zero(eig_->dimension());
    for (std::size_t i = 0; i < b.rows.size(); ++i)
        out += b.vectors(static_cast<Eigen::Index>(i), k) * eig_->vectors.row(b.rows[i]).transpose();
    return out;
}

Vector CellOverlap::apply_squared(const Vector& w) const {
    Vector out = Vector::Zero(cells());
    if (W_.size() > 0) {
        for (int a = 0; a < W_.cols(); ++a)
            out.array() += w(a) * W_.col(a).array().square();
        return out;
    }
    for (const auto& b : grid_->blocks) {
        if (b.levels.size() == 0) continue;
        Matrix V(b.rows.size(), eig_->dimension());
        for (std::size_t r = 0; r < b.rows.size(); ++r)
            V.row(static_cast<Eigen::Index>(r)) = eig_->vectors.row(b.rows[r]);
        Matrix Wb = b.vectors.transpose() * V;
        out.segment(b.offset, b.levels.size()) = Wb.array().square().matrix() * w;
    }
    return out;
}

Matrix CellOverlap::apply(const Matrix& B) const {
    if (W_.size() > 0) return W_ * B;
    Matrix out(cells(), B.cols());
    for (const auto& b : grid_->blocks) {
        if (b.levels.size() == 0) continue;
        Matrix V(b.rows.size(), eig_->dimension());
        for (std::size_t r = 0; r < b.rows.size(); ++r)
            V.row(static_cast<Eigen::Index>(r)) = eig_->vectors.row(b.rows[r]);
        out.middleRows(b.offset, b.levels.size()).noalias() =
            b.vectors.transpose() * (V * B);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LDOS

LdosRecord quantum_ldos(int r0, const CellOverlap& overlap,
                        double smoothing_spacings) {
    const EigenSystem& eig = overlap.eigensystem();
    LdosRecord rec;
    rec.cell = r0;
    rec.smoothing_spacings = smoothing_spacings;
    const Vector amp = overlap.row(r0);
    rec.weights = amp.array().square();
    const double total = rec.weights.sum();
    if (std::abs(total - 1.0) > 1e-8)
        throw std::runtime_error("quantum_ldos: weights do not sum to 1 (basis mismatch)");
    rec.participating_states = 1.0 / rec.weights.array().square().sum();

    // boxcar smoothing over the stated number of level spacings
    const double w = smoothing_spacings * eig.mean_level_spacing / eig.energy_scale;
    const double lo = eig.values(0) - w, hi = eig.values(eig.dimension() - 1) + w;
    const int mesh_points = 1200;
    rec.mesh.resize(mesh_points);
    rec.density.resize(mesh_points);
    const double* vb = eig.values.data();
    const double* ve = vb + eig.dimension();
    for (int i = 0; i < mesh_points; ++i) {
        const double e = lo + (hi - lo) * i / (mesh_points - 1);
        rec.mesh(i) = e;
        const auto a = std::lower_bound(vb, ve, e - 0.5 * w) - vb;
        const auto b = std::upper_bound(vb, ve, e + 0.5 * w) - vb;
        double mass = 0.0;
        for (auto k = a; k < b; ++k) mass += rec.weights(k);
        rec.density(i) = mass / w;
    }
    return rec;
}

LdosRecord quantum_ldos(int r0, const EigenSystem& eig, const CellGrid& grid,
                        double smoothing_spacings) {
    CellOverlap overlap(eig, grid, 0);  // lazy, single row needed
    return quantum_ldos(r0, overlap, smoothing_spacings);
}

// ---------------------------------------------------------------------------
// Level statistics

double gap_ratio(std::span<const double> levels) {
    if (levels.size() < 3)
        throw std::invalid_argument("gap_ratio: need at least 3 levels");
    double sum = 0.0;
    long n = 0;
    for (std::size_t i = 2; i < levels.size(); ++i) {
        const double s1 = levels[i - 1] - levels[i - 2];
        const double s2 = levels[i] - levels[i - 1];
        const double mx = std::max(s1, s2);
        if (mx <= 0.0) continue;
        sum += std::min(s1, s2) / mx;
        ++n;
    }
    if (n == 0) throw std::runtime_error("gap_ratio: degenerate spectrum");
    return sum / static_cast<double>(n);
}

double level_spacing_chaos(const CellGrid& grid, int x, double eps_lo,
                           double eps_hi, int min_levels) {
    const auto& b = grid.block(x);
    std::vector<double> sel;
    for (int i = 0; i < b.levels.size(); ++i)
        if (b.levels(i) >= eps_lo && b.levels(i) <= eps_hi)
            sel.push_back(b.levels(i));
    if (static_cast<int>(sel.size()) < min_levels)
        throw std::runtime_error("level_spacing_chaos: only " +
                                 std::to_string(sel.size()) + " levels in window");
    return gap_ratio(sel);
}

std::vector<ChaosMapRow> chaos_map(const ModelParams& params, int window_levels,
                                   int min_levels) {
    params.validate();
    std::vector<ChaosMapRow> rows;
    for (int x = 0; x <= params.N; ++x) {
        // pool the ratio samples of the two mirror sectors of the trimer
        std::array<std::vector<double>, 2> spectra;
        for (int si = 0; si < 2; ++si) {
            const Sector sec = si == 0 ? Sector::Antisymmetric : Sector::Symmetric;
            TrimerBasis tb = trimer_basis(x, sec);
            if (tb.states.empty()) continue;
            Matrix H = trimer_hamiltonian(tb, sec, params);
            Vector vals;
            dense_eigh(H, vals);
            spectra[static_cast<std::size_t>(si)].assign(vals.data(), vals.data() + vals.size());
        }
        const std::size_t pooled = spectra[0].size() + spectra[1].size();
        if (static_cast<int>(pooled) < min_levels) continue;

        const double shift = 0.5 * params.U * double(params.N - x) * double(params.N - x);
        const double scale = params.energy_scale();
        const int w = window_levels;
        // slide over the antisymmetric spectrum (the larger one) and pick the
        // matching symmetric subrange by energy
        const auto& a = spectra[0].empty() ? spectra[1] : spectra[0];
        const auto& b = spectra[0].empty() ? spectra[0] : spectra[1];
        const int na = static_cast<int>(a.size());
        const int step = std::max(1, w / 2);
        for (int lo = 0; lo < na; lo += step) {
            const int hi = std::min(na, lo + w);
            if (hi - lo < std::max(8, min_levels / 4)) break;
            const double e0 = a[static_cast<std::size_t>(lo)];
            const double e1 = a[static_cast<std::size_t>(hi - 1)];
            double sum = 0.0;
            long cnt = 0;
            auto add = [&](const std::vector<double>& s) {
                auto it0 = std::lower_bound(s.begin(), s.end(), e0);
                auto it1 = std::upper_bound(s.begin(), s.end(), e1);
                if (it1 - it0 < 3) return;
                for (auto it = it0 + 2; it < it1; ++it) {
                    const double s1 = *(it - 1) - *(it - 2);
                    const double s2 = *it - *(it - 1);
                    const double mx = std::max(s1, s2);
                    if (mx > 0.0) {
                        sum += std::min(s1, s2) / mx;
                        ++cnt;
                    }
                }
            };
            add(a);
            add(b);
            if (cnt < min_levels / 2) continue;
            ChaosMapRow row;
            row.x = x;
            row.eps_lo = (e0 + shift) / scale;
            row.eps_hi = (e1 + shift) / scale;
            row.eps_center = 0.5 * (row.eps_lo + row.eps_hi);
            row.levels = static_cast<int>(cnt);
            row.ratio = sum / static_cast<double>(cnt);
            rows.push_back(row);
            if (hi == na) break;
        }
    }
    return rows;
}

std::optional<std::pair<double, double>> chaotic_band(
    const std::vector<ChaosMapRow>& map, int x, double threshold) {
    std::vector<const ChaosMapRow*> rows;
    for (const auto& r : map)
        if (r.x == x) rows.push_back(&r);
    if (rows.empty()) return std::nullopt;
    std::sort(rows.begin(), rows.end(),
              [](auto* a, auto* b) { return a->eps_center < b->eps_center; });
    double best_lo = 0, best_hi = 0, best_len = 0;
    std::size_t i = 0;
    while (i < rows.size()) {
        if (rows[i]->ratio < threshold) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < rows.size() && rows[j + 1]->ratio >= threshold) ++j;
        const double lo = rows[i]->eps_lo, hi = rows[j]->eps_hi;
        if (hi - lo > best_len) {
            best_len = hi - lo;
            best_lo = lo;
            best_hi = hi;
        }
        i = j + 1;
    }
    if (best_len <= 0.0) return std::nullopt;
    return std::make_pair(best_lo, best_hi);
}

XMoments eigenstate_x_moments(const EigenSystem& eig, const CellGrid& grid) {
    if (eig.dimension() != grid.size())
        throw std::invalid_argument("eigenstate_x_moments: sector mismatch");
    // x is diagonal on the sector basis; grid rows give x per basis row
    Vector xdiag(eig.dimension());
    for (const auto& b : grid.blocks)
        for (int row : b.rows) xdiag(row) = static_cast<double>(b.x);
    XMoments m;
    const int D = eig.dimension();
    m.mean_x.resize(D);
    m.var_x.resize(D);
    m.eps = eig.values;
    for (int a = 0; a < D; ++a) {
        const auto v2 = eig.vectors.col(a).array().square();
        const double mx = (v2 * xdiag.array()).sum();
        const double mx2 = (v2 * xdiag.array().square()).sum();
        m.mean_x(a) = mx;
        m.var_x(a) = std::max(0.0, mx2 - mx * mx);
    }
    return m;
}

double cell_participation_of_state(const CellOverlap& overlap,
                                   const Vector& coeff_re,
                                   const Vector& coeff_im) {
    Matrix B(coeff_re.size(), 2);
    B.col(0) = coeff_re;
    B.col(1) = coeff_im;
    const Matrix A = overlap.apply(B);
    Vector p = A.col(0).array().square() + A.col(1).array().square();
    const double total = p.sum();
    if (!(total > 0.0)) throw std::invalid_argument("cell_participation_of_state: null state");
    p /= total;
    return 1.0 / p.array().square().sum();
}

double inverse_ldos_ergodicity(const CellOverlap& overlap, int alpha,
                               double surface_volume) {
    Vector e = Vector::Zero(overlap.states());
    e(alpha) = 1.0;
    const Vector col = overlap.apply(e);
    const Vector p = col.array().square();
    const double pr = 1.0 / p.array().square().sum();
    return pr / surface_volume;
}

}  // namespace tmbh
