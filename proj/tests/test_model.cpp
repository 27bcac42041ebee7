#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tmbh/model.hpp"
#include "tmbh/rng.hpp"

using namespace tmbh;

namespace {

Matrix dense(const SparseMatrix& s) { return Matrix(s); }

// independent dense construction over explicit state pairs, the brute-force
// oracle for the sparse builders
Matrix brute_force_h(const FockBasis& basis, const ModelParams& mp) {
    REQUIRE(basis.sector() == Sector::Full);
    const int D = basis.size();
    Matrix H = Matrix::Zero(D, D);
    for (int i = 0; i < D; ++i) {
        const FockState a = basis.representative(i);
        for (int j = 0; j < D; ++j) {
            const FockState b = basis.representative(j);
            if (i == j) {
                double d = 0;
                for (int s = 0; s < 4; ++s) d += double(a[s]) * a[s];
                H(i, j) += 0.5 * mp.U * d;
                continue;
            }
            int from = -1, to = -1;
            bool single_hop = true;
            for (int s = 0; s < 4; ++s) {
                if (a[s] == b[s] + 1 && to < 0) to = s;
                else if (a[s] == b[s] - 1 && from < 0) from = s;
                else if (a[s] != b[s]) single_hop = false;
            }
            if (!single_hop || from < 0 || to < 0) continue;
            const double amp = std::sqrt(double(b[to] + 1) * b[from]);
            const int lo = std::min(from, to), hi = std::max(from, to);
            if ((lo == 1 && hi == 2) || (lo == 2 && hi == 3))
                H(i, j) += -0.5 * mp.K * amp;
            else if (lo == 0)
                H(i, j) += -0.5 * mp.Kc * amp;
        }
    }
    return H;
}

ClassicalPoint random_point(Rng& rng, int N) {
    const auto w = rng.simplex3();
    const double xfrac = rng.uniform(0.1, 0.9);
    std::array<double, 4> n{N * (1 - xfrac), N * xfrac * w[0], N * xfrac * w[1],
                            N * xfrac * w[2]};
    std::array<double, 4> phi{rng.uniform(0, 2 * std::numbers::pi),
                              rng.uniform(0, 2 * std::numbers::pi),
                              rng.uniform(0, 2 * std::numbers::pi),
                              rng.uniform(0, 2 * std::numbers::pi)};
    return ClassicalPoint::from_occupations(n, phi);
}

}  // namespace

TEST_CASE("basis enumeration counts") {
    CHECK(FockBasis(1, Sector::Full).size() == 4);
    CHECK(FockBasis(2, Sector::Full).size() == 10);
    CHECK(FockBasis(2, Sector::Antisymmetric).size() == 3);
    CHECK(FockBasis(60, Sector::Full).size() == 39711);
    for (int N : {1, 2, 5, 17, 40, 80})
        CHECK(static_cast<std::int64_t>(FockBasis(N, Sector::Full).size()) ==
              full_dimension(N));
}

TEST_CASE("sector dimensions partition the full space") {
    for (int N : {2, 3, 5, 8}) {
        FockBasis full(N, Sector::Full);
        FockBasis anti(N, Sector::Antisymmetric);
        FockBasis sym(N, Sector::Symmetric);
        CHECK(anti.size() + sym.size() == full.size());
    }
}

TEST_CASE("h0 matrix elements") {
    ModelParams mp;
    mp.N = 2;
    mp.U = 0.7;
    mp.K = 1.3;
    mp.Kc = 0.0;
    FockBasis basis(2, Sector::Full);
    Matrix H0 = dense(build_h0(basis, mp));

    const int i = basis.index_of({2, 0, 0, 0});
    CHECK(H0(i, i) == doctest::Approx(2.0 * mp.U));

    ModelParams mp1 = mp;
    mp1.N = 1;
    FockBasis b1(1, Sector::Full);
    Matrix H1 = dense(build_h0(b1, mp1));
    const int a = b1.index_of({0, 1, 0, 0});
    const int b = b1.index_of({0, 0, 1, 0});
    CHECK(H1(a, b) == doctest::Approx(-0.5 * mp1.K));
    CHECK(H1(b, a) == doctest::Approx(-0.5 * mp1.K));
}

TEST_CASE("hc matrix elements and Kc=0") {
    ModelParams mp;
    mp.N = 1;
    mp.Kc = 0.25;
    FockBasis b1(1, Sector::Full);
    Matrix Hc = dense(build_hc(b1, mp));
    const int a = b1.index_of({1, 0, 0, 0});
    const int b = b1.index_of({0, 1, 0, 0});
    CHECK(Hc(a, b) == doctest::Approx(-0.5 * mp.Kc));

    mp.Kc = 0.0;
    CHECK(dense(build_hc(b1, mp)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full Hamiltonian vs brute-force oracle at N=2") {
    ModelParams mp;
    mp.N = 2;
    mp.U = 0.31;
    mp.K = 1.0;
    mp.Kc = 0.17;
    FockBasis basis(2, Sector::Full);
    Matrix H = dense(build_h0(basis, mp)) + dense(build_hc(basis, mp));
    Matrix Hb = brute_force_h(basis, mp);
    CHECK((H - Hb).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("x operator commutators") {
    ModelParams mp;
    mp.N = 2;
    mp.U = 0.5;
    mp.Kc = 0.2;
    FockBasis basis(2, Sector::Full);
    Matrix H0 = dense(build_h0(basis, mp));
    Matrix Hc = dense(build_hc(basis, mp));
    Matrix X = dense(build_x_operator(basis));
    CHECK((H0 * X - X * H0).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((Hc * X - X * Hc).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("mirror operator squares to identity and commutes with H") {
    ModelParams mp;
    mp.N = 3;
    mp.U = 0.4;
    mp.Kc = 0.15;
    FockBasis basis(3, Sector::Full);
    const int D = basis.size();
    Matrix M = Matrix::Zero(D, D);
    for (int i = 0; i < D; ++i)
        M(basis.full_index_of(mirror(basis.representative(i))), i) = 1.0;
    Matrix H = dense(build_h0(basis, mp)) + dense(build_hc(basis, mp));
    CHECK((M * M - Matrix::Identity(D, D)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((M * H - H * M).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sector spectra partition the full spectrum") {
    ModelParams mp;
    mp.N = 4;
    mp.U = 0.37;
    mp.Kc = 0.21;
    auto spectrum = [&](Sector s) {
        FockBasis b(mp.N, s);
        Matrix H = dense(build_h0(b, mp)) + dense(build_hc(b, mp));
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        return Vector(es.eigenvalues());
    };
    Vector full = spectrum(Sector::Full);
    Vector anti = spectrum(Sector::Antisymmetric);
    Vector sym = spectrum(Sector::Symmetric);
    std::vector<double> merged(anti.data(), anti.data() + anti.size());
    merged.insert(merged.end(), sym.data(), sym.data() + sym.size());
    std::sort(merged.begin(), merged.end());
    REQUIRE(static_cast<int>(merged.size()) == full.size());
    for (int i = 0; i < full.size(); ++i)
        CHECK(full(i) == doctest::Approx(merged[static_cast<std::size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("classical energy closed forms") {
    ModelParams mp;
    mp.N = 12;
    mp.U = 0.4;
    mp.K = 1.0;
    mp.Kc = 0.1;
    ClassicalPoint a = ClassicalPoint::from_occupations({12, 0, 0, 0}, {0.3, 0, 0, 0});
    CHECK(classical_energy(a, mp) == doctest::Approx(0.5 * mp.U * 144.0));

    ModelParams mp2 = mp;
    mp2.Kc = 0.0;
    ClassicalPoint b =
        ClassicalPoint::from_occupations({0, 6, 6, 0}, {0, 1.1, 1.1, 0});
    CHECK(classical_energy(b, mp2) ==
          doctest::Approx(0.5 * mp2.U * 72.0 - mp2.K * 6.0));
}

TEST_CASE("coherent state expectation matches the classical energy") {
    // product coherent state projected on the N-particle sector; the scaled
    // mismatch shrinks like 1/N
    auto scaled_gap = [](int N) {
        ModelParams mp = ModelParams::from_u(N, 6.3, 1.0, 0.1);
        Rng rng(17);
        ClassicalPoint pt = random_point(rng, N);
        std::array<double, 4> nbar{}, phi{};
        for (int j = 0; j < 4; ++j) {
            nbar[static_cast<std::size_t>(j)] = pt.occupation(j);
            phi[static_cast<std::size_t>(j)] = pt.phase(j);
        }
        FockBasis basis(N, Sector::Full);
        Vector re(basis.size()), im(basis.size());
        for (int i = 0; i < basis.size(); ++i) {
            const FockState& s = basis.representative(i);
            double logmag = 0.0, arg = 0.0;
            for (int j = 0; j < 4; ++j) {
                logmag +=
                    0.5 * s[j] * std::log(std::max(nbar[static_cast<std::size_t>(j)], 1e-300));
                arg += s[j] * phi[static_cast<std::size_t>(j)];
                logmag -= 0.5 * std::lgamma(double(s[j]) + 1.0);
            }
            re(i) = std::exp(logmag) * std::cos(arg);
            im(i) = std::exp(logmag) * std::sin(arg);
        }
        const double norm = std::sqrt(re.squaredNorm() + im.squaredNorm());
        re /= norm;
        im /= norm;
        SparseMatrix H0 = build_h0(basis, mp);
        const double expect = re.dot(H0 * re) + im.dot(H0 * im);
        const double classical = classical_energy(pt, mp, HamiltonianPart::H0);
        return std::abs(expect - classical) / mp.energy_scale();
    };
    const double g40 = scaled_gap(40);
    CHECK(g40 < 0.1);
    CHECK(g40 < scaled_gap(20));  // shrinks with N
}

TEST_CASE("equations of motion match finite differences") {
    ModelParams mp = ModelParams::from_u(24, 6.3, 1.0, 0.1);
    Rng rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        ClassicalPoint pt = random_point(rng, mp.N);
        const auto vel = equations_of_motion(pt, mp);
        const double h = 1e-6 * mp.N;
        for (int c = 0; c < 8; ++c) {
            ClassicalPoint plus = pt, minus = pt;
            plus.z[static_cast<std::size_t>(c)] += h;
            minus.z[static_cast<std::size_t>(c)] -= h;
            const double grad =
                (classical_energy(plus, mp) - classical_energy(minus, mp)) / (2 * h);
            // dq/dt = +dH/dp, dp/dt = -dH/dq
            const double expected = c < 4 ? -vel[static_cast<std::size_t>(c) + 4]
                                          : vel[static_cast<std::size_t>(c) - 4];
            const double scale = std::max(std::abs(grad), 1e-6 * mp.N);
            worst = std::max(worst, std::abs(grad - expected) / scale);
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("flow conserves total occupation and is stationary when decoupled") {
    ModelParams mp;
    mp.N = 9;
    mp.U = 0.0;
    mp.K = 0.0;
    mp.Kc = 0.0;
    ClassicalPoint pt = ClassicalPoint::from_occupations({0, 9, 0, 0}, {0, 0.4, 0, 0});
    for (double v : equations_of_motion(pt, mp)) CHECK(v == 0.0);

    ModelParams mp2 = ModelParams::from_u(9, 6.3, 1.0, 0.1);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        ClassicalPoint p = random_point(rng, 9);
        const auto vel = equations_of_motion(p, mp2);
        double dn = 0.0;
        for (int j = 0; j < 4; ++j)
            dn += p.q(j) * vel[static_cast<std::size_t>(j)] +
                  p.p(j) * vel[static_cast<std::size_t>(j) + 4];
        CHECK(std::abs(dn) < 1e-12 * mp2.N);
    }
}

TEST_CASE("parameter derivations and validation") {
    ModelParams mp = ModelParams::from_u(60, 6.3, 1.0, 0.1);
    CHECK(mp.u() == doctest::Approx(6.3));
    CHECK(mp.k() == doctest::Approx(0.1));
    CHECK(mp.U == doctest::Approx(0.105));
    ModelParams bad;
    bad.N = 0;
    CHECK_THROWS(bad.validate());
    bad.N = 2;
    bad.K = 0.0;
    CHECK_THROWS(bad.validate());
}
