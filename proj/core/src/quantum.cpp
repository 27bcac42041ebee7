#include "tmbh/quantum.hpp"

#include <cmath>
#include <stdexcept>

#include "tmbh/timegrid.hpp"

namespace tmbh {

std::vector<CellDistribution> propagate(const CellOverlap& overlap, int r0,
                                        std::span<const double> times) {
    const EigenSystem& eig = overlap.eigensystem();
    const int D = eig.dimension();
    if (r0 < 0 || r0 >= overlap.cells())
        throw std::out_of_range("propagate: r0 out of range");
    const Vector w0 = overlap.row(r0);  // <E_a|r0>

    const int T = static_cast<int>(times.size());
    Matrix B(D, 2 * T);  // [cos block | sin block], phases on bare energies
    for (int j = 0; j < T; ++j) {
        const double t = times[j];
        for (int a = 0; a < D; ++a) {
            const double th = eig.values(a) * eig.energy_scale * t;
            B(a, j) = w0(a) * std::cos(th);
            B(a, T + j) = -w0(a) * std::sin(th);
        }
    }
    const Matrix A = overlap.apply(B);

    std::vector<CellDistribution> out(static_cast<std::size_t>(T));
    for (int j = 0; j < T; ++j) {
        CellDistribution& d = out[static_cast<std::size_t>(j)];
        d.time = times[j];
        d.source = Provenance::Quantum;
        d.p = A.col(j).array().square() + A.col(T + j).array().square();
        const double total = d.p.sum();
        if (std::abs(total - 1.0) > 1e-6)
            throw std::runtime_error(
                "propagate: distribution normalization off by " +
                std::to_string(total - 1.0) + " (eigensystem corruption?)");
        d.p /= total;
    }
    return out;
}

Vector saturation_profile(const CellOverlap& overlap, int r0) {
    const Vector p0 = overlap.row(r0).array().square();
    return overlap.apply_squared(p0);
}

SpreadingSeries spreading_volumes(const std::vector<CellDistribution>& dists,
                                  const CellGrid& grid) {
    SpreadingSeries s;
    s.times.reserve(dists.size());
    s.cells.reserve(dists.size());
    s.x_cells.reserve(dists.size());
    const int nx = static_cast<int>(grid.blocks.size());
    Vector px(nx);
    for (const auto& d : dists) {
        if (d.p.size() != grid.size())
            throw std::invalid_argument("spreading_volumes: distribution/grid size mismatch");
        s.times.push_back(d.time);
        s.cells.push_back(1.0 / d.p.array().square().sum());
        px.setZero();
        for (const auto& b : grid.blocks)
            if (b.levels.size() > 0)
                px(b.x) = d.p.segment(b.offset, b.levels.size()).sum();
        s.x_cells.push_back(1.0 / px.array().square().sum());
    }
    return s;
}

void saturation_average(SpreadingSeries& series, double heisenberg_time,
                        double tail_fraction) {
    if (series.times.size() < 2)
        throw std::invalid_argument("saturation_average: series too short");
    series.tail_fraction = tail_fraction;
    series.cells_sat = tail_average(series.times, series.cells, tail_fraction);
    series.x_sat = tail_average(series.times, series.x_cells, tail_fraction);
    series.horizon_warning =
        heisenberg_time > 0.0 && series.times.back() < 5.0 * heisenberg_time;
}

std::vector<double> survival_probability(const Vector& weights,
                                         const EigenSystem& eig,
                                         std::span<const double> times) {
    if (weights.size() != eig.dimension())
        throw std::invalid_argument("survival_probability: weight size mismatch");
    std::vector<double> out;
    out.reserve(times.size());
    const double scale = eig.energy_scale;
    for (double t : times) {
        double re = 0.0, im = 0.0;
        for (int a = 0; a < eig.dimension(); ++a) {
            const double th = eig.values(a) * scale * t;
            re += weights(a) * std::cos(th);
            im -= weights(a) * std::sin(th);
        }
        out.push_back(re * re + im * im);
    }
    return out;
}

std::vector<double> hilbert_exploration(std::span<const double> survival,
                                        double step, double t_E,
                                        std::span<const double> query_times) {
    if (survival.size() < 4 || !(step > 0.0))
        throw std::invalid_argument("hilbert_exploration: bad survival grid");
    if (t_E > 0.0 && step > t_E / 10.0)
        throw std::runtime_error("hilbert_exploration: survival grid undersampled (step " +
                                 std::to_string(step) + " > t_E/10)");
    const std::size_t n = survival.size();
    // cumulative trapezoid integrals of P and tau*P on the uniform grid
    std::vector<double> I0(n, 0.0), I1(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) {
        const double ta = step * (k - 1), tb = step * k;
        I0[k] = I0[k - 1] + 0.5 * (survival[k - 1] + survival[k]) * step;
        I1[k] = I1[k - 1] + 0.5 * (ta * survival[k - 1] + tb * survival[k]) * step;
    }
    const double horizon = step * static_cast<double>(n - 1);

    std::vector<double> out;
    out.reserve(query_times.size());
    for (double t : query_times) {
        if (t <= 0.0) {
            out.push_back(1.0);
            continue;
        }
        if (t > horizon * (1.0 + 1e-12))
            throw std::runtime_error("hilbert_exploration: query beyond survival horizon");
        const double fk = std::min(t / step, static_cast<double>(n - 1));
        const std::size_t k = static_cast<std::size_t>(fk);
        const double frac = fk - static_cast<double>(k);
        double i0 = I0[k], i1 = I1[k];
        if (frac > 0.0 && k + 1 < n) {
            const double pa = survival[k];
            const double pb = pa + (survival[k + 1] - pa) * frac;
            const double ta = step * static_cast<double>(k);
            i0 += 0.5 * (pa + pb) * frac * step;
            i1 += 0.5 * (ta * pa + t * pb) * frac * step;
        }
        const double kernel = (2.0 / t) * (i0 - i1 / t);
        out.push_back(kernel > 0.0 ? 1.0 / kernel : 1.0);
    }
    return out;
}

}  // namespace tmbh
