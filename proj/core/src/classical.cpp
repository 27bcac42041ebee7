#include "tmbh/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/numeric/odeint.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tmbh/rng.hpp"
#include "tmbh/timegrid.hpp"

namespace tmbh {

namespace ode = boost::numeric::odeint;
using State = std::array<double, 8>;

namespace {

struct Flow {
    const ModelParams* params;
    void operator()(const State& z, State& dzdt, double) const {
        equations_of_motion(z, dzdt, *params);
    }
};

auto make_stepper(const IntegratorOptions& opt) {
    return ode::make_controlled<ode::runge_kutta_fehlberg78<State>>(opt.abs_tol,
                                                                    opt.rel_tol);
}

}  // namespace

void integrate_sampled(ClassicalPoint& pt, const ModelParams& params,
                       double t_end, double dt, const IntegratorOptions& opt,
                       const std::function<void(double, const ClassicalPoint&)>& observer) {
    if (!(dt > 0.0) || !(t_end > 0.0))
        throw std::invalid_argument("integrate_sampled: bad time span");
    Flow flow{&params};
    try {
        ode::integrate_const(make_stepper(opt), flow, pt.z, 0.0, t_end, dt,
                             [&](const State& z, double t) {
                                 ClassicalPoint p;
                                 p.z = z;
                                 observer(t, p);
                             });
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("integrate_sampled: stepper failed (") +
                                 e.what() + ") near n=" + std::to_string(pt.total()));
    }
}

void integrate_times(ClassicalPoint& pt, const ModelParams& params,
                     std::span<const double> times, const IntegratorOptions& opt,
                     const std::function<void(double, const ClassicalPoint&)>& observer) {
    if (times.empty()) return;
    Flow flow{&params};
    std::vector<double> ts(times.begin(), times.end());
    try {
        ode::integrate_times(make_stepper(opt), flow, pt.z, ts.begin(), ts.end(),
                             std::min(0.1, ts.back() * 0.01 + 1e-6),
                             [&](const State& z, double t) {
                                 ClassicalPoint p;
                                 p.z = z;
                                 observer(t, p);
                             });
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("integrate_times: stepper failed (") +
                                 e.what() + ")");
    }
}

ClassicalPoint integrate_to(ClassicalPoint pt, const ModelParams& params,
                            double t, const IntegratorOptions& opt) {
    if (t == 0.0) return pt;
    const bool reverse = t < 0.0;
    if (reverse)  // H is even in p, so time reversal is momentum inversion
        for (int j = 4; j < 8; ++j) pt.z[j] = -pt.z[j];
    Flow flow{&params};
    try {
        ode::integrate_adaptive(make_stepper(opt), flow, pt.z, 0.0, std::abs(t),
                                std::min(0.1, std::abs(t)));
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("integrate_to: stepper failed (") + e.what() + ")");
    }
    if (reverse)
        for (int j = 4; j < 8; ++j) pt.z[j] = -pt.z[j];
    return pt;
}

int cell_of(const ClassicalPoint& pt, const CellGrid& grid,
            const ModelParams& params, bool* clamped) {
    int x = static_cast<int>(std::lround(pt.trimer_total()));
    x = std::clamp(x, 0, grid.particles);
    bool adjusted = false;
    if (grid.block(x).levels.size() == 0) {
        // sectors may leave blocks empty (antisymmetric x=0); use the nearest
        int best = -1;
        for (int d = 1; d <= grid.particles && best < 0; ++d) {
            if (x - d >= 0 && grid.block(x - d).levels.size() > 0) best = x - d;
            else if (x + d <= grid.particles && grid.block(x + d).levels.size() > 0) best = x + d;
        }
        if (best < 0) throw std::runtime_error("cell_of: grid has no cells");
        x = best;
        adjusted = true;
    }
    bool edge = false;
    const double eps = classical_energy_scaled(pt, params, HamiltonianPart::H0);
    const int r = grid.locate(x, eps, &edge);
    if (clamped) *clamped = edge || adjusted;
    return r;
}

Cloud sample_cell(int r0, const CellGrid& grid, const ModelParams& params,
                  int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_cell: count must be >= 1");
    const auto [x0, level] = grid.cell_coords(r0);
    const double two_pi = 2.0 * std::numbers::pi;
    Cloud cloud;
    cloud.cell = r0;
    cloud.seed = seed;
    cloud.points.reserve(static_cast<std::size_t>(count));

    Rng rng(derive_seed(seed, 0x5ce11, static_cast<std::uint64_t>(r0)));
    long proposals = 0;
    while (static_cast<int>(cloud.points.size()) < count) {
        ++proposals;
        const auto w = rng.simplex3();
        std::array<double, 4> n{static_cast<double>(params.N - x0), w[0] * x0,
                                w[1] * x0, w[2] * x0};
        std::array<double, 4> phi{rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi),
                                  rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi)};
        ClassicalPoint pt = ClassicalPoint::from_occupations(n, phi);
        if (cell_of(pt, grid, params) == r0) cloud.points.push_back(pt);
        if (proposals % 50000 == 0) {
            const double rate = static_cast<double>(cloud.points.size()) / proposals;
            if (proposals >= 100000 && rate < 1e-4)
                throw std::runtime_error(
                    "sample_cell: acceptance " + std::to_string(rate) +
                    " below 1e-4; cell bin too thin (block levels: " +
                    std::to_string(grid.block(x0).levels.size()) + ")");
        }
    }
    cloud.acceptance = static_cast<double>(count) / static_cast<double>(proposals);
    return cloud;
}

// ---------------------------------------------------------------------------
// Exploration

ExplorationSeries classical_exploration(int r0, const CellGrid& grid,
                                        const ModelParams& params,
                                        double horizon, double dt, int ensemble,
                                        std::uint64_t seed,
                                        const IntegratorOptions& opt,
                                        std::span<const double> output_times,
                                        double dt_tolerance) {
    if (!(horizon > dt) || ensemble < 1)
        throw std::invalid_argument("classical_exploration: bad arguments");
    std::vector<double> grid_times;
    if (output_times.empty()) {
        grid_times = log_time_grid(std::max(dt, horizon * 1e-4), horizon, 200, 4);
    } else {
        grid_times.assign(output_times.begin(), output_times.end());
        if (grid_times.back() < horizon) grid_times.push_back(horizon);
    }
    const int n_out = static_cast<int>(grid_times.size());
    const int D = grid.size();

    Cloud starts = sample_cell(r0, grid, params, ensemble, derive_seed(seed, 0xC10));

    std::vector<double> rows(static_cast<std::size_t>(ensemble) * n_out, 0.0);
    std::vector<double> horizon_fine(static_cast<std::size_t>(ensemble), 0.0);
    std::vector<double> horizon_coarse(static_cast<std::size_t>(ensemble), 0.0);
    std::vector<long> clamp_counts(static_cast<std::size_t>(ensemble), 0);
    long total_samples = 0;

#ifdef _OPENMP
#pragma omp parallel
#endif
    {
        std::vector<std::int32_t> fine(static_cast<std::size_t>(D));
        std::vector<std::int32_t> coarse(static_cast<std::size_t>(D));
#ifdef _OPENMP
#pragma omp for schedule(dynamic)
#endif
        for (int traj = 0; traj < ensemble; ++traj) {
            std::fill(fine.begin(), fine.end(), 0);
            std::fill(coarse.begin(), coarse.end(), 0);
            double fine_sq = 0.0, coarse_sq = 0.0;
            long fine_n = 0, coarse_n = 0, sample_idx = 0, clamps = 0;
            int next_out = 0;
            double* row = rows.data() + static_cast<std::size_t>(traj) * n_out;

            ClassicalPoint pt = starts.points[static_cast<std::size_t>(traj)];
            integrate_sampled(
                pt, params, horizon, 0.5 * dt, opt,
                [&](double t, const ClassicalPoint& p) {
                    bool clamped = false;
                    const int r = cell_of(p, grid, params, &clamped);
                    if (clamped) ++clamps;
                    // samples at even indices form the requested-dt series
                    auto& cf = fine[static_cast<std::size_t>(r)];
                    fine_sq += 2.0 * cf + 1.0;
                    ++cf;
                    ++fine_n;
                    if (sample_idx % 2 == 0) {
                        auto& cc = coarse[static_cast<std::size_t>(r)];
                        coarse_sq += 2.0 * cc + 1.0;
                        ++cc;
                        ++coarse_n;
                        while (next_out < n_out && grid_times[next_out] <= t + 1e-9) {
                            row[next_out] = participation_counts_raw(coarse_sq, coarse_n);
                            ++next_out;
                        }
                    }
                    ++sample_idx;
                });
            while (next_out < n_out) {
                row[next_out] = participation_counts_raw(coarse_sq, coarse_n);
                ++next_out;
            }
            horizon_fine[static_cast<std::size_t>(traj)] =
                participation_counts_raw(fine_sq, fine_n);
            horizon_coarse[static_cast<std::size_t>(traj)] =
                participation_counts_raw(coarse_sq, coarse_n);
            clamp_counts[static_cast<std::size_t>(traj)] = clamps;
        }
    }

    ExplorationSeries series;
    series.times = grid_times;
    series.values.assign(static_cast<std::size_t>(n_out), 0.0);
    for (int traj = 0; traj < ensemble; ++traj) {
        const double* row = rows.data() + static_cast<std::size_t>(traj) * n_out;
        for (int j = 0; j < n_out; ++j) series.values[static_cast<std::size_t>(j)] += row[j];
        series.clamped_samples += clamp_counts[static_cast<std::size_t>(traj)];
        total_samples += static_cast<long>(std::floor(horizon / (0.5 * dt))) + 1;
    }
    for (double& v : series.values) v /= ensemble;
    series.dt = dt;
    series.ensemble = ensemble;
    series.total_samples = total_samples;

    double mean_fine = 0.0, mean_coarse = 0.0;
    for (int traj = 0; traj < ensemble; ++traj) {
        mean_fine += horizon_fine[static_cast<std::size_t>(traj)];
        mean_coarse += horizon_coarse[static_cast<std::size_t>(traj)];
    }
    mean_fine /= ensemble;
    mean_coarse /= ensemble;
    series.dt_sensitivity = std::abs(mean_fine - mean_coarse) / mean_coarse;
    if (series.dt_sensitivity > dt_tolerance)
        throw std::runtime_error(
            "classical_exploration: Omega at the horizon moves by " +
            std::to_string(100.0 * series.dt_sensitivity) +
            "% under dt halving; reduce dt");

    series.saturation = tail_average(series.times, series.values, 0.75);
    // slope criterion: compare the trailing average against the mid-run one
    const double mid = tail_average(series.times, series.values, 0.45) * 1.0;
    const double late = tail_average(series.times, series.values, 0.85);
    series.saturated = std::abs(late - mid) / std::max(late, 1.0) < 0.05;
    return series;
}

// ---------------------------------------------------------------------------
// Semiclassical spreading

SemiclassicalRun semiclassical_spreading(const Cloud& cloud, const CellGrid& grid,
                                         const ModelParams& params,
                                         std::span<const double> times,
                                         const IntegratorOptions& opt,
                                         double tail_fraction) {
    if (cloud.points.empty())
        throw std::invalid_argument("semiclassical_spreading: empty cloud");
    if (times.empty())
        throw std::invalid_argument("semiclassical_spreading: no output times");
    const int n_t = static_cast<int>(times.size());
    const int D = grid.size();
    const long M = static_cast<long>(cloud.points.size());

    std::vector<std::int64_t> counts(static_cast<std::size_t>(n_t) * D, 0);
    long clamped_total = 0;

#ifdef _OPENMP
#pragma omp parallel
#endif
    {
        std::vector<std::int64_t> local(static_cast<std::size_t>(n_t) * D, 0);
        long local_clamps = 0;
#ifdef _OPENMP
#pragma omp for schedule(dynamic, 16)
#endif
        for (long i = 0; i < M; ++i) {
            ClassicalPoint pt = cloud.points[static_cast<std::size_t>(i)];
            int ti = 0;
            integrate_times(pt, params, times, opt,
                            [&](double, const ClassicalPoint& p) {
                                bool clamped = false;
                                const int r = cell_of(p, grid, params, &clamped);
                                if (clamped) ++local_clamps;
                                ++local[static_cast<std::size_t>(ti) * D + r];
                                ++ti;
                            });
        }
#ifdef _OPENMP
#pragma omp critical
#endif
        {
            for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += local[k];
            clamped_total += local_clamps;
        }
    }

    SemiclassicalRun run;
    run.clamped_samples = clamped_total;
    run.snapshots.reserve(static_cast<std::size_t>(n_t));
    const int nx = static_cast<int>(grid.blocks.size());
    std::vector<std::int64_t> xcounts(static_cast<std::size_t>(nx));
    SpreadingSeries& s = run.series;
    for (int ti = 0; ti < n_t; ++ti) {
        std::span<const std::int64_t> c(counts.data() + static_cast<std::size_t>(ti) * D,
                                        static_cast<std::size_t>(D));
        CellDistribution dist;
        dist.time = times[ti];
        dist.source = Provenance::Semiclassical;
        dist.p.resize(D);
        for (int r = 0; r < D; ++r) dist.p(r) = static_cast<double>(c[r]) / M;
        s.times.push_back(times[ti]);
        s.cells.push_back(participation_counts(c, M));
        std::fill(xcounts.begin(), xcounts.end(), 0);
        for (const auto& b : grid.blocks)
            for (int k = 0; k < b.levels.size(); ++k)
                xcounts[static_cast<std::size_t>(b.x)] += c[static_cast<std::size_t>(b.offset + k)];
        s.x_cells.push_back(participation_counts(xcounts, M));
        run.snapshots.push_back(std::move(dist));
    }
    saturation_average(s, 0.0, tail_fraction);

    // tail-averaged saturation distribution
    run.saturation_distribution = Vector::Zero(D);
    const double t0 = tail_fraction * times.back();
    double wsum = 0.0;
    for (int ti = 1; ti < n_t; ++ti) {
        if (times[ti] <= t0) continue;
        const double w = times[ti] - std::max(times[ti - 1], t0);
        run.saturation_distribution += w * run.snapshots[static_cast<std::size_t>(ti)].p;
        wsum += w;
    }
    if (wsum > 0.0) run.saturation_distribution /= wsum;
    return run;
}

// ---------------------------------------------------------------------------
// Microcanonical sampling

namespace {

struct SphereWalk {
    Rng rng;
    State z{};
    double radius;
    double step;
    const ModelParams* params;
    double eps = 0.0;  // scaled energy of z

    SphereWalk(std::uint64_t seed, const ModelParams& p)
        : rng(seed), radius(std::sqrt(2.0 * p.N)), step(0.3), params(&p) {
        double norm2 = 0.0;
        for (auto& v : z) {
            v = rng.gaussian();
            norm2 += v * v;
        }
        const double f = radius / std::sqrt(norm2);
        for (auto& v : z) v *= f;
        eps = energy();
    }

    double energy() const {
        ClassicalPoint pt;
        pt.z = z;
        return classical_energy_scaled(pt, *params);
    }

    // one Metropolis step with Gaussian kernel of width sigma about target
    bool try_step(double target, double sigma) {
        State zp;
        double norm2 = 0.0;
        for (int j = 0; j < 8; ++j) {
            zp[j] = z[j] + step * rng.gaussian();
            norm2 += zp[j] * zp[j];
        }
        const double f = radius / std::sqrt(norm2);
        for (auto& v : zp) v *= f;
        ClassicalPoint pt;
        pt.z = zp;
        const double ep = classical_energy_scaled(pt, *params);
        const double d0 = (eps - target) / sigma;
        const double d1 = (ep - target) / sigma;
        const double log_ratio = 0.5 * (d0 * d0 - d1 * d1);
        if (log_ratio >= 0.0 || rng.uniform() < std::exp(log_ratio)) {
            z = zp;
            eps = ep;
            return true;
        }
        return false;
    }
};

}  // namespace

Microcanonical microcanonical_volume(double eps_target, const CellGrid& grid,
                                     const ModelParams& params, int samples,
                                     std::uint64_t seed, double kernel_width_eps,
                                     const MicrocanonicalOptions& opt) {
    if (samples < 100)
        throw std::invalid_argument("microcanonical_volume: too few samples");
    if (!(kernel_width_eps > 0.0))
        throw std::invalid_argument("microcanonical_volume: kernel width must be > 0");
    const int chains = std::max(1, opt.chains);
    const int per_chain = samples / chains;
    const int D = grid.size();

    std::vector<std::vector<std::int64_t>> chain_counts(
        static_cast<std::size_t>(chains), std::vector<std::int64_t>(static_cast<std::size_t>(D), 0));
    std::vector<double> chain_volumes(static_cast<std::size_t>(chains), 0.0);
    std::vector<double> chain_acc(static_cast<std::size_t>(chains), 0.0);

    IntegratorOptions flow_opt;
    flow_opt.rel_tol = opt.flow_tol;
    flow_opt.abs_tol = opt.flow_tol;

#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1)
#endif
    for (int c = 0; c < chains; ++c) {
        SphereWalk walk(derive_seed(seed, 0x3c, static_cast<std::uint64_t>(c)), params);
        auto flow_move = [&]() {
            ClassicalPoint pt;
            pt.z = walk.z;
            const double tau = walk.rng.uniform(opt.flow_time_lo, opt.flow_time_hi);
            walk.z = integrate_to(pt, params, tau, flow_opt).z;
            walk.eps = walk.energy();
        };
        // anneal the kernel down to the target width
        double sigma = std::max(1.0, std::abs(params.u()));
        while (sigma > kernel_width_eps) {
            for (int k = 0; k < 300; ++k) walk.try_step(eps_target, sigma);
            sigma *= 0.65;
        }
        // burn in with step-size adaptation in fixed blocks
        long acc = 0;
        for (int k = 0; k < opt.burn_in; ++k) {
            if (walk.try_step(eps_target, kernel_width_eps)) ++acc;
            if ((k + 1) % 200 == 0) {
                const double rate = static_cast<double>(acc) / 200.0;
                if (rate < 0.2)
                    walk.step *= 0.8;
                else if (rate > 0.5)
                    walk.step *= 1.25;
                acc = 0;
                flow_move();
            }
        }
        long accepted = 0, steps = 0;
        auto& counts = chain_counts[static_cast<std::size_t>(c)];
        for (int k = 0; k < per_chain; ++k) {
            for (int th = 0; th < opt.thinning; ++th) {
                if (walk.try_step(eps_target, kernel_width_eps)) ++accepted;
                ++steps;
            }
            flow_move();
            ClassicalPoint pt;
            pt.z = walk.z;
            ++counts[static_cast<std::size_t>(cell_of(pt, grid, params))];
        }
        chain_volumes[static_cast<std::size_t>(c)] =
            participation_counts(counts, per_chain);
        chain_acc[static_cast<std::size_t>(c)] =
            static_cast<double>(accepted) / static_cast<double>(steps);
    }

    double vmin = chain_volumes[0], vmax = chain_volumes[0], acc = 0.0;
    for (int c = 0; c < chains; ++c) {
        vmin = std::min(vmin, chain_volumes[static_cast<std::size_t>(c)]);
        vmax = std::max(vmax, chain_volumes[static_cast<std::size_t>(c)]);
        acc += chain_acc[static_cast<std::size_t>(c)];
    }
    acc /= chains;
    if (acc < 0.005)
        throw std::runtime_error("microcanonical_volume: acceptance collapsed (" +
                                 std::to_string(acc) + ")");
    if (chains > 1 && (vmax - vmin) / vmax > opt.chain_tolerance)
        throw std::runtime_error(
            "microcanonical_volume: chains disagree on the surface volume (" +
            std::to_string(vmin) + " vs " + std::to_string(vmax) +
            "); chain not mixing");

    Microcanonical mc;
    mc.eps = eps_target;
    mc.acceptance = acc;
    std::vector<std::int64_t> merged(static_cast<std::size_t>(D), 0);
    for (int c = 0; c < chains; ++c)
        for (int r = 0; r < D; ++r)
            merged[static_cast<std::size_t>(r)] += chain_counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
    mc.samples = static_cast<long>(per_chain) * chains;
    mc.density.resize(D);
    for (int r = 0; r < D; ++r)
        mc.density(r) = static_cast<double>(merged[static_cast<std::size_t>(r)]) / mc.samples;
    mc.surface_volume = participation_counts(merged, mc.samples);
    return mc;
}

// ---------------------------------------------------------------------------
// Shell geometry

double shell_width_from_histogram(double bin_width,
                                  std::span<const double> fractions) {
    double f2 = 0.0;
    for (double f : fractions) f2 += f * f;
    if (!(f2 > 0.0))
        throw std::invalid_argument("shell_width_from_histogram: empty histogram");
    return bin_width / f2;
}

namespace {

// unbiased sum of squared bin probabilities from iid counts
double sum_sq_fractions_unbiased(std::span<const std::int64_t> counts, long m) {
    double c2 = 0.0;
    for (auto c : counts) c2 += static_cast<double>(c) * c;
    return (c2 - static_cast<double>(m)) / (static_cast<double>(m) * (m - 1.0));
}

}  // namespace

ShellGeometry shell_geometry(const Cloud& cloud, const CellGrid& grid,
                             const ModelParams& params, double level_spacing,
                             const Microcanonical* precomputed,
                             std::uint64_t seed, int microcanonical_samples,
                             const MicrocanonicalOptions& mc_opt) {
    if (cloud.points.size() < 100)
        throw std::invalid_argument("shell_geometry: cloud too small");
    if (!(level_spacing > 0.0))
        throw std::invalid_argument("shell_geometry: level spacing must be > 0");
    const double scale = params.energy_scale();
    const long M = static_cast<long>(cloud.points.size());

    std::vector<double> eps(static_cast<std::size_t>(M));
    double mean = 0.0;
    for (long i = 0; i < M; ++i) {
        eps[static_cast<std::size_t>(i)] =
            classical_energy_scaled(cloud.points[static_cast<std::size_t>(i)], params);
        mean += eps[static_cast<std::size_t>(i)];
    }
    mean /= static_cast<double>(M);
    const auto [min_it, max_it] = std::minmax_element(eps.begin(), eps.end());
    const double lo = *min_it, hi = *max_it;

    // Refine the bin width until the participation width stabilizes under
    // doubling. One level spacing is the first candidate; narrow shells
    // (coupling vanishes at x -> N) need finer bins, so the search also
    // walks downward until the width sits on its plateau.
    const double w0 = level_spacing / scale;
    auto histogram = [&](double width, std::vector<std::int64_t>& counts, double& blo) {
        blo = lo - 0.5 * width;
        const int nb = static_cast<int>(std::floor((hi - blo) / width)) + 1;
        counts.assign(static_cast<std::size_t>(nb), 0);
        for (double e : eps) {
            int b = static_cast<int>((e - blo) / width);
            b = std::clamp(b, 0, nb - 1);
            ++counts[static_cast<std::size_t>(b)];
        }
    };
    auto width_at = [&](double w, std::vector<std::int64_t>* keep, double* keep_lo) {
        std::vector<std::int64_t> c;
        double blo;
        histogram(w, c, blo);
        const double s2 = sum_sq_fractions_unbiased(c, M);
        if (!(s2 > 0.0)) return -1.0;
        long occupied = 0;
        for (auto v : c)
            if (v > 0) ++occupied;
        if (static_cast<double>(M) / std::max(1L, occupied) < 6.0) return -1.0;
        if (keep) *keep = std::move(c);
        if (keep_lo) *keep_lo = blo;
        return w / s2;
    };
    double chosen_width = -1.0, chosen_delta = 0.0, sensitivity = 1.0;
    std::vector<std::int64_t> chosen_counts;
    double chosen_lo = 0.0;
    for (int k = -12; k <= 8; ++k) {
        const double w = w0 * std::pow(2.0, k);
        std::vector<std::int64_t> c1;
        double lo1;
        const double d1 = width_at(w, &c1, &lo1);
        if (d1 < 0.0) continue;
        const double d2 = width_at(2.0 * w, nullptr, nullptr);
        if (d2 < 0.0) continue;
        sensitivity = std::abs(d2 - d1) / d1;
        if (sensitivity < 0.05) {
            chosen_width = w;
            chosen_delta = d1;
            chosen_counts = std::move(c1);
            chosen_lo = lo1;
            break;
        }
    }
    if (chosen_width < 0.0)
        throw std::runtime_error(
            "shell_geometry: Delta_E bin sensitivity stuck above 5% (last " +
            std::to_string(100.0 * sensitivity) + "%); refine bins or enlarge cloud");

    ShellGeometry shell;
    shell.cell = cloud.cell;
    shell.bin_lo = chosen_lo;
    shell.bin_width = chosen_width;
    shell.fractions.resize(chosen_counts.size());
    for (std::size_t b = 0; b < chosen_counts.size(); ++b)
        shell.fractions[b] = static_cast<double>(chosen_counts[b]) / static_cast<double>(M);
    shell.center = mean;
    shell.level_spacing = level_spacing;
    shell.shell_width = chosen_delta * scale;
    shell.shell_time = 2.0 * std::numbers::pi / shell.shell_width;
    shell.shell_states = std::max(1.0, shell.shell_width / level_spacing);

    if (precomputed) {
        shell.surface_volume = precomputed->surface_volume;
    } else {
        // the kernel never needs to resolve below the cell quantization in eps
        const double kernel = std::max(mc_opt.sigma_over_width * chosen_delta,
                                       level_spacing / scale);
        Microcanonical mc = microcanonical_volume(mean, grid, params,
                                                  microcanonical_samples, seed,
                                                  kernel, mc_opt);
        shell.surface_volume = mc.surface_volume;
    }
    shell.shell_volume = shell_volume(shell.shell_states, shell.surface_volume);
    return shell;
}

std::vector<double> semiclassical_exploration(const ShellGeometry& shell,
                                              std::span<const double> times) {
    if (!(shell.shell_time > 0.0))
        throw std::invalid_argument("semiclassical_exploration: t_E must be > 0");
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(t / shell.shell_time);
    return out;
}

std::vector<double> semiclassical_exploration_full(const ShellGeometry& shell,
                                                   std::span<const double> times) {
    if (shell.fractions.empty())
        throw std::invalid_argument("semiclassical_exploration_full: empty shell histogram");
    const double horizon = times.empty() ? 0.0 : *std::max_element(times.begin(), times.end());
    if (!(horizon > 0.0)) return std::vector<double>(times.size(), 1.0);
    const double step = shell.shell_time / 12.0;
    const int n = static_cast<int>(std::ceil(horizon / step)) + 2;
    // scale factor recovered from bare width = (scaled width) * scale
    const double scale = shell.shell_width /
                         shell_width_from_histogram(shell.bin_width, shell.fractions);
    std::vector<double> surv(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double t = step * k;
        double re = 0.0, im = 0.0;
        for (std::size_t b = 0; b < shell.fractions.size(); ++b) {
            const double e = (shell.bin_lo + (static_cast<double>(b) + 0.5) * shell.bin_width) * scale;
            re += shell.fractions[b] * std::cos(e * t);
            im -= shell.fractions[b] * std::sin(e * t);
        }
        surv[static_cast<std::size_t>(k)] = re * re + im * im;
    }
    return hilbert_exploration(surv, step, shell.shell_time, times);
}

}  // namespace tmbh
