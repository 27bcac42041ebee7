#include "tmbh/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tmbh/timegrid.hpp"

namespace tmbh {

double classical_ergodicity(const ExplorationSeries& exploration,
                            const ShellGeometry& shell) {
    if (!(shell.surface_volume > 0.0))
        throw std::invalid_argument("classical_ergodicity: Omega_E must be > 0");
    return exploration.saturation / shell.surface_volume;
}

double dynamical_localization(const SpreadingSeries& quantum,
                              const SpreadingSeries& semiclassical) {
    if (!(semiclassical.cells_sat > 0.0))
        throw std::invalid_argument("dynamical_localization: semiclassical saturation missing");
    return quantum.cells_sat / semiclassical.cells_sat;
}

Breaktime breaktime(const ExplorationSeries& exploration,
                    const ShellGeometry& shell, const ErgodicConstants& consts) {
    if (exploration.times.size() < 3)
        throw std::invalid_argument("breaktime: exploration series too short");
    if (!(shell.shell_time > 0.0) || !(shell.surface_volume > 0.0))
        throw std::invalid_argument("breaktime: invalid shell geometry");

    const double prefactor = consts.fqm * shell.shell_states / shell.surface_volume;
    const std::vector<double> omega = median3(exploration.values);

    Breaktime bt;
    double prev_diff = -std::numeric_limits<double>::infinity();
    double prev_t = 0.0;
    for (std::size_t i = 0; i < exploration.times.size(); ++i) {
        const double t = exploration.times[i];
        if (!(t > 0.0)) continue;
        const double lhs = t / shell.shell_time;            // N_sc_t
        const double rhs = prefactor * omega[i];            // allowed exploration
        const double diff = std::log(lhs) - std::log(rhs);
        if (diff >= 0.0) {
            bt.found = true;
            if (prev_diff > -std::numeric_limits<double>::infinity() && prev_t > 0.0 &&
                diff > prev_diff) {
                const double f = -prev_diff / (diff - prev_diff);
                bt.t_star = std::exp(std::log(prev_t) + f * (std::log(t) - std::log(prev_t)));
            } else {
                bt.t_star = t;
            }
            break;
        }
        prev_diff = diff;
        prev_t = t;
    }
    {
        const double t = exploration.times.back();
        const double lhs = t / shell.shell_time;
        const double rhs = prefactor * omega.back();
        bt.lhs_over_rhs_at_horizon = lhs / rhs;
    }
    if (!bt.found) {
        if (!exploration.saturated && bt.lhs_over_rhs_at_horizon > 0.8)
            throw std::runtime_error(
                "breaktime: no crossing and the exploration has not saturated "
                "(margin " + std::to_string(bt.lhs_over_rhs_at_horizon) +
                "); run a longer classical horizon");
    }
    return bt;
}

BreaktimeReport predict_localization(const Breaktime& bt,
                                     const SpreadingSeries& semiclassical,
                                     const SpreadingSeries* quantum,
                                     const ErgodicConstants& consts) {
    if (semiclassical.times.empty() || !(semiclassical.cells_sat > 0.0))
        throw std::invalid_argument("predict_localization: semiclassical series incomplete");
    BreaktimeReport rep;
    rep.constants = consts;
    rep.has_breaktime = bt.found;
    rep.spreading_saturation = semiclassical.cells_sat;
    if (bt.found) {
        rep.t_star = bt.t_star;
        if (bt.t_star > semiclassical.times.back() * (1.0 + 1e-9))
            throw std::runtime_error(
                "predict_localization: breaktime " + std::to_string(bt.t_star) +
                " beyond the semiclassical horizon " +
                std::to_string(semiclassical.times.back()));
        const std::vector<double> smooth = median3(semiclassical.cells);
        rep.spreading_at_breaktime =
            interp_loglog(semiclassical.times, smooth, bt.t_star);
        rep.predicted_saturation = consts.fs * rep.spreading_at_breaktime;
        rep.predicted_localization =
            std::min(1.0, rep.predicted_saturation / semiclassical.cells_sat);
    } else {
        rep.predicted_localization = consts.fs;
        rep.predicted_saturation = consts.fs * semiclassical.cells_sat;
        rep.spreading_at_breaktime = semiclassical.cells_sat;
    }
    if (quantum) {
        rep.quantum_saturation = quantum->cells_sat;
        rep.measured_localization = dynamical_localization(*quantum, semiclassical);
    }
    return rep;
}

std::optional<double> crossing_time(const std::function<double(double)>& volume,
                                    double t_E, double t_lo, double t_hi) {
    if (!(t_E > 0.0) || !(t_hi > t_lo) || !(t_lo > 0.0))
        throw std::invalid_argument("crossing_time: bad bracket");
    auto diff = [&](double t) { return t / t_E - volume(t); };
    const int grid_points = 600;
    double prev_t = t_lo, prev_d = diff(t_lo);
    if (prev_d >= 0.0) return t_lo;
    const double la = std::log(t_lo), lb = std::log(t_hi);
    for (int i = 1; i <= grid_points; ++i) {
        const double t = std::exp(la + (lb - la) * i / grid_points);
        const double d = diff(t);
        if (d >= 0.0) {
            double a = prev_t, b = t;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (a + b);
                (diff(m) >= 0.0 ? b : a) = m;
            }
            return 0.5 * (a + b);
        }
        prev_t = t;
        prev_d = d;
    }
    return std::nullopt;
}

DiffusionResult diffusion_reference(int dimension, double coefficient,
                                    double c0, double t_E) {
    if (!(t_E > 0.0) || !(coefficient > 0.0) || c0 < 0.0)
        throw std::invalid_argument("diffusion_reference: non-positive parameters");
    DiffusionResult res;
    if (dimension == 1) {
        res.verdict = DiffusionVerdict::Localized;
        res.t_star = t_E * t_E * coefficient;
    } else if (dimension == 2) {
        // t/t_E = t/ln t  =>  ln t* = t_E
        res.verdict = DiffusionVerdict::Localized;
        res.t_star = t_E < 700.0 ? std::exp(t_E) : std::numeric_limits<double>::max();
    } else if (dimension > 2) {
        res.g = coefficient * t_E;
        if (res.g < 1.0) {
            res.verdict = DiffusionVerdict::Localized;
            res.t_star = c0 * t_E / (1.0 - res.g);
        } else {
            res.verdict = DiffusionVerdict::Delocalized;
        }
    } else {
        throw std::invalid_argument("diffusion_reference: dimension must be >= 1");
    }
    return res;
}

MobilityProfile mobility_sweep(std::vector<BreaktimeReport> reports,
                               double threshold_fraction,
                               const ErgodicConstants& consts) {
    if (reports.size() < 3)
        throw std::invalid_argument("mobility_sweep: need at least 3 swept points");
    std::sort(reports.begin(), reports.end(),
              [](const BreaktimeReport& a, const BreaktimeReport& b) { return a.x0 < b.x0; });
    MobilityProfile prof;
    prof.threshold = threshold_fraction;
    prof.plateau = consts.fs;
    const double cut = threshold_fraction * consts.fs;
    for (std::size_t i = 1; i < reports.size(); ++i) {
        const double a = reports[i - 1].predicted_localization;
        const double b = reports[i].predicted_localization;
        if ((a - cut) * (b - cut) < 0.0) {
            const double f = (cut - a) / (b - a);
            prof.edges.push_back(reports[i - 1].x0 + f * (reports[i].x0 - reports[i - 1].x0));
        }
    }
    prof.reports = std::move(reports);
    return prof;
}

}  // namespace tmbh
