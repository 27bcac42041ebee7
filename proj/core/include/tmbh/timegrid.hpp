#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace tmbh {

// Logarithmic time grid with a short linear prefix starting at t=0. The
// observables of interest vary on log scales, so most points go into the
// log section [t_min, t_max].
inline std::vector<double> log_time_grid(double t_min, double t_max,
                                         int log_points = 400,
                                         int linear_prefix = 8) {
    if (!(t_min > 0.0) || !(t_max > t_min) || log_points < 2)
        throw std::invalid_argument("log_time_grid: bad range");
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(log_points + linear_prefix));
    for (int i = 0; i < linear_prefix; ++i)
        t.push_back(t_min * static_cast<double>(i) / linear_prefix);
    const double a = std::log(t_min), b = std::log(t_max);
    for (int i = 0; i < log_points; ++i)
        t.push_back(std::exp(a + (b - a) * i / (log_points - 1)));
    t.back() = t_max;
    return t;
}

inline std::vector<double> linear_time_grid(double t0, double t1, int points) {
    if (points < 2 || !(t1 > t0))
        throw std::invalid_argument("linear_time_grid: bad range");
    std::vector<double> t(points);
    for (int i = 0; i < points; ++i)
        t[i] = t0 + (t1 - t0) * i / (points - 1);
    return t;
}

// Participation number 1/sum(p^2) of a normalized probability vector.
inline double participation(std::span<const double> p) {
    double s = 0.0;
    for (double v : p) s += v * v;
    return s > 0.0 ? 1.0 / s : 0.0;
}

// Participation from a count histogram of m iid samples, with the finite
// sample bias of sum(p^2) removed: E[sum c^2] = m + m(m-1) sum p^2.
inline double participation_counts(std::span<const std::int64_t> counts,
                                   std::int64_t m) {
    if (m < 2) return 1.0;
    double c2 = 0.0;
    for (std::int64_t c : counts) c2 += static_cast<double>(c) * c;
    const double s = (c2 - static_cast<double>(m)) /
                     (static_cast<double>(m) * (m - 1.0));
    return s > 0.0 ? 1.0 / s : static_cast<double>(m);
}

// Plain (uncorrected) participation of a visit histogram; used for time
// sampled trajectories where the samples are strongly correlated.
inline double participation_counts_raw(double sum_sq_counts, std::int64_t m) {
    if (m <= 0 || sum_sq_counts <= 0.0) return 1.0;
    return static_cast<double>(m) * static_cast<double>(m) / sum_sq_counts;
}

// Time-weighted trapezoid average of y over the trailing window
// [fraction*T, T] of the grid.
inline double tail_average(std::span<const double> t, std::span<const double> y,
                           double fraction = 0.5) {
    if (t.size() != y.size() || t.size() < 2)
        throw std::invalid_argument("tail_average: bad series");
    const double t0 = fraction * t.back();
    double area = 0.0, len = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        double a = std::max(t[i - 1], t0), b = t[i];
        if (b <= a) continue;
        // linear interpolation of y at a
        double ya = y[i - 1];
        if (t[i] > t[i - 1])
            ya = y[i - 1] + (y[i] - y[i - 1]) * (a - t[i - 1]) / (t[i] - t[i - 1]);
        area += 0.5 * (ya + y[i]) * (b - a);
        len += b - a;
    }
    return len > 0.0 ? area / len : y.back();
}

// 3-point running median, end points passed through.
inline std::vector<double> median3(std::span<const double> y) {
    std::vector<double> out(y.begin(), y.end());
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        double a = y[i - 1], b = y[i], c = y[i + 1];
        out[i] = std::max(std::min(a, b), std::min(std::max(a, b), c));
    }
    return out;
}

// Interpolate y(query) with linear interpolation in (log t, log y); falls
// back to linear when values are non-positive. Clamps outside the grid.
double interp_loglog(std::span<const double> t, std::span<const double> y,
                     double query);

// Linear interpolation on an arbitrary ascending grid, clamped at the ends.
double interp_linear(std::span<const double> t, std::span<const double> y,
                     double query);

}  // namespace tmbh
