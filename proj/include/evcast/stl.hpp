#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "evcast/errors.hpp"

namespace evcast {

/// Additive seasonal-trend decomposition by loess (Cleveland et al. 1990).
struct StlDecomposition {
    std::vector<double> trend;
    std::vector<double> seasonal;
    std::vector<double> remainder;
    int period = 7;
    bool periodic_seasonal = true;
};

struct StlOptions {
    int inner = 2;        // inner loop passes per outer pass
    int outer = 1;        // robustness re-weighting passes
    double tol = 0.0;     // early-exit threshold on component change, 0 = run all passes
};

namespace detail {

inline int next_odd(double x) {
    int v = static_cast<int>(std::ceil(x));
    if (v % 2 == 0) ++v;
    return std::max(v, 1);
}

/// Loess estimate at abscissa x from points (0, y[0]) .. (n-1, y[n-1]) with
/// per-point robustness weights. Window is the q nearest points; tricube
/// distance weights; degree 0 or 1.
inline double loess_at(const std::vector<double>& y, const std::vector<double>& rw, double x, int q,
                       int degree) {
    const int n = static_cast<int>(y.size());
    const int m = std::min(q, n);
    int lo = static_cast<int>(std::llround(x)) - (m - 1) / 2;
    lo = std::clamp(lo, 0, n - m);
    while (lo + m < n && (lo + m) - x < x - lo) ++lo;
    while (lo > 0 && x - (lo - 1) < (lo + m - 1) - x) --lo;

    double dmax = std::max(x - lo, (lo + m - 1) - x);
    if (q > n) dmax *= static_cast<double>(q) / static_cast<double>(n);
    if (dmax <= 0.0) dmax = 1.0;

    auto fit = [&](bool use_rw) {
        double sw = 0.0, swx = 0.0, swy = 0.0, swxy = 0.0, swxx = 0.0;
        for (int i = lo; i < lo + m; ++i) {
            const double u = i - x;
            const double t = std::abs(u) / dmax;
            double w = t < 1.0 ? std::pow(1.0 - t * t * t, 3) : 0.0;
            if (use_rw) w *= rw[static_cast<std::size_t>(i)];
            sw += w;
            swx += w * u;
            swy += w * y[static_cast<std::size_t>(i)];
            swxy += w * u * y[static_cast<std::size_t>(i)];
            swxx += w * u * u;
        }
        struct {
            double sw, swx, swy, swxy, swxx;
        } s{sw, swx, swy, swxy, swxx};
        return s;
    };

    auto s = fit(true);
    if (s.sw <= 0.0) s = fit(false);
    if (s.sw <= 0.0) return y[static_cast<std::size_t>(std::clamp(static_cast<int>(std::llround(x)), 0, n - 1))];

    if (degree >= 1) {
        const double denom = s.sw * s.swxx - s.swx * s.swx;
        if (std::abs(denom) > 1e-12 * std::max(1.0, s.sw * s.swxx)) {
            const double slope = (s.sw * s.swxy - s.swx * s.swy) / denom;
            return (s.swy - slope * s.swx) / s.sw;
        }
    }
    return s.swy / s.sw;
}

inline std::vector<double> loess_smooth(const std::vector<double>& y, const std::vector<double>& rw,
                                        int q, int degree) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = loess_at(y, rw, static_cast<double>(i), q, degree);
    return out;
}

inline std::vector<double> moving_average(const std::vector<double>& y, int p) {
    std::vector<double> out;
    if (static_cast<int>(y.size()) < p) return out;
    out.reserve(y.size() - static_cast<std::size_t>(p) + 1);
    double run = 0.0;
    for (int i = 0; i < p; ++i) run += y[static_cast<std::size_t>(i)];
    out.push_back(run / p);
    for (std::size_t i = static_cast<std::size_t>(p); i < y.size(); ++i) {
        run += y[i] - y[i - static_cast<std::size_t>(p)];
        out.push_back(run / p);
    }
    return out;
}

}  // namespace detail

/// STL with additive components. The seasonal pass smooths each cycle
/// subseries, extends it one position at both ends, and removes the low-pass
/// filtered remainder of that extension; the trend pass smooths the
/// deseasonalized series. periodic=true replaces subseries smoothing with a
/// weighted per-position mean, making the seasonal constant per weekday.
inline StlDecomposition stl(const std::vector<double>& y, int period = 7, bool periodic = true,
                            const StlOptions& opt = {}) {
    const int n = static_cast<int>(y.size());
    if (n < 2 * period) throw UsageError("stl: need at least two full periods");

    const int s_window = detail::next_odd(period);  // used when periodic = false
    const double s_for_trend = periodic ? 1e9 : static_cast<double>(s_window);
    const int t_window = detail::next_odd(1.5 * period / (1.0 - 1.5 / s_for_trend));
    const int l_window = detail::next_odd(period);

    std::vector<double> trend(y.size(), 0.0);
    std::vector<double> seasonal(y.size(), 0.0);
    std::vector<double> rw(y.size(), 1.0);
    std::vector<double> detrended(y.size());
    std::vector<double> c_ext(y.size() + 2 * static_cast<std::size_t>(period));

    for (int o = 0; o <= opt.outer; ++o) {
        for (int it = 0; it < opt.inner; ++it) {
            const std::vector<double> prev_t = trend;
            const std::vector<double> prev_s = seasonal;

            for (std::size_t i = 0; i < y.size(); ++i) detrended[i] = y[i] - trend[i];

            // Cycle-subseries smoothing onto the extended grid t = -period .. n+period-1.
            for (int j = 0; j < period; ++j) {
                std::vector<double> sub, sub_w;
                for (int t = j; t < n; t += period) {
                    sub.push_back(detrended[static_cast<std::size_t>(t)]);
                    sub_w.push_back(rw[static_cast<std::size_t>(t)]);
                }
                const int len = static_cast<int>(sub.size());
                if (periodic) {
                    double sw = 0.0, swy = 0.0;
                    for (int m = 0; m < len; ++m) {
                        sw += sub_w[static_cast<std::size_t>(m)];
                        swy += sub_w[static_cast<std::size_t>(m)] * sub[static_cast<std::size_t>(m)];
                    }
                    if (sw <= 0.0) {
                        sw = len;
                        swy = 0.0;
                        for (double v : sub) swy += v;
                    }
                    const double mean = swy / sw;
                    for (int m = -1; m <= len; ++m)
                        c_ext[static_cast<std::size_t>(j + (m + 1) * period)] = mean;
                } else {
                    for (int m = -1; m <= len; ++m)
                        c_ext[static_cast<std::size_t>(j + (m + 1) * period)] =
                            detail::loess_at(sub, sub_w, static_cast<double>(m), s_window, 0);
                }
            }

            // Low-pass: MA(period) twice, MA(3), then loess; trims back to n.
            auto low = detail::moving_average(c_ext, period);
            low = detail::moving_average(low, period);
            low = detail::moving_average(low, 3);
            const std::vector<double> ones(low.size(), 1.0);
            low = detail::loess_smooth(low, ones, l_window, 1);

            for (std::size_t i = 0; i < y.size(); ++i)
                seasonal[i] = c_ext[i + static_cast<std::size_t>(period)] - low[i];

            std::vector<double> deseason(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) deseason[i] = y[i] - seasonal[i];
            trend = detail::loess_smooth(deseason, rw, t_window, 1);

            if (opt.tol > 0.0) {
                double delta = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i)
                    delta = std::max(delta, std::abs(trend[i] - prev_t[i]) + std::abs(seasonal[i] - prev_s[i]));
                if (delta < opt.tol) break;
            }
        }

        if (o < opt.outer) {
            std::vector<double> absr(y.size());
            for (std::size_t i = 0; i < y.size(); ++i)
                absr[i] = std::abs(y[i] - trend[i] - seasonal[i]);
            std::vector<double> sorted = absr;
            std::sort(sorted.begin(), sorted.end());
            const double med = sorted.size() % 2 == 1
                                   ? sorted[sorted.size() / 2]
                                   : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
            const double h = 6.0 * med;
            double scale = 0.0;
            for (double v : y) scale = std::max(scale, std::abs(v));
            if (h <= 1e-12 * std::max(1.0, scale)) {
                std::fill(rw.begin(), rw.end(), 1.0);
            } else {
                for (std::size_t i = 0; i < y.size(); ++i) {
                    const double u = absr[i] / h;
                    rw[i] = u < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
                }
            }
        }
    }

    StlDecomposition d;
    d.period = period;
    d.periodic_seasonal = periodic;
    d.trend = std::move(trend);
    d.seasonal = std::move(seasonal);
    d.remainder.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) d.remainder[i] = y[i] - d.trend[i] - d.seasonal[i];
    return d;
}

}  // namespace evcast
