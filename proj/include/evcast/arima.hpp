#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "evcast/errors.hpp"
#include "evcast/regression.hpp"

namespace evcast {

struct ArimaModel {
    int p = 0, d = 0, q = 0;
    bool include_mean = false;
    double mu = 0.0;
    std::vector<double> phi;
    std::vector<double> theta;
    double sigma2 = 0.0;
    double loglik = 0.0;
    double aicc = std::numeric_limits<double>::infinity();
};

struct ArimaOptions {
    int max_p = 5;
    int max_q = 5;
    int max_d = 2;
    bool exact_likelihood = true;  // Kalman refinement after the CSS fit
};

namespace detail {

inline std::vector<double> diff(const std::vector<double>& y) {
    std::vector<double> out;
    if (y.size() < 2) return out;
    out.reserve(y.size() - 1);
    for (std::size_t i = 1; i < y.size(); ++i) out.push_back(y[i] - y[i - 1]);
    return out;
}

/// Derivative-free simplex minimization with per-coordinate initial steps.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, const std::vector<double>& steps,
                                       int max_iter = 2000, double tol = 1e-10) {
    const int n = static_cast<int>(x0.size());
    if (n == 0) return x0;

    std::vector<std::vector<double>> pts(static_cast<std::size_t>(n) + 1, x0);
    for (int i = 0; i < n; ++i) pts[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(i)] += steps[static_cast<std::size_t>(i)];
    std::vector<double> fv(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) fv[i] = f(pts[i]);

    std::vector<std::size_t> ord(pts.size());
    for (int iter = 0; iter < max_iter; ++iter) {
        std::iota(ord.begin(), ord.end(), std::size_t{0});
        std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = ord.front(), worst = ord.back(), second = ord[ord.size() - 2];
        if (std::abs(fv[worst] - fv[best]) <= tol * (1.0 + std::abs(fv[best]))) break;

        std::vector<double> centroid(static_cast<std::size_t>(n), 0.0);
        for (std::size_t k = 0; k + 1 < ord.size(); ++k)
            for (int j = 0; j < n; ++j) centroid[static_cast<std::size_t>(j)] += pts[ord[k]][static_cast<std::size_t>(j)];
        for (double& c : centroid) c /= n;

        auto blend = [&](double coef) {
            std::vector<double> x(static_cast<std::size_t>(n));
            for (int j = 0; j < n; ++j)
                x[static_cast<std::size_t>(j)] =
                    centroid[static_cast<std::size_t>(j)] + coef * (centroid[static_cast<std::size_t>(j)] - pts[worst][static_cast<std::size_t>(j)]);
            return x;
        };

        const auto xr = blend(1.0);
        const double fr = f(xr);
        if (fr < fv[best]) {
            const auto xe = blend(2.0);
            const double fe = f(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const auto xc = blend(outside ? 0.5 : -0.5);
        const double fc = f(xc);
        if (fc < std::min(fr, fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t k = 1; k < ord.size(); ++k) {
            for (int j = 0; j < n; ++j)
                pts[ord[k]][static_cast<std::size_t>(j)] =
                    0.5 * (pts[ord[k]][static_cast<std::size_t>(j)] + pts[best][static_cast<std::size_t>(j)]);
            fv[ord[k]] = f(pts[ord[k]]);
        }
    }
    std::size_t arg = 0;
    for (std::size_t i = 1; i < fv.size(); ++i)
        if (fv[i] < fv[arg]) arg = i;
    return pts[arg];
}

/// Durbin-Levinson: partial autocorrelations -> AR coefficients. Any input
/// in (-1,1)^m yields a stationary polynomial.
inline std::vector<double> pacf_to_ar(const std::vector<double>& r) {
    std::vector<double> phi(r.size(), 0.0), prev(r.size(), 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
        phi[k] = r[k];
        for (std::size_t i = 0; i < k; ++i) phi[i] = prev[i] - r[k] * prev[k - 1 - i];
        prev = phi;
    }
    return phi;
}

inline std::vector<double> unconstrained_to_ar(const double* u, int m) {
    std::vector<double> r(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) r[static_cast<std::size_t>(i)] = std::tanh(u[i]);
    return pacf_to_ar(r);
}

struct CssResult {
    double ss = 0.0;
    long count = 0;
    std::vector<double> e;
};

inline CssResult arma_css(const std::vector<double>& z, const std::vector<double>& phi,
                          const std::vector<double>& theta) {
    const int n = static_cast<int>(z.size());
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    CssResult r;
    r.e.assign(z.size(), 0.0);
    for (int t = p; t < n; ++t) {
        double pred = 0.0;
        for (int i = 0; i < p; ++i) pred += phi[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(t - 1 - i)];
        for (int j = 0; j < q; ++j) {
            const int idx = t - 1 - j;
            if (idx >= 0) pred += theta[static_cast<std::size_t>(j)] * r.e[static_cast<std::size_t>(idx)];
        }
        r.e[static_cast<std::size_t>(t)] = z[static_cast<std::size_t>(t)] - pred;
        r.ss += r.e[static_cast<std::size_t>(t)] * r.e[static_cast<std::size_t>(t)];
        ++r.count;
    }
    return r;
}

/// Exact Gaussian log-likelihood of an ARMA(p,q) on mean-removed data via the
/// Kalman filter on the Harvey state-space form, innovation variance
/// concentrated out.
inline double arma_exact_loglik(const std::vector<double>& z, const std::vector<double>& phi,
                                const std::vector<double>& theta, double* sigma2_out = nullptr) {
    const int n = static_cast<int>(z.size());
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    const int r = std::max(p, q + 1);

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(r, r);
    for (int i = 0; i < p; ++i) T(i, 0) = phi[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < r; ++i) T(i, i + 1) = 1.0;
    Eigen::VectorXd R = Eigen::VectorXd::Zero(r);
    R(0) = 1.0;
    for (int j = 0; j < q; ++j) R(j + 1) = theta[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd RRt = R * R.transpose();

    // Stationary covariance: solve (I - T (x) T) vec(P) = vec(RR').
    const int rr = r * r;
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(rr, rr);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
            for (int k = 0; k < r; ++k)
                for (int l = 0; l < r; ++l) A(i * r + j, k * r + l) -= T(i, k) * T(j, l);
    Eigen::VectorXd vecQ(rr);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) vecQ(i * r + j) = RRt(i, j);
    const Eigen::VectorXd vecP = A.partialPivLu().solve(vecQ);
    if (!vecP.allFinite()) return -std::numeric_limits<double>::infinity();
    Eigen::MatrixXd P(r, r);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) P(i, j) = vecP(i * r + j);

    Eigen::VectorXd a = Eigen::VectorXd::Zero(r);
    double ssq = 0.0, logdet = 0.0;
    for (int t = 0; t < n; ++t) {
        const double F = P(0, 0);
        if (!(F > 1e-12) || !std::isfinite(F)) return -std::numeric_limits<double>::infinity();
        const double v = z[static_cast<std::size_t>(t)] - a(0);
        ssq += v * v / F;
        logdet += std::log(F);
        const Eigen::VectorXd K = (T * P.col(0)) / F;
        a = T * a + K * v;
        P = T * P * T.transpose() + RRt - F * K * K.transpose();
    }
    const double sigma2 = ssq / n;
    if (sigma2_out) *sigma2_out = sigma2;
    if (!(sigma2 > 0.0)) return -std::numeric_limits<double>::infinity();
    return -0.5 * n * (std::log(2.0 * M_PI) + 1.0 + std::log(sigma2)) - 0.5 * logdet;
}

struct ArmaFit {
    std::vector<double> phi, theta;
    double mu = 0.0;
    double sigma2 = 0.0;
    double loglik = -std::numeric_limits<double>::infinity();
};

/// CSS estimation in the transformed (always stationary and invertible)
/// parameter space, optionally refined on the exact likelihood.
inline ArmaFit fit_arma(const std::vector<double>& w, int p, int q, bool include_mean,
                        bool exact_likelihood) {
    const int n = static_cast<int>(w.size());
    const int dim = p + q + (include_mean ? 1 : 0);

    double wbar = 0.0;
    for (double v : w) wbar += v;
    wbar /= std::max(n, 1);
    double wsd = 0.0;
    for (double v : w) wsd += (v - wbar) * (v - wbar);
    wsd = std::sqrt(wsd / std::max(n - 1, 1));

    auto unpack = [&](const std::vector<double>& u, ArmaFit& f) {
        f.phi = unconstrained_to_ar(u.data(), p);
        const auto a = unconstrained_to_ar(u.data() + p, q);
        f.theta.resize(static_cast<std::size_t>(q));
        for (int j = 0; j < q; ++j) f.theta[static_cast<std::size_t>(j)] = -a[static_cast<std::size_t>(j)];
        f.mu = include_mean ? u[static_cast<std::size_t>(p + q)] : 0.0;
    };
    auto centered = [&](const ArmaFit& f) {
        std::vector<double> z(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) z[i] = w[i] - f.mu;
        return z;
    };

    auto css_objective = [&](const std::vector<double>& u) {
        ArmaFit f;
        unpack(u, f);
        const auto r = arma_css(centered(f), f.phi, f.theta);
        return r.count > 0 ? r.ss : std::numeric_limits<double>::infinity();
    };

    std::vector<double> steps(static_cast<std::size_t>(dim), 0.4);
    if (include_mean) steps.back() = std::max(0.1 * wsd, 1e-3);

    std::vector<std::vector<double>> starts;
    for (const double s : {0.0, 0.5, -0.5}) {
        std::vector<double> u(static_cast<std::size_t>(dim), s);
        if (include_mean) u.back() = wbar;
        starts.push_back(std::move(u));
    }

    std::vector<double> best_u;
    double best_f = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        const auto u = dim > 0 ? nelder_mead(css_objective, s, steps) : s;
        const double fu = css_objective(u);
        if (fu < best_f) {
            best_f = fu;
            best_u = u;
        }
    }

    if (exact_likelihood && dim > 0) {
        auto ml_objective = [&](const std::vector<double>& u) {
            ArmaFit f;
            unpack(u, f);
            return -arma_exact_loglik(centered(f), f.phi, f.theta);
        };
        std::vector<double> refine_steps(static_cast<std::size_t>(dim), 0.1);
        if (include_mean) refine_steps.back() = std::max(0.02 * wsd, 1e-4);
        const auto u = nelder_mead(ml_objective, best_u, refine_steps, 120 * dim, 1e-8);
        if (ml_objective(u) <= ml_objective(best_u)) best_u = u;
    }
    if (best_u.empty()) best_u.assign(static_cast<std::size_t>(dim), 0.0);

    ArmaFit fit;
    unpack(best_u, fit);
    const auto z = centered(fit);
    if (exact_likelihood) {
        fit.loglik = arma_exact_loglik(z, fit.phi, fit.theta, &fit.sigma2);
    } else {
        const auto r = arma_css(z, fit.phi, fit.theta);
        fit.sigma2 = r.count > 0 ? r.ss / static_cast<double>(r.count) : 0.0;
        fit.loglik = fit.sigma2 > 0.0
                         ? -0.5 * static_cast<double>(r.count) * (std::log(2.0 * M_PI * fit.sigma2) + 1.0)
                         : -std::numeric_limits<double>::infinity();
    }
    return fit;
}

}  // namespace detail

/// KPSS level-stationarity statistic with Bartlett long-run variance,
/// bandwidth floor(4 (n/100)^(1/4)).
inline double kpss_stat(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    if (n < 8) throw DataError("kpss_stat: series too short");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= n;
    std::vector<double> e(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) e[i] = y[i] - mean;

    double cum = 0.0, eta = 0.0, gamma0 = 0.0;
    for (double v : e) {
        cum += v;
        eta += cum * cum;
        gamma0 += v * v;
    }
    eta /= static_cast<double>(n) * n;
    gamma0 /= n;

    const int L = static_cast<int>(std::floor(4.0 * std::pow(n / 100.0, 0.25)));
    double lrv = gamma0;
    for (int l = 1; l <= L; ++l) {
        double g = 0.0;
        for (int t = l; t < n; ++t) g += e[static_cast<std::size_t>(t)] * e[static_cast<std::size_t>(t - l)];
        g /= n;
        lrv += 2.0 * (1.0 - static_cast<double>(l) / (L + 1)) * g;
    }
    if (!(lrv > 0.0)) return 0.0;
    return eta / lrv;
}

inline constexpr double kKpssCritical5pct = 0.463;

/// Differences until KPSS no longer rejects stationarity at 5%, capped.
inline int choose_diff_order(std::vector<double> y, int max_d = 2) {
    int d = 0;
    while (d < max_d && static_cast<int>(y.size()) >= 8 && kpss_stat(y) > kKpssCritical5pct) {
        y = detail::diff(y);
        ++d;
    }
    return d;
}

inline double arima_aicc(double loglik, int n_eff, int n_params) {
    const double k = n_params;
    const double denom = n_eff - k - 1.0;
    if (denom <= 0.0 || !std::isfinite(loglik)) return std::numeric_limits<double>::infinity();
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1.0) / denom;
}

/// Stepwise order selection: KPSS picks d, then a neighborhood walk over
/// (p,q) from four starting models, moving while AICc improves. Ties break
/// toward fewer parameters, then fewer AR terms. The mean is estimated only
/// for undifferenced series.
inline ArimaModel auto_arima(const std::vector<double>& y, const ArimaOptions& opt = {}) {
    if (y.size() < 30) throw DataError("auto_arima: need at least 30 observations");

    ArimaModel model;
    model.d = choose_diff_order(y, opt.max_d);
    std::vector<double> w = y;
    for (int k = 0; k < model.d; ++k) w = detail::diff(w);
    model.include_mean = (model.d == 0);
    const int n_eff = static_cast<int>(w.size());

    struct Cand {
        detail::ArmaFit fit;
        double aicc = std::numeric_limits<double>::infinity();
    };
    std::map<std::pair<int, int>, Cand> memo;
    auto eval = [&](int p, int q) -> const Cand& {
        const auto key = std::make_pair(p, q);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        Cand c;
        c.fit = detail::fit_arma(w, p, q, model.include_mean, opt.exact_likelihood);
        const int n_params = p + q + (model.include_mean ? 1 : 0) + 1;
        c.aicc = arima_aicc(c.fit.loglik, n_eff, n_params);
        return memo.emplace(key, std::move(c)).first->second;
    };
    auto ranks_better = [&](int p1, int q1, int p2, int q2) {
        const double a1 = eval(p1, q1).aicc, a2 = eval(p2, q2).aicc;
        if (a1 != a2) return a1 < a2;
        if (p1 + q1 != p2 + q2) return p1 + q1 < p2 + q2;
        return p1 < p2;
    };

    const std::pair<int, int> starts[4] = {{2, 2}, {0, 0}, {1, 0}, {0, 1}};
    int cp = -1, cq = -1;
    for (auto [p, q] : starts) {
        p = std::min(p, opt.max_p);
        q = std::min(q, opt.max_q);
        if (cp < 0 || ranks_better(p, q, cp, cq)) {
            cp = p;
            cq = q;
        }
    }

    bool moved = true;
    while (moved) {
        moved = false;
        int bp = cp, bq = cq;
        for (int dp = -1; dp <= 1; ++dp) {
            for (int dq = -1; dq <= 1; ++dq) {
                if (dp == 0 && dq == 0) continue;
                const int p = cp + dp, q = cq + dq;
                if (p < 0 || q < 0 || p > opt.max_p || q > opt.max_q) continue;
                if (ranks_better(p, q, bp, bq)) {
                    bp = p;
                    bq = q;
                }
            }
        }
        if (bp != cp || bq != cq) {
            cp = bp;
            cq = bq;
            moved = true;
        }
    }

    const Cand& best = eval(cp, cq);
    model.p = cp;
    model.q = cq;
    model.phi = best.fit.phi;
    model.theta = best.fit.theta;
    model.mu = best.fit.mu;
    model.sigma2 = best.fit.sigma2;
    model.loglik = best.fit.loglik;
    model.aicc = best.aicc;
    return model;
}

/// Iterated minimum-MSE forecast; differencing is undone by cumulative sums
/// from the last observed levels.
inline std::vector<double> forecast_arima(const ArimaModel& m, const std::vector<double>& history,
                                          int h) {
    if (h <= 0) return {};
    std::vector<std::vector<double>> levels{history};
    for (int k = 0; k < m.d; ++k) levels.push_back(detail::diff(levels.back()));
    const std::vector<double>& w = levels.back();
    const int n = static_cast<int>(w.size());

    std::vector<double> z(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) z[i] = w[i] - m.mu;
    const auto css = detail::arma_css(z, m.phi, m.theta);

    std::vector<double> zf(static_cast<std::size_t>(h), 0.0);
    auto z_at = [&](int t) { return t < n ? z[static_cast<std::size_t>(t)] : zf[static_cast<std::size_t>(t - n)]; };
    for (int j = 0; j < h; ++j) {
        double pred = 0.0;
        const int t = n + j;
        for (std::size_t i = 0; i < m.phi.size(); ++i) {
            const int idx = t - 1 - static_cast<int>(i);
            if (idx >= 0) pred += m.phi[i] * z_at(idx);
        }
        for (std::size_t jj = 0; jj < m.theta.size(); ++jj) {
            const int idx = t - 1 - static_cast<int>(jj);
            if (idx >= 0 && idx < n) pred += m.theta[jj] * css.e[static_cast<std::size_t>(idx)];
        }
        zf[static_cast<std::size_t>(j)] = pred;
    }

    std::vector<double> out(zf.size());
    for (std::size_t i = 0; i < zf.size(); ++i) out[i] = zf[i] + m.mu;
    for (int k = m.d - 1; k >= 0; --k) {
        double run = levels[static_cast<std::size_t>(k)].back();
        for (double& v : out) {
            run += v;
            v = run;
        }
    }
    return out;
}

/// Regression with ARIMA errors: the regression is fitted first and the
/// error process is modeled on its residuals.
struct RegArimaModel {
    LinearModel reg;
    ArimaModel arima;
};

inline RegArimaModel fit_reg_arima(const std::vector<std::vector<double>>& X,
                                   const std::vector<double>& y, const ArimaOptions& opt = {}) {
    RegArimaModel m;
    m.reg = fit_ts_regression(X, y);
    m.arima = auto_arima(residuals_of(m.reg, X, y), opt);
    return m;
}

inline std::vector<double> forecast_reg_arima(const RegArimaModel& m,
                                              const std::vector<std::vector<double>>& X_future,
                                              const std::vector<double>& residual_history) {
    std::vector<double> out = forecast_linear(m.reg, X_future);
    const auto eta = forecast_arima(m.arima, residual_history, static_cast<int>(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += eta[i];
    return out;
}

}  // namespace evcast
