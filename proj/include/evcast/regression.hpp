#pragma once

#include <vector>

#include <Eigen/Dense>

#include "evcast/errors.hpp"

namespace evcast {

/// Least-squares fit y = b0 + X*b. beta(0) is the intercept.
struct LinearModel {
    Eigen::VectorXd beta;

    double predict_row(const std::vector<double>& x) const {
        double v = beta(0);
        for (std::size_t j = 0; j < x.size(); ++j) v += beta(static_cast<Eigen::Index>(j) + 1) * x[j];
        return v;
    }
};

inline Eigen::MatrixXd design_matrix(const std::vector<std::vector<double>>& X) {
    const Eigen::Index n = static_cast<Eigen::Index>(X.size());
    const Eigen::Index p = n > 0 ? static_cast<Eigen::Index>(X[0].size()) : 0;
    Eigen::MatrixXd D(n, p + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        D(i, 0) = 1.0;
        if (static_cast<Eigen::Index>(X[static_cast<std::size_t>(i)].size()) != p)
            throw DataError("fit_ts_regression: ragged feature matrix");
        for (Eigen::Index j = 0; j < p; ++j)
            D(i, j + 1) = X[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return D;
}

/// Householder QR solve; near-singular designs fall back to a tiny ridge on
/// the normal equations (lambda 1e-8).
inline LinearModel fit_ts_regression(const std::vector<std::vector<double>>& X,
                                     const std::vector<double>& y, bool allow_ridge = true) {
    if (X.size() != y.size()) throw DataError("fit_ts_regression: X and y length mismatch");
    if (X.empty()) throw DataError("fit_ts_regression: empty input");
    const Eigen::MatrixXd D = design_matrix(X);
    if (D.rows() <= D.cols()) throw DataError("fit_ts_regression: need more rows than columns");
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    LinearModel m;
    if (qr.rank() == D.cols()) {
        m.beta = qr.solve(yv);
        return m;
    }
    if (!allow_ridge) throw NumericError("fit_ts_regression: rank-deficient design");
    const double lambda = 1e-8;
    Eigen::MatrixXd G = D.transpose() * D;
    G.diagonal().array() += lambda;
    m.beta = G.ldlt().solve(D.transpose() * yv);
    return m;
}

inline std::vector<double> forecast_linear(const LinearModel& m,
                                           const std::vector<std::vector<double>>& X) {
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& row : X) {
        if (static_cast<Eigen::Index>(row.size()) + 1 != m.beta.size())
            throw UsageError("forecast_linear: feature width mismatch");
        out.push_back(m.predict_row(row));
    }
    return out;
}

inline std::vector<double> residuals_of(const LinearModel& m, const std::vector<std::vector<double>>& X,
                                        const std::vector<double>& y) {
    const auto fit = forecast_linear(m, X);
    std::vector<double> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - fit[i];
    return r;
}

}  // namespace evcast
