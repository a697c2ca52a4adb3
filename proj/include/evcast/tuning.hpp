#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "evcast/errors.hpp"
#include "evcast/numeric.hpp"

namespace evcast {

/// One expanding-window cross-validation fold. Ranges are half-open row
/// index intervals; the validation window always starts where training ends.
struct TimeSlice {
    int train_begin = 0;
    int train_end = 0;
    int val_begin = 0;
    int val_end = 0;
};

/// Expanding-window folds: the first trains on `initial_train` rows and
/// validates on the next `val_len`; each later fold grows training by `step`.
inline std::vector<TimeSlice> time_slice_splits(int n, int initial_train, int val_len,
                                                int step = 7) {
    if (initial_train < 1 || val_len < 1 || step < 1)
        throw UsageError("time_slice_splits: initial_train, val_len, and step must be >= 1");
    if (n < initial_train + val_len)
        throw DataError("time_slice_splits: series too short for one train/validation fold");
    std::vector<TimeSlice> out;
    for (int t = initial_train; t + val_len <= n; t += step)
        out.push_back({0, t, t, t + val_len});
    return out;
}

namespace detail {

/// Tuning-only accuracy score: percentage error over the nonzero actuals,
/// falling back to mean absolute error when every actual is zero.
inline double safe_mape(const std::vector<double>& actual, const std::vector<double>& pred) {
    if (actual.size() != pred.size() || actual.empty())
        throw UsageError("safe_mape: length mismatch or empty input");
    std::vector<double> terms;
    terms.reserve(actual.size());
    for (std::size_t i = 0; i < actual.size(); ++i)
        if (actual[i] != 0.0) terms.push_back(std::abs(actual[i] - pred[i]) / std::abs(actual[i]));
    if (terms.empty()) {
        for (std::size_t i = 0; i < actual.size(); ++i)
            terms.push_back(std::abs(actual[i] - pred[i]));
        return stable_sum(std::move(terms)) / static_cast<double>(actual.size());
    }
    const double n = static_cast<double>(terms.size());
    return 100.0 * stable_sum(std::move(terms)) / n;
}

}  // namespace detail
}  // namespace evcast
