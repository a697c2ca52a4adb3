#pragma once

#include <algorithm>
#include <vector>

namespace evcast {

/// Sums values in ascending order so the result does not depend on the
/// caller's ordering.
inline double stable_sum(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

}  // namespace evcast
