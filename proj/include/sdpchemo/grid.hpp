#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sdpchemo/errors.hpp"
#include "sdpchemo/model.hpp"

namespace sdpchemo {

inline constexpr std::size_t kFeatureSize = 6;

/// Regression input: normalized state followed by the {0,1} dose encoding.
using Feature = std::array<double, kFeatureSize>;

inline Feature make_feature(const NormalizedState& x, const Dose& u, const DoseSet& doses) {
    const auto e = doses.encode(u);
    return {x[0], x[1], x[2], x[3], e[0], e[1]};
}

struct GridPoint {
    NormalizedState x;
    Dose u;
    std::size_t dose_index = 0;
};

/// Cartesian product of a uniform grid on [0,1]^4 with the dose set.
/// Point index = state_index * 4 + dose_index, states in row-major order
/// with x1 varying slowest.
struct Grid {
    std::size_t resolution = 0;
    DoseSet doses;
    std::vector<NormalizedState> states;
    std::vector<GridPoint> points;

    [[nodiscard]] std::size_t size() const { return points.size(); }

    [[nodiscard]] std::vector<Feature> features() const {
        std::vector<Feature> out;
        out.reserve(points.size());
        for (const auto& p : points) out.push_back(make_feature(p.x, p.u, doses));
        return out;
    }
};

inline Grid build_grid(std::size_t resolution, const DoseSet& doses = {}) {
    if (resolution < 2) throw InvalidInput("grid resolution must be >= 2");
    doses.validate();
    Grid g;
    g.resolution = resolution;
    g.doses = doses;
    const double step = 1.0 / static_cast<double>(resolution - 1);
    auto level = [&](std::size_t i) { return i + 1 == resolution ? 1.0 : static_cast<double>(i) * step; };
    const auto dose_list = doses.doses();
    for (std::size_t i1 = 0; i1 < resolution; ++i1)
        for (std::size_t i2 = 0; i2 < resolution; ++i2)
            for (std::size_t i3 = 0; i3 < resolution; ++i3)
                for (std::size_t i4 = 0; i4 < resolution; ++i4) {
                    const NormalizedState x{{level(i1), level(i2), level(i3), level(i4)}};
                    g.states.push_back(x);
                    for (std::size_t d = 0; d < kDoseCount; ++d) g.points.push_back({x, dose_list[d], d});
                }
    return g;
}

} // namespace sdpchemo
