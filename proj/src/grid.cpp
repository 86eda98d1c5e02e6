#include "mixedsde/grid.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "mixedsde/errors.hpp"

namespace mixedsde {

TimeGrid::TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0) || !std::isfinite(horizon))
        throw std::invalid_argument("TimeGrid: horizon must be positive, got " + std::to_string(horizon));
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    points_.resize(static_cast<std::size_t>(n_steps) + 1);
    for (int k = 0; k <= n_steps; ++k) points_[static_cast<std::size_t>(k)] = horizon * k / n_steps;
    points_.front() = 0.0;
    points_.back() = horizon;
}

TimeGrid TimeGrid::from_points(std::vector<double> points) {
    if (points.size() < 2) throw DataError("TimeGrid: need at least two nodes");
    if (points.front() != 0.0) throw DataError("TimeGrid: first node must be 0");
    const double horizon = points.back();
    if (!(horizon > 0) || !std::isfinite(horizon)) throw DataError("TimeGrid: last node must be positive and finite");
    const int n = static_cast<int>(points.size()) - 1;
    const double dt = horizon / n;
    for (int k = 0; k < n; ++k) {
        const double step = points[static_cast<std::size_t>(k) + 1] - points[static_cast<std::size_t>(k)];
        if (!(step > 0)) throw DataError("TimeGrid: nodes must be strictly increasing");
        if (std::abs(step - dt) > 1e-12 * dt)
            throw DataError("TimeGrid: spacing not uniform at node " + std::to_string(k + 1));
    }
    TimeGrid g;
    g.horizon_ = horizon;
    g.n_steps_ = n;
    g.points_ = std::move(points);
    return g;
}

bool TimeGrid::operator==(const TimeGrid& other) const {
    return points_ == other.points_;
}

SamplePath::SamplePath(TimeGrid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != static_cast<std::size_t>(grid.size()))
        throw std::invalid_argument("SamplePath: value count does not match grid");
    for (double x : values)
        if (!std::isfinite(x)) throw NumericalError("SamplePath: non-finite value");
}

}  // namespace mixedsde
