#pragma once

#include <vector>

namespace mixedsde {

/// Uniform partition 0 = t_0 < t_1 < ... < t_n = T shared by paths and kernel
/// tables. Nodes are always computed as t_k = T*k/n so that grids built from
/// the same (T, n) are bit-identical.
class TimeGrid {
  public:
    TimeGrid(double horizon, int n_steps);

    /// Builds a grid from explicit node values (CSV ingestion). Validates
    /// zero start, strict increase and uniform spacing to relative 1e-12.
    static TimeGrid from_points(std::vector<double> points);

    double horizon() const { return horizon_; }
    int n_steps() const { return n_steps_; }
    double dt() const { return horizon_ / n_steps_; }
    double t(int k) const { return points_[static_cast<std::size_t>(k)]; }
    const std::vector<double>& points() const { return points_; }
    /// Number of nodes, n_steps + 1.
    int size() const { return n_steps_ + 1; }

    /// Bit-exact node comparison; used for data/config grid matching.
    bool operator==(const TimeGrid& other) const;

  private:
    TimeGrid() = default;
    double horizon_ = 0;
    int n_steps_ = 0;
    std::vector<double> points_;
};

/// A path observed on a grid; values[k] is the state at t_k.
struct SamplePath {
    SamplePath(TimeGrid grid, std::vector<double> values);

    TimeGrid grid;
    std::vector<double> values;
};

}  // namespace mixedsde
