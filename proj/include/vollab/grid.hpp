#pragma once

#include <span>
#include <vector>

#include "vollab/common.hpp"

namespace vollab {

/// Fixed strike/maturity lattice. For barrier products the "strikes" axis is
/// reinterpreted as barrier levels below spot.
struct StrikeMaturityGrid {
    std::vector<double> maturities;  // increasing, > 0
    std::vector<double> strikes;     // increasing, > 0

    StrikeMaturityGrid() = default;
    StrikeMaturityGrid(std::vector<double> maturities, std::vector<double> strikes);

    std::size_t n_maturities() const { return maturities.size(); }
    std::size_t n_strikes() const { return strikes.size(); }
    std::size_t n_cells() const { return maturities.size() * strikes.size(); }

    bool operator==(const StrikeMaturityGrid&) const = default;
};

/// 8 maturities x 11 strikes used throughout the synthetic experiments.
StrikeMaturityGrid default_training_grid();

/// 5 maturities x 9 strikes used for the historical-surface configuration.
StrikeMaturityGrid historical_grid();

/// Barrier-level grid: the 8 default maturities with 11 levels below spot.
StrikeMaturityGrid default_barrier_grid();

/// Implied-volatility surface on a fixed grid; rows are maturities.
class VolSurface {
public:
    VolSurface() = default;
    /// Validates shape and that all entries are finite and in (0, 5).
    VolSurface(StrikeMaturityGrid grid, Matrix vols);

    const StrikeMaturityGrid& grid() const { return grid_; }
    const Matrix& vols() const { return vols_; }
    double operator()(std::size_t i, std::size_t j) const { return vols_(i, j); }

private:
    StrikeMaturityGrid grid_;
    Matrix vols_;
};

/// Row-major, maturity-major flattening: element (i,j) lands at i*n_strikes+j.
std::vector<double> flatten(const VolSurface& surface);
VolSurface unflatten(const StrikeMaturityGrid& grid, std::span<const double> values);

}  // namespace vollab
