#include "vollab/grid.hpp"

#include <algorithm>
#include <cmath>

namespace vollab {

namespace {

void check_axis(const std::vector<double>& xs, const char* name) {
    if (xs.empty()) throw ConfigError(std::string(name) + " axis is empty");
    double prev = 0.0;
    for (double x : xs) {
        if (!(x > prev))
            throw ConfigError(std::string(name) + " axis must be strictly increasing and > 0");
        prev = x;
    }
}

}  // namespace

StrikeMaturityGrid::StrikeMaturityGrid(std::vector<double> maturities_in,
                                       std::vector<double> strikes_in)
    : maturities(std::move(maturities_in)), strikes(std::move(strikes_in)) {
    check_axis(maturities, "maturity");
    check_axis(strikes, "strike");
}

StrikeMaturityGrid default_training_grid() {
    return {{0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.0},
            {0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5}};
}

StrikeMaturityGrid historical_grid() {
    std::vector<double> maturities = {1.0 / 12, 3.0 / 12, 6.0 / 12, 9.0 / 12, 12.0 / 12};
    std::vector<double> strikes(9);
    for (std::size_t i = 0; i < 9; ++i) strikes[i] = 0.85 + static_cast<double>(i) * 0.05;
    return {std::move(maturities), std::move(strikes)};
}

StrikeMaturityGrid default_barrier_grid() {
    std::vector<double> levels(11);
    for (std::size_t i = 0; i < 11; ++i) levels[i] = 0.45 + static_cast<double>(i) * 0.05;
    return {default_training_grid().maturities, std::move(levels)};
}

VolSurface::VolSurface(StrikeMaturityGrid grid, Matrix vols)
    : grid_(std::move(grid)), vols_(std::move(vols)) {
    if (vols_.rows() != grid_.n_maturities() || vols_.cols() != grid_.n_strikes())
        throw ConfigError("surface shape does not match grid");
    for (double v : vols_.storage())
        if (!std::isfinite(v) || v <= 0.0 || v >= 5.0)
            throw ConfigError("surface entry outside (0,5): " + g17(v));
}

std::vector<double> flatten(const VolSurface& surface) {
    return surface.vols().storage();
}

VolSurface unflatten(const StrikeMaturityGrid& grid, std::span<const double> values) {
    if (values.size() != grid.n_cells())
        throw ConfigError("flattened surface length does not match grid");
    Matrix m(grid.n_maturities(), grid.n_strikes());
    std::copy(values.begin(), values.end(), m.storage().begin());
    return VolSurface(grid, std::move(m));
}

}  // namespace vollab
