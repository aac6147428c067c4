#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vollab {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols_}; }

    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Implied-vol inversion failure; carries the violated no-arbitrage bound and,
/// when raised from a grid sweep, the offending cell.
class InversionError : public std::runtime_error {
public:
    InversionError(const std::string& msg, double price, double lower, double upper)
        : std::runtime_error(msg), price(price), lower(lower), upper(upper) {}

    double price = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::size_t row = npos;
    std::size_t col = npos;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& msg, std::size_t epoch)
        : std::runtime_error(msg), epoch(epoch) {}
    std::size_t epoch;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest text form that round-trips a double exactly (17 significant digits).
std::string g17(double x);

uint64_t fnv1a64(const void* data, std::size_t n);
uint64_t fnv1a64_str(const std::string& s);
/// Hash of a file's raw bytes; throws DataError if unreadable.
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

/// Process-wide cap on worker threads used by MC and dataset generation.
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs fn(i) for i in [0, n_items) on up to max_threads() threads.
/// Items must be independent; exceptions are rethrown on the caller thread.
void parallel_for(std::size_t n_items, const std::function<void(std::size_t)>& fn);

}  // namespace vollab
