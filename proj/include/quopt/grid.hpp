#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace quopt {

/// Dense row-major 2D array, column index fastest.
template <typename T>
class Grid2 {
public:
    Grid2() = default;
    Grid2(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    [[nodiscard]] std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const T> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }

    bool operator==(const Grid2&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// Dense 3D array indexed (x, y, z) with x fastest.
template <typename T>
class Grid3 {
public:
    Grid3() = default;
    Grid3(std::size_t nx, std::size_t ny, std::size_t nz, T fill = T{})
        : nx_(nx), ny_(ny), nz_(nz), data_(nx * ny * nz, fill) {}

    [[nodiscard]] std::size_t nx() const noexcept { return nx_; }
    [[nodiscard]] std::size_t ny() const noexcept { return ny_; }
    [[nodiscard]] std::size_t nz() const noexcept { return nz_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return x + nx_ * (y + ny_ * z);
    }
    T& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept {
        assert(x < nx_ && y < ny_ && z < nz_);
        return data_[index(x, y, z)];
    }
    const T& operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        assert(x < nx_ && y < ny_ && z < nz_);
        return data_[index(x, y, z)];
    }

    /// Contiguous nx*ny plane at height z.
    [[nodiscard]] std::span<T> slice(std::size_t z) noexcept { return {data_.data() + z * nx_ * ny_, nx_ * ny_}; }
    [[nodiscard]] std::span<const T> slice(std::size_t z) const noexcept {
        return {data_.data() + z * nx_ * ny_, nx_ * ny_};
    }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }

    bool operator==(const Grid3&) const = default;

private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::size_t nz_ = 0;
    std::vector<T> data_;
};

}  // namespace quopt
