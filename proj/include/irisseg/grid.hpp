#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"

namespace irisseg {

/// Dense row-major H x W grid of values.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    bool same_shape(std::size_t h, std::size_t w) const noexcept { return h == height_ && w == width_; }
    template <class U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return same_shape(other.height(), other.width());
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

/// Real-valued single-channel image, intensities nominally in [0, 1].
template <class T = double>
using Image = Grid<T>;

}  // namespace irisseg
