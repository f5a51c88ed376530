#pragma once

/// @file core.hpp
/// @brief Geometric primitives: instances, tours, distance and k-NN matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace gcntsp {

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Dense row-major square matrix.
template <typename T>
class SquareMatrix {
  public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n, T fill = T{}) : n_(n), data_(n * n, fill) {}

    std::size_t size() const noexcept { return n_; }
    T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
    std::span<const T> row(std::size_t i) const noexcept { return {data_.data() + i * n_, n_}; }
    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }

    friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

  private:
    std::size_t n_ = 0;
    std::vector<T> data_;
};

using DistanceMatrix = SquareMatrix<double>;
using AdjacencyTarget = SquareMatrix<int>;

/// n >= 3 points in the closed unit square.
class TspInstance {
  public:
    TspInstance() = default;

    explicit TspInstance(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.size() < 3)
            throw InvalidArgument("TspInstance needs at least 3 nodes, got " +
                                  std::to_string(points_.size()));
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto& p = points_[i];
            if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
                throw InvalidArgument("node " + std::to_string(i) + " lies outside the unit square");
        }
    }

    std::size_t size() const noexcept { return points_.size(); }
    const Point& operator[](std::size_t i) const noexcept { return points_[i]; }
    std::span<const Point> points() const noexcept { return points_; }

    friend bool operator==(const TspInstance&, const TspInstance&) = default;

  private:
    std::vector<Point> points_;
};

/// A permutation of {0, ..., n-1}; the closing edge back to order[0] is implicit.
class Tour {
  public:
    Tour() = default;

    explicit Tour(std::vector<int> order) : order_(std::move(order)) {
        std::vector<char> seen(order_.size(), 0);
        for (int v : order_) {
            if (v < 0 || static_cast<std::size_t>(v) >= order_.size() || seen[v])
                throw InvalidArgument("tour is not a permutation of 0.." +
                                      std::to_string(static_cast<long>(order_.size()) - 1));
            seen[v] = 1;
        }
    }

    std::size_t size() const noexcept { return order_.size(); }
    int operator[](std::size_t i) const noexcept { return order_[i]; }
    std::span<const int> order() const noexcept { return order_; }
    auto begin() const noexcept { return order_.begin(); }
    auto end() const noexcept { return order_.end(); }

    /// Rotation that starts at node 0.
    Tour normalized() const {
        if (order_.empty()) return *this;
        std::vector<int> rotated(order_);
        auto zero = std::find(rotated.begin(), rotated.end(), 0);
        std::rotate(rotated.begin(), zero, rotated.end());
        return Tour(std::move(rotated), Trusted{});
    }

    /// Same cycle regardless of starting node or direction.
    bool same_cycle(const Tour& other) const {
        if (size() != other.size()) return false;
        const Tour a = normalized();
        const Tour b = other.normalized();
        if (a == b) return true;
        std::vector<int> rev(b.order_);
        std::reverse(rev.begin() + 1, rev.end());
        return a.order_ == rev;
    }

    friend bool operator==(const Tour&, const Tour&) = default;

  private:
    struct Trusted {};
    Tour(std::vector<int> order, Trusted) : order_(std::move(order)) {}

    std::vector<int> order_;
};

inline DistanceMatrix pairwise_distances(const TspInstance& instance) {
    const std::size_t n = instance.size();
    DistanceMatrix d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = distance(instance[i], instance[j]);
    return d;
}

inline double tour_length(const DistanceMatrix& d, const Tour& tour) {
    if (tour.size() != d.size())
        throw InvalidArgument("tour has " + std::to_string(tour.size()) + " nodes, instance has " +
                              std::to_string(d.size()));
    const std::size_t n = tour.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += d(tour[i], tour[(i + 1) % n]);
    return total;
}

/// Sum of Euclidean edge lengths over the closed tour.
inline double tour_length(const TspInstance& instance, const Tour& tour) {
    if (tour.size() != instance.size())
        throw InvalidArgument("tour has " + std::to_string(tour.size()) + " nodes, instance has " +
                              std::to_string(instance.size()));
    const std::size_t n = tour.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        total += distance(instance[tour[i]], instance[tour[(i + 1) % n]]);
    return total;
}

/// Entry (i,i) = 2, (i,j) = 1 when j is one of the k nearest neighbours of i
/// (row-wise, ties to the lower index), 0 otherwise.
inline SquareMatrix<int> knn_indicator(const DistanceMatrix& d, std::size_t k) {
    const std::size_t n = d.size();
    if (k < 1 || k + 1 > n)
        throw InvalidArgument("k must lie in [1, n-1]; got k=" + std::to_string(k) +
                              " for n=" + std::to_string(n));
    SquareMatrix<int> out(n, 0);
    std::vector<std::size_t> others;
    others.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        others.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        std::stable_sort(others.begin(), others.end(),
                         [&](std::size_t a, std::size_t b) { return d(i, a) < d(i, b); });
        for (std::size_t r = 0; r < k; ++r) out(i, others[r]) = 1;
        out(i, i) = 2;
    }
    return out;
}

inline SquareMatrix<int> knn_indicator(const TspInstance& instance, std::size_t k) {
    return knn_indicator(pairwise_distances(instance), k);
}

/// Symmetric 0/1 matrix of the n undirected tour edges.
inline AdjacencyTarget tour_to_adjacency(const Tour& tour) {
    const std::size_t n = tour.size();
    AdjacencyTarget a(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int u = tour[i];
        const int v = tour[(i + 1) % n];
        a(u, v) = 1;
        a(v, u) = 1;
    }
    return a;
}

} // namespace gcntsp
