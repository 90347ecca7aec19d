#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace madv {

// Batches are row-major: one sample per row, so a flat view of a matrix is
// the row-major value array and layer weights flatten in (out, in) order.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

// Dimension or parameter mismatch, bad config keys, invalid counts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation produced NaN/Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file contents (CSV, IDX, checkpoint).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition that is not a configuration problem (empty batch...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
    return x.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const std::string& what) {
    if (!x.allFinite()) throw NumericError("non-finite values in " + what);
}

inline void require_finite(double x, const std::string& what) {
    if (!std::isfinite(x)) throw NumericError("non-finite value in " + what);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}


/// Runs fn(i) for i in [0, n). Each index owns its output slot, so results do
/// not depend on the thread count; callers reduce in index order afterwards.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace madv
