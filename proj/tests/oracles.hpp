#pragma once
// Independent reference computations used only by the tests.

#include "madv/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

using madv::MatrixXd;
using madv::VectorXd;

/// Singular values by one-sided Jacobi rotations on the columns of A,
/// sorted descending. Shares no code with the power iteration under test.
inline std::vector<double> jacobi_singular_values(MatrixXd a) {
    const Eigen::Index n = a.cols();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double alpha = a.col(p).squaredNorm();
                const double beta = a.col(q).squaredNorm();
                const double gamma = a.col(p).dot(a.col(q));
                if (gamma == 0.0) continue;
                off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                const VectorXd cp = a.col(p);
                a.col(p) = c * cp - s * a.col(q);
                a.col(q) = s * cp + c * a.col(q);
            }
        if (off < 1e-15) break;
    }
    std::vector<double> sv(n);
    for (Eigen::Index j = 0; j < n; ++j) sv[j] = a.col(j).norm();
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

/// Minimizes sum_i |z'_i - z_i - delta .* s_i|^2 over delta by plain
/// gradient descent from zero.
inline VectorXd minimize_delta_gd(const MatrixXd& z, const MatrixXd& zp, const MatrixXd& s, int iters = 20000) {
    VectorXd delta = VectorXd::Zero(z.cols());
    const double lr = 0.25 / double(z.rows());
    for (int k = 0; k < iters; ++k) {
        VectorXd g = VectorXd::Zero(z.cols());
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            g += (-2.0 * (zp.row(i) - z.row(i) - delta.transpose().cwiseProduct(s.row(i))).cwiseProduct(s.row(i)))
                     .transpose();
        delta -= lr * g;
    }
    return delta;
}

inline MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
    return random_matrix(rng, n, 1, sd).col(0);
}

/// Lines of whitespace-separated numbers, '#' comment lines skipped.
inline std::vector<std::vector<double>> read_numbers(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> row;
        double v;
        while (ss >> v) row.push_back(v);
        rows.push_back(row);
    }
    return rows;
}

inline std::string fixture(const std::string& name) { return std::string(MADV_FIXTURE_DIR) + "/" + name; }

}  // namespace oracle
