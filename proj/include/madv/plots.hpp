#pragma once

#include "madv/attack.hpp"

#include <string>
#include <vector>

namespace madv {

/// 2-D view of latent rows. Two-dimensional latents pass through; wider ones
/// are projected onto the first two principal axes of `basis_rows`.
struct Projection {
    RowVector<double> mean;
    MatrixXd axes;  // d x 2
    bool principal = false;

    MatrixXd apply(const MatrixXd& z) const;
};

Projection make_projection(const MatrixXd& basis_rows, int latent_dim);

/// Writes manifold.svg (clean / ours / PGD panels), marginals.svg (per
/// dimension histograms, clean vs perturbed) and the CSVs behind them.
/// Returns the paths written.
std::vector<std::string> export_plots(const AttackReport& report, const std::string& out_dir, int bins = 30);

}  // namespace madv
