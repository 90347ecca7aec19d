#pragma once

#include "madv/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace madv {

/// Rows of `x` with labels; every fourth row (index % 4 == 3) is held out.
struct LabeledDataset {
    MatrixXd x;
    std::vector<int> y;
    int classes = 0;
    std::vector<int> train;
    std::vector<int> test;
    std::vector<double> roll;  ///< generating angle t (Swiss Roll only; not stored in CSV)

    Eigen::Index size() const { return x.rows(); }
    MatrixXd rows(const std::vector<int>& idx) const;
    std::vector<int> labels(const std::vector<int>& idx) const;
};

/// Splits are a function of row order only, so a CSV round trip keeps them.
void assign_default_split(LabeledDataset& data);

/// Classic Swiss Roll: t ~ U[1.5 pi, 4.5 pi], height ~ U[0, 21],
/// (t cos t, height, t sin t) + N(0, noise_sd^2) noise, label = quantile of t
/// (exactly n / classes per class), then per-axis standardization.
LabeledDataset gen_swiss_roll(int n, int classes, double noise_sd, std::uint64_t seed);

/// Header x1..xd,label; 17 significant digits.
void write_csv(const LabeledDataset& data, const std::string& path);
LabeledDataset read_csv(const std::string& path);

/// Raw IDX array: big-endian dims, unsigned-byte payload.
struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

IdxArray read_idx(const std::string& path);
IdxArray parse_idx(const std::vector<std::uint8_t>& bytes);

/// Images flattened per item and scaled to [0, 1]; labels from a 1-D IDX file.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace madv
