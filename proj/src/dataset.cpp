#include "madv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace madv {

MatrixXd LabeledDataset::rows(const std::vector<int>& idx) const {
    MatrixXd out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = x.row(idx[i]);
    return out;
}

std::vector<int> LabeledDataset::labels(const std::vector<int>& idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
    return out;
}

void assign_default_split(LabeledDataset& data) {
    data.train.clear();
    data.test.clear();
    for (int i = 0; i < data.size(); ++i) (i % 4 == 3 ? data.test : data.train).push_back(i);
}

LabeledDataset gen_swiss_roll(int n, int classes, double noise_sd, std::uint64_t seed) {
    if (n <= 0 || classes <= 0 || n % classes != 0)
        throw ConfigError("swiss roll needs n > 0 divisible by classes > 0 (got n=" + std::to_string(n) +
                          ", classes=" + std::to_string(classes) + ")");
    if (noise_sd < 0.0) throw ConfigError("noise standard deviation must be non-negative");
    constexpr double pi = std::numbers::pi;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(1.5 * pi, 4.5 * pi);
    std::uniform_real_distribution<double> height(0.0, 21.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    LabeledDataset data;
    data.classes = classes;
    data.x.resize(n, 3);
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
        t[i] = angle(rng);
        const double h = height(rng);
        data.x.row(i) << t[i] * std::cos(t[i]), h, t[i] * std::sin(t[i]);
        for (int j = 0; j < 3; ++j) data.x(i, j) += noise_sd * noise(rng);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return t[a] < t[b]; });
    data.y.assign(n, 0);
    for (int rank = 0; rank < n; ++rank) data.y[order[rank]] = rank / (n / classes);

    const RowVector<double> mean = data.x.colwise().mean();
    data.x.rowwise() -= mean;
    const RowVector<double> sd = (data.x.array().square().colwise().sum() / double(n)).sqrt();
    for (int j = 0; j < 3; ++j)
        if (sd[j] > 0.0) data.x.col(j) /= sd[j];
    data.roll = std::move(t);
    assign_default_split(data);
    return data;
}

void write_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << 'x' << (j + 1) << ',';
    out << "label\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << data.x(i, j) << ',';
        out << data.y[i] << '\n';
    }
    if (!out) throw ConfigError("write failed for " + path);
}

LabeledDataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": missing header");
    const auto cols = std::count(line.begin(), line.end(), ',');
    if (cols < 1 || line.substr(line.rfind(',') + 1) != "label") throw FormatError(path + ": header must end in label");
    std::vector<double> values;
    std::vector<int> labels;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (int j = 0; j < cols; ++j) {
            if (!std::getline(ss, cell, ',')) throw FormatError(path + ": short row " + std::to_string(row));
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError(path + ": bad number '" + cell + "' on row " + std::to_string(row));
            }
        }
        if (!std::getline(ss, cell, ',')) throw FormatError(path + ": missing label on row " + std::to_string(row));
        labels.push_back(std::stoi(cell));
    }
    LabeledDataset data;
    data.x = Eigen::Map<MatrixXd>(values.data(), Eigen::Index(labels.size()), cols);
    data.y = labels;
    data.classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    for (int label : labels)
        if (label < 0) throw FormatError(path + ": negative label");
    assign_default_split(data);
    return data;
}

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw FormatError("IDX: truncated header at offset 0 (" + std::to_string(bytes.size()) + " bytes)");
    if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08)
        throw FormatError("IDX: bad magic at offset 0 (expected 00 00 08 nn)");
    const int ndim = bytes[3];
    if (ndim < 1) throw FormatError("IDX: zero dimension count at offset 3");
    const std::size_t header = 4 + 4 * std::size_t(ndim);
    if (bytes.size() < header)
        throw FormatError("IDX: truncated dimension table at offset 4: expected " + std::to_string(header) +
                          " header bytes, got " + std::to_string(bytes.size()));
    IdxArray a;
    std::size_t count = 1;
    for (int k = 0; k < ndim; ++k) {
        const std::size_t o = 4 + 4 * std::size_t(k);
        const std::uint32_t dim = (std::uint32_t(bytes[o]) << 24) | (std::uint32_t(bytes[o + 1]) << 16) |
                                  (std::uint32_t(bytes[o + 2]) << 8) | std::uint32_t(bytes[o + 3]);
        a.dims.push_back(dim);
        count *= dim;
    }
    if (bytes.size() - header != count)
        throw FormatError("IDX: payload at offset " + std::to_string(header) + " has " +
                          std::to_string(bytes.size() - header) + " bytes, expected " + std::to_string(count));
    a.data.assign(bytes.begin() + std::ptrdiff_t(header), bytes.end());
    return a;
}

IdxArray read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_idx(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const IdxArray images = read_idx(images_path);
    const IdxArray labels = read_idx(labels_path);
    if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0])
        throw FormatError(labels_path + ": label count does not match image count");
    const Eigen::Index n = images.dims[0];
    const Eigen::Index per = n ? Eigen::Index(images.data.size()) / n : 0;
    LabeledDataset data;
    data.x.resize(n, per);
    for (Eigen::Index i = 0; i < n * per; ++i) data.x.data()[i] = images.data[i] / 255.0;
    data.y.assign(labels.data.begin(), labels.data.end());
    data.classes = data.y.empty() ? 0 : *std::max_element(data.y.begin(), data.y.end()) + 1;
    assign_default_split(data);
    return data;
}

}  // namespace madv
