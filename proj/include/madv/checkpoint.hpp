#pragma once

#include "madv/attack.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace madv {

// File layout (little-endian):
//   "MADVCKPT" u32 version u32 section_count
//   per section: u32 name_len, name, u32 ndim, u64 dims[ndim], f64 data[prod(dims)]

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Section {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
};

class Checkpoint {
public:
    void put(const std::string& name, const MatrixXd& m);
    void put(const std::string& name, const VectorXd& v);
    void put(const std::string& name, std::vector<double> values);

    bool has(const std::string& name) const;
    const Section& get(const std::string& name) const;
    MatrixXd matrix(const std::string& name) const;
    VectorXd vector(const std::string& name) const;
    double scalar(const std::string& name) const;

    const std::vector<Section>& sections() const { return sections_; }

private:
    std::vector<Section> sections_;
};

void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize(const Checkpoint& c);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

Checkpoint state_to_checkpoint(const TrainState& s);
TrainState state_from_checkpoint(const Checkpoint& c);
Checkpoint classifier_to_checkpoint(const Classifier& clf);
Classifier classifier_from_checkpoint(const Checkpoint& c);

void save_state(const TrainState& s, const std::string& path);
TrainState load_state(const std::string& path);
void save_classifier(const Classifier& clf, const std::string& path);
Classifier load_classifier(const std::string& path);

}  // namespace madv
