#include "madv/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace madv {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'D', 'V', 'C', 'K', 'P', 'T'};

template <typename T>
void put_raw(std::vector<std::uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    template <typename T>
    T take(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }
    void take_into(void* dst, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(dst, bytes_.data() + at_, n);
        at_ += n;
    }
    std::size_t offset() const { return at_; }
    bool done() const { return at_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - at_ < n)
            throw FormatError(std::string("checkpoint: truncated ") + what + " at offset " + std::to_string(at_) +
                              ": expected " + std::to_string(n) + " bytes, got " +
                              std::to_string(bytes_.size() - at_));
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t at_ = 0;
};

std::vector<double> shape_values(const MlpShape& s) {
    std::vector<double> v{double(s.hidden), double(s.output)};
    for (int d : s.dims) v.push_back(d);
    return v;
}

MlpShape shape_from(const Section& s) {
    if (s.data.size() < 4) throw FormatError("checkpoint: section " + s.name + " is not a network shape");
    MlpShape shape;
    shape.hidden = static_cast<HiddenActivation>(int(s.data[0]));
    shape.output = static_cast<OutputActivation>(int(s.data[1]));
    for (std::size_t k = 2; k < s.data.size(); ++k) shape.dims.push_back(int(s.data[k]));
    validate(shape);
    return shape;
}

void put_net(Checkpoint& c, const std::string& name, const Mlpd& net) {
    c.put(name + ".shape", shape_values(net.shape()));
    c.put(name + ".params", net.flatten());
}

Mlpd get_net(const Checkpoint& c, const std::string& name) {
    const MlpShape shape = shape_from(c.get(name + ".shape"));
    const VectorXd params = c.vector(name + ".params");
    if (params.size() != shape.param_count())
        throw FormatError("checkpoint: " + name + " has " + std::to_string(params.size()) + " parameters, shape needs " +
                          std::to_string(shape.param_count()));
    return Mlpd(shape, params);
}

void put_adam(Checkpoint& c, const std::string& name, const Adam& a) {
    c.put(name + ".m", a.m);
    c.put(name + ".v", a.v);
    c.put(name + ".t", std::vector<double>{double(a.t), a.lr, a.beta1, a.beta2, a.eps});
}

Adam get_adam(const Checkpoint& c, const std::string& name) {
    Adam a;
    a.m = c.vector(name + ".m");
    a.v = c.vector(name + ".v");
    const Section& t = c.get(name + ".t");
    if (t.data.size() != 5) throw FormatError("checkpoint: bad optimizer header " + name);
    a.t = long(t.data[0]);
    a.lr = t.data[1];
    a.beta1 = t.data[2];
    a.beta2 = t.data[3];
    a.eps = t.data[4];
    return a;
}

// 64-bit values travel as two exact 32-bit halves.
std::vector<double> split_u64(std::uint64_t v) { return {double(v >> 32), double(v & 0xffffffffu)}; }

std::uint64_t join_u64(const Section& s) {
    if (s.data.size() != 2) throw FormatError("checkpoint: bad 64-bit field " + s.name);
    return (std::uint64_t(s.data[0]) << 32) | std::uint64_t(s.data[1]);
}

}  // namespace

void Checkpoint::put(const std::string& name, const MatrixXd& m) {
    Section s{name, {std::uint64_t(m.rows()), std::uint64_t(m.cols())}, {}};
    s.data.assign(m.data(), m.data() + m.size());  // row-major
    sections_.push_back(std::move(s));
}

void Checkpoint::put(const std::string& name, const VectorXd& v) {
    sections_.push_back({name, {std::uint64_t(v.size())}, std::vector<double>(v.data(), v.data() + v.size())});
}

void Checkpoint::put(const std::string& name, std::vector<double> values) {
    sections_.push_back({name, {std::uint64_t(values.size())}, std::move(values)});
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return true;
    return false;
}

const Section& Checkpoint::get(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return s;
    throw FormatError("checkpoint: missing section '" + name + "'");
}

MatrixXd Checkpoint::matrix(const std::string& name) const {
    const Section& s = get(name);
    if (s.dims.size() != 2) throw FormatError("checkpoint: section '" + name + "' is not a matrix");
    return Eigen::Map<const MatrixXd>(s.data.data(), Eigen::Index(s.dims[0]), Eigen::Index(s.dims[1]));
}

VectorXd Checkpoint::vector(const std::string& name) const {
    const Section& s = get(name);
    if (s.dims.size() != 1) throw FormatError("checkpoint: section '" + name + "' is not a vector");
    return Eigen::Map<const VectorXd>(s.data.data(), Eigen::Index(s.data.size()));
}

double Checkpoint::scalar(const std::string& name) const {
    const Section& s = get(name);
    if (s.data.size() != 1) throw FormatError("checkpoint: section '" + name + "' is not a scalar");
    return s.data[0];
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_raw(out, kCheckpointVersion);
    put_raw(out, std::uint32_t(c.sections().size()));
    for (const auto& s : c.sections()) {
        put_raw(out, std::uint32_t(s.name.size()));
        out.insert(out.end(), s.name.begin(), s.name.end());
        put_raw(out, std::uint32_t(s.dims.size()));
        for (auto d : s.dims) put_raw(out, d);
        const auto* p = reinterpret_cast<const std::uint8_t*>(s.data.data());
        out.insert(out.end(), p, p + s.data.size() * sizeof(double));
    }
    return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[8];
    r.take_into(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("checkpoint: bad magic at offset 0");
    const auto version = r.take<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at offset 8");
    const auto count = r.take<std::uint32_t>("section count");
    Checkpoint c;
    for (std::uint32_t k = 0; k < count; ++k) {
        Section s;
        s.name.resize(r.take<std::uint32_t>("name length"));
        r.take_into(s.name.data(), s.name.size(), "section name");
        const auto ndim = r.take<std::uint32_t>("dimension count");
        std::uint64_t n = 1;
        for (std::uint32_t j = 0; j < ndim; ++j) {
            s.dims.push_back(r.take<std::uint64_t>("dimension"));
            n *= s.dims.back();
        }
        if (n > bytes.size()) throw FormatError("checkpoint: section '" + s.name + "' is larger than the file");
        s.data.resize(n);
        r.take_into(s.data.data(), n * sizeof(double), "section data");
        if (s.dims.size() == 2) c.put(s.name, MatrixXd(Eigen::Map<const MatrixXd>(s.data.data(), s.dims[0], s.dims[1])));
        else c.put(s.name, std::move(s.data));
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(r.offset()));
    return c;
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
    const auto bytes = serialize(c);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw ConfigError("write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

Checkpoint state_to_checkpoint(const TrainState& s) {
    Checkpoint c;
    std::vector<double> spec{double(s.spec.input_dim), double(s.spec.latent_dim)};
    for (int h : s.spec.hidden) spec.push_back(h);
    c.put("spec", spec);
    c.put("epoch", std::vector<double>{double(s.epoch)});
    c.put("seed_train", split_u64(s.seed_train));
    put_net(c, "eta", s.eta.net);
    put_net(c, "eta_prime", s.eta_prime.net);
    c.put("hyper_gain", std::vector<double>{s.eta.output_gain, s.eta_prime.output_gain});
    put_net(c, "phi", s.phi);
    c.put("delta", s.delta);
    c.put("codes", s.codes.codes);
    c.put("codes.seed", split_u64(s.codes.seed));
    put_adam(c, "adam_eta", s.adam_eta);
    put_adam(c, "adam_eta_prime", s.adam_eta_prime);
    put_adam(c, "adam_phi", s.adam_phi);
    return c;
}

TrainState state_from_checkpoint(const Checkpoint& c) {
    TrainState s;
    const Section& spec = c.get("spec");
    if (spec.data.size() < 2) throw FormatError("checkpoint: bad spec section");
    s.spec.input_dim = int(spec.data[0]);
    s.spec.latent_dim = int(spec.data[1]);
    s.spec.hidden.assign(spec.data.begin() + 2, spec.data.end());
    s.epoch = int(c.scalar("epoch"));
    s.seed_train = join_u64(c.get("seed_train"));
    const Section& gain = c.get("hyper_gain");
    if (gain.data.size() != 2) throw FormatError("checkpoint: bad hyper_gain");
    s.eta = {get_net(c, "eta"), HyperRole::clean, gain.data[0]};
    s.eta_prime = {get_net(c, "eta_prime"), HyperRole::perturbing, gain.data[1]};
    s.phi = get_net(c, "phi");
    s.delta = c.matrix("delta");
    s.codes.codes = c.matrix("codes");
    s.codes.seed = join_u64(c.get("codes.seed"));
    s.adam_eta = get_adam(c, "adam_eta");
    s.adam_eta_prime = get_adam(c, "adam_eta_prime");
    s.adam_phi = get_adam(c, "adam_phi");
    const Eigen::Index len = encoder_shape(s.spec).param_count() + 2;
    if (s.eta.particle_length() != len || s.eta_prime.particle_length() != len)
        throw FormatError("checkpoint: hypernet output does not match the encoder layout");
    if (s.adam_eta.m.size() != s.eta.net.param_count() || s.adam_phi.m.size() != s.phi.param_count())
        throw FormatError("checkpoint: optimizer state does not match its network");
    return s;
}

Checkpoint classifier_to_checkpoint(const Classifier& clf) {
    Checkpoint c;
    put_net(c, "classifier", clf.net);
    c.put("classifier.meta", std::vector<double>{clf.trained ? 1.0 : 0.0, clf.test_accuracy});
    return c;
}

Classifier classifier_from_checkpoint(const Checkpoint& c) {
    Classifier clf{get_net(c, "classifier"), false, 0.0};
    const Section& meta = c.get("classifier.meta");
    if (meta.data.size() != 2) throw FormatError("checkpoint: bad classifier.meta");
    clf.trained = meta.data[0] != 0.0;
    clf.test_accuracy = meta.data[1];
    return clf;
}

void save_state(const TrainState& s, const std::string& path) { write_checkpoint(state_to_checkpoint(s), path); }
TrainState load_state(const std::string& path) { return state_from_checkpoint(read_checkpoint(path)); }
void save_classifier(const Classifier& clf, const std::string& path) {
    write_checkpoint(classifier_to_checkpoint(clf), path);
}
Classifier load_classifier(const std::string& path) { return classifier_from_checkpoint(read_checkpoint(path)); }

}  // namespace madv
