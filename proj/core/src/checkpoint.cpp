#include "wtacnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "wtacnn/config.hpp"

namespace wtacnn {

namespace {

constexpr char kMagic[4] = {'W', 'T', 'A', 'F'};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void doubles(const double* p, std::size_t n) {
        u64(n);
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
    void u64s(const std::uint64_t* p, std::size_t n) {
        u64(n);
        for (std::size_t i = 0; i < n; ++i) u64(p[i]);
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) {
            throw std::runtime_error(path_ + ": truncated checkpoint");
        }
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t u64() {
        std::uint8_t b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    std::vector<std::uint64_t> u64s() {
        const std::uint64_t n = u64();
        std::vector<std::uint64_t> v(n);
        for (auto& x : v) x = u64();
        return v;
    }

private:
    std::istream& in_;
    std::string path_;
};

}  // namespace

Checkpoint Checkpoint::capture(const Network& net, const std::string& phase,
                               const std::vector<ConscienceState>& states,
                               std::uint64_t iteration) {
    Checkpoint c;
    c.phase = phase;
    c.spec = net.spec;
    c.params = net.params;
    c.conscience = states;
    c.iteration = iteration;
    return c;
}

Network Checkpoint::restore_network() const {
    Network net;
    net.spec = spec;
    net.spec.validate();
    net.params = params;
    net.trainable.assign(spec.layers.size(), true);
    return net;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string partial = path + ".partial";
    {
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write checkpoint " + partial);
        }
        Writer w(out);
        w.bytes(kMagic, 4);
        w.u32(ckpt.version);
        w.str(ckpt.phase);
        w.str(serialize_network_spec(ckpt.spec));

        w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
        for (const LayerParams& p : ckpt.params) {
            w.u8(p.weights.empty() ? 0 : 1);
            if (!p.weights.empty()) {
                w.u32(p.weights.n());
                w.u32(p.weights.c());
                w.u32(p.weights.h());
                w.u32(p.weights.w());
                w.doubles(p.weights.data(), p.weights.size());
            }
            w.u8(p.bias.empty() ? 0 : 1);
            if (!p.bias.empty()) {
                w.doubles(p.bias.data(), p.bias.size());
            }
            w.u32(static_cast<std::uint32_t>(p.branch_weights.size()));
            for (const Tensor& b : p.branch_weights) {
                w.u32(b.n());
                w.u32(b.c());
                w.u32(b.h());
                w.u32(b.w());
                w.doubles(b.data(), b.size());
            }
        }

        w.u32(static_cast<std::uint32_t>(ckpt.conscience.size()));
        for (const ConscienceState& s : ckpt.conscience) {
            w.u32(static_cast<std::uint32_t>(s.unit_count));
            if (s.unit_count == 0) continue;
            w.f64(s.conscience_c);
            w.u64(s.competitions_seen);
            w.doubles(s.win_prob.data(), s.win_prob.size());
            w.u64s(s.win_counts.data(), s.win_counts.size());
            w.u64s(s.lifetime_wins.data(), s.lifetime_wins.size());
        }

        w.u64(ckpt.iteration);
        w.str(ckpt.trainer_rng);
        w.u64(ckpt.iterator_seed);
        w.u64(ckpt.iterator_epoch);
        w.u64(ckpt.iterator_cursor);
        if (!out) {
            throw std::runtime_error("short write on checkpoint " + partial);
        }
    }
    std::filesystem::rename(partial, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    Reader r(in, path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
    }
    Checkpoint c;
    c.version = r.u32();
    if (c.version != 1) {
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(c.version));
    }
    c.phase = r.str();
    c.spec = parse_network_spec(r.str());

    const std::uint32_t n_layers = r.u32();
    if (n_layers != c.spec.layers.size()) {
        throw std::runtime_error(path + ": parameter blocks (" + std::to_string(n_layers) +
                                 ") do not match spec layers (" +
                                 std::to_string(c.spec.layers.size()) + ")");
    }
    c.params.resize(n_layers);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerParams& p = c.params[i];
        if (r.u8()) {
            const int n = static_cast<int>(r.u32()), ch = static_cast<int>(r.u32());
            const int h = static_cast<int>(r.u32()), w = static_cast<int>(r.u32());
            p.weights = Tensor(n, ch, h, w);
            std::vector<double> data = r.doubles();
            if (data.size() != p.weights.size()) {
                throw std::runtime_error(path + ": weight block size mismatch at layer " +
                                         std::to_string(i));
            }
            std::copy(data.begin(), data.end(), p.weights.data());
        }
        if (r.u8()) {
            p.bias = r.doubles();
        }
        const std::uint32_t branches = r.u32();
        for (std::uint32_t b = 0; b < branches; ++b) {
            const int n = static_cast<int>(r.u32()), ch = static_cast<int>(r.u32());
            const int h = static_cast<int>(r.u32()), w = static_cast<int>(r.u32());
            Tensor t(n, ch, h, w);
            std::vector<double> data = r.doubles();
            if (data.size() != t.size()) {
                throw std::runtime_error(path + ": branch block size mismatch at layer " +
                                         std::to_string(i));
            }
            std::copy(data.begin(), data.end(), t.data());
            p.branch_weights.push_back(std::move(t));
        }
    }

    const std::uint32_t n_states = r.u32();
    if (n_states != n_layers) {
        throw std::runtime_error(path + ": conscience blocks do not match layer count");
    }
    c.conscience.resize(n_states);
    for (std::uint32_t i = 0; i < n_states; ++i) {
        const std::uint32_t units = r.u32();
        if (units == 0) continue;
        ConscienceState s;
        s.unit_count = static_cast<int>(units);
        s.conscience_c = r.f64();
        s.competitions_seen = r.u64();
        s.win_prob = r.doubles();
        s.win_counts = r.u64s();
        s.lifetime_wins = r.u64s();
        if (s.win_prob.size() != units || s.win_counts.size() != units ||
            s.lifetime_wins.size() != units) {
            throw std::runtime_error(path + ": conscience vectors do not match unit count");
        }
        c.conscience[i] = std::move(s);
    }

    c.iteration = r.u64();
    c.trainer_rng = r.str();
    c.iterator_seed = r.u64();
    c.iterator_epoch = r.u64();
    c.iterator_cursor = r.u64();
    return c;
}

}  // namespace wtacnn
