#include "nclust/diff/checkpoint.hpp"

#include "nclust/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nclust::diff {

namespace {

constexpr char magic[8] = {'N', 'C', 'L', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put_le(std::string& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

    template <class T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
        need(sizeof(U));
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated");
    }

    const std::string& bytes_;
    std::size_t pos_;
};

} // namespace

std::string encode_checkpoint(const ParamSet& params, const std::string& metadata) {
    std::string out(magic, sizeof(magic));
    put_le(out, checkpoint_version);
    put_le(out, static_cast<std::uint64_t>(metadata.size()));
    out += metadata;
    put_le(out, static_cast<std::uint64_t>(params.size()));
    for (const auto& p : params) {
        put_le(out, static_cast<std::uint64_t>(p.name.size()));
        out += p.name;
        put_le(out, static_cast<std::uint8_t>(p.trainable ? 1 : 0));
        put_le(out, static_cast<std::uint64_t>(p.value.rank()));
        for (auto e : p.value.shape()) put_le(out, static_cast<std::uint64_t>(e));
        for (auto v : p.value.values()) put_le(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof(magic) || std::memcmp(bytes.data(), magic, sizeof(magic)) != 0) {
        throw ParseError("not a checkpoint file (bad magic)");
    }
    Reader in(bytes, sizeof(magic));
    const auto version = in.get<std::uint32_t>();
    if (version != checkpoint_version) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.metadata = in.get_string(in.get<std::uint64_t>());
    const auto count = in.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = in.get_string(in.get<std::uint64_t>());
        const bool trainable = in.get<std::uint8_t>() != 0;
        const auto rank = in.get<std::uint64_t>();
        if (rank == 0 || rank > 8) throw ParseError("checkpoint tensor '" + name + "' has invalid rank");
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& e : shape) {
            e = in.get<std::uint64_t>();
            n *= e;
        }
        std::vector<Real> values(n);
        for (auto& v : values) v = in.get<double>();
        ck.params.add(std::move(name), Tensor(std::move(shape), std::move(values)), trainable);
    }
    if (!in.at_end()) throw ParseError("trailing bytes after checkpoint payload");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const std::string& metadata) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint: " + path.string());
    const std::string bytes = encode_checkpoint(params, metadata);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str());
}

} // namespace nclust::diff
