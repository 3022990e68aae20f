#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

#include "omvp/tensor/params.hpp"

// Binary layout, all integers and doubles little-endian:
//   "OMVPCKPT" | u32 version | u32 n_meta | n_meta x (str key, str value)
//   | u32 n_params | n_params x (str name, u32 rank, rank x u64 dim, f64 values...)
// where str is u32 length followed by the bytes.

namespace omvp::tensor {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'O', 'M', 'V', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::map<std::string, std::string> metadata;
    ParamSet params;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint64_t get_bytes(std::istream& is, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) throw CheckpointError("checkpoint truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}
inline std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
inline std::uint64_t get_u64(std::istream& is) { return get_bytes(is, 8); }
inline std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    if (n > (1u << 20)) throw CheckpointError("checkpoint string length implausible");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (static_cast<std::uint32_t>(is.gcount()) != n) throw CheckpointError("checkpoint truncated");
    return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os.write(kCheckpointMagic, 8);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(ck.metadata.size()));
    for (const auto& [k, v] : ck.metadata) {
        detail::put_str(os, k);
        detail::put_str(os, v);
    }
    detail::put_u32(os, static_cast<std::uint32_t>(ck.params.size()));
    for (const auto& p : ck.params) {
        detail::put_str(os, p.name);
        detail::put_u32(os, static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) detail::put_u64(os, d);
        for (double x : p.value.values()) detail::put_u64(os, std::bit_cast<std::uint64_t>(x));
    }
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || !std::equal(magic, magic + 8, kCheckpointMagic))
        throw CheckpointError("not a checkpoint file (bad magic)");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const std::uint32_t n_meta = detail::get_u32(is);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = detail::get_str(is);
        ck.metadata[k] = detail::get_str(is);
    }
    const std::uint32_t n_params = detail::get_u32(is);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = detail::get_str(is);
        const std::uint32_t rank = detail::get_u32(is);
        if (rank > 8) throw CheckpointError("checkpoint rank implausible for " + name);
        Shape shape(rank);
        for (auto& d : shape) d = detail::get_u64(is);
        std::vector<double> values(element_count(shape));
        for (auto& x : values) x = std::bit_cast<double>(detail::get_u64(is));
        ck.params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    write_checkpoint(os, ck);
    if (!os) throw CheckpointError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
    return read_checkpoint(is);
}

}  // namespace omvp::tensor
