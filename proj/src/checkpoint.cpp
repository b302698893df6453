#include "promptrr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace promptrr {
namespace {

constexpr char kMagic[5] = {'P', 'R', 'R', 'K', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw TensorError("checkpoint: truncated file " + path);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::string header_text(const CheckpointMeta& meta) {
    std::ostringstream h;
    h << "preset=" << meta.preset << "\n";
    h << "stage=" << meta.stage << "\n";
    h << "iteration=" << meta.iteration << "\n";
    h << "seed=" << meta.seed << "\n";
    h << "config_hash=" << meta.config_hash << "\n";
    return h.str();
}

CheckpointMeta parse_header(const std::string& text, const std::string& path) {
    CheckpointMeta meta;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw TensorError("checkpoint: malformed header line '" + line + "' in " + path);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "preset")
            meta.preset = value;
        else if (key == "stage")
            meta.stage = value;
        else if (key == "iteration")
            meta.iteration = std::stol(value);
        else if (key == "seed")
            meta.seed = std::stoull(value);
        else if (key == "config_hash")
            meta.config_hash = value;
        else
            throw TensorError("checkpoint: unknown header key '" + key + "' in " + path);
    }
    return meta;
}

std::ifstream open_and_check_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorError("checkpoint: cannot open " + path);
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
        throw TensorError("checkpoint: " + path + " is not a PRRK1 checkpoint");
    return in;
}

CheckpointMeta read_meta_from(std::ifstream& in, const std::string& path) {
    const std::uint32_t hlen = get_u32(in, path);
    std::string header(hlen, '\0');
    if (!in.read(header.data(), hlen)) throw TensorError("checkpoint: truncated header in " + path);
    return parse_header(header, path);
}

}  // namespace

std::string text_hash(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamRegistry& reg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TensorError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 5);
    const std::string header = header_text(meta);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    put_u32(out, static_cast<std::uint32_t>(reg.entries().size()));
    for (const auto& e : reg.entries()) {
        put_u32(out, static_cast<std::uint32_t>(e.first.size()));
        out.write(e.first.data(), static_cast<std::streamsize>(e.first.size()));
        const Shape& shape = e.second.shape();
        put_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
        auto data = e.second.data();
        static_assert(sizeof(float) == 4);
        // float bytes are already little-endian on every supported target
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * 4));
    }
    if (!out) throw TensorError("checkpoint: write failed for " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamRegistry& reg) {
    std::ifstream in = open_and_check_magic(path);
    const CheckpointMeta meta = read_meta_from(in, path);

    const std::uint32_t count = get_u32(in, path);
    if (count != reg.entries().size())
        throw TensorError("checkpoint: " + path + " holds " + std::to_string(count) +
                          " tensors but the model has " + std::to_string(reg.entries().size()));
    for (const auto& e : reg.entries()) {
        const std::uint32_t nlen = get_u32(in, path);
        std::string name(nlen, '\0');
        if (!in.read(name.data(), nlen)) throw TensorError("checkpoint: truncated name in " + path);
        if (name != e.first)
            throw TensorError("checkpoint: tensor order mismatch, file has '" + name +
                              "' where the model expects '" + e.first + "'");
        const std::uint32_t rank = get_u32(in, path);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i)
            shape[i] = static_cast<int>(get_u32(in, path));
        if (shape != e.second.shape())
            throw TensorError("checkpoint: shape mismatch for '" + name + "': file " +
                              shape_str(shape) + " vs model " + shape_str(e.second.shape()));
        Tensor t = e.second;  // shared storage; load in place
        auto data = t.data();
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * 4)))
            throw TensorError("checkpoint: truncated values for '" + name + "' in " + path);
    }
    return meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream in = open_and_check_magic(path);
    return read_meta_from(in, path);
}

}  // namespace promptrr
