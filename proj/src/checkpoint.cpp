#include "ssvif/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "ssvif/errors.hpp"

namespace ssvif {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'V', 'F'};
constexpr uint16_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void put_u16(std::string& out, uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw IoError("checkpoint: " + what + " at byte " + std::to_string(pos));
    }
    void need(size_t n) const {
        if (buf.size() - pos < n) fail("truncated file");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint8_t(buf[pos + 1])) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint8_t u8() {
        need(1);
        return uint8_t(buf[pos++]);
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

bool Checkpoint::has(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return true;
    }
    return false;
}

const NamedTensorData& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw IoError("checkpoint: missing tensor " + name);
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("checkpoint: missing meta key " + key);
    return it->second;
}

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u16(out, kVersion);
    put_u32(out, uint32_t(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        if (int64_t(t.data.size()) != shape_numel(t.shape)) {
            throw ContractError("checkpoint: tensor " + t.name + " data/shape mismatch");
        }
        put_u32(out, uint32_t(t.name.size()));
        out.append(t.name);
        put_u32(out, uint32_t(t.shape.size()));
        for (int e : t.shape) put_u32(out, uint32_t(e));
        out.push_back(char(kDtypeF32));
    }
    for (const auto& t : ckpt.tensors) {
        // float32 payloads, little-endian (static_assert'd by the build target)
        const size_t n = t.data.size() * sizeof(float);
        const size_t base = out.size();
        out.resize(base + n);
        std::memcpy(out.data() + base, t.data.data(), n);
    }
    std::string meta_block;
    for (const auto& [k, v] : ckpt.meta) {
        meta_block += k;
        meta_block += " = ";
        meta_block += v;
        meta_block += "\n";
    }
    put_u32(out, uint32_t(meta_block.size()));
    out.append(meta_block);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open " + path + " for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw IoError("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};

    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw IoError("checkpoint: bad magic in " + path);
    }
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != kVersion) {
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const uint32_t count = r.u32();
    Checkpoint ckpt;
    ckpt.tensors.resize(count);
    for (auto& t : ckpt.tensors) {
        const uint32_t name_len = r.u32();
        t.name = r.bytes(name_len);
        const uint32_t rank = r.u32();
        if (rank > 8) r.fail("implausible tensor rank");
        t.shape.resize(rank);
        for (auto& e : t.shape) e = int(r.u32());
        const uint8_t dtype = r.u8();
        if (dtype != kDtypeF32) r.fail("unsupported dtype tag " + std::to_string(dtype));
    }
    for (auto& t : ckpt.tensors) {
        const int64_t n = shape_numel(t.shape);
        r.need(size_t(n) * sizeof(float));
        t.data.resize(size_t(n));
        std::memcpy(t.data.data(), buf.data() + r.pos, size_t(n) * sizeof(float));
        r.pos += size_t(n) * sizeof(float);
    }
    const uint32_t meta_len = r.u32();
    std::string meta_block = r.bytes(meta_len);
    size_t start = 0;
    while (start < meta_block.size()) {
        size_t end = meta_block.find('\n', start);
        if (end == std::string::npos) end = meta_block.size();
        const std::string line = meta_block.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const size_t sep = line.find(" = ");
        if (sep == std::string::npos) throw IoError("checkpoint: malformed meta line '" + line + "'");
        ckpt.meta[line.substr(0, sep)] = line.substr(sep + 3);
    }
    return ckpt;
}

void append_registry_tensors(Checkpoint& ckpt, const ParamRegistry& reg) {
    for (const auto& e : reg.entries()) {
        ckpt.tensors.push_back({e.name, e.tensor.shape(), e.tensor.values()});
    }
}

void restore_registry_tensors(const Checkpoint& ckpt, ParamRegistry& reg) {
    for (const auto& e : reg.entries()) {
        const auto& t = ckpt.tensor(e.name);
        if (t.shape != e.tensor.shape()) {
            throw IoError("checkpoint: shape mismatch for " + e.name + ": file " +
                          shape_str(t.shape) + " vs model " + shape_str(e.tensor.shape()));
        }
        Tensor dst = e.tensor;
        dst.mutable_values() = t.data;
    }
}

std::string format_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_exact(const std::string& s) {
    return std::strtod(s.c_str(), nullptr);
}

} // namespace ssvif
