#pragma once

// Checkpoint container. Layout (all integers little-endian):
//   magic "SSVF", format version u16,
//   tensor count u32,
//   per tensor: name length u32 + UTF-8 name, rank u32, extents u32 each,
//               dtype tag u8 (0 = float32),
//   raw float32 payloads in manifest order,
//   meta block: u32 byte length + "key = value\n" text lines.
// Round trips are bit-exact; meta reals are stored as hexfloats.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssvif/registry.hpp"
#include "ssvif/tensor.hpp"

namespace ssvif {

struct NamedTensorData {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::vector<NamedTensorData> tensors;
    std::map<std::string, std::string> meta;

    bool has(const std::string& name) const;
    const NamedTensorData& tensor(const std::string& name) const;
    const std::string& meta_at(const std::string& key) const;
    bool has_meta(const std::string& key) const { return meta.count(key) != 0; }
};

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

/// Registry parameters as checkpoint tensors (names are the registry names).
void append_registry_tensors(Checkpoint& ckpt, const ParamRegistry& reg);

/// Copies checkpoint tensors into matching registry parameters (shape-checked,
/// bitwise). Throws if any registry parameter is missing from the checkpoint.
void restore_registry_tensors(const Checkpoint& ckpt, ParamRegistry& reg);

// Exact-round-trip encoding for reals in the meta block.
std::string format_exact(double v);
double parse_exact(const std::string& s);

} // namespace ssvif
