#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssvif/errors.hpp"
#include "ssvif/tensor.hpp"

namespace ssvif {

enum class ParamGroup { fusion_backbone, fusion_decoder, seg_head, seg_model };

inline const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::fusion_backbone: return "fusion_backbone";
        case ParamGroup::fusion_decoder: return "fusion_decoder";
        case ParamGroup::seg_head: return "seg_head";
        case ParamGroup::seg_model: return "seg_model";
    }
    return "?";
}

constexpr std::array<ParamGroup, 4> kAllGroups = {
    ParamGroup::fusion_backbone, ParamGroup::fusion_decoder, ParamGroup::seg_head,
    ParamGroup::seg_model};

/// The GDWA/diagnostics "shared parameters" are exactly the fusion model.
constexpr std::array<ParamGroup, 2> kSharedGroups = {ParamGroup::fusion_backbone,
                                                     ParamGroup::fusion_decoder};

struct ParamEntry {
    std::string name;
    ParamGroup group;
    Tensor tensor;
};

/// Named parameter tensors with deterministic iteration order (insertion
/// order, which is fixed by model construction order).
class ParamRegistry {
public:
    Tensor add(ParamGroup group, const std::string& name, Shape shape) {
        const std::string full = std::string(to_string(group)) + "." + name;
        if (index_.count(full)) throw ContractError("registry: duplicate parameter " + full);
        Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
        index_[full] = entries_.size();
        entries_.push_back({full, group, t});
        return t;
    }

    size_t size() const { return entries_.size(); }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    const ParamEntry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("registry: unknown parameter " + name);
        return entries_[it->second];
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    int64_t param_count(std::span<const ParamGroup> groups) const {
        int64_t n = 0;
        for (const auto& e : entries_) {
            if (in_groups(e.group, groups)) n += e.tensor.numel();
        }
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    /// Flattened gradients over the given groups, in registry order.
    /// Parameters without a populated grad contribute zeros.
    std::vector<float> flatten_grads(std::span<const ParamGroup> groups) const {
        std::vector<float> out;
        out.reserve(size_t(param_count(groups)));
        for (const auto& e : entries_) {
            if (!in_groups(e.group, groups)) continue;
            if (e.tensor.has_grad()) {
                const auto& g = e.tensor.grad();
                out.insert(out.end(), g.begin(), g.end());
            } else {
                out.insert(out.end(), size_t(e.tensor.numel()), 0.0f);
            }
        }
        return out;
    }

    /// Snapshot of all grads in registry order (one vector per entry).
    std::vector<std::vector<float>> snapshot_grads() const {
        std::vector<std::vector<float>> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) {
            if (e.tensor.has_grad()) {
                out.push_back(e.tensor.grad());
            } else {
                out.emplace_back(size_t(e.tensor.numel()), 0.0f);
            }
        }
        return out;
    }

    double grad_sq_norm(std::span<const ParamGroup> groups) const {
        double acc = 0.0;
        for (const auto& e : entries_) {
            if (!in_groups(e.group, groups) || !e.tensor.has_grad()) continue;
            for (float g : e.tensor.grad()) acc += double(g) * double(g);
        }
        return acc;
    }

    static bool in_groups(ParamGroup g, std::span<const ParamGroup> groups) {
        for (ParamGroup q : groups) {
            if (q == g) return true;
        }
        return false;
    }

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

} // namespace ssvif
