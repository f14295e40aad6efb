#pragma once

// Gradient-projection diagnostics between the CSC and fusion tasks, measured
// over the shared (fusion model) parameters: the projection coefficient
// alpha_cf of the CSC gradient onto the fusion gradient, and their cosine.
// Negative values of either mean the task gradients conflict.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ssvif {

struct ProjectionRecord {
    int64_t step = 0;
    double alpha_cf = 0.0;
    double cos_phi = 0.0;
    bool conflicting = false;
    bool skipped = false; // fusion gradient norm was zero; alpha undefined
};

struct ProjectionReport {
    std::vector<ProjectionRecord> records;

    void add(int64_t step, std::span<const float> g_csc, std::span<const float> g_fusion);
};

struct ProjectionPair {
    double alpha_cf;
    double cos_phi;
};

/// alpha = (g_csc . g_fusion) / |g_fusion|^2, cos = (g_csc . g_fusion) /
/// (|g_csc| |g_fusion|). Preconditions: same length, |g_fusion| > 0 for
/// alpha and both norms > 0 for the cosine.
ProjectionPair projection_coefficient(std::span<const float> g_csc,
                                      std::span<const float> g_fusion);

struct ProjectionSummary {
    double mean_alpha = 0.0;
    double mean_cos = 0.0;
    double conflict_fraction = 0.0;
    int64_t count = 0;   // valid (non-skipped) records
    int64_t skipped = 0;
};

/// Summary over the valid records; throws ContractError when none exist.
ProjectionSummary summarize(const ProjectionReport& report);

std::string to_text(const ProjectionSummary& summary);

/// Tab-separated dump: step alpha_cf cos_phi conflicting skipped.
void dump_records(const ProjectionReport& report, const std::string& path);

} // namespace ssvif
