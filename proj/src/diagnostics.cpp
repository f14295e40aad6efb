#include "ssvif/diagnostics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ssvif/errors.hpp"

namespace ssvif {

namespace {

struct Dots {
    double ab = 0.0, aa = 0.0, bb = 0.0;
};

Dots dots(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionError("projection: gradient vectors differ in length, " +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    Dots d;
    for (size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        d.ab += x * y;
        d.aa += x * x;
        d.bb += y * y;
    }
    return d;
}

} // namespace

ProjectionPair projection_coefficient(std::span<const float> g_csc,
                                      std::span<const float> g_fusion) {
    const Dots d = dots(g_csc, g_fusion);
    if (d.bb <= 0.0) throw ContractError("projection: fusion gradient norm is zero");
    ProjectionPair p{};
    p.alpha_cf = d.ab / d.bb;
    if (d.aa <= 0.0) {
        p.cos_phi = 0.0; // zero CSC gradient: no direction, alpha is 0 as well
    } else {
        p.cos_phi = d.ab / (std::sqrt(d.aa) * std::sqrt(d.bb));
    }
    return p;
}

void ProjectionReport::add(int64_t step, std::span<const float> g_csc,
                           std::span<const float> g_fusion) {
    const Dots d = dots(g_csc, g_fusion);
    ProjectionRecord rec;
    rec.step = step;
    if (d.bb <= 0.0) {
        rec.skipped = true;
    } else {
        rec.alpha_cf = d.ab / d.bb;
        rec.cos_phi = d.aa > 0.0 ? d.ab / (std::sqrt(d.aa) * std::sqrt(d.bb)) : 0.0;
        rec.conflicting = rec.cos_phi < 0.0;
    }
    records.push_back(rec);
}

ProjectionSummary summarize(const ProjectionReport& report) {
    ProjectionSummary s;
    for (const auto& r : report.records) {
        if (r.skipped) {
            ++s.skipped;
            continue;
        }
        s.mean_alpha += r.alpha_cf;
        s.mean_cos += r.cos_phi;
        s.conflict_fraction += r.conflicting ? 1.0 : 0.0;
        ++s.count;
    }
    if (s.count == 0) throw ContractError("projection: no valid records to summarize");
    s.mean_alpha /= double(s.count);
    s.mean_cos /= double(s.count);
    s.conflict_fraction /= double(s.count);
    return s;
}

std::string to_text(const ProjectionSummary& s) {
    std::ostringstream os;
    os << "projection records: " << s.count;
    if (s.skipped) os << " (+" << s.skipped << " skipped)";
    os << "\nmean alpha_cf: " << s.mean_alpha << "\nmean cos_phi: " << s.mean_cos
       << "\nconflict fraction: " << s.conflict_fraction << "\n";
    return os.str();
}

void dump_records(const ProjectionReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("projection: cannot open " + path + " for writing");
    out << "step\talpha_cf\tcos_phi\tconflicting\tskipped\n";
    for (const auto& r : report.records) {
        out << r.step << "\t" << r.alpha_cf << "\t" << r.cos_phi << "\t" << (r.conflicting ? 1 : 0)
            << "\t" << (r.skipped ? 1 : 0) << "\n";
    }
}

} // namespace ssvif
