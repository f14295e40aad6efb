#pragma once

// Independent naive reference implementations used as oracles. These are
// deliberately written as plain double loops over pixels, with no use of the
// tensor engine, so they can disagree with it.

#include <cmath>
#include <vector>

namespace oracles {

struct Plane {
    int h = 0, w = 0;
    std::vector<double> v; // h*w

    double at(int y, int x) const { return v[size_t(y) * size_t(w) + size_t(x)]; }
};

inline Plane sobel_mag(const Plane& p, double delta = 1e-12) {
    static const int KX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int KY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    Plane out{p.h, p.w, std::vector<double>(p.v.size())};
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            double gx = 0, gy = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const double val = p.at(clampi(y + dy, p.h - 1), clampi(x + dx, p.w - 1));
                    gx += KX[dy + 1][dx + 1] * val;
                    gy += KY[dy + 1][dx + 1] * val;
                }
            }
            out.v[size_t(y) * size_t(p.w) + size_t(x)] = std::sqrt(gx * gx + gy * gy + delta);
        }
    }
    return out;
}

inline double intensity(const Plane& f, const Plane& ir, const Plane& vis) {
    double acc = 0;
    for (size_t i = 0; i < f.v.size(); ++i) {
        acc += std::abs(f.v[i] - std::max(ir.v[i], vis.v[i]));
    }
    return acc / double(f.v.size());
}

inline double gradient(const Plane& f, const Plane& ir, const Plane& vis) {
    const Plane gf = sobel_mag(f), gi = sobel_mag(ir), gv = sobel_mag(vis);
    double acc = 0;
    for (size_t i = 0; i < f.v.size(); ++i) {
        acc += std::abs(gf.v[i] - std::max(gi.v[i], gv.v[i]));
    }
    return acc / double(f.v.size());
}

struct Ycc {
    double y, cb, cr;
};

inline Ycc to_ycbcr(double r, double g, double b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return {y, 0.5 + (b - y) * 0.564, 0.5 + (r - y) * 0.713};
}

// rgb planes packed channel-major: rgb[c][pixel]
inline double color(const std::vector<double>& f_rgb, const std::vector<double>& v_rgb,
                    int64_t hw) {
    double acc_cb = 0, acc_cr = 0;
    for (int64_t p = 0; p < hw; ++p) {
        const Ycc fc = to_ycbcr(f_rgb[size_t(p)], f_rgb[size_t(hw + p)], f_rgb[size_t(2 * hw + p)]);
        const Ycc vc = to_ycbcr(v_rgb[size_t(p)], v_rgb[size_t(hw + p)], v_rgb[size_t(2 * hw + p)]);
        acc_cb += std::abs(fc.cb - vc.cb);
        acc_cr += std::abs(fc.cr - vc.cr);
    }
    return 0.5 * (acc_cb / double(hw) + acc_cr / double(hw));
}

// probs[c*hw + p]; classes per pixel
inline double cross_entropy(const std::vector<double>& probs, const std::vector<int>& cls,
                            int /*n*/, int64_t hw, bool normalize, double eps = 1e-12) {
    double acc = 0;
    for (int64_t p = 0; p < hw; ++p) {
        acc -= std::log(probs[size_t(int64_t(cls[size_t(p)]) * hw + p)] + eps);
    }
    return normalize ? acc / double(hw) : acc;
}

inline double dice(const std::vector<double>& probs, const std::vector<int>& cls, int n,
                   int64_t hw, double eps = 1e-6) {
    double acc = 0;
    for (int c = 0; c < n; ++c) {
        double inter = 0, pred = 0, target = 0;
        for (int64_t p = 0; p < hw; ++p) {
            const double pv = probs[size_t(int64_t(c) * hw + p)];
            pred += pv;
            if (cls[size_t(p)] == c) {
                inter += pv;
                target += 1.0;
            }
        }
        acc += 2.0 * inter / (pred + target + eps);
    }
    return 1.0 - acc / double(n);
}

inline double hybrid(const std::vector<double>& probs, const std::vector<int>& cls, int n,
                     int64_t hw, bool normalize_ce, double dice_eps = 1e-6) {
    return cross_entropy(probs, cls, n, hw, normalize_ce) + dice(probs, cls, n, hw, dice_eps);
}

struct PseudoOracle {
    std::vector<int> classes;
    std::vector<int> source; // 0 = A, 1 = B
};

inline PseudoOracle pseudo_label(const std::vector<double>& pa, const std::vector<double>& pb,
                                 int n, int64_t hw) {
    PseudoOracle out;
    out.classes.resize(size_t(hw));
    out.source.resize(size_t(hw));
    for (int64_t p = 0; p < hw; ++p) {
        double ma = pa[size_t(p)], mb = pb[size_t(p)];
        int aa = 0, ab = 0;
        for (int c = 1; c < n; ++c) {
            if (pa[size_t(int64_t(c) * hw + p)] > ma) {
                ma = pa[size_t(int64_t(c) * hw + p)];
                aa = c;
            }
            if (pb[size_t(int64_t(c) * hw + p)] > mb) {
                mb = pb[size_t(int64_t(c) * hw + p)];
                ab = c;
            }
        }
        if (ma > mb) {
            out.classes[size_t(p)] = aa;
            out.source[size_t(p)] = 0;
        } else { // ties go to branch B
            out.classes[size_t(p)] = ab;
            out.source[size_t(p)] = 1;
        }
    }
    return out;
}

inline double csc(const std::vector<double>& pa, const std::vector<double>& pb, int n, int64_t hw,
                  bool normalize_ce = true, double dice_eps = 1e-6) {
    const auto pseudo = pseudo_label(pa, pb, n, hw);
    return 0.5 * (hybrid(pa, pseudo.classes, n, hw, normalize_ce, dice_eps) +
                  hybrid(pb, pseudo.classes, n, hw, normalize_ce, dice_eps));
}

// --- Q_abf ------------------------------------------------------------------

inline void sobel_xy(const Plane& p, int y, int x, double& gx, double& gy) {
    static const int KX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int KY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    gx = 0;
    gy = 0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const double val = p.at(clampi(y + dy, p.h - 1), clampi(x + dx, p.w - 1));
            gx += KX[dy + 1][dx + 1] * val;
            gy += KY[dy + 1][dx + 1] * val;
        }
    }
}

inline double qabf(const Plane& f, const Plane& a, const Plane& b) {
    const double pi = 3.14159265358979323846;
    double num = 0, den = 0;
    for (int y = 0; y < f.h; ++y) {
        for (int x = 0; x < f.w; ++x) {
            double gfx, gfy, gax, gay, gbx, gby;
            sobel_xy(f, y, x, gfx, gfy);
            sobel_xy(a, y, x, gax, gay);
            sobel_xy(b, y, x, gbx, gby);
            auto fold = [&](double gy_, double gx_) {
                double al = std::atan2(gy_, gx_);
                if (al > pi / 2) al -= pi;
                if (al < -pi / 2) al += pi;
                return al;
            };
            const double gf = std::hypot(gfx, gfy), ga = std::hypot(gax, gay),
                         gb = std::hypot(gbx, gby);
            const double af = fold(gfy, gfx), aa = fold(gay, gax), ab = fold(gby, gbx);
            auto pres = [&](double gs, double as) {
                double big_g;
                if (gs > gf) {
                    big_g = gf / gs;
                } else if (gs < gf) {
                    big_g = gs / gf;
                } else {
                    big_g = 1.0;
                }
                const double big_a = 1.0 - std::abs(as - af) / (pi / 2.0);
                const double qg = 0.9994 / (1.0 + std::exp(-15.0 * (big_g - 0.5)));
                const double qa = 0.9879 / (1.0 + std::exp(-22.0 * (big_a - 0.8)));
                return qg * qa;
            };
            num += pres(ga, aa) * ga + pres(gb, ab) * gb;
            den += ga + gb;
        }
    }
    return den > 0 ? num / den : 0.0;
}

} // namespace oracles
