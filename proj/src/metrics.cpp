#include "ssvif/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ssvif/errors.hpp"
#include "ssvif/imageio.hpp"
#include "ssvif/losses.hpp"

namespace ssvif {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_rgb(const Tensor& t, const char* who) {
    if (t.rank() != 3 || t.dim(0) != 3) {
        throw DimensionError(std::string(who) + ": expected [3,H,W], got " + shape_str(t.shape()));
    }
}

} // namespace

std::vector<uint8_t> quantize_luminance_u8(const Tensor& rgb) {
    check_rgb(rgb, "quantize_luminance_u8");
    const int h = rgb.dim(1), w = rgb.dim(2);
    const int64_t hw = int64_t(h) * w;
    const auto& v = rgb.values();
    std::vector<uint8_t> out(static_cast<size_t>(hw));
    for (int64_t p = 0; p < hw; ++p) {
        const double y = 0.299 * v[size_t(p)] + 0.587 * v[size_t(hw + p)] + 0.114 * v[size_t(2 * hw + p)];
        out[size_t(p)] = uint8_t(std::clamp(std::floor(y * 255.0 + 0.5), 0.0, 255.0));
    }
    return out;
}

std::vector<double> luminance_plane(const Tensor& rgb) {
    check_rgb(rgb, "luminance_plane");
    const int64_t hw = int64_t(rgb.dim(1)) * rgb.dim(2);
    const auto& v = rgb.values();
    std::vector<double> out(static_cast<size_t>(hw));
    for (int64_t p = 0; p < hw; ++p) {
        out[size_t(p)] = 0.299 * v[size_t(p)] + 0.587 * v[size_t(hw + p)] + 0.114 * v[size_t(2 * hw + p)];
    }
    return out;
}

double entropy(const std::vector<uint8_t>& gray) {
    if (gray.empty()) throw ContractError("entropy: empty image");
    std::array<int64_t, 256> hist{};
    for (uint8_t v : gray) ++hist[v];
    const double n = double(gray.size());
    double h = 0.0;
    for (int64_t c : hist) {
        if (c == 0) continue;
        const double p = double(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

double mutual_information_pair(const std::vector<uint8_t>& x, const std::vector<uint8_t>& y) {
    if (x.size() != y.size() || x.empty()) {
        throw DimensionError("mutual_information: image size mismatch");
    }
    std::vector<int64_t> joint(256 * 256, 0);
    std::array<int64_t, 256> hx{}, hy{};
    for (size_t i = 0; i < x.size(); ++i) {
        ++joint[size_t(x[i]) * 256 + y[i]];
        ++hx[x[i]];
        ++hy[y[i]];
    }
    const double n = double(x.size());
    double mi = 0.0;
    for (int a = 0; a < 256; ++a) {
        if (hx[size_t(a)] == 0) continue;
        for (int b = 0; b < 256; ++b) {
            const int64_t c = joint[size_t(a) * 256 + size_t(b)];
            if (c == 0) continue;
            const double pxy = double(c) / n;
            const double px = double(hx[size_t(a)]) / n;
            const double py = double(hy[size_t(b)]) / n;
            mi += pxy * std::log2(pxy / (px * py));
        }
    }
    return mi;
}

double mutual_information(const std::vector<uint8_t>& fused, const std::vector<uint8_t>& src_a,
                          const std::vector<uint8_t>& src_b) {
    return mutual_information_pair(fused, src_a) + mutual_information_pair(fused, src_b);
}

double ssim_metric(const std::vector<double>& fused_y, const std::vector<double>& ref_y, int h,
                   int w) {
    if (fused_y.size() != size_t(int64_t(h) * w) || ref_y.size() != fused_y.size()) {
        throw DimensionError("ssim_metric: plane size mismatch");
    }
    NoGradGuard ng;
    auto x = TensorD::from_vector({1, h, w}, fused_y);
    auto y = TensorD::from_vector({1, h, w}, ref_y);
    return mean_ssim(x, y).item();
}

// --- Q_abf ----------------------------------------------------------------

namespace {

struct EdgeField {
    std::vector<double> strength;
    std::vector<double> alpha;
};

// Sobel with replicate padding, matching the training-loss operator.
EdgeField sobel_edges(const std::vector<double>& img, int h, int w) {
    static const int KX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int KY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    EdgeField f;
    f.strength.resize(size_t(int64_t(h) * w));
    f.alpha.resize(f.strength.size());
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const double v = img[size_t(int64_t(clampi(y + dy, h - 1)) * w +
                                                clampi(x + dx, w - 1))];
                    gx += KX[dy + 1][dx + 1] * v;
                    gy += KY[dy + 1][dx + 1] * v;
                }
            }
            const size_t i = size_t(int64_t(y) * w + x);
            f.strength[i] = std::sqrt(gx * gx + gy * gy);
            // orientation folded into [-pi/2, pi/2]
            double a = std::atan2(gy, gx);
            if (a > kPi / 2) a -= kPi;
            if (a < -kPi / 2) a += kPi;
            f.alpha[i] = a;
        }
    }
    return f;
}

// canonical Xydeas-Petrovic preservation constants
constexpr double kGammaG = 0.9994, kKappaG = -15.0, kSigmaG = 0.5;
constexpr double kGammaA = 0.9879, kKappaA = -22.0, kSigmaA = 0.8;

double edge_preservation(double g_src, double a_src, double g_f, double a_f) {
    double big_g;
    if (g_src > g_f) {
        big_g = g_f / g_src;
    } else if (g_src < g_f) {
        big_g = g_src / g_f;
    } else {
        big_g = 1.0; // equal strengths (including both zero): fully preserved
    }
    const double big_a = 1.0 - std::abs(a_src - a_f) / (kPi / 2.0);
    const double qg = kGammaG / (1.0 + std::exp(kKappaG * (big_g - kSigmaG)));
    const double qa = kGammaA / (1.0 + std::exp(kKappaA * (big_a - kSigmaA)));
    return qg * qa;
}

} // namespace

double qabf(const std::vector<double>& fused_y, const std::vector<double>& ir_y,
            const std::vector<double>& vis_y, int h, int w) {
    const size_t n = size_t(int64_t(h) * w);
    if (fused_y.size() != n || ir_y.size() != n || vis_y.size() != n) {
        throw DimensionError("qabf: plane size mismatch");
    }
    const EdgeField ef = sobel_edges(fused_y, h, w);
    const EdgeField ea = sobel_edges(ir_y, h, w);
    const EdgeField eb = sobel_edges(vis_y, h, w);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double qa = edge_preservation(ea.strength[i], ea.alpha[i], ef.strength[i], ef.alpha[i]);
        const double qb = edge_preservation(eb.strength[i], eb.alpha[i], ef.strength[i], ef.alpha[i]);
        num += qa * ea.strength[i] + qb * eb.strength[i];
        den += ea.strength[i] + eb.strength[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

// --- Delta-E (CIEDE2000) ----------------------------------------------------

namespace {

double srgb_gamma_inv(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

} // namespace

Lab srgb_to_lab(double r, double g, double b) {
    const double rl = srgb_gamma_inv(r), gl = srgb_gamma_inv(g), bl = srgb_gamma_inv(b);
    // sRGB D65
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double fx = lab_f(x / 0.95047);
    const double fy = lab_f(y / 1.0);
    const double fz = lab_f(z / 1.08883);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double ciede2000(const Lab& c1, const Lab& c2) {
    const double deg2rad = kPi / 180.0;
    const double c_ab1 = std::hypot(c1.a, c1.b);
    const double c_ab2 = std::hypot(c2.a, c2.b);
    const double c_bar = (c_ab1 + c_ab2) / 2.0;
    const double c_bar7 = std::pow(c_bar, 7.0);
    const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + std::pow(25.0, 7.0))));
    const double a1p = (1.0 + g) * c1.a;
    const double a2p = (1.0 + g) * c2.a;
    const double c1p = std::hypot(a1p, c1.b);
    const double c2p = std::hypot(a2p, c2.b);
    auto hue = [&](double a, double b) {
        if (a == 0.0 && b == 0.0) return 0.0;
        double h = std::atan2(b, a) / deg2rad;
        return h < 0.0 ? h + 360.0 : h;
    };
    const double h1p = hue(a1p, c1.b);
    const double h2p = hue(a2p, c2.b);

    const double dlp = c2.l - c1.l;
    const double dcp = c2p - c1p;
    double dhp;
    if (c1p * c2p == 0.0) {
        dhp = 0.0;
    } else if (std::abs(h2p - h1p) <= 180.0) {
        dhp = h2p - h1p;
    } else if (h2p - h1p > 180.0) {
        dhp = h2p - h1p - 360.0;
    } else {
        dhp = h2p - h1p + 360.0;
    }
    const double dbig_hp = 2.0 * std::sqrt(c1p * c2p) * std::sin(dhp * deg2rad / 2.0);

    const double lbp = (c1.l + c2.l) / 2.0;
    const double cbp = (c1p + c2p) / 2.0;
    double hbp;
    if (c1p * c2p == 0.0) {
        hbp = h1p + h2p;
    } else if (std::abs(h1p - h2p) <= 180.0) {
        hbp = (h1p + h2p) / 2.0;
    } else if (h1p + h2p < 360.0) {
        hbp = (h1p + h2p + 360.0) / 2.0;
    } else {
        hbp = (h1p + h2p - 360.0) / 2.0;
    }

    const double t = 1.0 - 0.17 * std::cos((hbp - 30.0) * deg2rad) +
                     0.24 * std::cos(2.0 * hbp * deg2rad) +
                     0.32 * std::cos((3.0 * hbp + 6.0) * deg2rad) -
                     0.20 * std::cos((4.0 * hbp - 63.0) * deg2rad);
    const double dtheta = 30.0 * std::exp(-((hbp - 275.0) / 25.0) * ((hbp - 275.0) / 25.0));
    const double cbp7 = std::pow(cbp, 7.0);
    const double rc = 2.0 * std::sqrt(cbp7 / (cbp7 + std::pow(25.0, 7.0)));
    const double lb50 = (lbp - 50.0) * (lbp - 50.0);
    const double sl = 1.0 + 0.015 * lb50 / std::sqrt(20.0 + lb50);
    const double sc = 1.0 + 0.045 * cbp;
    const double sh = 1.0 + 0.015 * cbp * t;
    const double rt = -std::sin(2.0 * dtheta * deg2rad) * rc;

    const double tl = dlp / sl;
    const double tc = dcp / sc;
    const double th = dbig_hp / sh;
    return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double delta_e(const Tensor& fused_rgb, const Tensor& vis_rgb) {
    check_rgb(fused_rgb, "delta_e");
    if (fused_rgb.shape() != vis_rgb.shape()) {
        throw DimensionError("delta_e: shape mismatch " + shape_str(fused_rgb.shape()) + " vs " +
                             shape_str(vis_rgb.shape()));
    }
    const int64_t hw = int64_t(fused_rgb.dim(1)) * fused_rgb.dim(2);
    const auto& f = fused_rgb.values();
    const auto& v = vis_rgb.values();
    double acc = 0.0;
    for (int64_t p = 0; p < hw; ++p) {
        const Lab lf = srgb_to_lab(f[size_t(p)], f[size_t(hw + p)], f[size_t(2 * hw + p)]);
        const Lab lv = srgb_to_lab(v[size_t(p)], v[size_t(hw + p)], v[size_t(2 * hw + p)]);
        acc += ciede2000(lf, lv);
    }
    return acc / double(hw);
}

// --- mIoU -------------------------------------------------------------------

IouReport miou(const std::vector<int>& pred, const std::vector<int>& gt, int n_classes) {
    if (pred.size() != gt.size() || pred.empty()) {
        throw DimensionError("miou: prediction/ground-truth size mismatch");
    }
    IouReport rep;
    rep.n_classes = n_classes;
    rep.confusion.assign(size_t(n_classes) * size_t(n_classes), 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= n_classes || gt[i] < 0 || gt[i] >= n_classes) {
            throw ContractError("miou: class index out of range at pixel " + std::to_string(i));
        }
        ++rep.confusion[size_t(gt[i]) * size_t(n_classes) + size_t(pred[i])];
    }
    rep.per_class_iou.assign(size_t(n_classes), std::numeric_limits<double>::quiet_NaN());
    double total = 0.0;
    int counted = 0;
    for (int c = 0; c < n_classes; ++c) {
        int64_t tp = rep.confusion[size_t(c) * size_t(n_classes) + size_t(c)];
        int64_t fn = 0, fp = 0;
        for (int k = 0; k < n_classes; ++k) {
            if (k == c) continue;
            fn += rep.confusion[size_t(c) * size_t(n_classes) + size_t(k)];
            fp += rep.confusion[size_t(k) * size_t(n_classes) + size_t(c)];
        }
        const int64_t denom = tp + fp + fn;
        if (denom == 0) continue; // absent from both pred and gt
        rep.per_class_iou[size_t(c)] = double(tp) / double(denom);
        total += rep.per_class_iou[size_t(c)];
        ++counted;
    }
    rep.miou = counted > 0 ? total / double(counted) : 0.0;
    return rep;
}

FusionMetrics evaluate_fusion(const Tensor& fused, const Tensor& vis, const Tensor& ir) {
    FusionMetrics m;
    const auto f8 = quantize_luminance_u8(fused);
    const auto v8 = quantize_luminance_u8(vis);
    const auto i8 = quantize_luminance_u8(ir);
    m.en = entropy(f8);
    m.mi = mutual_information(f8, i8, v8);
    const auto fy = luminance_plane(fused);
    const auto vy = luminance_plane(vis);
    const auto iy = luminance_plane(ir);
    const int h = fused.dim(1), w = fused.dim(2);
    m.ssim = 0.5 * (ssim_metric(fy, vy, h, w) + ssim_metric(fy, iy, h, w));
    m.qabf = qabf(fy, iy, vy, h, w);
    m.delta_e = delta_e(fused, vis);
    return m;
}

} // namespace ssvif
