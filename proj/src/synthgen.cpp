#include "ssvif/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ssvif/imageio.hpp"
#include "ssvif/rng.hpp"

namespace fs = std::filesystem;

namespace ssvif {

namespace {

constexpr double kTau = 6.283185307179586;

struct Rgb {
    double r, g, b;
};

double luma(const Rgb& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (int(i) % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

Rgb with_luma(Rgb c, double target) {
    const double y = luma(c);
    if (y < 1e-6) return {target, target, target};
    double k = target / y;
    Rgb out{c.r * k, c.g * k, c.b * k};
    out.r = std::clamp(out.r, 0.0, 1.0);
    out.g = std::clamp(out.g, 0.0, 1.0);
    out.b = std::clamp(out.b, 0.0, 1.0);
    return out;
}

// Class appearance is a function of the class index alone, so the mapping is
// identical across scenes, seeds and dataset splits.
Rgb class_color(int c, int n_classes) {
    const double hue = std::fmod(0.07 + 0.61803398875 * (c - 1), 1.0);
    double target_y;
    if (c == ir_salient_class(n_classes)) {
        target_y = 0.45; // blends into the background band
    } else {
        target_y = (c % 2 == 1) ? 0.72 : 0.24;
    }
    return with_luma(hsv_to_rgb(hue, 0.8, 0.85), target_y);
}

double class_ir_intensity(int c, int n_classes) {
    if (c == ir_salient_class(n_classes)) return 0.95;
    const int others = std::max(1, n_classes - 2);
    return 0.5 + 0.25 * double(c - 1) / double(others);
}

struct SceneShape {
    int kind; // 0 rect, 1 disc, 2 triangle
    int cls;
    double cx, cy, sx, sy;
    double tex_fx, tex_fy, tex_phase;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        switch (kind) {
            case 0: return std::abs(dx) <= sx && std::abs(dy) <= sy;
            case 1: return (dx * dx) / (sx * sx) + (dy * dy) / (sy * sy) <= 1.0;
            default: {
                // upright isoceles triangle: apex up, base at cy + sy
                if (dy < -sy || dy > sy) return false;
                const double half = sx * (dy + sy) / (2.0 * sy);
                return std::abs(dx) <= half;
            }
        }
    }
};

} // namespace

Scene render_scene(const SceneSpec& spec, int index) {
    if (spec.n_classes < 2) throw ContractError("synthgen: n_classes must be >= 2");
    if (spec.width < 32 || spec.height < 32) throw ContractError("synthgen: size must be >= 32");
    Rng rng(mix64(spec.seed, uint64_t(index), 0x5ce11eULL));
    const int w = spec.width, h = spec.height;

    // background gradient: two hues blended along a random direction
    const double bg_h0 = rng.uniform();
    const double bg_h1 = std::fmod(bg_h0 + rng.uniform(0.15, 0.5), 1.0);
    const Rgb bg_c0 = with_luma(hsv_to_rgb(bg_h0, 0.35, 0.7), rng.uniform(0.38, 0.5));
    const Rgb bg_c1 = with_luma(hsv_to_rgb(bg_h1, 0.35, 0.7), rng.uniform(0.4, 0.52));
    const double ang = rng.uniform(0.0, kTau);
    const double gx = std::cos(ang), gy = std::sin(ang);
    const double bg_ir0 = rng.uniform(0.18, 0.26);
    const double bg_ir1 = bg_ir0 + rng.uniform(0.02, 0.08);

    const int n_obj = spec.objects_min + rng.uniform_int(spec.objects_max - spec.objects_min + 1);
    const int class_cycle = rng.uniform_int(spec.n_classes - 1);
    std::vector<SceneShape> shapes;
    shapes.reserve(size_t(n_obj));
    for (int i = 0; i < n_obj; ++i) {
        SceneShape s;
        s.kind = rng.uniform_int(3);
        s.cls = 1 + (class_cycle + i) % (spec.n_classes - 1);
        s.cx = rng.uniform(0.15, 0.85) * w;
        s.cy = rng.uniform(0.15, 0.85) * h;
        const double base = rng.uniform(0.18, 0.33) * std::min(w, h);
        s.sx = base * rng.uniform(0.7, 1.3);
        s.sy = base * rng.uniform(0.7, 1.3);
        s.tex_fx = rng.uniform(1.0, 3.0);
        s.tex_fy = rng.uniform(1.0, 3.0);
        s.tex_phase = rng.uniform(0.0, kTau);
        shapes.push_back(s);
    }

    Scene scene;
    scene.label.assign(size_t(h) * w, 0);
    std::vector<float> vis(size_t(3) * h * w);
    std::vector<float> ir(size_t(h) * w);

    const double diag = std::sqrt(double(w) * w + double(h) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double t = 0.5 + (gx * (x - w / 2.0) + gy * (y - h / 2.0)) / diag;
            Rgb col{bg_c0.r + (bg_c1.r - bg_c0.r) * t, bg_c0.g + (bg_c1.g - bg_c0.g) * t,
                    bg_c0.b + (bg_c1.b - bg_c0.b) * t};
            double iv = bg_ir0 + (bg_ir1 - bg_ir0) * t;
            int cls = 0;
            for (const SceneShape& s : shapes) { // painter's order, last wins
                if (!s.contains(x + 0.5, y + 0.5)) continue;
                cls = s.cls;
                Rgb base = class_color(s.cls, spec.n_classes);
                const double tex = 1.0 + 0.03 * std::sin(kTau * (s.tex_fx * (x - s.cx) / w +
                                                                 s.tex_fy * (y - s.cy) / h) +
                                                         s.tex_phase);
                col = {std::clamp(base.r * tex, 0.0, 1.0), std::clamp(base.g * tex, 0.0, 1.0),
                       std::clamp(base.b * tex, 0.0, 1.0)};
                iv = class_ir_intensity(s.cls, spec.n_classes); // texture suppressed in infrared
            }
            const size_t pi = size_t(int64_t(y) * w + x);
            scene.label[pi] = cls;
            vis[size_t(0 * int64_t(h) * w) + pi] = float(col.r);
            vis[size_t(1 * int64_t(h) * w) + pi] = float(col.g);
            vis[size_t(2 * int64_t(h) * w) + pi] = float(col.b);
            ir[pi] = float(iv);
        }
    }

    // independent per-modality noise, clamped to [0,1]
    for (auto& v : vis) v = float(std::clamp(double(v) + spec.noise_std * rng.normal(), 0.0, 1.0));
    for (auto& v : ir) v = float(std::clamp(double(v) + spec.noise_std * rng.normal(), 0.0, 1.0));

    scene.vis = Tensor::from_vector({3, h, w}, std::move(vis));
    scene.ir = Tensor::from_vector({1, h, w}, std::move(ir));
    return scene;
}

void generate(const SceneSpec& spec, int count, const std::string& out_root) {
    const fs::path root(out_root);
    std::error_code ec;
    fs::create_directories(root / "vis", ec);
    fs::create_directories(root / "ir", ec);
    fs::create_directories(root / "labels", ec);
    if (!fs::is_directory(root / "vis") || !fs::is_directory(root / "ir") ||
        !fs::is_directory(root / "labels")) {
        throw IoError("synthgen: cannot create dataset directories under " + out_root);
    }
    for (int i = 0; i < count; ++i) {
        Scene scene = render_scene(spec, i);
        char name[16];
        std::snprintf(name, sizeof(name), "s%04d", i);
        save_ppm(scene.vis, (root / "vis" / (std::string(name) + ".ppm")).string());
        save_pgm(scene.ir, (root / "ir" / (std::string(name) + ".pgm")).string());
        RawImage label;
        label.width = spec.width;
        label.height = spec.height;
        label.channels = 1;
        label.bytes.assign(scene.label.begin(), scene.label.end());
        save_pnm_raw(label, (root / "labels" / (std::string(name) + ".pgm")).string());
    }
}

} // namespace ssvif
