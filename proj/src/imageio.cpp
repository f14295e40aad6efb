#include "ssvif/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace ssvif {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to " + path);
}

struct HeaderCursor {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("pnm: " + what + " at byte " + std::to_string(pos));
    }

    bool eof() const { return pos >= bytes.size(); }
    uint8_t peek() const { return bytes[pos]; }

    // whitespace and '#' comments between header tokens
    void skip_separators() {
        while (!eof()) {
            uint8_t c = peek();
            if (c == '#') {
                while (!eof() && peek() != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_int(const char* name) {
        skip_separators();
        if (eof() || peek() < '0' || peek() > '9') fail(std::string("expected ") + name);
        long v = 0;
        while (!eof() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (peek() - '0');
            if (v > 1 << 24) fail(std::string(name) + " out of range");
            ++pos;
        }
        return int(v);
    }
};

} // namespace

RawImage parse_pnm(const std::vector<uint8_t>& bytes) {
    HeaderCursor cur{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("pnm: bad magic at byte 0 (binary P5/P6 required)");
    }
    RawImage img;
    img.channels = bytes[1] == '6' ? 3 : 1;
    cur.pos = 2;
    img.width = cur.read_int("width");
    img.height = cur.read_int("height");
    int maxval = cur.read_int("maxval");
    if (maxval != 255) {
        throw ParseError("pnm: maxval must be 255, got " + std::to_string(maxval) + " at byte " +
                         std::to_string(cur.pos));
    }
    if (cur.eof()) cur.fail("missing payload");
    uint8_t c = cur.peek();
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n') cur.fail("expected whitespace before payload");
    ++cur.pos;
    const size_t need = size_t(img.width) * size_t(img.height) * size_t(img.channels);
    if (bytes.size() - cur.pos < need) {
        throw ParseError("pnm: truncated payload at byte " + std::to_string(bytes.size()) +
                         " (need " + std::to_string(cur.pos + need) + " bytes)");
    }
    img.bytes.assign(bytes.begin() + std::ptrdiff_t(cur.pos),
                     bytes.begin() + std::ptrdiff_t(cur.pos + need));
    return img;
}

std::vector<uint8_t> encode_pnm(const RawImage& img) {
    if (img.channels != 1 && img.channels != 3) throw ContractError("encode_pnm: channels must be 1 or 3");
    if (int64_t(img.bytes.size()) != int64_t(img.width) * img.height * img.channels) {
        throw ContractError("encode_pnm: payload size mismatch");
    }
    std::string header = (img.channels == 3 ? std::string("P6\n") : std::string("P5\n")) +
                         std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.bytes.begin(), img.bytes.end());
    return out;
}

namespace {

Tensor raw_to_tensor(const RawImage& img) {
    const int h = img.height, w = img.width, c = img.channels;
    std::vector<float> data(size_t(c) * h * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                data[size_t((int64_t(ch) * h + y) * w + x)] =
                    float(img.bytes[size_t((int64_t(y) * w + x) * c + ch)]) / 255.0f;
            }
        }
    }
    return Tensor::from_vector({c, h, w}, std::move(data));
}

} // namespace

uint8_t quantize_unit(float v) {
    return uint8_t(std::floor(v * 255.0f + 0.5f));
}

Tensor load_ppm(const std::string& path) {
    auto img = parse_pnm(read_file(path));
    if (img.channels != 3) throw ParseError("pnm: " + path + " is not a P6 color image");
    return raw_to_tensor(img);
}

Tensor load_pgm(const std::string& path) {
    auto img = parse_pnm(read_file(path));
    if (img.channels != 1) throw ParseError("pnm: " + path + " is not a P5 grayscale image");
    return raw_to_tensor(img);
}

RawImage load_pnm_raw(const std::string& path) { return parse_pnm(read_file(path)); }

namespace {

RawImage tensor_to_raw(const Tensor& img, int channels) {
    if (img.rank() != 3 || img.dim(0) != channels) {
        throw DimensionError("save_pnm: expected [" + std::to_string(channels) + ",H,W], got " +
                             shape_str(img.shape()));
    }
    const int h = img.dim(1), w = img.dim(2);
    RawImage raw;
    raw.width = w;
    raw.height = h;
    raw.channels = channels;
    raw.bytes.resize(size_t(channels) * h * w);
    const auto& v = img.values();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < channels; ++ch) {
                float f = v[size_t((int64_t(ch) * h + y) * w + x)];
                if (!(f >= 0.0f && f <= 1.0f)) {
                    throw ContractError("save_pnm: value " + std::to_string(f) +
                                        " outside [0,1]; clamp before saving");
                }
                raw.bytes[size_t((int64_t(y) * w + x) * channels + ch)] = quantize_unit(f);
            }
        }
    }
    return raw;
}

} // namespace

void save_ppm(const Tensor& img, const std::string& path) {
    write_file(path, encode_pnm(tensor_to_raw(img, 3)));
}

void save_pgm(const Tensor& img, const std::string& path) {
    write_file(path, encode_pnm(tensor_to_raw(img, 1)));
}

void save_pnm_raw(const RawImage& img, const std::string& path) {
    write_file(path, encode_pnm(img));
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

std::vector<std::string> scan_dataset(const std::string& root) {
    const fs::path vis_dir = fs::path(root) / "vis";
    const fs::path ir_dir = fs::path(root) / "ir";
    if (!fs::is_directory(vis_dir)) throw IoError("dataset: missing directory " + vis_dir.string());
    if (!fs::is_directory(ir_dir)) throw IoError("dataset: missing directory " + ir_dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(vis_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
        ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        if (!fs::exists(ir_dir / (id + ".pgm"))) {
            throw IoError("dataset: missing infrared image for id " + id);
        }
    }
    return ids;
}

ImagePair load_pair(const std::string& root, const std::string& id) {
    const fs::path rootp(root);
    ImagePair pair;
    pair.id = id;
    pair.vis = load_ppm((rootp / "vis" / (id + ".ppm")).string());
    Tensor ir1 = load_pgm((rootp / "ir" / (id + ".pgm")).string());
    if (ir1.dim(1) != pair.vis.dim(1) || ir1.dim(2) != pair.vis.dim(2)) {
        throw IoError("dataset: vis/ir size mismatch for id " + id);
    }
    pair.ir = concat_channels(ir1, concat_channels(ir1, ir1)).detach();

    const fs::path label_path = rootp / "labels" / (id + ".pgm");
    if (fs::exists(label_path)) {
        RawImage raw = load_pnm_raw(label_path.string());
        if (raw.channels != 1 || raw.width != pair.vis.dim(2) || raw.height != pair.vis.dim(1)) {
            throw IoError("dataset: label shape mismatch for id " + id);
        }
        pair.label.assign(raw.bytes.begin(), raw.bytes.end());
    }
    return pair;
}

DatasetSplit split_dataset(std::vector<std::string> ids, uint64_t seed) {
    if (ids.size() < 10) {
        throw ContractError("split_dataset: need at least 10 ids, got " + std::to_string(ids.size()));
    }
    std::sort(ids.begin(), ids.end());
    Rng rng(mix64(seed, 0x5b717ULL)); // split stream tag
    rng.shuffle(ids);
    const size_t n_train = ids.size() * 9 / 10;
    DatasetSplit split;
    split.seed = seed;
    split.train.assign(ids.begin(), ids.begin() + std::ptrdiff_t(n_train));
    split.val.assign(ids.begin() + std::ptrdiff_t(n_train), ids.end());
    return split;
}

ImagePair crop_pair(const ImagePair& pair, int top, int left, int size) {
    const int h = pair.height(), w = pair.width();
    if (size <= 0 || top < 0 || left < 0 || top + size > h || left + size > w) {
        throw ContractError("crop_pair: window " + std::to_string(size) + "@" + std::to_string(top) +
                            "," + std::to_string(left) + " outside " + std::to_string(h) + "x" +
                            std::to_string(w));
    }
    auto crop_tensor = [&](const Tensor& t) {
        const int c = t.dim(0);
        std::vector<float> out(size_t(c) * size * size);
        const auto& v = t.values();
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < size; ++y) {
                const float* src = v.data() + (int64_t(ch) * h + (top + y)) * w + left;
                std::copy(src, src + size, out.begin() + (int64_t(ch) * size + y) * size);
            }
        }
        return Tensor::from_vector({c, size, size}, std::move(out));
    };
    ImagePair out;
    out.id = pair.id;
    out.vis = crop_tensor(pair.vis);
    out.ir = crop_tensor(pair.ir);
    if (pair.has_label()) {
        out.label.resize(size_t(size) * size);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                out.label[size_t(int64_t(y) * size + x)] =
                    pair.label[size_t(int64_t(top + y) * w + (left + x))];
            }
        }
    }
    return out;
}

ImagePair random_crop_pair(const ImagePair& pair, int size, Rng& rng) {
    const int h = pair.height(), w = pair.width();
    if (size > std::min(h, w)) {
        throw ContractError("random_crop_pair: size " + std::to_string(size) + " exceeds image " +
                            std::to_string(h) + "x" + std::to_string(w));
    }
    const int top = rng.uniform_int(h - size + 1);
    const int left = rng.uniform_int(w - size + 1);
    return crop_pair(pair, top, left, size);
}

ImagePair center_crop_pair(const ImagePair& pair, int size) {
    const int h = pair.height(), w = pair.width();
    if (size > std::min(h, w)) {
        throw ContractError("center_crop_pair: size " + std::to_string(size) + " exceeds image " +
                            std::to_string(h) + "x" + std::to_string(w));
    }
    return crop_pair(pair, (h - size) / 2, (w - size) / 2, size);
}

} // namespace ssvif
