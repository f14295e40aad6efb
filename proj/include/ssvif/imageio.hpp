#pragma once

// Binary PPM/PGM codecs, BT.601 color conversion, and the paired
// visible/infrared dataset layout:
//   <root>/vis/<id>.ppm, <root>/ir/<id>.pgm, <root>/labels/<id>.pgm (optional)

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssvif/errors.hpp"
#include "ssvif/rng.hpp"
#include "ssvif/tensor.hpp"

namespace ssvif {

struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 for PGM, 3 for PPM
    std::vector<uint8_t> bytes; // row-major, interleaved for PPM
};

// Codec layer. Values map to [0,1] by v = byte / 255; maxval must be 255.
RawImage parse_pnm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_pnm(const RawImage& img);

Tensor load_ppm(const std::string& path);              // [3,H,W]
Tensor load_pgm(const std::string& path);              // [1,H,W]
RawImage load_pnm_raw(const std::string& path);        // e.g. label maps
void save_ppm(const Tensor& img, const std::string& path); // [3,H,W], values in [0,1]
void save_pgm(const Tensor& img, const std::string& path); // [1,H,W], values in [0,1]
void save_pnm_raw(const RawImage& img, const std::string& path);

/// Round-half-away-from-zero quantization used by all writers.
uint8_t quantize_unit(float v);

// ---------------------------------------------------------------------------
// BT.601 full-range YCbCr (differentiable)
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> rgb_to_ycbcr(const TensorT<T>& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw DimensionError("rgb_to_ycbcr: expected [3,H,W], got " + shape_str(rgb.shape()));
    }
    auto r = channel_slice(rgb, 0);
    auto g = channel_slice(rgb, 1);
    auto b = channel_slice(rgb, 2);
    auto y = add(add(scalar_mul(r, 0.299), scalar_mul(g, 0.587)), scalar_mul(b, 0.114));
    auto cb = scalar_add(scalar_mul(sub(b, y), 0.564), 0.5);
    auto cr = scalar_add(scalar_mul(sub(r, y), 0.713), 0.5);
    return concat_channels(y, concat_channels(cb, cr));
}

template <class T>
TensorT<T> ycbcr_to_rgb(const TensorT<T>& ycc) {
    if (ycc.rank() != 3 || ycc.dim(0) != 3) {
        throw DimensionError("ycbcr_to_rgb: expected [3,H,W], got " + shape_str(ycc.shape()));
    }
    auto y = channel_slice(ycc, 0);
    auto cb = scalar_add(channel_slice(ycc, 1), -0.5);
    auto cr = scalar_add(channel_slice(ycc, 2), -0.5);
    auto r = add(y, scalar_mul(cr, 1.0 / 0.713));
    auto b = add(y, scalar_mul(cb, 1.0 / 0.564));
    auto g = scalar_mul(sub(y, add(scalar_mul(r, 0.299), scalar_mul(b, 0.114))), 1.0 / 0.587);
    return concat_channels(r, concat_channels(g, b));
}

/// BT.601 luminance channel of an RGB tensor.
template <class T>
TensorT<T> luminance(const TensorT<T>& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw DimensionError("luminance: expected [3,H,W], got " + shape_str(rgb.shape()));
    }
    auto r = channel_slice(rgb, 0);
    auto g = channel_slice(rgb, 1);
    auto b = channel_slice(rgb, 2);
    return add(add(scalar_mul(r, 0.299), scalar_mul(g, 0.587)), scalar_mul(b, 0.114));
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

struct ImagePair {
    Tensor vis; // [3,H,W] in [0,1]
    Tensor ir;  // [3,H,W], three identical channels
    std::vector<int> label; // H*W class indices; empty when unlabeled
    std::string id;

    int height() const { return vis.dim(1); }
    int width() const { return vis.dim(2); }
    bool has_label() const { return !label.empty(); }
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    uint64_t seed = 0;
};

/// Sorted filename stems of <root>/vis/*.ppm; every id must have a matching
/// ir image. Throws IoError on layout problems.
std::vector<std::string> scan_dataset(const std::string& root);

/// Loads one pair; replicates the single-channel infrared image to three
/// channels and attaches the label map when present.
ImagePair load_pair(const std::string& root, const std::string& id);

/// Deterministic shuffle by seed, first 90% train, rest val.
DatasetSplit split_dataset(std::vector<std::string> ids, uint64_t seed);

ImagePair crop_pair(const ImagePair& pair, int top, int left, int size);
ImagePair random_crop_pair(const ImagePair& pair, int size, Rng& rng);
ImagePair center_crop_pair(const ImagePair& pair, int size);

} // namespace ssvif
