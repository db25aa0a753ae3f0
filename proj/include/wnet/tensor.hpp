#pragma once

// Core raster types shared by every stage of the pipeline, plus the binary
// PNM / 16-bit label-map / BSDS .seg file formats.
//
// Conventions fixed here and used everywhere:
//   * ImageTensor stores H x W x C doubles in row-major (y, x, c) order,
//     image values in [0,1] (8-bit samples load as v/255).
//   * LabelMap stores H x W non-negative int labels, row-major.
//   * SoftSegmentation stores H x W x K per-pixel class probabilities.
//   * BoundaryMap stores H x W strengths in [0,1].

#include <cstdint>
#include <string>
#include <vector>

#include "wnet/common.hpp"

namespace wnet {

struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;  // (y, x, c) row-major

    ImageTensor() = default;
    ImageTensor(int h, int w, int c)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, 0.0) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }
    int pixels() const { return height * width; }
};

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;  // row-major

    LabelMap() = default;
    LabelMap(int h, int w) : height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}

    int& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
    int at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    int pixels() const { return height * width; }

    // Relabels to 0..L-1 in order of first appearance (row-major scan).
    // Returns the number of distinct labels.
    int compact();
    int max_label() const;
};

struct SoftSegmentation {
    int height = 0;
    int width = 0;
    int k = 0;
    std::vector<double> probs;  // (y, x, class) row-major

    SoftSegmentation() = default;
    SoftSegmentation(int h, int w, int k_)
        : height(h), width(w), k(k_), probs(static_cast<size_t>(h) * w * k_, 0.0) {}

    double& at(int y, int x, int c) {
        return probs[(static_cast<size_t>(y) * width + x) * k + c];
    }
    double at(int y, int x, int c) const {
        return probs[(static_cast<size_t>(y) * width + x) * k + c];
    }
    int pixels() const { return height * width; }

    // Per-pixel values must lie in [0,1] and sum to 1 within tol.
    void validate(double tol = 1e-6) const;
};

struct BoundaryMap {
    int height = 0;
    int width = 0;
    std::vector<double> strength;  // row-major, in [0,1]

    BoundaryMap() = default;
    BoundaryMap(int h, int w)
        : height(h), width(w), strength(static_cast<size_t>(h) * w, 0.0) {}

    double& at(int y, int x) { return strength[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return strength[static_cast<size_t>(y) * width + x]; }
};

// ---- file formats ---------------------------------------------------------

// Binary PGM (P5) / PPM (P6), maxval 255. Malformed input raises FormatError
// naming the byte offset.
ImageTensor load_pnm(const std::string& path);
void save_pnm(const ImageTensor& img, const std::string& path);

// Label maps are stored as 16-bit binary PGM (P5, maxval 65535, big-endian
// samples per the Netpbm convention). Lossless for labels <= 65535.
LabelMap load_label_map(const std::string& path);
void save_label_map(const LabelMap& lm, const std::string& path);

// BSDS .seg text layout: free-form header lines of which `width`, `height`
// and `segments` are required, a `data` line, then one run per line as
// `label row col-start col-end` with inclusive column ranges. Every pixel
// must be covered exactly once.
LabelMap load_bsds_seg(const std::string& path);

// ---- resampling -----------------------------------------------------------

// Bilinear with half-pixel-centre alignment; used to bring inputs to the
// network grid and to upsample eigenvectors.
ImageTensor resize_bilinear(const ImageTensor& img, int oh, int ow);

// Nearest neighbour, used to take label maps back to the original size.
LabelMap upsample_nearest(const LabelMap& lm, int oh, int ow);

// ---- small helpers --------------------------------------------------------

// Pixels with a 4-neighbour carrying a different label.
std::vector<uint8_t> boundary_mask(const LabelMap& lm);

// argmax over classes, ties to the lowest class index.
LabelMap argmax_labels(const SoftSegmentation& q);

}  // namespace wnet
