#pragma once

// Fully connected CRF over the pixel grid with exact O(N^2 K) mean-field
// inference. The energy combines a unary term -log p(u = l_u) with Potts
// pairwise potentials under two Gaussian kernels:
//
//   psi(u,v) = [l_u != l_v] * ( w_app    * exp(-|pos_u-pos_v|^2 / (2 th_a^2)
//                                              -|col_u-col_v|^2 / (2 th_b^2))
//                             + w_smooth * exp(-|pos_u-pos_v|^2 / (2 th_g^2)) )
//
// Colors enter the appearance kernel on the 0-255 scale. Pairwise sums run
// over unordered pixel pairs. This is the exact quadratic formulation; the
// pixel count is capped (default 128x128) and larger inputs must be
// downscaled by the caller.

#include <string>

#include "wnet/tensor.hpp"

namespace wnet {

struct CrfParams {
    int iterations = 10;
    double w_app = 5.0;
    double w_smooth = 3.0;
    double theta_alpha = 20.0;  // appearance kernel, position bandwidth
    double theta_beta = 13.0;   // appearance kernel, color bandwidth (0-255)
    double theta_gamma = 3.0;   // smoothness kernel, position bandwidth
    int max_pixels = 128 * 128;

    void validate() const {
        if (iterations <= 0 || theta_alpha <= 0 || theta_beta <= 0 || theta_gamma <= 0 ||
            max_pixels <= 0)
            throw ParamError("CrfParams: bandwidths and iteration count must be positive");
        if (w_app < 0 || w_smooth < 0) throw ParamError("CrfParams: negative kernel weight");
    }
};

// Energy of a labeling. Returns +infinity when some pixel has zero
// probability under its assigned label.
double crf_energy(const LabelMap& labels, const ImageTensor& img, const SoftSegmentation& p,
                  const CrfParams& params);

// Mean-field iterations starting from Q = p. Output is a valid probability
// field; with both kernel weights zero the input is returned unchanged.
SoftSegmentation mean_field(const SoftSegmentation& p, const ImageTensor& img,
                            const CrfParams& params);

// Per-pixel argmax, ties to the lowest class index.
LabelMap crf_argmax(const SoftSegmentation& q);

// Debug dump of a probability field: "WQDF", u32 height/width/classes, then
// float32 samples in (y, x, class) order.
void save_prob_field(const SoftSegmentation& q, const std::string& path);
SoftSegmentation load_prob_field(const std::string& path);

}  // namespace wnet
