#pragma once

// Sparse pixel-affinity matrix for the normalized-cut losses:
//
//   w(u,v) = exp(-|F(u)-F(v)|^2 / sigma_i^2) * exp(-|X(u)-X(v)|^2 / sigma_x^2)
//            when |X(u)-X(v)|_2 < radius, absent otherwise;  w(u,u) = 1.
//
// F is the pixel channel vector on the 0-255 scale (the bandwidth defaults
// are calibrated for 8-bit values), X the (row, col) position. The strict
// inequality excludes pairs at exactly `radius`.

#include <string>
#include <vector>

#include "wnet/tensor.hpp"

namespace wnet {

struct AffinityParams {
    double sigma_i = 10.0;  // intensity bandwidth, 0-255 scale
    double sigma_x = 4.0;   // spatial bandwidth, pixels
    double radius = 5.0;    // spatial cutoff, pixels

    void validate() const {
        if (sigma_i <= 0 || sigma_x <= 0 || radius <= 0)
            throw ParamError("AffinityParams: all parameters must be positive");
    }
};

// Symmetric sparse matrix in per-row neighbour-list form with cached degrees.
struct SparseAffinity {
    int n = 0;
    std::vector<int> row_begin;        // n+1 offsets into cols/weights
    std::vector<int> cols;             // neighbour indices (self included)
    std::vector<double> weights;       // matching weights
    std::vector<double> degree;        // row sums, same summation order as storage

    int nnz() const { return static_cast<int>(cols.size()); }

    // w(u,v), 0 when the pair is not stored.
    double weight(int u, int v) const;
};

SparseAffinity build_affinity(const ImageTensor& img, const AffinityParams& params);

// Recomputed row sums (always equals `degree` up to summation order, which
// is identical by construction).
std::vector<double> degree_vector(const SparseAffinity& w);

// Debug dump: one `u v w` line per stored unordered pair (u <= v), sorted.
void dump_affinity(const SparseAffinity& w, const std::string& path);

}  // namespace wnet
