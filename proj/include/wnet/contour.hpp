#pragma once

// From a smoothed partition to a nested segmentation hierarchy:
//
//   initial_regions   4-connected components of the partition, with small
//                     specks absorbed into the neighbour sharing the most
//                     border.
//   local_cues        oriented half-disc chi-squared contrasts per channel
//                     and scale, evaluated only on region-boundary pixels,
//                     combined with the optional spectral term and spread
//                     through a normalized logistic into [0,1].
//   spectral_cue      intervening-contour affinity from the local signal,
//                     first nontrivial eigenvectors of the normalized
//                     Laplacian by deflated power iteration, summed oriented
//                     derivative magnitudes.
//   build_ucm         greedy region merging by mean border strength with
//                     monotone (ultrametric) recorded strengths.
//   threshold_ucm     segmentation at a hierarchy level.

#include <string>
#include <vector>

#include "wnet/affinity.hpp"
#include "wnet/tensor.hpp"

namespace wnet {

struct CueParams {
    std::vector<double> scales = {2.0, 4.0, 8.0};  // half-disc radii, pixels
    int orientations = 8;
    int bins = 25;                 // histogram bins per continuous channel
    std::vector<double> beta;      // per (channel, scale) weights; empty = uniform
    double gamma = 0.5;            // spectral term weight (only with use_spb)
    bool use_texture = false;
    bool use_spb = false;
    int textons = 16;              // texton vocabulary size when use_texture
    int min_region_area = 4;       // speck absorption threshold, pixels
    double logistic_a = 8.0;       // strength spread: normalized logistic slope
    double logistic_b = 0.25;      // and midpoint

    void validate() const {
        if (scales.empty()) throw ParamError("CueParams: no scales");
        for (double s : scales)
            if (s <= 0) throw ParamError("CueParams: non-positive disc radius");
        if (orientations < 2) throw ParamError("CueParams: need at least 2 orientations");
        if (bins < 2) throw ParamError("CueParams: need at least 2 histogram bins");
        if (textons < 2) throw ParamError("CueParams: need at least 2 textons");
    }
};

// 4-connected components relabelled contiguously; regions smaller than
// min_area are absorbed into the neighbour with the most shared border
// (smallest area first, ties to the smaller label).
LabelMap initial_regions(const LabelMap& labels, int min_area);

// Half-disc chi-squared distance at one pixel, orientation (radians, angle
// of the dividing line), radius and pre-binned channel; exposed for testing.
double half_disc_chi2(const std::vector<int>& binned, int nbins, int height, int width, int y,
                      int x, double theta, double radius);

// Boundary strengths on the support's boundary pixels, zero elsewhere.
BoundaryMap local_cues(const ImageTensor& img, const LabelMap& support, const CueParams& params);

// Spectral boundary term from a local signal in [0,1]. Downscales to at
// most 64 pixels per side for the eigenproblem; non-convergence degrades to
// a zero map with a warning on stderr.
BoundaryMap spectral_cue(const BoundaryMap& mpb, const CueParams& params);

// Intervening-contour affinity on the signal's grid: neighbours within
// radius 5, weight exp(-max_signal_on_segment / 0.1), self-weight 1.
SparseAffinity intervening_contour_affinity(const BoundaryMap& signal);

// Nontrivial eigenpairs of the normalized Laplacian of the intervening-
// contour graph, by power iteration with deflation (residual tolerance
// 1e-6, at most 2000 iterations per vector). Eigenvectors are unit vectors
// of the symmetric form D^-1/2 (D - W) D^-1/2; the converged prefix of the
// requested `count` is returned and `converged` is false when nothing
// settled.
struct SpectralResult {
    int height = 0, width = 0;
    std::vector<double> eigvals;               // Laplacian eigenvalues, found order
    std::vector<std::vector<double>> eigvecs;  // matching unit eigenvectors
    bool converged = false;
};
SpectralResult spectral_eigenvectors(const BoundaryMap& signal, int count);

struct UcmHierarchy {
    LabelMap initial;  // contiguous labels
    struct Merge {
        int a, b;         // cluster representatives at merge time, a < b
        double strength;  // recorded ultrametric strength, non-decreasing
    };
    std::vector<Merge> merges;
    BoundaryMap ucm;  // each boundary pixel carries its separating strength
};

UcmHierarchy build_ucm(const LabelMap& regions, const BoundaryMap& boundary);

// Applies every merge with strength <= t, relabels contiguously.
LabelMap threshold_ucm(const UcmHierarchy& h, double t);

// UCM image: "WUCM", u32 height/width, float32 samples. Merge list: text
// lines "a b strength" in merge order.
void save_ucm(const BoundaryMap& ucm, const std::string& path);
BoundaryMap load_ucm(const std::string& path);
void save_merge_list(const std::vector<UcmHierarchy::Merge>& merges, const std::string& path);
std::vector<UcmHierarchy::Merge> load_merge_list(const std::string& path);

// Channel preparation (brightness plus two opponent-colour channels for RGB
// input, optional texton channel), pre-binned; exposed for the cue oracle.
struct CueChannel {
    std::vector<int> binned;  // bin index per pixel
    int nbins;
};
std::vector<CueChannel> cue_channels(const ImageTensor& img, const CueParams& params);

}  // namespace wnet
