#include "wnet/ncut.hpp"

#include <cmath>
#include <string>

namespace wnet {

namespace {

void check_shapes(int pixels, const SparseAffinity& w) {
    if (pixels != w.n)
        throw DataError("ncut: pixel count " + std::to_string(pixels) +
                        " does not match affinity size " + std::to_string(w.n));
}

}  // namespace

double hard_ncut(const LabelMap& labels, const SparseAffinity& w, int k) {
    check_shapes(labels.pixels(), w);
    for (int l : labels.labels)
        if (l < 0 || l >= k)
            throw DataError("hard_ncut: label " + std::to_string(l) + " outside 0.." +
                            std::to_string(k - 1));

    std::vector<double> cut(k, 0.0), assoc(k, 0.0);
    std::vector<uint8_t> seen(k, 0);
    for (int u = 0; u < w.n; ++u) {
        const int lu = labels.labels[u];
        seen[lu] = 1;
        assoc[lu] += w.degree[u];
        for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
            if (labels.labels[w.cols[i]] != lu) cut[lu] += w.weights[i];
    }
    double j = 0.0;
    for (int c = 0; c < k; ++c)
        if (seen[c]) j += cut[c] / assoc[c];  // assoc > 0: self-weights are 1
    return j;
}

double soft_ncut(const SoftSegmentation& p, const SparseAffinity& w) {
    check_shapes(p.pixels(), w);
    const int k = p.k;
    double sum_ratio = 0.0;
    for (int c = 0; c < k; ++c) {
        double num = 0.0, den = 0.0;
        for (int u = 0; u < w.n; ++u) {
            const double pu = p.probs[static_cast<size_t>(u) * k + c];
            double wp = 0.0;
            for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
                wp += w.weights[i] * p.probs[static_cast<size_t>(w.cols[i]) * k + c];
            num += pu * wp;
            den += pu * w.degree[u];
        }
        if (den <= 0.0)
            throw NumericError("soft_ncut: degenerate class " + std::to_string(c) +
                               " with zero association");
        sum_ratio += num / den;
    }
    return static_cast<double>(k) - sum_ratio;
}

SoftSegmentation soft_ncut_grad(const SoftSegmentation& p, const SparseAffinity& w) {
    SoftSegmentation g(p.height, p.width, p.k);
    soft_ncut_with_grad(p, w, g);
    return g;
}

double soft_ncut_with_grad(const SoftSegmentation& p, const SparseAffinity& w,
                           SoftSegmentation& g) {
    check_shapes(p.pixels(), w);
    const int k = p.k;
    if (g.height != p.height || g.width != p.width || g.k != k)
        g = SoftSegmentation(p.height, p.width, k);
    if (k == 1) {  // loss is constant on the simplex
        std::fill(g.probs.begin(), g.probs.end(), 0.0);
        return soft_ncut(p, w);
    }

    std::vector<double> wp(w.n);
    double sum_ratio = 0.0;
    for (int c = 0; c < k; ++c) {
        double num = 0.0, den = 0.0;
        for (int u = 0; u < w.n; ++u) {
            const double pu = p.probs[static_cast<size_t>(u) * k + c];
            double s = 0.0;
            for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
                s += w.weights[i] * p.probs[static_cast<size_t>(w.cols[i]) * k + c];
            wp[u] = s;
            num += pu * s;
            den += pu * w.degree[u];
        }
        if (den <= 0.0)
            throw NumericError("soft_ncut_grad: degenerate class " + std::to_string(c));
        sum_ratio += num / den;
        const double inv_den2 = 1.0 / (den * den);
        for (int u = 0; u < w.n; ++u)
            g.probs[static_cast<size_t>(u) * k + c] =
                -(2.0 * wp[u] * den - num * w.degree[u]) * inv_den2;
    }
    return static_cast<double>(k) - sum_ratio;
}

}  // namespace wnet
