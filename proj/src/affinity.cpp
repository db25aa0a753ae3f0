#include "wnet/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace wnet {

double SparseAffinity::weight(int u, int v) const {
    for (int i = row_begin[u]; i < row_begin[u + 1]; ++i)
        if (cols[i] == v) return weights[i];
    return 0.0;
}

SparseAffinity build_affinity(const ImageTensor& img, const AffinityParams& params) {
    params.validate();
    if (img.pixels() == 0) throw DataError("build_affinity: empty image");

    const int h = img.height, w = img.width, c = img.channels;
    const int n = h * w;
    const int r = static_cast<int>(std::ceil(params.radius)) - 1;  // strict cutoff
    const double r2 = params.radius * params.radius;
    const double inv_si2 = 1.0 / (params.sigma_i * params.sigma_i);
    const double inv_sx2 = 1.0 / (params.sigma_x * params.sigma_x);

    // Offsets with |dx|,|dy| <= r and dx^2+dy^2 < radius^2, fixed scan order.
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy < r2)
                offsets.emplace_back(dy, dx);

    SparseAffinity sa;
    sa.n = n;
    sa.row_begin.assign(n + 1, 0);
    sa.cols.reserve(static_cast<size_t>(n) * offsets.size() / 2);
    sa.weights.reserve(sa.cols.capacity());
    sa.degree.assign(n, 0.0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int u = y * w + x;
            double deg = 0.0;
            for (auto [dy, dx] : offsets) {
                const int vy = y + dy, vx = x + dx;
                if (vy < 0 || vy >= h || vx < 0 || vx >= w) continue;
                const int v = vy * w + vx;
                double wt;
                if (v == u) {
                    wt = 1.0;
                } else {
                    double fd2 = 0.0;
                    for (int ch = 0; ch < c; ++ch) {
                        double d = (img.at(y, x, ch) - img.at(vy, vx, ch)) * 255.0;
                        fd2 += d * d;
                    }
                    double xd2 = static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
                    wt = std::exp(-fd2 * inv_si2) * std::exp(-xd2 * inv_sx2);
                }
                sa.cols.push_back(v);
                sa.weights.push_back(wt);
                deg += wt;
            }
            sa.degree[u] = deg;
            sa.row_begin[u + 1] = static_cast<int>(sa.cols.size());
        }
    }
    return sa;
}

std::vector<double> degree_vector(const SparseAffinity& w) {
    std::vector<double> d(w.n, 0.0);
    for (int u = 0; u < w.n; ++u) {
        double s = 0.0;
        for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i) s += w.weights[i];
        d[u] = s;
    }
    return d;
}

void dump_affinity(const SparseAffinity& w, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f.precision(17);
    for (int u = 0; u < w.n; ++u)
        for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
            if (w.cols[i] >= u) f << u << " " << w.cols[i] << " " << w.weights[i] << "\n";
    if (!f) throw FormatError("short write to " + path);
}

}  // namespace wnet
