#include "wnet/crf.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace wnet {

namespace {

void check_shapes(const ImageTensor& img, const SoftSegmentation& p) {
    if (img.height != p.height || img.width != p.width)
        throw DataError("crf: image and probability field shapes disagree");
}

// Combined pairwise kernel weight for pixels u, v.
struct PairKernel {
    const ImageTensor& img;
    double inv2_ta2, inv2_tb2, inv2_tg2, w_app, w_smooth;

    PairKernel(const ImageTensor& img_, const CrfParams& prm)
        : img(img_),
          inv2_ta2(1.0 / (2.0 * prm.theta_alpha * prm.theta_alpha)),
          inv2_tb2(1.0 / (2.0 * prm.theta_beta * prm.theta_beta)),
          inv2_tg2(1.0 / (2.0 * prm.theta_gamma * prm.theta_gamma)),
          w_app(prm.w_app),
          w_smooth(prm.w_smooth) {}

    double operator()(int u, int v) const {
        const int w = img.width;
        const int uy = u / w, ux = u % w, vy = v / w, vx = v % w;
        const double d2 = static_cast<double>(uy - vy) * (uy - vy) +
                          static_cast<double>(ux - vx) * (ux - vx);
        double col2 = 0.0;
        for (int c = 0; c < img.channels; ++c) {
            double d = (img.data[static_cast<size_t>(u) * img.channels + c] -
                        img.data[static_cast<size_t>(v) * img.channels + c]) *
                       255.0;
            col2 += d * d;
        }
        return w_app * std::exp(-d2 * inv2_ta2 - col2 * inv2_tb2) +
               w_smooth * std::exp(-d2 * inv2_tg2);
    }
};

}  // namespace

double crf_energy(const LabelMap& labels, const ImageTensor& img, const SoftSegmentation& p,
                  const CrfParams& params) {
    params.validate();
    check_shapes(img, p);
    if (labels.height != p.height || labels.width != p.width)
        throw DataError("crf_energy: label map shape disagrees");
    const int n = p.pixels();

    double unary = 0.0;
    for (int u = 0; u < n; ++u) {
        double pu = p.probs[static_cast<size_t>(u) * p.k + labels.labels[u]];
        if (pu <= 0.0) return std::numeric_limits<double>::infinity();
        unary += -std::log(pu);
    }
    PairKernel kern(img, params);
    double pairwise = 0.0;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (labels.labels[u] != labels.labels[v]) pairwise += kern(u, v);
    return unary + pairwise;
}

SoftSegmentation mean_field(const SoftSegmentation& p, const ImageTensor& img,
                            const CrfParams& params) {
    params.validate();
    check_shapes(img, p);
    const int n = p.pixels();
    const int k = p.k;
    if (n > params.max_pixels)
        throw DataError("mean_field: " + std::to_string(n) + " pixels exceeds the exact-" +
                        "inference ceiling of " + std::to_string(params.max_pixels) +
                        "; downscale the input");

    // Unary factors: clamped input probabilities (multiplicative form, so a
    // zero-message pass reproduces the input exactly).
    std::vector<double> unary(p.probs);
    for (auto& v : unary)
        if (v < 1e-12) v = 1e-12;

    // Messages use kernels normalized per pixel (each kernel's row sums to
    // its weight), so the pairwise pull stays on the unary's logit scale
    // regardless of the neighbourhood mass.
    PairKernel app(img, params), smooth(img, params);
    app.w_app = 1.0;
    app.w_smooth = 0.0;
    smooth.w_app = 0.0;
    smooth.w_smooth = 1.0;
    const bool no_pairwise = params.w_app == 0.0 && params.w_smooth == 0.0;

    // Precompute the row-normalized combined kernel matrix when it fits;
    // fall back to recomputing rows on the fly (slow path) above the cap.
    const bool cache_kernel = !no_pairwise && n <= 4096;
    std::vector<float> km;
    std::vector<double> app_row(n), smooth_row(n);
    auto fill_rows = [&](int u) {
        double da = 0.0, ds = 0.0;
        for (int v = 0; v < n; ++v) {
            if (v == u) {
                app_row[v] = smooth_row[v] = 0.0;
                continue;
            }
            app_row[v] = app(u, v);
            smooth_row[v] = smooth(u, v);
            da += app_row[v];
            ds += smooth_row[v];
        }
        const double fa = da > 0 ? params.w_app / da : 0.0;
        const double fs = ds > 0 ? params.w_smooth / ds : 0.0;
        for (int v = 0; v < n; ++v) app_row[v] = fa * app_row[v] + fs * smooth_row[v];
    };
    if (cache_kernel) {
        km.resize(static_cast<size_t>(n) * n);
        for (int u = 0; u < n; ++u) {
            fill_rows(u);
            for (int v = 0; v < n; ++v)
                km[static_cast<size_t>(u) * n + v] = static_cast<float>(app_row[v]);
        }
    }

    SoftSegmentation q = p;
    std::vector<double> msg(static_cast<size_t>(n) * k);
    for (int it = 0; it < params.iterations; ++it) {
        if (no_pairwise) {
            std::fill(msg.begin(), msg.end(), 0.0);
        } else if (cache_kernel) {
            std::fill(msg.begin(), msg.end(), 0.0);
            for (int u = 0; u < n; ++u) {
                const float* row = km.data() + static_cast<size_t>(u) * n;
                double* mu = msg.data() + static_cast<size_t>(u) * k;
                for (int v = 0; v < n; ++v) {
                    const double kw = row[v];
                    if (kw == 0.0) continue;
                    const double* qv = q.probs.data() + static_cast<size_t>(v) * k;
                    for (int c = 0; c < k; ++c) mu[c] += kw * qv[c];
                }
            }
        } else {
            std::fill(msg.begin(), msg.end(), 0.0);
            for (int u = 0; u < n; ++u) {
                fill_rows(u);
                double* mu = msg.data() + static_cast<size_t>(u) * k;
                for (int v = 0; v < n; ++v) {
                    const double kw = app_row[v];
                    if (kw == 0.0) continue;
                    const double* qv = q.probs.data() + static_cast<size_t>(v) * k;
                    for (int c = 0; c < k; ++c) mu[c] += kw * qv[c];
                }
            }
        }
        // Potts compatibility: label l is penalized by sum_{l' != l} msg[l'],
        // equivalently favored by msg[l] after dropping the constant; update
        // Q_u(l) proportional to unary_u(l) * exp(msg_u(l) - max_l msg_u).
        for (int u = 0; u < n; ++u) {
            const double* mu = msg.data() + static_cast<size_t>(u) * k;
            double mx = mu[0];
            for (int c = 1; c < k; ++c) mx = std::max(mx, mu[c]);
            double sum = 0.0;
            double* qu = q.probs.data() + static_cast<size_t>(u) * k;
            const double* uu = unary.data() + static_cast<size_t>(u) * k;
            for (int c = 0; c < k; ++c) {
                qu[c] = uu[c] * std::exp(mu[c] - mx);
                sum += qu[c];
            }
            for (int c = 0; c < k; ++c) qu[c] /= sum;
        }
    }
    return q;
}

LabelMap crf_argmax(const SoftSegmentation& q) { return argmax_labels(q); }

void save_prob_field(const SoftSegmentation& q, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f.write("WQDF", 4);
    std::uint32_t dims[3] = {static_cast<std::uint32_t>(q.height),
                             static_cast<std::uint32_t>(q.width),
                             static_cast<std::uint32_t>(q.k)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> raw(q.probs.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(q.probs[i]);
    f.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!f) throw FormatError("short write to " + path);
}

SoftSegmentation load_prob_field(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "WQDF") throw FormatError(path + ": not a Q dump");
    std::uint32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw FormatError(path + ": truncated header");
    SoftSegmentation q(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                       static_cast<int>(dims[2]));
    std::vector<float> raw(q.probs.size());
    f.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!f) throw FormatError(path + ": truncated payload");
    for (size_t i = 0; i < raw.size(); ++i) q.probs[i] = raw[i];
    return q;
}

}  // namespace wnet
