#include "wnet/contour.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace wnet {

// ---- initial regions ---------------------------------------------------------

namespace {

LabelMap connected_components(const LabelMap& labels) {
    LabelMap out(labels.height, labels.width);
    std::fill(out.labels.begin(), out.labels.end(), -1);
    int next = 0;
    std::vector<int> stack;
    for (int start = 0; start < labels.pixels(); ++start) {
        if (out.labels[start] != -1) continue;
        const int lab = labels.labels[start];
        out.labels[start] = next;
        stack.assign(1, start);
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            int y = u / labels.width, x = u % labels.width;
            const int ns[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (auto& nb : ns) {
                if (nb[0] < 0 || nb[0] >= labels.height || nb[1] < 0 || nb[1] >= labels.width)
                    continue;
                int v = nb[0] * labels.width + nb[1];
                if (out.labels[v] == -1 && labels.labels[v] == lab) {
                    out.labels[v] = next;
                    stack.push_back(v);
                }
            }
        }
        ++next;
    }
    return out;
}

}  // namespace

LabelMap initial_regions(const LabelMap& labels, int min_area) {
    LabelMap cc = connected_components(labels);
    if (min_area <= 1) return cc;
    for (;;) {
        int nregions = cc.max_label() + 1;
        std::vector<int> area(nregions, 0);
        for (int l : cc.labels) ++area[l];
        // shared-border lengths between adjacent regions
        std::map<std::pair<int, int>, int> border;
        for (int y = 0; y < cc.height; ++y)
            for (int x = 0; x < cc.width; ++x) {
                int a = cc.at(y, x);
                if (x + 1 < cc.width && cc.at(y, x + 1) != a)
                    ++border[{std::min(a, cc.at(y, x + 1)), std::max(a, cc.at(y, x + 1))}];
                if (y + 1 < cc.height && cc.at(y + 1, x) != a)
                    ++border[{std::min(a, cc.at(y + 1, x)), std::max(a, cc.at(y + 1, x))}];
            }
        // smallest speck first, ties to the smaller label
        int speck = -1;
        for (int r = 0; r < nregions; ++r)
            if (area[r] < min_area && (speck == -1 || area[r] < area[speck])) speck = r;
        if (speck == -1) break;
        int best = -1, best_len = -1;
        for (const auto& [pr, len] : border) {
            int other = pr.first == speck ? pr.second : (pr.second == speck ? pr.first : -1);
            if (other == -1) continue;
            if (len > best_len || (len == best_len && other < best)) {
                best_len = len;
                best = other;
            }
        }
        if (best == -1) break;  // single region, nothing to absorb into
        for (auto& l : cc.labels)
            if (l == speck) l = best;
        cc.compact();
    }
    return cc;
}

// ---- cue channels --------------------------------------------------------------

namespace {

int bin_of(double v, int nbins) {
    int b = static_cast<int>(v * nbins);
    return std::clamp(b, 0, nbins - 1);
}

// Small even/odd oriented filter bank plus a centre-surround filter; used
// for the optional texton channel.
std::vector<std::vector<double>> filter_bank_responses(const ImageTensor& img) {
    const int h = img.height, w = img.width;
    std::vector<double> gray(static_cast<size_t>(h) * w, 0.0);
    for (int i = 0; i < h * w; ++i) {
        double s = 0.0;
        for (int c = 0; c < img.channels; ++c) s += img.data[static_cast<size_t>(i) * img.channels + c];
        gray[i] = s / img.channels;
    }
    const double sigma = 1.5;
    const int rad = 4;
    const int norient = 4;
    std::vector<std::vector<double>> responses;
    auto convolve = [&](auto&& kernel_fn) {
        std::vector<double> out(gray.size(), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int dy = -rad; dy <= rad; ++dy)
                    for (int dx = -rad; dx <= rad; ++dx) {
                        int sy = std::clamp(y + dy, 0, h - 1);
                        int sx = std::clamp(x + dx, 0, w - 1);
                        acc += gray[static_cast<size_t>(sy) * w + sx] * kernel_fn(dy, dx);
                    }
                out[static_cast<size_t>(y) * w + x] = acc;
            }
        responses.push_back(std::move(out));
    };
    for (int o = 0; o < norient; ++o) {
        double th = o * M_PI / norient;
        double cs = std::cos(th), sn = std::sin(th);
        // even (second derivative) and odd (first derivative) along the normal
        convolve([&](int dy, int dx) {
            double u = dx * cs + dy * sn, v = -dx * sn + dy * cs;
            double g = std::exp(-(u * u + v * v) / (2 * sigma * sigma));
            return (v * v / (sigma * sigma) - 1.0) * g;
        });
        convolve([&](int dy, int dx) {
            double u = dx * cs + dy * sn, v = -dx * sn + dy * cs;
            double g = std::exp(-(u * u + v * v) / (2 * sigma * sigma));
            return -v * g;
        });
    }
    convolve([&](int dy, int dx) {
        double r2 = dx * dx + dy * dy;
        double g = std::exp(-r2 / (2 * sigma * sigma));
        return (r2 / (2 * sigma * sigma) - 1.0) * g;
    });
    return responses;
}

// Deterministic k-means over per-pixel filter responses.
std::vector<int> texton_map(const ImageTensor& img, int k) {
    auto resp = filter_bank_responses(img);
    const int n = img.pixels();
    const int d = static_cast<int>(resp.size());
    Rng rng(0x7e70u);
    std::vector<std::vector<double>> centers(k, std::vector<double>(d));
    for (auto& c : centers) {
        int pick = rng.next_int(n);
        for (int j = 0; j < d; ++j) c[j] = resp[j][pick];
    }
    std::vector<int> assign(n, 0);
    for (int it = 0; it < 10; ++it) {
        for (int i = 0; i < n; ++i) {
            double best = 1e300;
            int bj = 0;
            for (int cidx = 0; cidx < k; ++cidx) {
                double dist = 0.0;
                for (int j = 0; j < d; ++j) {
                    double df = resp[j][i] - centers[cidx][j];
                    dist += df * df;
                }
                if (dist < best) {
                    best = dist;
                    bj = cidx;
                }
            }
            assign[i] = bj;
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (int j = 0; j < d; ++j) sums[assign[i]][j] += resp[j][i];
        }
        for (int cidx = 0; cidx < k; ++cidx)
            if (counts[cidx] > 0)
                for (int j = 0; j < d; ++j) centers[cidx][j] = sums[cidx][j] / counts[cidx];
    }
    return assign;
}

}  // namespace

std::vector<CueChannel> cue_channels(const ImageTensor& img, const CueParams& params) {
    std::vector<CueChannel> out;
    const int n = img.pixels();
    auto add_continuous = [&](auto&& value_fn) {
        CueChannel ch;
        ch.nbins = params.bins;
        ch.binned.resize(n);
        for (int i = 0; i < n; ++i) ch.binned[i] = bin_of(value_fn(i), params.bins);
        out.push_back(std::move(ch));
    };
    if (img.channels >= 3) {
        add_continuous([&](int i) {
            return (img.data[3 * static_cast<size_t>(i)] + img.data[3 * static_cast<size_t>(i) + 1] +
                    img.data[3 * static_cast<size_t>(i) + 2]) /
                   3.0;
        });
        add_continuous([&](int i) {
            return (img.data[3 * static_cast<size_t>(i)] - img.data[3 * static_cast<size_t>(i) + 1]) / 2.0 +
                   0.5;
        });
        add_continuous([&](int i) {
            return (img.data[3 * static_cast<size_t>(i)] + img.data[3 * static_cast<size_t>(i) + 1]) / 4.0 -
                   img.data[3 * static_cast<size_t>(i) + 2] / 2.0 + 0.5;
        });
    } else {
        add_continuous([&](int i) { return img.data[static_cast<size_t>(i) * img.channels]; });
    }
    if (params.use_texture) {
        CueChannel ch;
        ch.nbins = params.textons;
        ch.binned = texton_map(img, params.textons);
        out.push_back(std::move(ch));
    }
    return out;
}

// ---- half-disc chi-squared -----------------------------------------------------

double half_disc_chi2(const std::vector<int>& binned, int nbins, int height, int width, int y,
                      int x, double theta, double radius) {
    double cs = std::cos(theta), sn = std::sin(theta);
    if (std::abs(cs) < 1e-12) cs = 0.0;
    if (std::abs(sn) < 1e-12) sn = 0.0;
    const int r = static_cast<int>(std::floor(radius));
    std::vector<double> ha(nbins, 0.0), hb(nbins, 0.0);
    double na = 0.0, nb = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy > radius * radius) continue;
            int sy = y + dy, sx = x + dx;
            if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
            double side = cs * dy - sn * dx;
            if (std::abs(side) <= 1e-9) continue;  // on the dividing line
            int b = binned[static_cast<size_t>(sy) * width + sx];
            if (side > 0) {
                ha[b] += 1.0;
                na += 1.0;
            } else {
                hb[b] += 1.0;
                nb += 1.0;
            }
        }
    if (na == 0.0 || nb == 0.0) return 0.0;
    double chi2 = 0.0;
    for (int b = 0; b < nbins; ++b) {
        double pa = ha[b] / na, pb = hb[b] / nb;
        double s = pa + pb;
        if (s > 0.0) chi2 += (pa - pb) * (pa - pb) / s;
    }
    return 0.5 * chi2;
}

// ---- local cues ------------------------------------------------------------------

namespace {

// Normalized logistic spread: monotone, fixes 0 -> 0 and 1 -> 1.
double logistic_rescale(double x, double a, double b) {
    auto logistic = [&](double t) { return 1.0 / (1.0 + std::exp(-a * (t - b))); };
    double lo = logistic(0.0), hi = logistic(1.0);
    double y = (logistic(x) - lo) / (hi - lo);
    return std::clamp(y, 0.0, 1.0);
}

BoundaryMap multiscale_contrast(const ImageTensor& img, const LabelMap& support,
                                const CueParams& params) {
    const auto channels = cue_channels(img, params);
    const int nch = static_cast<int>(channels.size());
    const int ns = static_cast<int>(params.scales.size());
    std::vector<double> beta = params.beta;
    if (beta.empty()) beta.assign(static_cast<size_t>(nch) * ns, 1.0 / (nch * ns));
    if (static_cast<int>(beta.size()) != nch * ns)
        throw ParamError("CueParams: beta needs one weight per channel/scale pair");

    const auto mask = boundary_mask(support);
    BoundaryMap mpb(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (!mask[static_cast<size_t>(y) * img.width + x]) continue;
            double best = 0.0;
            for (int o = 0; o < params.orientations; ++o) {
                double theta = o * M_PI / params.orientations;
                double sum = 0.0;
                for (int s = 0; s < ns; ++s)
                    for (int i = 0; i < nch; ++i)
                        sum += beta[static_cast<size_t>(i) * ns + s] *
                               half_disc_chi2(channels[i].binned, channels[i].nbins, img.height,
                                              img.width, y, x, theta, params.scales[s]);
                best = std::max(best, sum);
            }
            mpb.at(y, x) = best;
        }
    return mpb;
}

}  // namespace

BoundaryMap local_cues(const ImageTensor& img, const LabelMap& support, const CueParams& params) {
    params.validate();
    if (img.height != support.height || img.width != support.width)
        throw DataError("local_cues: image and support shapes disagree");
    double max_scale = *std::max_element(params.scales.begin(), params.scales.end());
    if (max_scale > std::min(img.height, img.width) / 2.0)
        throw ParamError("local_cues: disc radius " + std::to_string(max_scale) +
                         " exceeds image half-size");

    BoundaryMap mpb = multiscale_contrast(img, support, params);
    BoundaryMap combined = mpb;
    if (params.use_spb) {
        BoundaryMap spb = spectral_cue(mpb, params);
        for (size_t i = 0; i < combined.strength.size(); ++i)
            combined.strength[i] += params.gamma * spb.strength[i];
    }
    const auto mask = boundary_mask(support);
    BoundaryMap out(img.height, img.width);
    for (size_t i = 0; i < out.strength.size(); ++i)
        if (mask[i])
            out.strength[i] =
                logistic_rescale(combined.strength[i], params.logistic_a, params.logistic_b);
    return out;
}

// ---- spectral cue ------------------------------------------------------------------

SparseAffinity intervening_contour_affinity(const BoundaryMap& sig) {
    const int h = sig.height, w = sig.width, n = h * w;
    const double radius = 5.0;
    const int r = 5;
    SparseAffinity sa;
    sa.n = n;
    sa.row_begin.assign(n + 1, 0);
    sa.degree.assign(n, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int u = y * w + x;
            double deg = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > radius * radius) continue;
                    int vy = y + dy, vx = x + dx;
                    if (vy < 0 || vy >= h || vx < 0 || vx >= w) continue;
                    int v = vy * w + vx;
                    double wt;
                    if (v == u) {
                        wt = 1.0;
                    } else {
                        // max of the signal on the Bresenham segment u -> v
                        double mx = 0.0;
                        int x0 = x, y0 = y, x1 = vx, y1 = vy;
                        int adx = std::abs(x1 - x0), ady = -std::abs(y1 - y0);
                        int sx2 = x0 < x1 ? 1 : -1, sy2 = y0 < y1 ? 1 : -1;
                        int err = adx + ady;
                        for (;;) {
                            mx = std::max(mx, sig.at(y0, x0));
                            if (x0 == x1 && y0 == y1) break;
                            int e2 = 2 * err;
                            if (e2 >= ady) {
                                err += ady;
                                x0 += sx2;
                            }
                            if (e2 <= adx) {
                                err += adx;
                                y0 += sy2;
                            }
                        }
                        wt = std::exp(-mx / 0.1);
                    }
                    sa.cols.push_back(v);
                    sa.weights.push_back(wt);
                    deg += wt;
                }
            sa.degree[u] = deg;
            sa.row_begin[u + 1] = static_cast<int>(sa.cols.size());
        }
    return sa;
}

SpectralResult spectral_eigenvectors(const BoundaryMap& signal, int count) {
    SpectralResult res;
    res.height = signal.height;
    res.width = signal.width;
    const int n = signal.height * signal.width;
    SparseAffinity w = intervening_contour_affinity(signal);
    std::vector<double> dhalf(n), dinvh(n);
    for (int u = 0; u < n; ++u) {
        dhalf[u] = std::sqrt(w.degree[u]);
        dinvh[u] = 1.0 / dhalf[u];
    }

    // M = D^-1/2 W D^-1/2; iterate on (M + I)/2 so convergence heads to the
    // small-Laplacian-eigenvalue end of the spectrum.
    auto apply_m = [&](const std::vector<double>& x, std::vector<double>& y) {
        for (int u = 0; u < n; ++u) {
            double s = 0.0;
            for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
                s += w.weights[i] * dinvh[w.cols[i]] * x[w.cols[i]];
            y[u] = s * dinvh[u];
        }
    };
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += a[i] * b[i];
        return s;
    };
    auto norm = [&](const std::vector<double>& a) { return std::sqrt(dot(a, a)); };

    std::vector<std::vector<double>> basis;  // trivial + found eigenvectors
    std::vector<double> trivial(dhalf);
    double tn = norm(trivial);
    for (auto& v : trivial) v /= tn;
    basis.push_back(trivial);

    // Convergence is measured on the eigen-residual |Mv - mu v|, which also
    // settles inside nearly degenerate eigenspaces where the iterates
    // themselves keep rotating. Each outer iteration applies a fixed power
    // of the shifted operator (M + I)/2 so the slow smooth-mode spectrum
    // separates within the iteration budget.
    const int boost = 32;
    const int max_outer = 2000;
    Rng rng(0x5eedu);
    for (int j = 0; j < count; ++j) {
        std::vector<double> v(n), mv(n);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        bool converged = false;
        for (int it = 0; it < max_outer; ++it) {
            for (const auto& b : basis) {
                double d = dot(v, b);
                for (int i = 0; i < n; ++i) v[i] -= d * b[i];
            }
            double nv = norm(v);
            if (nv < 1e-30) break;
            for (auto& x : v) x /= nv;
            apply_m(v, mv);
            double mu = dot(v, mv);
            double resid = 0.0;
            for (int i = 0; i < n; ++i) {
                double t = mv[i] - mu * v[i];
                resid += t * t;
            }
            if (std::sqrt(resid) < 1e-6) {
                converged = true;
                break;
            }
            for (int step = 0; step < boost; ++step) {
                for (int i = 0; i < n; ++i) mv[i] = 0.5 * (mv[i] + v[i]);
                std::swap(v, mv);
                double nv2 = norm(v);
                for (auto& x : v) x /= nv2;
                if (step + 1 < boost) apply_m(v, mv);
            }
        }
        if (!converged) break;
        apply_m(v, mv);
        double mu = dot(v, mv);
        res.eigvals.push_back(1.0 - mu);
        res.eigvecs.push_back(v);
        basis.push_back(v);
    }
    res.converged = !res.eigvecs.empty();
    return res;
}

BoundaryMap spectral_cue(const BoundaryMap& mpb, const CueParams& params) {
    params.validate();
    // downscale the signal so the eigenproblem stays small
    const int cap = 64;
    BoundaryMap small = mpb;
    int sh = mpb.height, sw = mpb.width;
    if (std::max(sh, sw) > cap) {
        double scale = static_cast<double>(cap) / std::max(sh, sw);
        sh = std::max(2, static_cast<int>(sh * scale));
        sw = std::max(2, static_cast<int>(sw * scale));
        ImageTensor tmp(mpb.height, mpb.width, 1);
        tmp.data = mpb.strength;
        ImageTensor r = resize_bilinear(tmp, sh, sw);
        small = BoundaryMap(sh, sw);
        small.strength = r.data;
    }
    const int n = sh * sw;
    SparseAffinity w = intervening_contour_affinity(small);
    std::vector<double> dinvh(n);
    for (int u = 0; u < n; ++u) dinvh[u] = 1.0 / std::sqrt(w.degree[u]);

    SpectralResult spec = spectral_eigenvectors(small, 4);
    if (!spec.converged || spec.eigvecs.empty()) {
        std::cerr << "spectral_cue: power iteration did not converge, dropping the spectral term\n";
        return BoundaryMap(mpb.height, mpb.width);
    }
    const auto& eigvals = spec.eigvals;
    const auto& eigvecs = spec.eigvecs;

    // 1/sqrt(lambda) weighting with a fixed saturation scale: an isolated
    // partition eigenvalue (lambda ~ 1e-8) saturates the cue while the
    // smooth modes of a gapless spectrum (lambda ~ 1e-2, |grad| ~ 1/L)
    // stay well below it.
    const double saturation = 50.0;
    std::vector<double> wts(eigvecs.size());
    for (size_t j = 0; j < eigvecs.size(); ++j)
        wts[j] = 1.0 / (std::sqrt(std::max(eigvals[j], 1e-10)) * saturation);

    BoundaryMap cue(mpb.height, mpb.width);
    const double rms = std::sqrt(static_cast<double>(n));
    for (size_t j = 0; j < eigvecs.size(); ++j) {
        // generalized eigenvector, scaled to unit RMS, upsampled to full size
        ImageTensor z(sh, sw, 1);
        for (int i = 0; i < n; ++i) z.data[i] = eigvecs[j][i] * dinvh[i];
        double zn = 0.0;
        for (double v : z.data) zn += v * v;
        zn = std::sqrt(zn);
        if (zn > 0)
            for (auto& v : z.data) v *= rms / zn;
        ImageTensor zfull = resize_bilinear(z, mpb.height, mpb.width);
        for (int y = 0; y < mpb.height; ++y)
            for (int x = 0; x < mpb.width; ++x) {
                double gx = (zfull.at(y, std::min(x + 1, mpb.width - 1), 0) -
                             zfull.at(y, std::max(x - 1, 0), 0)) /
                            2.0;
                double gy = (zfull.at(std::min(y + 1, mpb.height - 1), x, 0) -
                             zfull.at(std::max(y - 1, 0), x, 0)) /
                            2.0;
                double best = 0.0;
                for (int o = 0; o < params.orientations; ++o) {
                    double th = o * M_PI / params.orientations;
                    best = std::max(best, std::abs(gx * std::cos(th) + gy * std::sin(th)));
                }
                cue.at(y, x) += wts[j] * best;
            }
    }
    for (auto& v : cue.strength) v = std::min(1.0, v);
    return cue;
}

// ---- ultrametric contour map ---------------------------------------------------

namespace {

struct EdgeAccum {
    double sum = 0.0;
    int count = 0;
};

// Mean strength over the border pixel set of every adjacent region pair
// under the current labelling.
std::map<std::pair<int, int>, double> region_edges(const std::vector<int>& cur, int h, int w,
                                                   const BoundaryMap& boundary,
                                                   std::map<std::pair<int, int>, std::vector<int>>* border_pixels) {
    std::map<std::pair<int, int>, EdgeAccum> acc;
    std::map<std::pair<int, int>, std::vector<int>> pixels;
    std::vector<int> neigh;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int u = y * w + x;
            int a = cur[u];
            neigh.clear();
            if (y > 0 && cur[u - w] != a) neigh.push_back(cur[u - w]);
            if (y + 1 < h && cur[u + w] != a) neigh.push_back(cur[u + w]);
            if (x > 0 && cur[u - 1] != a) neigh.push_back(cur[u - 1]);
            if (x + 1 < w && cur[u + 1] != a) neigh.push_back(cur[u + 1]);
            std::sort(neigh.begin(), neigh.end());
            neigh.erase(std::unique(neigh.begin(), neigh.end()), neigh.end());
            for (int b : neigh) {
                auto key = std::make_pair(std::min(a, b), std::max(a, b));
                auto& e = acc[key];
                e.sum += boundary.strength[u];
                e.count += 1;
                if (border_pixels) pixels[key].push_back(u);
            }
        }
    std::map<std::pair<int, int>, double> out;
    for (auto& [key, e] : acc) out[key] = e.sum / e.count;
    if (border_pixels) *border_pixels = std::move(pixels);
    return out;
}

}  // namespace

UcmHierarchy build_ucm(const LabelMap& regions, const BoundaryMap& boundary) {
    if (regions.height != boundary.height || regions.width != boundary.width)
        throw DataError("build_ucm: shapes disagree");
    UcmHierarchy h;
    h.initial = regions;
    h.initial.compact();
    h.ucm = BoundaryMap(regions.height, regions.width);

    std::vector<int> cur = h.initial.labels;
    int nregions = h.initial.max_label() + 1;
    double last = 0.0;
    for (int step = 0; step + 1 < nregions; ++step) {
        std::map<std::pair<int, int>, std::vector<int>> border_pixels;
        auto edges = region_edges(cur, regions.height, regions.width, boundary, &border_pixels);
        if (edges.empty())
            throw DataError("build_ucm: adjacency graph is disconnected");
        // minimum weight, ties to the smaller (a, b) pair (std::map order)
        auto best = edges.begin();
        for (auto it = edges.begin(); it != edges.end(); ++it)
            if (it->second < best->second) best = it;
        const auto [a, b] = best->first;
        last = std::max(last, best->second);  // ultrametric monotonicity
        h.merges.push_back({a, b, last});
        for (int u : border_pixels[best->first]) h.ucm.strength[u] = last;
        for (auto& l : cur)
            if (l == b) l = a;
    }
    return h;
}

LabelMap threshold_ucm(const UcmHierarchy& h, double t) {
    const int n = h.initial.max_label() + 1;
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& m : h.merges) {
        if (m.strength > t) break;
        int ra = find(m.a), rb = find(m.b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    LabelMap out = h.initial;
    for (auto& l : out.labels) l = find(l);
    out.compact();
    return out;
}

// ---- serialization -----------------------------------------------------------------

void save_ucm(const BoundaryMap& ucm, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f.write("WUCM", 4);
    std::uint32_t dims[2] = {static_cast<std::uint32_t>(ucm.height),
                             static_cast<std::uint32_t>(ucm.width)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> raw(ucm.strength.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(ucm.strength[i]);
    f.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!f) throw FormatError("short write to " + path);
}

BoundaryMap load_ucm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "WUCM") throw FormatError(path + ": not a UCM file");
    std::uint32_t dims[2];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw FormatError(path + ": truncated header");
    BoundaryMap ucm(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    std::vector<float> raw(ucm.strength.size());
    f.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!f) throw FormatError(path + ": truncated payload");
    for (size_t i = 0; i < raw.size(); ++i) ucm.strength[i] = raw[i];
    return ucm;
}

void save_merge_list(const std::vector<UcmHierarchy::Merge>& merges, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f.precision(17);
    for (const auto& m : merges) f << m.a << " " << m.b << " " << m.strength << "\n";
    if (!f) throw FormatError("short write to " + path);
}

std::vector<UcmHierarchy::Merge> load_merge_list(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open " + path);
    std::vector<UcmHierarchy::Merge> merges;
    UcmHierarchy::Merge m{};
    while (f >> m.a >> m.b >> m.strength) merges.push_back(m);
    return merges;
}

}  // namespace wnet
