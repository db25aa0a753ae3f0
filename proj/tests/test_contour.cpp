#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "support/oracles.hpp"
#include "wnet/contour.hpp"

using namespace wnet;

namespace {

// naive half-disc oracle: its own scan order, its own histogramming
double halfdisc_oracle(const std::vector<int>& binned, int nbins, int h, int w, int y, int x,
                       double theta, double radius) {
    double cs = std::cos(theta), sn = std::sin(theta);
    if (std::abs(cs) < 1e-12) cs = 0;
    if (std::abs(sn) < 1e-12) sn = 0;
    std::vector<double> pa(nbins, 0), pb(nbins, 0);
    double ca = 0, cb = 0;
    int r = int(radius) + 1;
    for (int sy = y - r; sy <= y + r; ++sy)
        for (int sx = x - r; sx <= x + r; ++sx) {
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            double dy = sy - y, dx = sx - x;
            if (dy * dy + dx * dx > radius * radius) continue;
            double side = cs * dy - sn * dx;
            if (std::abs(side) <= 1e-9) continue;
            if (side > 0) {
                pa[binned[size_t(sy) * w + sx]] += 1;
                ca += 1;
            } else {
                pb[binned[size_t(sy) * w + sx]] += 1;
                cb += 1;
            }
        }
    if (ca == 0 || cb == 0) return 0;
    double chi = 0;
    for (int b = 0; b < nbins; ++b) {
        double a = pa[b] / ca, d = pb[b] / cb;
        if (a + d > 0) chi += (a - d) * (a - d) / (a + d);
    }
    return 0.5 * chi;
}

BoundaryMap constant_map(int h, int w, double v) {
    BoundaryMap b(h, w);
    std::fill(b.strength.begin(), b.strength.end(), v);
    return b;
}

}  // namespace

TEST_CASE("initial regions: constant map is one region") {
    LabelMap lm(5, 5);
    LabelMap r = initial_regions(lm, 4);
    CHECK(r.max_label() == 0);
}

TEST_CASE("initial regions: 4x4 checkerboard has 16 components before absorption") {
    LabelMap lm(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) lm.at(y, x) = (y + x) % 2;
    LabelMap r = initial_regions(lm, 1);  // absorption disabled
    CHECK(r.max_label() + 1 == 16);
}

TEST_CASE("initial regions: specks are absorbed into the longest-border neighbour") {
    LabelMap lm(4, 6);
    // a 2-pixel speck of label 1 inside label 0, plus a big label-2 block
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) lm.at(y, x) = x >= 4 ? 2 : 0;
    lm.at(1, 1) = 1;
    lm.at(1, 2) = 1;
    LabelMap r = initial_regions(lm, 4);
    CHECK(r.max_label() + 1 == 2);  // speck merged into the surrounding region
    CHECK(r.at(1, 1) == r.at(0, 0));
}

TEST_CASE("initial region count matches the flood-fill oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMap lm = oracle::random_labels(7, 9, 3, rng);
        LabelMap r = initial_regions(lm, 1);
        CHECK(r.max_label() + 1 == oracle::flood_fill_components(lm));
    }
}

TEST_CASE("constant image yields zero strengths") {
    ImageTensor img(12, 12, 3);
    std::fill(img.data.begin(), img.data.end(), 0.4);
    LabelMap support(12, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) support.at(y, x) = x < 6 ? 0 : 1;
    CueParams prm;
    prm.scales = {2, 4};
    BoundaryMap b = local_cues(img, support, prm);
    for (double v : b.strength) CHECK(v == 0.0);
}

TEST_CASE("vertical step edge: aligned orientation reaches chi2 = 1") {
    const int n = 16;
    ImageTensor img(n, n, 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) img.at(y, x, 0) = x < n / 2 ? 0.0 : 1.0;
    CueParams prm;
    auto channels = cue_channels(img, prm);
    REQUIRE(channels.size() == 1);
    // boundary pixel at the step, dividing line vertical (theta = pi/2)
    double aligned = half_disc_chi2(channels[0].binned, channels[0].nbins, n, n, 8, 7,
                                    M_PI / 2.0, 4.0);
    CHECK(aligned == doctest::Approx(1.0).epsilon(1e-12));
    for (int o = 0; o < 8; ++o) {
        double th = o * M_PI / 8.0;
        if (std::abs(th - M_PI / 2.0) < 1e-9) continue;
        double off = half_disc_chi2(channels[0].binned, channels[0].nbins, n, n, 8, 7, th, 4.0);
        CHECK(off < aligned);
    }
}

TEST_CASE("two-tone 16x16 strengths match the naive oracle within 1e-9") {
    const int n = 16;
    ImageTensor img(n, n, 3);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = (y < 9 ? 0.2 : 0.75) + 0.05 * c;
    LabelMap support(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) support.at(y, x) = y < 9 ? 0 : 1;
    CueParams prm;
    prm.scales = {2, 4};
    BoundaryMap got = local_cues(img, support, prm);

    auto channels = cue_channels(img, prm);
    auto mask = boundary_mask(support);
    auto logistic = [&](double x) {
        auto f = [&](double t) { return 1.0 / (1.0 + std::exp(-prm.logistic_a * (t - prm.logistic_b))); };
        return std::clamp((f(x) - f(0.0)) / (f(1.0) - f(0.0)), 0.0, 1.0);
    };
    const double beta = 1.0 / (channels.size() * prm.scales.size());
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            if (!mask[size_t(y) * n + x]) {
                CHECK(got.at(y, x) == 0.0);
                continue;
            }
            double best = 0.0;
            for (int o = 0; o < prm.orientations; ++o) {
                double th = o * M_PI / prm.orientations;
                double sum = 0.0;
                for (double s : prm.scales)
                    for (const auto& ch : channels)
                        sum += beta * halfdisc_oracle(ch.binned, ch.nbins, n, n, y, x, th, s);
                best = std::max(best, sum);
            }
            CHECK(got.at(y, x) == doctest::Approx(logistic(best)).epsilon(1e-9));
        }
}

TEST_CASE("orientation order does not change the cue (max over orientations)") {
    Rng rng(4);
    ImageTensor img = oracle::random_image(12, 12, 3, rng);
    LabelMap support(12, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) support.at(y, x) = y < 6 ? 0 : 1;
    CueParams prm;
    prm.scales = {3};
    BoundaryMap a = local_cues(img, support, prm);
    BoundaryMap b = local_cues(img, support, prm);
    CHECK(a.strength == b.strength);
}

TEST_CASE("oversized disc radius is rejected") {
    ImageTensor img(8, 8, 1);
    LabelMap support(8, 8);
    CueParams prm;
    prm.scales = {5.0};  // > 8/2
    CHECK_THROWS_AS(local_cues(img, support, prm), ParamError);
}

TEST_CASE("texton channel is deterministic and usable") {
    Rng rng(17);
    ImageTensor img = oracle::random_image(16, 16, 1, rng);
    CueParams prm;
    prm.use_texture = true;
    prm.textons = 8;
    auto a = cue_channels(img, prm);
    auto b = cue_channels(img, prm);
    REQUIRE(a.size() == 2);
    CHECK(a[1].nbins == 8);
    CHECK(a[1].binned == b[1].binned);
    for (int v : a[1].binned) {
        CHECK(v >= 0);
        CHECK(v < 8);
    }
}

TEST_CASE("spectral cue separates two blobs like the dense oracle") {
    // strong closed contour between left and right halves
    const int n = 32;
    BoundaryMap mpb(n, n);
    for (int y = 0; y < n; ++y) mpb.at(y, n / 2) = 1.0;

    CueParams prm;
    BoundaryMap cue = spectral_cue(mpb, prm);
    // the cue must peak near the dividing contour
    double on = 0, off = 0;
    int non = 0, noff = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            if (std::abs(x - n / 2) <= 2) {
                on += cue.at(y, x);
                ++non;
            } else if (std::abs(x - n / 2) >= 6) {
                off += cue.at(y, x);
                ++noff;
            }
        }
    CHECK(on / non > 5.0 * (off / noff + 1e-9));
}

TEST_CASE("second eigenvector sign-partitions two blobs, matching the dense oracle") {
    const int n = 32;
    BoundaryMap mpb(n, n);
    for (int y = 0; y < n; ++y) mpb.at(y, n / 2) = 1.0;  // strong dividing contour

    SpectralResult spec = spectral_eigenvectors(mpb, 2);
    REQUIRE(spec.converged);
    REQUIRE(spec.eigvecs.size() >= 1);

    // dense oracle: M = D^-1/2 W D^-1/2 from the same affinity, full Jacobi
    SparseAffinity w = intervening_contour_affinity(mpb);
    const int npix = n * n;
    std::vector<double> dinvh(npix);
    for (int u = 0; u < npix; ++u) dinvh[u] = 1.0 / std::sqrt(w.degree[u]);
    std::vector<std::vector<double>> m(npix, std::vector<double>(npix, 0.0));
    for (int u = 0; u < npix; ++u)
        for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
            m[u][w.cols[i]] = w.weights[i] * dinvh[u] * dinvh[w.cols[i]];
    std::vector<double> eigvals;
    std::vector<std::vector<double>> eigvecs;
    oracle::dense_eigen(m, eigvals, eigvecs);
    // largest eigenvalue of M is trivial; second-largest is the partition vector
    const auto& oracle_v2 = eigvecs[npix - 2];

    const auto& mine = spec.eigvecs[0];
    int agree = 0;
    double align = 0.0;
    for (int i = 0; i < npix; ++i) align += mine[i] * oracle_v2[i];
    double flip = align >= 0 ? 1.0 : -1.0;
    for (int i = 0; i < npix; ++i)
        if ((mine[i] >= 0) == (flip * oracle_v2[i] >= 0)) ++agree;
    CHECK(double(agree) / npix >= 0.95);

    SUBCASE("the sign partition follows the blobs") {
        int left_pos = 0, right_pos = 0, left_n = 0, right_n = 0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                if (x == n / 2) continue;
                bool pos = mine[y * n + x] >= 0;
                if (x < n / 2) {
                    ++left_n;
                    left_pos += pos;
                } else {
                    ++right_n;
                    right_pos += pos;
                }
            }
        double left_frac = double(left_pos) / left_n;
        double right_frac = double(right_pos) / right_n;
        CHECK(std::abs(left_frac - right_frac) > 0.9);  // opposite signs across the divide
    }

    SUBCASE("eigenvector residual stays below 1e-5") {
        for (size_t j = 0; j < spec.eigvecs.size(); ++j) {
            const auto& v = spec.eigvecs[j];
            double lambda = spec.eigvals[j];
            // residual of the symmetric Laplacian form: L v = lambda v with
            // L = I - M
            double resid = 0.0;
            for (int u = 0; u < npix; ++u) {
                double mv = 0.0;
                for (int i = w.row_begin[u]; i < w.row_begin[u + 1]; ++i)
                    mv += w.weights[i] * dinvh[u] * dinvh[w.cols[i]] * v[w.cols[i]];
                double lv = v[u] - mv;  // (I - M) v
                double diff = lv - lambda * v[u];
                resid += diff * diff;
            }
            CHECK(std::sqrt(resid) <= 1e-5);
        }
    }
}

TEST_CASE("constant local signal produces a near-zero spectral cue") {
    BoundaryMap mpb(24, 24);  // all zeros: uniform affinity
    CueParams prm;
    BoundaryMap cue = spectral_cue(mpb, prm);
    double mx = 0, mean = 0;
    for (double v : cue.strength) {
        mx = std::max(mx, v);
        mean += v;
    }
    mean /= cue.strength.size();
    CHECK(mean < 0.05);
    CHECK(mx < 0.2);
}

#ifdef WNET_HAVE_EIGEN
TEST_CASE("jacobi fallback agrees with the library eigensolver") {
    Rng rng(55);
    const int n = 40;
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) a[i][j] = a[j][i] = rng.uniform(-1, 1);
    std::vector<double> ja_vals, ei_vals;
    std::vector<std::vector<double>> ja_vecs, ei_vecs;
    oracle::jacobi_eigen(a, ja_vals, ja_vecs);
    oracle::dense_eigen(a, ei_vals, ei_vecs);
    for (int i = 0; i < n; ++i) {
        CHECK(ja_vals[i] == doctest::Approx(ei_vals[i]).epsilon(1e-9));
        double dot = 0;
        for (int k = 0; k < n; ++k) dot += ja_vecs[i][k] * ei_vecs[i][k];
        CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-6));
    }
}
#endif

TEST_CASE("build_ucm: single region has an empty merge list") {
    LabelMap one(4, 4);
    BoundaryMap b(4, 4);
    UcmHierarchy h = build_ucm(one, b);
    CHECK(h.merges.empty());
    CHECK(threshold_ucm(h, 0.5).max_label() == 0);
}

TEST_CASE("three collinear regions merge in strength order") {
    // regions: columns [0,3] label 0, [4,7] label 1, [8,11] label 2
    const int w = 12, hgt = 4;
    LabelMap regions(hgt, w);
    for (int y = 0; y < hgt; ++y)
        for (int x = 0; x < w; ++x) regions.at(y, x) = x / 4;
    BoundaryMap b(hgt, w);
    // border 0|1 at columns 3,4 strength 0.2; border 1|2 at columns 7,8 strength 0.7
    for (int y = 0; y < hgt; ++y) {
        b.at(y, 3) = 0.2;
        b.at(y, 4) = 0.2;
        b.at(y, 7) = 0.7;
        b.at(y, 8) = 0.7;
    }
    UcmHierarchy h = build_ucm(regions, b);
    REQUIRE(h.merges.size() == 2);
    CHECK(h.merges[0].a == 0);
    CHECK(h.merges[0].b == 1);
    CHECK(h.merges[0].strength == doctest::Approx(0.2));
    CHECK(h.merges[1].strength == doctest::Approx(0.7));

    SUBCASE("threshold 0.5 yields two segments") {
        LabelMap seg = threshold_ucm(h, 0.5);
        CHECK(seg.max_label() + 1 == 2);
        CHECK(seg.at(0, 0) == seg.at(0, 5));
        CHECK(seg.at(0, 0) != seg.at(0, 9));
    }
    SUBCASE("threshold 1 is a single region, threshold 0 the initial ones") {
        CHECK(threshold_ucm(h, 1.0).max_label() + 1 == 1);
        CHECK(threshold_ucm(h, 0.0).max_label() + 1 == 3);
    }
    SUBCASE("ucm image carries the merge strengths on the borders") {
        CHECK(h.ucm.at(0, 3) == doctest::Approx(0.2));
        CHECK(h.ucm.at(0, 8) == doctest::Approx(0.7));
        CHECK(h.ucm.at(0, 0) == 0.0);
    }
}

TEST_CASE("equal-weight ties merge the smallest pair first") {
    LabelMap regions(1, 6);
    regions.labels = {0, 0, 1, 1, 2, 2};
    BoundaryMap b(1, 6);  // all borders weight 0
    UcmHierarchy h = build_ucm(regions, b);
    REQUIRE(h.merges.size() == 2);
    CHECK(h.merges[0].a == 0);
    CHECK(h.merges[0].b == 1);
}

TEST_CASE("random hierarchies: monotone strengths and nested thresholds") {
    Rng rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        int hgt = 6 + rng.next_int(6), w = 6 + rng.next_int(6);
        LabelMap seed = oracle::random_labels(hgt, w, 4, rng);
        LabelMap regions = initial_regions(seed, 1);
        BoundaryMap b(hgt, w);
        for (auto& v : b.strength) v = rng.next_double();
        UcmHierarchy h = build_ucm(regions, b);
        for (size_t i = 1; i < h.merges.size(); ++i)
            REQUIRE(h.merges[i].strength >= h.merges[i - 1].strength);
        double t1 = rng.next_double(), t2 = rng.next_double();
        if (t1 > t2) std::swap(t1, t2);
        LabelMap s1 = threshold_ucm(h, t1);
        LabelMap s2 = threshold_ucm(h, t2);
        // nesting: every t2 region is a union of t1 regions, i.e. the t1
        // label determines the t2 label
        std::vector<int> to2(s1.max_label() + 1, -1);
        for (int i = 0; i < s1.pixels(); ++i) {
            int a = s1.labels[i], c = s2.labels[i];
            if (to2[a] == -1)
                to2[a] = c;
            else
                REQUIRE(to2[a] == c);
        }
    }
}

TEST_CASE("ucm and merge list files round-trip") {
    LabelMap regions(1, 6);
    regions.labels = {0, 0, 1, 1, 2, 2};
    BoundaryMap b(1, 6);
    b.strength = {0, 0.1, 0.1, 0.4, 0.4, 0};
    UcmHierarchy h = build_ucm(regions, b);
    save_ucm(h.ucm, "/tmp/wnet_test.ucm");
    BoundaryMap back = load_ucm("/tmp/wnet_test.ucm");
    for (size_t i = 0; i < back.strength.size(); ++i)
        CHECK(back.strength[i] == doctest::Approx(h.ucm.strength[i]).epsilon(1e-6));
    save_merge_list(h.merges, "/tmp/wnet_test.hier");
    auto merges = load_merge_list("/tmp/wnet_test.hier");
    REQUIRE(merges.size() == h.merges.size());
    for (size_t i = 0; i < merges.size(); ++i) {
        CHECK(merges[i].a == h.merges[i].a);
        CHECK(merges[i].b == h.merges[i].b);
        CHECK(merges[i].strength == doctest::Approx(h.merges[i].strength).epsilon(1e-12));
    }
    std::remove("/tmp/wnet_test.ucm");
    std::remove("/tmp/wnet_test.hier");
}
