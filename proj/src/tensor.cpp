#include "wnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace wnet {

int LabelMap::compact() {
    std::unordered_map<int, int> remap;
    remap.reserve(64);
    int next = 0;
    for (auto& l : labels) {
        auto it = remap.find(l);
        if (it == remap.end()) {
            remap.emplace(l, next);
            l = next++;
        } else {
            l = it->second;
        }
    }
    return next;
}

int LabelMap::max_label() const {
    int m = -1;
    for (int l : labels) m = std::max(m, l);
    return m;
}

void SoftSegmentation::validate(double tol) const {
    for (int i = 0; i < pixels(); ++i) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) {
            double v = probs[static_cast<size_t>(i) * k + c];
            if (!(v >= 0.0 && v <= 1.0))
                throw DataError("SoftSegmentation: probability out of [0,1] at pixel " +
                                std::to_string(i));
            s += v;
        }
        if (std::abs(s - 1.0) > tol)
            throw DataError("SoftSegmentation: pixel " + std::to_string(i) +
                            " sums to " + std::to_string(s));
    }
}

// ---- PNM ------------------------------------------------------------------

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct PnmScanner {
    const std::string& buf;
    const std::string& path;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(path + ": " + what + " at byte " + std::to_string(pos));
    }

    // Skips PNM whitespace and '#' comments.
    void skip_space() {
        while (pos < buf.size()) {
            char c = buf[pos];
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int next_int() {
        skip_space();
        if (pos >= buf.size() || !isdigit(static_cast<unsigned char>(buf[pos])))
            fail("expected integer");
        long v = 0;
        while (pos < buf.size() && isdigit(static_cast<unsigned char>(buf[pos]))) {
            v = v * 10 + (buf[pos] - '0');
            if (v > 1 << 30) fail("integer out of range");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

}  // namespace

ImageTensor load_pnm(const std::string& path) {
    std::string buf = read_file(path);
    PnmScanner sc{buf, path};
    if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
        sc.fail("not a binary PGM/PPM (want P5 or P6)");
    int channels = buf[1] == '5' ? 1 : 3;
    sc.pos = 2;
    int w = sc.next_int();
    int h = sc.next_int();
    int maxval = sc.next_int();
    if (w <= 0 || h <= 0) sc.fail("degenerate dimensions");
    if (maxval != 255) sc.fail("unsupported maxval " + std::to_string(maxval));
    if (sc.pos >= buf.size()) sc.fail("missing raster");
    ++sc.pos;  // single whitespace byte after maxval
    size_t need = static_cast<size_t>(w) * h * channels;
    if (buf.size() - sc.pos < need)
        throw FormatError(path + ": truncated raster at byte " + std::to_string(buf.size()) +
                          " (need " + std::to_string(sc.pos + need) + " bytes)");
    ImageTensor img(h, w, channels);
    for (size_t i = 0; i < need; ++i)
        img.data[i] = static_cast<unsigned char>(buf[sc.pos + i]) / 255.0;
    return img;
}

void save_pnm(const ImageTensor& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw DataError("save_pnm: unsupported shape, channels=" + std::to_string(img.channels));
    if (img.height <= 0 || img.width <= 0)
        throw DataError("save_pnm: degenerate image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f << (img.channels == 1 ? "P5\n" : "P6\n") << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        long v = std::lround(img.data[i] * 255.0);
        row[i] = static_cast<unsigned char>(std::clamp(v, 0l, 255l));
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!f) throw FormatError("short write to " + path);
}

LabelMap load_label_map(const std::string& path) {
    std::string buf = read_file(path);
    PnmScanner sc{buf, path};
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
        sc.fail("not a binary PGM (want P5)");
    sc.pos = 2;
    int w = sc.next_int();
    int h = sc.next_int();
    int maxval = sc.next_int();
    if (w <= 0 || h <= 0) sc.fail("degenerate dimensions");
    if (maxval != 65535) sc.fail("label maps require maxval 65535, got " + std::to_string(maxval));
    ++sc.pos;
    size_t need = static_cast<size_t>(w) * h * 2;
    if (buf.size() - sc.pos < need)
        throw FormatError(path + ": truncated raster at byte " + std::to_string(buf.size()));
    LabelMap lm(h, w);
    for (int i = 0; i < h * w; ++i) {
        unsigned hi = static_cast<unsigned char>(buf[sc.pos + 2 * i]);
        unsigned lo = static_cast<unsigned char>(buf[sc.pos + 2 * i + 1]);
        lm.labels[i] = static_cast<int>((hi << 8) | lo);
    }
    return lm;
}

void save_label_map(const LabelMap& lm, const std::string& path) {
    if (lm.height <= 0 || lm.width <= 0) throw DataError("save_label_map: degenerate map");
    for (int l : lm.labels)
        if (l < 0 || l > 65535)
            throw DataError("save_label_map: label " + std::to_string(l) +
                            " outside 16-bit range");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f << "P5\n" << lm.width << " " << lm.height << "\n65535\n";
    std::vector<unsigned char> raw(lm.labels.size() * 2);
    for (size_t i = 0; i < lm.labels.size(); ++i) {
        raw[2 * i] = static_cast<unsigned char>(lm.labels[i] >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(lm.labels[i] & 0xff);
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw FormatError("short write to " + path);
}

// ---- BSDS .seg -------------------------------------------------------------

LabelMap load_bsds_seg(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open " + path);
    int width = -1, height = -1, segments = -1;
    std::string line;
    bool in_data = false;
    while (std::getline(f, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "width") ls >> width;
        else if (key == "height") ls >> height;
        else if (key == "segments") ls >> segments;
        else if (key == "data") { in_data = true; break; }
        // other header fields (format, date, image, user, gray, ...) ignored
    }
    if (!in_data) throw FormatError(path + ": missing data section");
    if (width <= 0 || height <= 0)
        throw FormatError(path + ": missing or invalid width/height");
    if (segments <= 0) throw FormatError(path + ": missing or invalid segments");

    LabelMap lm(height, width);
    std::vector<uint8_t> covered(static_cast<size_t>(height) * width, 0);
    long label, row, c0, c1;
    while (f >> label >> row >> c0 >> c1) {
        if (label < 0 || row < 0 || row >= height || c0 < 0 || c1 < c0 || c1 >= width)
            throw FormatError(path + ": run out of bounds: " + std::to_string(label) + " " +
                              std::to_string(row) + " " + std::to_string(c0) + " " +
                              std::to_string(c1));
        for (long x = c0; x <= c1; ++x) {
            size_t idx = static_cast<size_t>(row) * width + x;
            if (covered[idx])
                throw DataError(path + ": pixel (" + std::to_string(row) + "," +
                                std::to_string(x) + ") covered twice");
            covered[idx] = 1;
            lm.labels[idx] = static_cast<int>(label);
        }
    }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (!covered[static_cast<size_t>(y) * width + x])
                throw DataError(path + ": pixel (" + std::to_string(y) + "," +
                                std::to_string(x) + ") not covered");
    return lm;
}

// ---- resampling -------------------------------------------------------------

ImageTensor resize_bilinear(const ImageTensor& img, int oh, int ow) {
    if (oh <= 0 || ow <= 0) throw ParamError("resize_bilinear: bad output size");
    if (img.height == oh && img.width == ow) return img;
    ImageTensor out(oh, ow, img.channels);
    double sy = static_cast<double>(img.height) / oh;
    double sx = static_cast<double>(img.width) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int ya = std::clamp(y0, 0, img.height - 1);
        int yb = std::clamp(y0 + 1, 0, img.height - 1);
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int xa = std::clamp(x0, 0, img.width - 1);
            int xb = std::clamp(x0 + 1, 0, img.width - 1);
            for (int c = 0; c < img.channels; ++c) {
                double top = img.at(ya, xa, c) * (1 - wx) + img.at(ya, xb, c) * wx;
                double bot = img.at(yb, xa, c) * (1 - wx) + img.at(yb, xb, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

LabelMap upsample_nearest(const LabelMap& lm, int oh, int ow) {
    if (oh <= 0 || ow <= 0) throw ParamError("upsample_nearest: bad output size");
    if (lm.height == oh && lm.width == ow) return lm;
    LabelMap out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        int sy = std::min(static_cast<int>((y + 0.5) * lm.height / oh), lm.height - 1);
        for (int x = 0; x < ow; ++x) {
            int sx = std::min(static_cast<int>((x + 0.5) * lm.width / ow), lm.width - 1);
            out.at(y, x) = lm.at(sy, sx);
        }
    }
    return out;
}

// ---- helpers ----------------------------------------------------------------

std::vector<uint8_t> boundary_mask(const LabelMap& lm) {
    std::vector<uint8_t> mask(static_cast<size_t>(lm.height) * lm.width, 0);
    for (int y = 0; y < lm.height; ++y)
        for (int x = 0; x < lm.width; ++x) {
            int l = lm.at(y, x);
            bool b = (y > 0 && lm.at(y - 1, x) != l) || (y + 1 < lm.height && lm.at(y + 1, x) != l) ||
                     (x > 0 && lm.at(y, x - 1) != l) || (x + 1 < lm.width && lm.at(y, x + 1) != l);
            mask[static_cast<size_t>(y) * lm.width + x] = b ? 1 : 0;
        }
    return mask;
}

LabelMap argmax_labels(const SoftSegmentation& q) {
    LabelMap lm(q.height, q.width);
    for (int i = 0; i < q.pixels(); ++i) {
        int best = 0;
        double bv = q.probs[static_cast<size_t>(i) * q.k];
        for (int c = 1; c < q.k; ++c) {
            double v = q.probs[static_cast<size_t>(i) * q.k + c];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        lm.labels[i] = best;
    }
    return lm;
}

}  // namespace wnet
