#include "wnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wnet {

namespace {

void check_pair(const LabelMap& s, const std::vector<LabelMap>& gts) {
    if (gts.empty()) throw DataError("metrics: empty ground-truth list");
    for (const auto& g : gts)
        if (g.height != s.height || g.width != s.width)
            throw DataError("metrics: segmentation and ground truth shapes disagree");
}

struct Contingency {
    int ls = 0, lg = 0;                   // class counts
    std::vector<long long> joint;         // ls x lg pixel counts
    std::vector<long long> s_size, g_size;

    Contingency(const LabelMap& s, const LabelMap& g) {
        LabelMap cs = s, cg = g;
        ls = cs.compact();
        lg = cg.compact();
        joint.assign(static_cast<size_t>(ls) * lg, 0);
        s_size.assign(ls, 0);
        g_size.assign(lg, 0);
        for (int i = 0; i < s.pixels(); ++i) {
            int a = cs.labels[i], b = cg.labels[i];
            ++joint[static_cast<size_t>(a) * lg + b];
            ++s_size[a];
            ++g_size[b];
        }
    }
};

double pairs2(long long n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

}  // namespace

double segmentation_covering(const LabelMap& s, const std::vector<LabelMap>& gts) {
    check_pair(s, gts);
    const double n = s.pixels();
    double total = 0.0;
    for (const auto& g : gts) {
        Contingency c(s, g);
        double cover = 0.0;
        for (int bg = 0; bg < c.lg; ++bg) {
            double best = 0.0;
            for (int as = 0; as < c.ls; ++as) {
                long long inter = c.joint[static_cast<size_t>(as) * c.lg + bg];
                if (inter == 0) continue;
                double uni = static_cast<double>(c.s_size[as] + c.g_size[bg] - inter);
                best = std::max(best, static_cast<double>(inter) / uni);
            }
            cover += static_cast<double>(c.g_size[bg]) * best;
        }
        total += cover / n;
    }
    return total / gts.size();
}

double probabilistic_rand(const LabelMap& s, const std::vector<LabelMap>& gts) {
    check_pair(s, gts);
    const long long n = s.pixels();
    const double total_pairs = pairs2(n);
    if (total_pairs == 0.0) throw DataError("probabilistic_rand: needs at least 2 pixels");
    double acc = 0.0;
    for (const auto& g : gts) {
        Contingency c(s, g);
        double same_joint = 0.0, same_s = 0.0, same_g = 0.0;
        for (long long v : c.joint) same_joint += pairs2(v);
        for (long long v : c.s_size) same_s += pairs2(v);
        for (long long v : c.g_size) same_g += pairs2(v);
        // agreements: pairs joined in both plus pairs separated in both
        double agree = total_pairs - same_s - same_g + 2.0 * same_joint;
        acc += agree / total_pairs;
    }
    return acc / gts.size();
}

double variation_of_information(const LabelMap& s, const std::vector<LabelMap>& gts) {
    check_pair(s, gts);
    const double n = s.pixels();
    double acc = 0.0;
    for (const auto& g : gts) {
        Contingency c(s, g);
        // H(S|G) + H(G|S): every term is the log of a ratio >= 1, so the
        // result is non-negative and exactly zero on identical partitions
        double vi = 0.0;
        for (int as = 0; as < c.ls; ++as)
            for (int bg = 0; bg < c.lg; ++bg) {
                long long v = c.joint[static_cast<size_t>(as) * c.lg + bg];
                if (v == 0) continue;
                double pij = v / n;
                double pi = c.s_size[as] / n;
                double qj = c.g_size[bg] / n;
                vi += pij * (std::log(pi / pij) + std::log(qj / pij));
            }
        acc += vi;
    }
    return acc / gts.size();
}

OdsOisSummary ods_ois(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw DataError("ods_ois: no records");
    const auto& grid = records.front().thresholds;
    if (grid.empty()) throw DataError("ods_ois: empty threshold grid");
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw DataError("ods_ois: thresholds not increasing");
    for (const auto& r : records) {
        if (r.thresholds != grid) throw DataError("ods_ois: inconsistent grids across records");
        if (r.sc.size() != grid.size() || r.pri.size() != grid.size() ||
            r.vi.size() != grid.size())
            throw DataError("ods_ois: record " + r.id + " has missing scores");
    }

    const size_t nt = grid.size();
    const double ni = static_cast<double>(records.size());
    OdsOisSummary out;
    auto aggregate = [&](auto score_of, bool maximize, double& ods, double& ods_thr,
                         double& ois) {
        size_t best_t = 0;
        double best_mean = 0.0;
        for (size_t t = 0; t < nt; ++t) {
            double mean = 0.0;
            for (const auto& r : records) mean += score_of(r)[t];
            mean /= ni;
            if (t == 0 || (maximize ? mean > best_mean : mean < best_mean)) {
                best_mean = mean;
                best_t = t;
            }
        }
        ods = best_mean;
        ods_thr = grid[best_t];
        double acc = 0.0;
        for (const auto& r : records) {
            const auto& v = score_of(r);
            double best = v[0];
            for (size_t t = 1; t < nt; ++t)
                best = maximize ? std::max(best, v[t]) : std::min(best, v[t]);
            acc += best;
        }
        ois = acc / ni;
    };
    aggregate([](const EvalRecord& r) -> const std::vector<double>& { return r.sc; }, true,
              out.ods_sc, out.ods_sc_threshold, out.ois_sc);
    aggregate([](const EvalRecord& r) -> const std::vector<double>& { return r.pri; }, true,
              out.ods_pri, out.ods_pri_threshold, out.ois_pri);
    aggregate([](const EvalRecord& r) -> const std::vector<double>& { return r.vi; }, false,
              out.ods_vi, out.ods_vi_threshold, out.ois_vi);
    return out;
}

void write_report_csv(const std::string& path, const std::vector<EvalRecord>& records) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f << "image,threshold,sc,pri,vi\n";
    f.precision(12);
    for (const auto& r : records)
        for (size_t t = 0; t < r.thresholds.size(); ++t)
            f << r.id << "," << r.thresholds[t] << "," << r.sc[t] << "," << r.pri[t] << ","
              << r.vi[t] << "\n";
    if (!f) throw FormatError("short write to " + path);
}

std::string summary_table(const OdsOisSummary& s) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "              SC              PRI             VI\n";
    os << "            ODS     OIS     ODS     OIS     ODS     OIS\n";
    os << "scores    " << s.ods_sc << "  " << s.ois_sc << "  " << s.ods_pri << "  " << s.ois_pri
       << "  " << s.ods_vi << "  " << s.ois_vi << "\n";
    os << "ods thr   " << s.ods_sc_threshold << "  " << "      " << "  " << s.ods_pri_threshold
       << "  " << "      " << "  " << s.ods_vi_threshold << "\n";
    return os.str();
}

}  // namespace wnet
