#pragma once

// Region benchmark metrics over multi-annotator ground truth, plus ODS/OIS
// aggregation across hierarchy thresholds.
//
//   segmentation_covering  (1/T) sum_t (1/N) sum_{R in G_t} |R| max_{R' in S} IoU(R, R')
//   probabilistic_rand     (1/T) sum_t fraction of pixel pairs (i<j) on which
//                          S and G_t agree about same/different label
//   variation_of_information  (1/T) sum_t H(S) + H(G_t) - 2 I(S; G_t), nats
//
// All three are computed from contingency tables and are invariant to label
// permutations of either argument.

#include <string>
#include <vector>

#include "wnet/tensor.hpp"

namespace wnet {

double segmentation_covering(const LabelMap& s, const std::vector<LabelMap>& gts);
double probabilistic_rand(const LabelMap& s, const std::vector<LabelMap>& gts);
double variation_of_information(const LabelMap& s, const std::vector<LabelMap>& gts);

struct EvalRecord {
    std::string id;
    std::vector<double> thresholds;  // strictly increasing
    std::vector<double> sc, pri, vi;
    int gt_count = 0;
};

struct OdsOisSummary {
    double ods_sc = 0, ois_sc = 0;
    double ods_pri = 0, ois_pri = 0;
    double ods_vi = 0, ois_vi = 0;
    double ods_sc_threshold = 0, ods_pri_threshold = 0, ods_vi_threshold = 0;
};

// ODS picks, per metric, the single grid threshold optimizing the dataset
// mean (max for SC/PRI, min for VI; ties to the lowest threshold); OIS
// averages per-image optima. Every record must share the threshold grid.
OdsOisSummary ods_ois(const std::vector<EvalRecord>& records);

// `image,threshold,sc,pri,vi` rows.
void write_report_csv(const std::string& path, const std::vector<EvalRecord>& records);

// Text table in the usual benchmark shape (SC / PRI / VI columns, ODS and
// OIS per metric).
std::string summary_table(const OdsOisSummary& s);

}  // namespace wnet
