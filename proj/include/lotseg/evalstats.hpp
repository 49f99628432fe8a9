#pragma once

#include <string>
#include <vector>

#include "lotseg/tensor.hpp"

namespace lotseg {

/// Dice overlap of one class between two label maps. Both sets empty -> 1.
double dice(const LabelMap& a, const LabelMap& b, int class_id);

enum class Region { kBase, kMid, kApex };

const char* region_name(Region r);

/// Deterministic base/mid/apex assignment for n stacked slices: the first
/// ceil(n/3) are base, the last floor(n/3) apex, the rest mid.
std::vector<Region> region_split(int n);

struct WilcoxonResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    int n_nonzero = 0;
    double p_value = 1.0;
    bool exact = false;
};

/// Two-sided Wilcoxon signed-rank test for paired samples. Zero differences
/// are dropped; ties get average ranks. Exact null distribution for up to 20
/// nonzero differences, normal approximation with tie and continuity
/// correction beyond that. Throws StatsError with fewer than 5 nonzero
/// differences.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

/// One evaluated frame of one method.
struct EvalCase {
    std::string method;
    Region region = Region::kMid;
    std::string phase;    // "ED" or "ES"
    std::string case_id;  // sequence/frame identifier
    std::vector<double> dice_per_class;  // indexed by ClassId
    std::vector<double> sigma_v_ml;      // per-class ensemble volume SD
};

struct MethodComparison {
    std::string method_a;
    std::string method_b;
    int class_id = 0;
    WilcoxonResult test;  // paired over common case ids
};

/// Paired test on one class's Dice between two methods, matched by
/// (region, phase, case_id).
MethodComparison compare_methods(const std::vector<EvalCase>& cases, const std::string& method_a,
                                 const std::string& method_b, int class_id);

/// Deterministic CSV: header then one row per case and class, fixed 6-decimal
/// formatting, rows sorted by (method, region, phase, case_id, class).
void write_eval_csv(const std::string& path, const std::vector<EvalCase>& cases,
                    const std::vector<MethodComparison>& comparisons);

/// Median of a copy of v (mean of the middle two for even sizes).
double median(std::vector<double> v);

}  // namespace lotseg
