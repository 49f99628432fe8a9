#include "lotseg/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "lotseg/common.hpp"

namespace lotseg {

double dice(const LabelMap& a, const LabelMap& b, int class_id) {
    if (a.h != b.h || a.w != b.w) throw ContractError("dice: shape mismatch");
    if (class_id < 0 || class_id >= kNumClasses)
        throw ContractError("dice: unknown class id " + std::to_string(class_id));
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const bool in_a = int(a.v[i]) == class_id;
        const bool in_b = int(b.v[i]) == class_id;
        na += in_a;
        nb += in_b;
        inter += in_a && in_b;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(inter) / double(na + nb);
}

const char* region_name(Region r) {
    switch (r) {
        case Region::kBase: return "base";
        case Region::kMid: return "mid";
        case Region::kApex: return "apex";
    }
    throw ContractError("region_name: bad region");
}

std::vector<Region> region_split(int n) {
    if (n < 3) throw ConfigError("region_split: need at least 3 slices, got " + std::to_string(n));
    const int base = (n + 2) / 3;
    const int apex = n / 3;
    std::vector<Region> out(std::size_t(n), Region::kMid);
    for (int i = 0; i < base; ++i) out[std::size_t(i)] = Region::kBase;
    for (int i = n - apex; i < n; ++i) out[std::size_t(i)] = Region::kApex;
    return out;
}

namespace {

// Ranks doubled so average ranks over ties stay integral.
std::vector<long> doubled_ranks(const std::vector<double>& abs_d) {
    const std::size_t n = abs_d.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
    std::vector<long> rank2(n, 0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && abs_d[idx[j + 1]] == abs_d[idx[i]]) ++j;
        // average of ranks i+1 .. j+1, doubled: (i+1 + j+1)
        const long r2 = long(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) rank2[idx[k]] = r2;
        i = j + 1;
    }
    return rank2;
}

double normal_sf_two_sided(double w_plus, const std::vector<long>& rank2) {
    const double n = double(rank2.size());
    const double mean = n * (n + 1.0) / 4.0;
    double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    // tie correction: group sizes from repeated doubled ranks
    std::map<long, int> groups;
    for (long r : rank2) ++groups[r];
    for (const auto& [r, t] : groups) var -= (double(t) * t * t - t) / 48.0;
    if (var <= 0) throw StatsError("wilcoxon: zero variance, all differences tied at one value");
    double z = std::abs(w_plus - mean) - 0.5;
    if (z < 0) z = 0;
    z /= std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

double exact_two_sided(long w2, long total2, const std::vector<long>& rank2) {
    // null distribution of the doubled statistic by subset-sum counting
    const long m = std::min(w2, total2 - w2);
    std::vector<double> f(std::size_t(total2) + 1, 0.0);
    f[0] = 1.0;
    long reach = 0;
    for (long r : rank2) {
        reach += r;
        for (long s = reach; s >= r; --s) f[std::size_t(s)] += f[std::size_t(s - r)];
    }
    double tail = 0.0;
    for (long s = 0; s <= m; ++s) tail += f[std::size_t(s)];
    return std::min(1.0, 2.0 * tail / std::pow(2.0, double(rank2.size())));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("wilcoxon: paired samples of unequal length");
    std::vector<double> abs_d;
    std::vector<int> sign;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (!std::isfinite(d)) throw StatsError("wilcoxon: non-finite difference");
        if (d == 0.0) continue;
        abs_d.push_back(std::abs(d));
        sign.push_back(d > 0 ? 1 : -1);
    }
    WilcoxonResult res;
    res.n_nonzero = int(abs_d.size());
    if (res.n_nonzero < 5)
        throw StatsError("wilcoxon: need at least 5 nonzero differences, got " +
                         std::to_string(res.n_nonzero));

    const std::vector<long> rank2 = doubled_ranks(abs_d);
    long w2_plus = 0, total2 = 0;
    for (std::size_t i = 0; i < rank2.size(); ++i) {
        total2 += rank2[i];
        if (sign[i] > 0) w2_plus += rank2[i];
    }
    res.w_plus = double(w2_plus) / 2.0;
    res.w_minus = double(total2 - w2_plus) / 2.0;

    if (res.n_nonzero <= 20) {
        res.exact = true;
        res.p_value = exact_two_sided(w2_plus, total2, rank2);
    } else {
        res.exact = false;
        res.p_value = normal_sf_two_sided(res.w_plus, rank2);
    }
    return res;
}

MethodComparison compare_methods(const std::vector<EvalCase>& cases, const std::string& method_a,
                                 const std::string& method_b, int class_id) {
    if (class_id < 0 || class_id >= kNumClasses)
        throw ContractError("compare_methods: unknown class id " + std::to_string(class_id));
    std::map<std::string, double> a_by_key, b_by_key;
    for (const EvalCase& c : cases) {
        if (std::size_t(class_id) >= c.dice_per_class.size())
            throw ContractError("compare_methods: case " + c.case_id + " lacks class " +
                                std::to_string(class_id));
        const std::string key =
            std::string(region_name(c.region)) + "/" + c.phase + "/" + c.case_id;
        if (c.method == method_a) a_by_key[key] = c.dice_per_class[std::size_t(class_id)];
        if (c.method == method_b) b_by_key[key] = c.dice_per_class[std::size_t(class_id)];
    }
    std::vector<double> xa, xb;
    for (const auto& [key, va] : a_by_key) {
        auto it = b_by_key.find(key);
        if (it == b_by_key.end()) continue;
        xa.push_back(va);
        xb.push_back(it->second);
    }
    if (xa.empty())
        throw StatsError("compare_methods: no common cases between " + method_a + " and " +
                         method_b);
    MethodComparison cmp;
    cmp.method_a = method_a;
    cmp.method_b = method_b;
    cmp.class_id = class_id;
    cmp.test = wilcoxon_signed_rank(xa, xb);
    return cmp;
}

namespace {

std::string fmt6(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

}  // namespace

void write_eval_csv(const std::string& path, const std::vector<EvalCase>& cases,
                    const std::vector<MethodComparison>& comparisons) {
    std::vector<const EvalCase*> order;
    order.reserve(cases.size());
    for (const EvalCase& c : cases) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](const EvalCase* a, const EvalCase* b) {
        auto key = [](const EvalCase* c) {
            return std::tuple<const std::string&, int, const std::string&, const std::string&>(
                c->method, int(c->region), c->phase, c->case_id);
        };
        return key(a) < key(b);
    });

    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "record,method,region,phase,case_id,class,dice,sigma_v_ml,p_value\n";
    for (const EvalCase* c : order) {
        for (std::size_t k = 0; k < c->dice_per_class.size(); ++k) {
            const std::string sv =
                (k < c->sigma_v_ml.size()) ? fmt6(c->sigma_v_ml[k]) : std::string();
            out << "case," << c->method << "," << region_name(c->region) << "," << c->phase << ","
                << c->case_id << "," << k << "," << fmt6(c->dice_per_class[k]) << "," << sv
                << ",\n";
        }
    }
    for (const MethodComparison& m : comparisons) {
        out << "comparison," << m.method_a << " vs " << m.method_b << ",,,," << m.class_id
            << ",,," << fmt6(m.test.p_value) << "\n";
    }
    if (!out) throw FormatError("short write: " + path);
}

double median(std::vector<double> v) {
    if (v.empty()) throw StatsError("median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace lotseg
