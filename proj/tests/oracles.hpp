#pragma once

// Independent scalar reference implementations used as oracles. These stay
// deliberately naive and separate from the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

namespace oracles {

inline double bce(const std::vector<double>& probs, const std::vector<int>& labels) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::min(std::max(probs[i], 1e-7), 1.0 - 1e-7);
        acc += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return acc / static_cast<double>(probs.size());
}

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

// triplet-with-margin plus hinged centroid separation, looped pairwise
inline double contrastive(const std::vector<double>& anchor,
                          const std::vector<std::vector<double>>& positives,
                          const std::vector<std::vector<double>>& negatives, double gamma) {
    double loss = 0.0;
    for (const auto& p : positives)
        for (const auto& n : negatives) {
            const double t = euclid(p, anchor) - euclid(n, anchor) + gamma;
            if (t > 0) loss += t;
        }
    std::vector<double> cp(anchor.size(), 0.0), cn(anchor.size(), 0.0);
    for (const auto& p : positives)
        for (std::size_t i = 0; i < cp.size(); ++i) cp[i] += p[i] / static_cast<double>(positives.size());
    for (const auto& n : negatives)
        for (std::size_t i = 0; i < cn.size(); ++i) cn[i] += n[i] / static_cast<double>(negatives.size());
    const double cterm = gamma - euclid(cp, cn);
    if (cterm > 0) loss += cterm;
    return loss;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double top1max(double r_pos, const std::vector<double>& r_negs) {
    double z = 0.0;
    double mx = *std::max_element(r_negs.begin(), r_negs.end());
    std::vector<double> s(r_negs.size());
    for (std::size_t j = 0; j < r_negs.size(); ++j) {
        s[j] = std::exp(r_negs[j] - mx);
        z += s[j];
    }
    double loss = 0.0;
    for (std::size_t j = 0; j < r_negs.size(); ++j)
        loss += (s[j] / z) * (sigmoid(r_negs[j] - r_pos) + sigmoid(r_negs[j] * r_negs[j]));
    return loss;
}

struct RankingPoint {
    double hr, ndcg, recall, rr;
};

// one query at one k, straight from the definitions
inline RankingPoint ranking_point(const std::vector<std::uint32_t>& list,
                                  const std::set<std::uint32_t>& relevant, int k) {
    RankingPoint out{0, 0, 0, 0};
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (relevant.count(list[i])) {
            out.rr = 1.0 / static_cast<double>(i + 1);
            break;
        }
    }
    int hits = 0;
    double dcg = 0.0;
    for (int i = 0; i < k && i < static_cast<int>(list.size()); ++i) {
        if (relevant.count(list[static_cast<std::size_t>(i)])) {
            ++hits;
            dcg += 1.0 / std::log2(i + 2.0);
        }
    }
    out.hr = hits > 0 ? 1.0 : 0.0;
    double idcg = 0.0;
    for (int i = 0; i < k && i < static_cast<int>(relevant.size()); ++i) idcg += 1.0 / std::log2(i + 2.0);
    out.ndcg = idcg > 0 ? dcg / idcg : 0.0;
    out.recall = relevant.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(relevant.size());
    return out;
}

struct Confusion {
    int tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
    Confusion c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] && labels[i]) ++c.tp;
        if (preds[i] && !labels[i]) ++c.fp;
        if (!preds[i] && labels[i]) ++c.fn;
        if (!preds[i] && !labels[i]) ++c.tn;
    }
    return c;
}

inline double percentile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    const double idx = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (values[hi] - values[lo]) * (idx - static_cast<double>(lo));
}

struct Stats {
    double minimum, maximum, mean, median, skew, kurtosis;
};

inline Stats stats(const std::vector<double>& v) {
    Stats s{};
    s.minimum = *std::min_element(v.begin(), v.end());
    s.maximum = *std::max_element(v.begin(), v.end());
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    s.mean = m;
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    s.median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    s.skew = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
    s.kurtosis = m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    return s;
}

}  // namespace oracles
