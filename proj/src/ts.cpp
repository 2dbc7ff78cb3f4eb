#include "monrec/ts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "monrec/kernels.hpp"

namespace monrec::ts {

void MetricTimeseries::validate() const {
    if (timestamps.size() != values.size())
        throw Error("timeseries '" + metric_key + "': timestamp/value lengths differ");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
        if (timestamps[i] <= timestamps[i - 1])
            throw Error("timeseries '" + metric_key + "': timestamps must be strictly increasing");
}

StatFeatures stat_features(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw Error("stat_features: need at least 2 samples, got " + std::to_string(n));

    StatFeatures f;
    f.minimum = *std::min_element(values.begin(), values.end());
    f.maximum = *std::max_element(values.begin(), values.end());

    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    f.mean = mean;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    f.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    // mode of a real-valued series: midpoint of the most populated of 32
    // equal-width bins (ties resolve to the lowest bin)
    if (f.maximum == f.minimum) {
        f.mode = f.minimum;
    } else {
        constexpr std::size_t kBins = 32;
        std::array<std::size_t, kBins> counts{};
        const double width = (f.maximum - f.minimum) / static_cast<double>(kBins);
        for (double v : values) {
            auto b = static_cast<std::size_t>((v - f.minimum) / width);
            if (b >= kBins) b = kBins - 1;
            ++counts[b];
        }
        const std::size_t best =
            static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        f.mode = f.minimum + (static_cast<double>(best) + 0.5) * width;
    }

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    if (m2 < 1e-24) {
        f.skew = 0.0;  // degenerate (constant) series by convention
        f.kurtosis = 0.0;
    } else {
        f.skew = m3 / std::pow(m2, 1.5);
        f.kurtosis = m4 / (m2 * m2) - 3.0;
    }

    // magnitude spectrum of the mean-removed series; frequencies in cycles
    // per sample. A naive DFT is plenty at the series lengths in play.
    const std::size_t half = n / 2;
    double amp_sum = 0.0, weighted = 0.0, best_amp = -1.0;
    std::size_t best_bin = 0;
    for (std::size_t k = 1; k <= half; ++k) {
        double re = 0.0, im = 0.0;
        const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t) {
            const double x = values[t] - mean;
            re += x * std::cos(w * static_cast<double>(t));
            im += x * std::sin(w * static_cast<double>(t));
        }
        const double amp = std::sqrt(re * re + im * im);
        const double freq = static_cast<double>(k) / static_cast<double>(n);
        amp_sum += amp;
        weighted += amp * freq;
        if (amp > best_amp + 1e-12) {
            best_amp = amp;
            best_bin = k;
        }
    }
    if (amp_sum > 1e-9) {
        f.mean_frequency = weighted / amp_sum;
        f.max_frequency = static_cast<double>(best_bin) / static_cast<double>(n);
    }
    return f;
}

std::vector<Shapelet> extract_shapelets(std::span<const double> values, ShapeletParams params) {
    const std::size_t n = values.size();
    std::size_t len = params.length ? params.length : std::max<std::size_t>(8, n / 10);
    if (len < 2) len = 2;
    if (len > n)
        throw Error("extract_shapelets: length " + std::to_string(len) + " exceeds series length " +
                    std::to_string(n));
    const std::size_t stride = params.stride ? params.stride : std::max<std::size_t>(1, len / 4);

    std::vector<std::size_t> offsets;
    for (std::size_t off = 0; off + len <= n; off += stride) offsets.push_back(off);
    if (offsets.empty() || offsets.back() != n - len) offsets.push_back(n - len);

    // constancy threshold relative to the series scale: windows whose
    // variance is negligible against the whole series are flat, not shapes
    double smean = 0.0;
    for (double v : values) smean += v;
    smean /= static_cast<double>(n);
    double svar = 0.0;
    for (double v : values) svar += (v - smean) * (v - smean);
    svar /= static_cast<double>(n);
    const double var_eps = std::max(1e-12, 1e-3 * svar);

    struct Scored {
        Shapelet shapelet;
        double score;
    };
    std::vector<Scored> scored;
    scored.reserve(offsets.size());
    for (std::size_t off : offsets) {
        Shapelet s;
        s.values.assign(values.begin() + static_cast<std::ptrdiff_t>(off),
                        values.begin() + static_cast<std::ptrdiff_t>(off + len));
        s.offset = off;
        s.constant = kernels::znormalize(s.values, var_eps);
        const auto profile = kernels::znorm_distance_profile(values, s.values, stride, var_eps);
        double mean = 0.0;
        for (double d : profile) mean += d;
        mean /= static_cast<double>(profile.size());
        double var = 0.0;
        for (double d : profile) var += (d - mean) * (d - mean);
        var /= static_cast<double>(profile.size());
        scored.push_back({std::move(s), var});
    }

    // flat candidates rank behind every real shape
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.shapelet.constant != b.shapelet.constant) return !a.shapelet.constant;
        if (a.score != b.score) return a.score > b.score;
        return a.shapelet.offset < b.shapelet.offset;
    });

    // >=50% overlap suppression against already selected windows
    std::vector<Shapelet> out;
    for (const Scored& c : scored) {
        if (out.size() >= params.count) break;
        bool suppressed = false;
        for (const Shapelet& kept : out) {
            const std::size_t lo = std::max(c.shapelet.offset, kept.offset);
            const std::size_t hi = std::min(c.shapelet.offset + len, kept.offset + len);
            const std::size_t overlap = hi > lo ? hi - lo : 0;
            if (overlap * 2 >= len) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) out.push_back(c.shapelet);
    }
    return out;
}

double shapelet_distance(const Shapelet& a, const Shapelet& b) {
    if (a.constant && b.constant) return 0.0;
    if (a.constant || b.constant) return 1.0;
    const Shapelet& shorter = a.length() <= b.length() ? a : b;
    const Shapelet& longer = a.length() <= b.length() ? b : a;
    const std::size_t sl = shorter.length(), ll = longer.length();
    if (sl == 0) return 1.0;

    double snorm = 0.0;
    for (double v : shorter.values) snorm += v * v;
    snorm = std::sqrt(snorm);

    double best = -1.0;
    for (std::size_t off = 0; off + sl <= ll; ++off) {
        double cc = 0.0, segnorm = 0.0;
        for (std::size_t t = 0; t < sl; ++t) {
            const double seg = longer.values[off + t];
            cc += shorter.values[t] * seg;
            segnorm += seg * seg;
        }
        segnorm = std::sqrt(segnorm);
        if (snorm < 1e-12 || segnorm < 1e-12) continue;
        best = std::max(best, cc / (snorm * segnorm));
    }
    if (best < -1.0) best = -1.0;
    if (best > 1.0) best = 1.0;
    return 1.0 - best;
}

double series_shapelet_distance(const std::vector<Shapelet>& a, const std::vector<Shapelet>& b) {
    if (a.empty() || b.empty()) return 2.0;
    double best = 2.0;
    for (const Shapelet& x : a)
        for (const Shapelet& y : b) best = std::min(best, shapelet_distance(x, y));
    return best;
}

SimilarityScore metric_similarity(const MetricRecord& a, const MetricRecord& b, double weight) {
    SimilarityScore s;
    s.weight = weight;
    s.text = (embed::cosine(a.text_embedding, b.text_embedding) + 1.0) / 2.0;
    if (a.has_series && b.has_series)
        s.timeseries = 1.0 - series_shapelet_distance(a.shapelets, b.shapelets) / 2.0;
    else
        s.timeseries = 0.5;  // absence of data is not evidence of dissimilarity
    s.combined = weight * s.text + (1.0 - weight) * s.timeseries;
    return s;
}

std::vector<SimilarMetric> CorpusIndex::top_k_similar(const MetricRecord& query, std::size_t k,
                                                      double weight, const RescoreFn& rescore) const {
    struct Entry {
        std::size_t index;
        double text_closeness;
        double base;
        std::optional<double> rescoring;
        double final_score;
    };
    std::vector<Entry> entries;
    entries.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double closeness = embed::cosine(query.text_embedding, records[i].text_embedding);
        entries.push_back(Entry{i, closeness, 0.0, std::nullopt, 0.0});
    }

    // shortlist by embedding closeness, then fill in the full similarity
    const std::size_t cut = std::min(entries.size(), std::max(shortlist, k));
    std::stable_sort(entries.begin(), entries.end(), [&](const Entry& x, const Entry& y) {
        if (x.text_closeness != y.text_closeness) return x.text_closeness > y.text_closeness;
        return records[x.index].key < records[y.index].key;
    });
    entries.resize(cut);

    for (Entry& e : entries) {
        e.base = metric_similarity(query, records[e.index], weight).combined;
        e.final_score = e.base;
        if (rescore) {
            try {
                double r = rescore(query.ontology, records[e.index].ontology);
                r = std::clamp(r, 0.0, 1.0);
                e.rescoring = r;
                e.final_score = (e.base + r) / 2.0;
            } catch (const std::exception&) {
                // rescoring failure degrades gracefully to the base score
            }
        }
    }

    std::stable_sort(entries.begin(), entries.end(), [&](const Entry& x, const Entry& y) {
        if (x.final_score != y.final_score) return x.final_score > y.final_score;
        return records[x.index].key < records[y.index].key;
    });
    if (entries.size() > k) entries.resize(k);

    std::vector<SimilarMetric> out;
    out.reserve(entries.size());
    for (const Entry& e : entries)
        out.push_back(SimilarMetric{records[e.index].key, e.final_score, e.base, e.rescoring});
    return out;
}

void save_timeseries(const std::vector<MetricTimeseries>& series, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open timeseries path for writing: " + path);
    os << R"({"schema":"monrec.timeseries.v1"})" << '\n';
    for (const MetricTimeseries& s : series) {
        nlohmann::ordered_json rec;
        rec["metric"] = s.metric_key;
        rec["resource"] = s.resource;
        rec["timestamps"] = s.timestamps;
        rec["values"] = s.values;
        rec["sampling"] = s.sampling_kind;
        os << rec.dump() << '\n';
    }
}

std::vector<MetricTimeseries> load_timeseries(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open timeseries document: " + path);
    std::vector<MetricTimeseries> out;
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("timeseries: ") + e.what(), lineno);
        }
        if (!saw_header) {
            if (rec.value("schema", "") != "monrec.timeseries.v1")
                throw ParseError("timeseries: missing or unknown schema header", lineno);
            saw_header = true;
            continue;
        }
        MetricTimeseries s;
        try {
            s.metric_key = rec.at("metric").get<std::string>();
            s.resource = rec.value("resource", "");
            s.timestamps = rec.at("timestamps").get<std::vector<double>>();
            s.values = rec.at("values").get<std::vector<double>>();
            s.sampling_kind = rec.value("sampling", "");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("timeseries: ") + e.what(), lineno);
        }
        s.validate();
        out.push_back(std::move(s));
    }
    if (!saw_header) throw ParseError("timeseries: empty document (no schema header)", lineno);
    return out;
}

}  // namespace monrec::ts
