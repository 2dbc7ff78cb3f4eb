#include "monrec/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include <json.hpp>

#include "monrec/embed.hpp"
#include "monrec/kernels.hpp"

namespace monrec::datagen {

using alert::AggOp;
using alert::AlertCondition;
using alert::Comparator;
using graph::EdgeKind;
using graph::EntityGraph;
using graph::NodeId;
using graph::NodeKind;

std::string_view to_string(LabelMode m) {
    switch (m) {
        case LabelMode::Separable: return "separable";
        case LabelMode::Local: return "local";
        case LabelMode::Null: return "null";
    }
    return "?";
}

LabelMode label_mode_from_string(std::string_view s) {
    if (s == "separable") return LabelMode::Separable;
    if (s == "local") return LabelMode::Local;
    if (s == "null") return LabelMode::Null;
    throw SchemaError("unknown label mode '" + std::string(s) + "'");
}

void GenConfig::validate() const {
    if (!services || !monitors || !metrics || !dimensions || !expressions)
        throw Error("datagen: entity counts must be positive");
    if (subset_selection_rate <= 0 || subset_selection_rate >= 1)
        throw Error("datagen: subset_selection_rate must lie in (0,1)");
    if (min_candidate_dims < 2 || max_candidate_dims < min_candidate_dims)
        throw Error("datagen: candidate dimension bounds invalid (need at least 2)");
    if (dimensions < max_candidate_dims)
        throw Error("datagen: more planted candidate dimensions than dimensions exist");
    double mix = 0.0;
    for (const auto& [op, share] : operator_mix) mix += share;
    if (std::abs(mix - 1.0) > 1e-9) throw Error("datagen: operator mix must sum to 1");
    if (series_length < 16) throw Error("datagen: series_length too short");
    if (expressions < 2 * operator_mix.size())
        throw Error("datagen: too few expressions for the operator mix");
}

namespace {

enum Shape : std::size_t { kSine = 0, kRamp = 1, kSpike = 2, kStep = 3 };

struct Family {
    const char* name;
    const char* metric_phrase;
    const char* monitor_phrase;
    const char* unit;
    AggOp op;
    double threshold_center;
    std::size_t dim_group;
    Shape shape;
    const char* sampling;
};

constexpr std::array<Family, 8> kFamilies{{
    {"memory", "memory utilization resident set", "watch memory saturation", "%", AggOp::Average,
     85.0, 0, kSine, "gauge"},
    {"cpu", "processor usage core load", "watch processor pressure", "%", AggOp::Average, 62.0, 0,
     kSine, "gauge"},
    {"latency", "latency response time tail", "watch latency regression", "ms", AggOp::Percentile,
     250.0, 1, kSpike, "gauge"},
    {"traffic", "request count arrivals", "watch traffic volume", "req", AggOp::Count, 1200.0, 1,
     kSine, "counter"},
    {"errors", "error failure exceptions count", "watch error budget", "err", AggOp::Count, 40.0, 1,
     kSpike, "counter"},
    {"storage", "disk storage bytes written", "watch storage growth", "MB", AggOp::Sum, 5200.0, 0,
     kRamp, "counter"},
    {"network", "network packets bandwidth flow", "watch network throughput", "MBps", AggOp::Rate,
     300.0, 1, kSine, "gauge"},
    {"quality", "availability success ratio", "watch availability floor", "ratio", AggOp::QoS, 0.95,
     0, kStep, "gauge"},
}};

constexpr std::array<const char*, 5> kGroup0Scopes = {
    "per virtual machine", "per host node", "per process", "per container", "per core"};
constexpr std::array<const char*, 5> kGroup1Scopes = {
    "per datacenter", "per region", "per cluster", "per availability zone", "per endpoint"};
constexpr std::array<const char*, 6> kVariants = {"raw", "aggregated", "windowed",
                                                  "smoothed", "scoped", "sampled"};
constexpr std::array<const char*, 5> kTeams = {"payments", "identity", "search", "media", "fleet"};
constexpr std::array<const char*, 8> kZones = {"amber", "cobalt", "crimson", "ivory",
                                               "jade", "onyx", "sierra", "umber"};

// largest-remainder allocation of expression counts per operator
std::vector<std::pair<std::string, std::size_t>> allocate_operators(
    const std::map<std::string, double>& mix, std::size_t total) {
    std::vector<std::pair<std::string, double>> shares(mix.begin(), mix.end());
    std::vector<std::pair<std::string, std::size_t>> out;
    std::vector<double> remainders;
    std::size_t assigned = 0;
    for (const auto& [op, share] : shares) {
        const double exact = share * static_cast<double>(total);
        const std::size_t base = static_cast<std::size_t>(exact);
        out.emplace_back(op, base);
        remainders.push_back(exact - static_cast<double>(base));
        assigned += base;
    }
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) out[order[i % order.size()]].second++;
    return out;
}

struct ShapeParams {
    Shape shape;
    double cycles;
    double phase;
    std::vector<std::size_t> spike_at;
    double spike_height;
};

std::vector<double> render_series(const ShapeParams& p, std::size_t n, double scale, bool active,
                                  Rng& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> v(n);
    if (!active) {
        // unmonitored metrics stay near-constant (activity predicts status)
        for (std::size_t t = 0; t < n; ++t) v[t] = scale * 0.6 + scale * 5e-4 * noise(rng);
        return v;
    }
    for (std::size_t t = 0; t < n; ++t) {
        const double x = static_cast<double>(t) / static_cast<double>(n);
        double s = 0.5;
        switch (p.shape) {
            case kSine:
                s = 0.5 + 0.38 * std::sin(2.0 * std::numbers::pi * p.cycles * x + p.phase);
                break;
            case kRamp:
                s = 0.15 + 0.7 * x;
                break;
            case kSpike:
                s = 0.25;
                break;
            case kStep:
                s = x < 0.5 ? 0.35 : 0.75;
                break;
        }
        v[t] = scale * (0.55 + 0.42 * s) + scale * 0.01 * noise(rng);
    }
    for (std::size_t at : p.spike_at)
        if (at < n) v[at] += scale * p.spike_height;
    return v;
}

}  // namespace

AggOp expression_operator(const std::string& ontology) {
    const auto space = ontology.find(' ');
    const std::string token = ontology.substr(0, space);
    try {
        return alert::agg_op_from_string(token);
    } catch (const SchemaError&) {
        return AggOp::Average;  // custom/unknown operators degrade to Average
    }
}

Dataset generate(const GenConfig& config) {
    config.validate();
    Dataset ds;
    ds.config = config;
    EntityGraph& g = ds.graph;

    Rng rng_struct(mix_seed(config.seed, 1));
    Rng rng_text(mix_seed(config.seed, 2));
    Rng rng_series(mix_seed(config.seed, 3));
    Rng rng_labels(mix_seed(config.seed, 4));

    // ---- services ----
    std::vector<NodeId> services;
    std::vector<int> account_group;
    std::vector<std::size_t> account_zone;
    for (std::size_t i = 0; i < config.services; ++i) {
        const std::string key = "svc-" + std::to_string(i);
        const std::string text = "service " + key + " " + kTeams[i % kTeams.size()] + " tier " +
                                 std::to_string(i % 4);
        services.push_back(g.add_node(NodeKind::Service, key, text));
        account_group.push_back(static_cast<int>(rng_labels() & 1));
        account_zone.push_back(rng_struct() % kZones.size());
    }
    // each service emits metrics from a small family palette, so accounts
    // have same-family peer groups (what the local kNN vote leans on)
    std::vector<std::array<std::size_t, 2>> account_palette(config.services);
    for (std::size_t i = 0; i < config.services; ++i) {
        std::array<std::size_t, 2> palette{};
        palette[0] = rng_struct() % kFamilies.size();
        palette[1] = (palette[0] + 1 + rng_struct() % (kFamilies.size() - 1)) % kFamilies.size();
        account_palette[i] = palette;
    }

    // ---- dimensions: two co-occurrence groups, power-law popularity ----
    std::vector<NodeId> dims;
    std::vector<std::size_t> dim_group;
    std::vector<std::size_t> dim_zone;  // latent: revealed only through usage
    std::vector<double> dim_weight;
    for (std::size_t i = 0; i < config.dimensions; ++i) {
        const std::size_t group = i % static_cast<std::size_t>(config.dimension_cluster_count);
        const auto& scopes = group == 0 ? kGroup0Scopes : kGroup1Scopes;
        const std::string key = "dim-" + std::to_string(i);
        const std::string text =
            std::string(scopes[(i / 2) % scopes.size()]) + " level " + std::to_string(i);
        dims.push_back(g.add_node(NodeKind::Dimension, key, text));
        dim_group.push_back(group % 2);
        dim_zone.push_back(rng_struct() % kZones.size());
        dim_weight.push_back(std::pow(static_cast<double>(i / 2 + 1), -config.dimension_degree_exponent));
    }

    // ---- expressions with an exact operator allocation ----
    const auto op_alloc = allocate_operators(config.operator_mix, config.expressions);
    std::vector<NodeId> expressions;
    std::map<std::size_t, std::vector<NodeId>> family_expressions;
    {
        std::size_t idx = 0;
        for (const auto& [opname, count] : op_alloc) {
            // families sharing this operator, for vocabulary reuse
            std::vector<std::size_t> fams;
            for (std::size_t f = 0; f < kFamilies.size(); ++f)
                if (std::string(alert::to_string(kFamilies[f].op)) == opname) fams.push_back(f);
            for (std::size_t c = 0; c < count; ++c, ++idx) {
                const std::string key = "expr-" + std::to_string(idx);
                std::string text;
                if (opname == "other") {
                    text = "Custom aggregation over " +
                           std::string(kFamilies[idx % kFamilies.size()].metric_phrase);
                } else {
                    const std::size_t fam = fams.empty() ? idx % kFamilies.size() : fams[c % fams.size()];
                    text = opname + std::string(" aggregation over ") + kFamilies[fam].metric_phrase;
                }
                expressions.push_back(g.add_node(NodeKind::Expression, key, text));
            }
        }
    }

    // family pools: expressions whose leading token matches the family
    // operator, distributed round-robin across families sharing it
    {
        std::map<std::string, std::vector<std::size_t>> fams_by_op;
        for (std::size_t f = 0; f < kFamilies.size(); ++f)
            fams_by_op[std::string(alert::to_string(kFamilies[f].op))].push_back(f);
        std::map<std::string, std::size_t> cursor;
        for (NodeId e : expressions) {
            const std::string& text = g.node(e).ontology;
            const std::string token = text.substr(0, text.find(' '));
            auto it = fams_by_op.find(token);
            if (it == fams_by_op.end()) continue;  // Custom/Max/Min pools stay unused
            const std::size_t fam = it->second[cursor[token]++ % it->second.size()];
            family_expressions[fam].push_back(e);
        }
    }

    // ---- metrics ----
    std::uniform_int_distribution<std::size_t> fam_pick(0, kFamilies.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<NodeId> metrics;
    std::vector<std::size_t> metric_family;
    std::vector<std::size_t> metric_service;
    std::vector<double> metric_threshold;
    std::vector<std::vector<NodeId>> metric_dims;
    std::vector<ShapeParams> metric_shape;
    std::vector<int> labels(config.metrics, 0);
    std::map<std::size_t, std::size_t> last_of_family;

    // Null mode: exactly balanced labels over a seeded shuffle
    std::vector<std::size_t> null_order(config.metrics);
    std::iota(null_order.begin(), null_order.end(), 0);
    std::shuffle(null_order.begin(), null_order.end(), rng_labels);

    for (std::size_t i = 0; i < config.metrics; ++i) {
        const std::size_t svc = i % config.services;
        std::size_t fam = account_palette[svc][fam_pick(rng_struct) % 2];
        bool duplicate = false;
        std::size_t partner = 0;
        if (unit(rng_struct) < config.duplicate_rate && last_of_family.count(fam)) {
            duplicate = true;
            partner = last_of_family[fam];
        }
        const Family& f = kFamilies[fam];
        const std::string key = "m" + std::to_string(i) + "-" + f.name;
        std::string text = std::string(f.metric_phrase) + " of svc-" + std::to_string(svc) + " " +
                           kVariants[rng_text() % kVariants.size()];
        if (duplicate) text = g.node(metrics[partner]).ontology + " mirror";
        const NodeId id = g.add_node(NodeKind::Metric, key, text);

        // threshold anchored at the family center (duplicates share it)
        std::normal_distribution<double> jitter(0.0, config.threshold_jitter);
        double thr = duplicate ? metric_threshold[partner] * (1.0 + 0.02 * jitter(rng_struct))
                               : f.threshold_center * std::exp(jitter(rng_struct));

        // candidate dimensions: family-group-biased, popularity-weighted
        std::uniform_int_distribution<std::size_t> n_cand(config.min_candidate_dims,
                                                          config.max_candidate_dims);
        const std::size_t want = n_cand(rng_struct);
        std::set<NodeId> chosen;
        std::size_t guard = 0;
        while (chosen.size() < want && guard++ < 4000) {
            // a slice of the candidates shares the account zone, the rest
            // follows the family group; both popularity-weighted
            const bool zone_draw = unit(rng_struct) < 0.03;
            const bool in_group = !zone_draw && unit(rng_struct) < 0.75;
            double total = 0.0;
            for (std::size_t d = 0; d < dims.size(); ++d) {
                if (zone_draw && dim_zone[d] != account_zone[svc]) continue;
                if (in_group && dim_group[d] != f.dim_group) continue;
                total += dim_weight[d];
            }
            double roll = unit(rng_struct) * total;
            for (std::size_t d = 0; d < dims.size(); ++d) {
                if (zone_draw && dim_zone[d] != account_zone[svc]) continue;
                if (in_group && dim_group[d] != f.dim_group) continue;
                roll -= dim_weight[d];
                if (roll <= 0.0) {
                    chosen.insert(dims[d]);
                    break;
                }
            }
        }
        std::vector<NodeId> cand(chosen.begin(), chosen.end());
        for (NodeId d : cand) g.add_edge(id, d, EdgeKind::MetricHasDimension);

        // label by mode
        const bool family_active = fam % 2 == 0;
        int label = 0;
        switch (config.label_mode) {
            case LabelMode::Separable:
                label = family_active ? 1 : 0;
                break;
            case LabelMode::Local: {
                const bool flipped = unit(rng_labels) < config.local_fraction;
                const bool acct = account_group[svc] == 1;
                label = (family_active != (flipped && acct)) ? 1 : 0;
                break;
            }
            case LabelMode::Null:
                label = null_order[i] < config.metrics / 2 ? 1 : 0;
                break;
        }
        labels[i] = label;

        ShapeParams sp;
        sp.shape = f.shape;
        sp.cycles = 2.0 + static_cast<double>(rng_series() % 4);
        sp.phase = unit(rng_series) * 2.0 * std::numbers::pi;
        if (f.shape == kSpike) {
            std::size_t n_spikes = std::max<std::size_t>(
                2, static_cast<std::size_t>(config.anomaly_rate * static_cast<double>(config.series_length)));
            for (std::size_t s = 0; s < n_spikes; ++s)
                sp.spike_at.push_back(rng_series() % config.series_length);
            sp.spike_height = 0.5 + 0.3 * unit(rng_series);
        }
        if (duplicate) {
            sp = metric_shape[partner];
            sp.phase += 0.05;  // near-identical, not byte-identical
        }

        metrics.push_back(id);
        metric_family.push_back(fam);
        metric_service.push_back(svc);
        metric_threshold.push_back(thr);
        metric_dims.push_back(cand);
        metric_shape.push_back(sp);
        last_of_family[fam] = i;

        ds.truth.metric_label[key] = label;
        ds.truth.metric_family[key] = fam;
        ds.truth.metric_threshold[key] = thr;
        if (duplicate) {
            ds.truth.duplicate_partner[key] = g.node(metrics[partner]).key;
            ds.truth.duplicate_partner[g.node(metrics[partner]).key] = key;
        }
    }
    for (std::size_t f = 0; f < kFamilies.size(); ++f)
        ds.truth.family_shape[std::to_string(f)] = static_cast<std::size_t>(kFamilies[f].shape);

    // ---- monitors over the monitored metrics ----
    std::vector<std::size_t> monitored_idx;
    for (std::size_t i = 0; i < config.metrics; ++i)
        if (labels[i] == 1) monitored_idx.push_back(i);
    if (monitored_idx.empty()) throw Error("datagen: no monitored metrics under this config");

    for (std::size_t j = 0; j < config.monitors; ++j) {
        const std::size_t mi = monitored_idx[j % monitored_idx.size()];
        const Family& f = kFamilies[metric_family[mi]];
        const std::string key = "mon" + std::to_string(j);
        const std::string text = std::string(f.monitor_phrase) + " of svc-" +
                                 std::to_string(metric_service[mi]) + " zone " +
                                 kZones[account_zone[metric_service[mi]]] + " " +
                                 kVariants[rng_text() % kVariants.size()];
        const NodeId mon = g.add_node(NodeKind::Monitor, key, text);
        g.add_edge(services[metric_service[mi]], mon, EdgeKind::ServiceHasMonitor);
        g.add_edge(mon, metrics[mi], EdgeKind::MonitorHasMetric);

        // planted dimension subset: the family's group within the candidates
        const std::vector<NodeId>& cand = metric_dims[mi];
        std::vector<NodeId> preferred, other;
        {
            std::vector<NodeId> zone_match, group_match;
            for (NodeId d : cand) {
                const std::size_t di = static_cast<std::size_t>(
                    std::find(dims.begin(), dims.end(), d) - dims.begin());
                if (dim_zone[di] == account_zone[metric_service[mi]])
                    zone_match.push_back(d);
                else if (dim_group[di] == f.dim_group)
                    group_match.push_back(d);
                else
                    other.push_back(d);
            }
            preferred = std::move(zone_match);
            preferred.insert(preferred.end(), group_match.begin(), group_match.end());
        }
        std::vector<NodeId> pick;
        const bool strict = unit(rng_struct) < config.subset_selection_rate;
        if (!strict || cand.size() < 2) {
            pick = cand;
        } else {
            pick = preferred.empty() ? std::vector<NodeId>{cand.front()} : preferred;
            if (pick.size() > config.max_planted_dims) pick.resize(config.max_planted_dims);
            if (pick.size() >= cand.size()) pick.resize(cand.size() - 1);
            if (pick.empty()) pick.push_back(cand.front());
            if (unit(rng_struct) < config.dim_choice_noise && !other.empty() &&
                pick.size() < cand.size() - 1)
                pick.push_back(other[rng_struct() % other.size()]);
        }
        std::sort(pick.begin(), pick.end());
        pick.erase(std::unique(pick.begin(), pick.end()), pick.end());
        for (NodeId d : pick) g.add_edge(mon, d, EdgeKind::MonitorAssociatedDimension);

        // expression from the family pool
        auto pool_it = family_expressions.find(metric_family[mi]);
        NodeId expr = pool_it != family_expressions.end() && !pool_it->second.empty()
                          ? pool_it->second[rng_struct() % pool_it->second.size()]
                          : expressions[rng_struct() % expressions.size()];
        g.add_edge(mon, expr, EdgeKind::MonitorUsesExpression);
        try {
            g.add_edge(metrics[mi], expr, EdgeKind::MetricUsesExpression);
        } catch (const DuplicateError&) {
        }
        if (!pick.empty()) {
            try {
                g.add_edge(pick.front(), expr, EdgeKind::DimensionUsesExpression);
            } catch (const DuplicateError&) {
            }
        }

        // planted alert condition
        AlertCondition c;
        c.expression_key = g.node(expr).key;
        c.op = expression_operator(g.node(expr).ontology);
        for (NodeId d : pick) c.dimension_keys.push_back(g.node(d).key);
        c.comparator = alert::is_upper_bound(c.op) ? Comparator::GT : Comparator::LT;
        std::normal_distribution<double> cjitter(0.0, 0.02);
        c.threshold = metric_threshold[mi] * (1.0 + cjitter(rng_struct));
        c.unit = f.unit;
        c.window = 20;
        c.min_violations = 10 + static_cast<int>(rng_struct() % 3) * 5;
        c.severity = 2 + static_cast<int>(rng_struct() % 2);
        c.provenance = "planted";

        const std::string metric_key = g.node(metrics[mi]).key;
        ds.truth.monitor_dimensions[key] = [&] {
            std::vector<std::string> keys;
            for (NodeId d : pick) keys.push_back(g.node(d).key);
            return keys;
        }();
        ds.truth.monitor_expression[key] = g.node(expr).key;
        ds.truth.monitor_conditions[key].push_back(c);
        ds.truth.metric_conditions[metric_key].push_back(c);
    }

    // ---- timeseries ----
    for (std::size_t i = 0; i < config.metrics; ++i) {
        ts::MetricTimeseries s;
        s.metric_key = g.node(metrics[i]).key;
        s.resource = "res-svc" + std::to_string(metric_service[i]) + "-" + std::to_string(i % 5);
        s.sampling_kind = kFamilies[metric_family[i]].sampling;
        s.values = render_series(metric_shape[i], config.series_length, metric_threshold[i],
                                 labels[i] == 1, rng_series);
        s.timestamps.resize(config.series_length);
        for (std::size_t t = 0; t < config.series_length; ++t)
            s.timestamps[t] = static_cast<double>(t) * 300.0;
        ds.series.push_back(std::move(s));
    }

    // ---- metric-selection dataset ----
    for (std::size_t i = 0; i < config.metrics; ++i) {
        select::MetricSample sample;
        sample.account = g.node(services[metric_service[i]]).key;
        sample.metric_key = g.node(metrics[i]).key;
        sample.service_text = g.node(services[metric_service[i]]).ontology;
        sample.dependent_texts = {
            g.node(services[(metric_service[i] + 1) % config.services]).ontology};
        sample.metric_text = g.node(metrics[i]).ontology;
        for (NodeId d : metric_dims[i]) sample.dimension_texts.push_back(g.node(d).ontology);
        sample.label = labels[i];
        sample.timestamp = static_cast<double>(i);
        ds.select_samples.push_back(std::move(sample));
    }
    return ds;
}

StatsReport validate_stats(const Dataset& dataset) {
    const EntityGraph& g = dataset.graph;
    const GenConfig& cfg = dataset.config;
    StatsReport rep;

    // subset-selection fraction over monitors
    std::size_t strict = 0, monitors_counted = 0;
    for (NodeId mon : g.nodes_of_kind(NodeKind::Monitor)) {
        const auto chosen = g.neighbors(mon, EdgeKind::MonitorAssociatedDimension);
        const auto mets = g.neighbors(mon, EdgeKind::MonitorHasMetric);
        if (chosen.empty() || mets.empty()) continue;
        const auto cand = g.candidate_dimensions(mets.front());
        ++monitors_counted;
        std::set<NodeId> cand_set(cand.begin(), cand.end());
        bool subset = chosen.size() < cand.size();
        for (NodeId d : chosen)
            if (!cand_set.count(d)) subset = false;  // outside picks don't count as strict subsets
        if (subset) ++strict;
    }
    rep.subset_selection_fraction =
        monitors_counted ? static_cast<double>(strict) / static_cast<double>(monitors_counted) : 0.0;
    rep.subset_selection_pass =
        std::abs(rep.subset_selection_fraction - cfg.subset_selection_rate) <= 0.03;

    // operator mix over expression nodes
    std::size_t csa = 0, listed = 0, total_expr = 0;
    for (NodeId e : g.nodes_of_kind(NodeKind::Expression)) {
        const std::string& text = g.node(e).ontology;
        const std::string token = text.substr(0, text.find(' '));
        ++total_expr;
        bool is_listed = false;
        try {
            alert::agg_op_from_string(token);
            is_listed = true;
        } catch (const SchemaError&) {
        }
        if (is_listed) ++listed;
        if (token == "Count" || token == "Sum" || token == "Average") ++csa;
    }
    double csa_target = 0.0;
    for (const char* op : {"Count", "Sum", "Average"}) {
        auto it = cfg.operator_mix.find(op);
        if (it != cfg.operator_mix.end()) csa_target += it->second;
    }
    rep.count_sum_average_share =
        total_expr ? static_cast<double>(csa) / static_cast<double>(total_expr) : 0.0;
    rep.operator_mix_pass = std::abs(rep.count_sum_average_share - csa_target) <= 0.03;
    rep.listed_operator_share =
        total_expr ? static_cast<double>(listed) / static_cast<double>(total_expr) : 0.0;
    rep.listed_operator_pass = rep.listed_operator_share >= 0.95;

    // dimension co-selection bimodality: phi coefficients, 2-means, silhouette
    {
        const auto monitors = g.nodes_of_kind(NodeKind::Monitor);
        const auto all_dims = g.nodes_of_kind(NodeKind::Dimension);
        std::vector<NodeId> used;
        for (NodeId d : all_dims)
            if (g.reverse_neighbors(d, EdgeKind::MonitorAssociatedDimension).size() >= 3)
                used.push_back(d);
        Rng rng(mix_seed(cfg.seed, 0x9d));
        std::vector<double> phis;
        const std::size_t pairs = std::min<std::size_t>(400, used.size() * (used.size() - 1) / 2);
        for (std::size_t p = 0; p < pairs && used.size() >= 2; ++p) {
            const NodeId a = used[rng() % used.size()];
            NodeId b = used[rng() % used.size()];
            if (a == b) continue;
            std::set<NodeId> am, bm;
            for (NodeId m : g.reverse_neighbors(a, EdgeKind::MonitorAssociatedDimension)) am.insert(m);
            for (NodeId m : g.reverse_neighbors(b, EdgeKind::MonitorAssociatedDimension)) bm.insert(m);
            double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
            for (NodeId m : monitors) {
                const bool ia = am.count(m), ib = bm.count(m);
                if (ia && ib) ++n11;
                else if (ia) ++n10;
                else if (ib) ++n01;
                else ++n00;
            }
            const double den = std::sqrt((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00));
            if (den > 0) phis.push_back((n11 * n00 - n10 * n01) / den);
        }
        if (phis.size() >= 8) {
            // 1-D 2-means
            auto [mn, mx] = std::minmax_element(phis.begin(), phis.end());
            double c0 = *mn, c1 = *mx;
            for (int it = 0; it < 50; ++it) {
                double s0 = 0, s1 = 0;
                std::size_t k0 = 0, k1 = 0;
                for (double v : phis)
                    if (std::abs(v - c0) <= std::abs(v - c1)) {
                        s0 += v;
                        ++k0;
                    } else {
                        s1 += v;
                        ++k1;
                    }
                if (k0) c0 = s0 / static_cast<double>(k0);
                if (k1) c1 = s1 / static_cast<double>(k1);
            }
            double sil = 0.0;
            std::size_t counted = 0;
            for (double v : phis) {
                const double a = std::abs(v - (std::abs(v - c0) <= std::abs(v - c1) ? c0 : c1));
                const double b = std::abs(v - (std::abs(v - c0) <= std::abs(v - c1) ? c1 : c0));
                if (std::max(a, b) > 0) {
                    sil += (b - a) / std::max(a, b);
                    ++counted;
                }
            }
            rep.dimension_correlation_silhouette = counted ? sil / static_cast<double>(counted) : 0.0;
        }
        rep.bimodality_pass = rep.dimension_correlation_silhouette >= 0.5;
    }

    // similarity vs threshold correlation over monitored metric pairs
    {
        embed::EmbedderOptions eopts;
        eopts.width = 64;
        embed::Embedder embedder(eopts);
        std::map<std::string, const ts::MetricTimeseries*> by_key;
        for (const auto& s : dataset.series) by_key[s.metric_key] = &s;

        std::vector<ts::MetricRecord> records;
        std::vector<double> thresholds;
        for (NodeId m : g.nodes_of_kind(NodeKind::Metric)) {
            const std::string& key = g.node(m).key;
            auto lbl = dataset.truth.metric_label.find(key);
            auto thr = dataset.truth.metric_threshold.find(key);
            if (lbl == dataset.truth.metric_label.end() || lbl->second != 1) continue;
            if (thr == dataset.truth.metric_threshold.end()) continue;
            ts::MetricRecord r;
            r.key = key;
            r.ontology = g.node(m).ontology;
            r.text_embedding = embedder.embed_text(r.ontology);
            auto sit = by_key.find(key);
            if (sit != by_key.end()) {
                ts::ShapeletParams sp;
                sp.count = 3;
                r.shapelets = ts::extract_shapelets(sit->second->values, sp);
                r.has_series = true;
            }
            records.push_back(std::move(r));
            thresholds.push_back(thr->second);
        }
        if (records.size() >= 8) {
            // thresholds are multiplicative around family centers, so the
            // similarity is measured on the log scale
            std::vector<double> logs(thresholds.size());
            for (std::size_t i = 0; i < thresholds.size(); ++i)
                logs[i] = std::log(std::max(thresholds[i], 1e-9));
            auto [mn, mx] = std::minmax_element(logs.begin(), logs.end());
            const double range = std::max(*mx - *mn, 1e-9);
            Rng rng(mix_seed(cfg.seed, 0xc0));
            std::vector<double> xs, ys;
            const std::size_t pairs = std::min<std::size_t>(2000, records.size() * 6);
            for (std::size_t p = 0; p < pairs; ++p) {
                const std::size_t a = rng() % records.size();
                const std::size_t b = rng() % records.size();
                if (a == b) continue;
                xs.push_back(ts::metric_similarity(records[a], records[b]).combined);
                ys.push_back(1.0 - std::abs(logs[a] - logs[b]) / range);
            }
            double mxs = 0, mys = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                mxs += xs[i];
                mys += ys[i];
            }
            mxs /= static_cast<double>(xs.size());
            mys /= static_cast<double>(xs.size());
            double sxy = 0, sxx = 0, syy = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sxy += (xs[i] - mxs) * (ys[i] - mys);
                sxx += (xs[i] - mxs) * (xs[i] - mxs);
                syy += (ys[i] - mys) * (ys[i] - mys);
            }
            if (sxx > 0 && syy > 0)
                rep.similarity_threshold_correlation = sxy / std::sqrt(sxx * syy);
        }
        rep.correlation_pass =
            rep.similarity_threshold_correlation >= cfg.similarity_threshold_corr - 0.1;
    }

    // long-tail share: metric->dimension links landing on the top 20% dims
    {
        std::vector<std::size_t> degree;
        std::size_t total_links = 0;
        for (NodeId d : g.nodes_of_kind(NodeKind::Dimension)) {
            const std::size_t deg = g.reverse_neighbors(d, EdgeKind::MetricHasDimension).size();
            degree.push_back(deg);
            total_links += deg;
        }
        std::sort(degree.rbegin(), degree.rend());
        const std::size_t top = std::max<std::size_t>(1, degree.size() / 5);
        std::size_t top_links = 0;
        for (std::size_t i = 0; i < top; ++i) top_links += degree[i];
        rep.long_tail_top20_share =
            total_links ? static_cast<double>(top_links) / static_cast<double>(total_links) : 0.0;
    }
    return rep;
}

std::string stats_report_to_string(const StatsReport& rep) {
    nlohmann::ordered_json j;
    j["subset_selection_fraction"] = rep.subset_selection_fraction;
    j["subset_selection_pass"] = rep.subset_selection_pass;
    j["count_sum_average_share"] = rep.count_sum_average_share;
    j["operator_mix_pass"] = rep.operator_mix_pass;
    j["listed_operator_share"] = rep.listed_operator_share;
    j["listed_operator_pass"] = rep.listed_operator_pass;
    j["dimension_correlation_silhouette"] = rep.dimension_correlation_silhouette;
    j["bimodality_pass"] = rep.bimodality_pass;
    j["similarity_threshold_correlation"] = rep.similarity_threshold_correlation;
    j["correlation_pass"] = rep.correlation_pass;
    j["long_tail_top20_share"] = rep.long_tail_top20_share;
    j["all_pass"] = rep.all_pass();
    return j.dump(2);
}

void save_ground_truth(const GroundTruth& truth, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open ground truth path for writing: " + path);
    nlohmann::ordered_json j;
    j["schema"] = "monrec.groundtruth.v1";
    j["monitor_dimensions"] = truth.monitor_dimensions;
    j["monitor_expression"] = truth.monitor_expression;
    nlohmann::ordered_json mc = nlohmann::ordered_json::object();
    for (const auto& [k, conds] : truth.monitor_conditions) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& c : conds) arr.push_back(alert::to_json(c));
        mc[k] = std::move(arr);
    }
    j["monitor_conditions"] = std::move(mc);
    j["metric_label"] = truth.metric_label;
    j["metric_family"] = truth.metric_family;
    j["metric_threshold"] = truth.metric_threshold;
    j["duplicate_partner"] = truth.duplicate_partner;
    nlohmann::ordered_json kc = nlohmann::ordered_json::object();
    for (const auto& [k, conds] : truth.metric_conditions) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& c : conds) arr.push_back(alert::to_json(c));
        kc[k] = std::move(arr);
    }
    j["metric_conditions"] = std::move(kc);
    j["family_shape"] = truth.family_shape;
    os << j.dump(2) << '\n';
}

GroundTruth load_ground_truth(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open ground truth: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("ground truth: ") + e.what(), 1);
    }
    if (j.value("schema", "") != "monrec.groundtruth.v1")
        throw SchemaError("ground truth: unknown schema");
    GroundTruth t;
    t.monitor_dimensions = j.at("monitor_dimensions").get<std::map<std::string, std::vector<std::string>>>();
    t.monitor_expression = j.at("monitor_expression").get<std::map<std::string, std::string>>();
    for (const auto& [k, arr] : j.at("monitor_conditions").items())
        for (const auto& jc : arr) t.monitor_conditions[k].push_back(alert::condition_from_json(jc));
    t.metric_label = j.at("metric_label").get<std::map<std::string, int>>();
    t.metric_family = j.at("metric_family").get<std::map<std::string, std::size_t>>();
    t.metric_threshold = j.at("metric_threshold").get<std::map<std::string, double>>();
    t.duplicate_partner = j.at("duplicate_partner").get<std::map<std::string, std::string>>();
    for (const auto& [k, arr] : j.at("metric_conditions").items())
        for (const auto& jc : arr) t.metric_conditions[k].push_back(alert::condition_from_json(jc));
    t.family_shape = j.at("family_shape").get<std::map<std::string, std::size_t>>();
    return t;
}

}  // namespace monrec::datagen
