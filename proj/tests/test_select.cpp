#include <doctest.h>

#include <random>

#include "monrec/select.hpp"
#include "oracles.hpp"

using namespace monrec;
using namespace monrec::select;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

namespace {

std::vector<double> vec(std::initializer_list<double> v) { return std::vector<double>(v); }

std::vector<std::vector<double>> randvecs(std::size_t n, std::size_t w, std::mt19937_64& rng) {
    std::normal_distribution<double> d;
    std::vector<std::vector<double>> out(n, std::vector<double>(w));
    for (auto& v : out)
        for (double& x : v) x = d(rng);
    return out;
}

}  // namespace

TEST_CASE("bce loss on the documented cases") {
    CHECK(loss_bce_value({0.5}, {1}) == doctest::Approx(0.6931).epsilon(1e-3));
    // perfect predictions at the clamp boundary
    CHECK(loss_bce_value({1.0, 0.0}, {1, 0}) <= 1e-6);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::bernoulli_distribution coin;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(17);
        std::vector<int> y(17);
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = u(rng);
            y[i] = coin(rng);
        }
        CHECK(loss_bce_value(p, y) == doctest::Approx(oracles::bce(p, y)).epsilon(1e-9));
        CHECK(loss_bce_value(p, y) >= 0.0);
    }
}

TEST_CASE("contrastive loss on the documented cases") {
    const auto anchor = vec({0.0, 0.0, 0.0});
    SUBCASE("satisfied margins give zero loss") {
        std::vector<std::vector<double>> pos{anchor, anchor};
        std::vector<std::vector<double>> neg{vec({5.0, 0.0, 0.0}), vec({5.0, 0.0, 0.0})};
        CHECK(loss_contrastive_value(anchor, pos, neg, 1.0) == doctest::Approx(0.0));
    }
    SUBCASE("coincident positives and negatives cost the margin in both terms") {
        // one pair: triplet term gamma, centroid term gamma
        CHECK(loss_contrastive_value(anchor, {anchor}, {anchor}, 1.0) == doctest::Approx(2.0));
    }
    SUBCASE("the literal (printed) centroid sign grows with separation") {
        std::vector<std::vector<double>> pos{anchor};
        std::vector<std::vector<double>> neg{vec({5.0, 0.0, 0.0})};
        CHECK(loss_contrastive_value(anchor, pos, neg, 1.0, false) == doctest::Approx(0.0));
        CHECK(loss_contrastive_value(anchor, pos, neg, 1.0, true) == doctest::Approx(6.0));
    }
}

TEST_CASE("contrastive loss matches the scalar oracle on random embeddings") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 15; ++trial) {
        std::uniform_int_distribution<std::size_t> count(1, 6);
        auto anchor = randvecs(1, 5, rng)[0];
        auto pos = randvecs(count(rng), 5, rng);
        auto neg = randvecs(count(rng), 5, rng);
        const double got = loss_contrastive_value(anchor, pos, neg, 1.0);
        const double want = oracles::contrastive(anchor, pos, neg, 1.0);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("contrastive loss is permutation invariant in positives and negatives") {
    std::mt19937_64 rng(13);
    auto anchor = randvecs(1, 4, rng)[0];
    auto pos = randvecs(4, 4, rng);
    auto neg = randvecs(5, 4, rng);
    const double before = loss_contrastive_value(anchor, pos, neg, 1.0);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    const double after = loss_contrastive_value(anchor, pos, neg, 1.0);
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("joint loss arithmetic") {
    Tape tape;
    Var b = tape.constant(Tensor::scalar(2.0));
    Var c = tape.constant(Tensor::scalar(4.0));
    CHECK(tape.value(loss_joint(tape, b, c, 0.5)).item() == doctest::Approx(3.0));
    CHECK(tape.value(loss_joint(tape, b, c, 1.0)).item() == doctest::Approx(2.0));
    CHECK(tape.value(loss_joint(tape, b, c, 0.0)).item() == doctest::Approx(4.0));
}

TEST_CASE("joint loss gradients pass grad_check") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> d;
    Tensor x = Tensor::matrix(6, 4);
    for (double& v : x.data) v = d(rng);
    std::vector<int> labels{1, 0, 1, 1, 0, 0};

    auto build = [&](Tape& t, const std::vector<Var>& p) {
        Var h = t.relu(t.add(t.matmul(t.constant(x), p[0]), p[1]));
        Var probs = t.sigmoid(t.matmul(h, p[2]));
        Var bce = loss_bce(t, probs, labels);
        Var contrast = loss_contrastive(t, h, 0, {2, 3}, {1, 4, 5}, 1.0, false);
        return loss_joint(t, bce, contrast, 0.5);
    };
    Tensor w1 = Tensor::matrix(4, 5), b1 = Tensor::vec(5), w2 = Tensor::matrix(5, 1);
    for (double& v : w1.data) v = d(rng) * 0.5;
    for (double& v : b1.data) v = d(rng) * 0.1;
    for (double& v : w2.data) v = d(rng) * 0.5;
    CHECK(tensor::grad_check(build, {w1, b1, w2}) < 1e-4);
}

TEST_CASE("knn vote on the documented cases") {
    KnnIndex index;
    index.add("acct", {0.0, 0.0}, 1, "m1");
    index.add("acct", {0.1, 0.0}, 1, "m2");
    index.add("acct", {0.0, 0.1}, 1, "m3");
    CHECK(index.vote("acct", {0.05, 0.05}, 5) == doctest::Approx(1.0));

    KnnIndex half;
    half.add("a", {0.0, 0.0}, 1, "m1");
    half.add("a", {0.1, 0.0}, 1, "m2");
    half.add("a", {1.0, 1.0}, 0, "m3");
    half.add("a", {1.1, 1.0}, 0, "m4");
    CHECK(half.vote("a", {0.5, 0.5}, 4) == doctest::Approx(0.5));

    CHECK_THROWS_AS(index.vote("unknown-acct", {0.0, 0.0}, 5), Error);
}

TEST_CASE("knn vote never reads other accounts' labels") {
    KnnIndex index;
    index.add("mine", {0.0, 0.0}, 1, "m1");
    index.add("mine", {0.2, 0.0}, 1, "m2");
    // a flood of opposite labels in another account, much closer to the query
    for (int i = 0; i < 50; ++i)
        index.add("other", {0.01 * i, 0.0}, 0, "x" + std::to_string(i));
    CHECK(index.vote("mine", {0.05, 0.0}, 5) == doctest::Approx(1.0));
}

TEST_CASE("knn vote recovers planted clusters") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> noise(0.0, 0.05);
    KnnIndex index;
    auto cluster_point = [&](int label) {
        const double cx = label ? 1.0 : -1.0;
        return std::vector<double>{cx + noise(rng), cx + noise(rng)};
    };
    for (int i = 0; i < 40; ++i) index.add("acct", cluster_point(i % 2), i % 2, "m" + std::to_string(i));
    int hits = 0;
    const int queries = 200;
    for (int i = 0; i < queries; ++i) {
        const int label = i % 2;
        const double vote = index.vote("acct", cluster_point(label), 5);
        hits += (vote > 0.5) == (label == 1);
    }
    CHECK(static_cast<double>(hits) / queries >= 0.95);
}

TEST_CASE("decision rules") {
    CHECK(decide(Variant::Ens, 0.9, 0.9));
    CHECK_FALSE(decide(Variant::Ens, 0.5, 0.5));  // tie -> not monitored
    CHECK(decide(Variant::Ens, 0.2, 0.9));        // mean 0.55
    CHECK(decide(Variant::BCE, 0.51, 0.0));
    CHECK_FALSE(decide(Variant::KNN, 0.99, 0.5));

    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const double p = u(rng), q = u(rng);
        CHECK(decide(Variant::Ens, p, q) == decide(Variant::Ens, q, p));
    }
}

TEST_CASE("training separates a planted separable dataset") {
    // two text families; the hashed embedder keeps them linearly separable
    embed::EmbedderOptions eopts;
    eopts.width = 32;
    embed::Embedder embedder(eopts);
    std::vector<MetricSample> samples;
    std::vector<std::vector<double>> features;
    std::mt19937_64 rng(31);
    const char* busy[] = {"request count spikes", "error rate surge", "latency p99 high"};
    const char* idle[] = {"config checksum", "build info constant", "static version string"};
    for (int i = 0; i < 120; ++i) {
        MetricSample s;
        s.account = "acct" + std::to_string(i % 4);
        s.metric_key = "m" + std::to_string(i);
        const bool monitored = i % 2 == 0;
        s.metric_text = (monitored ? busy : idle)[static_cast<std::size_t>(i) % 3] +
                        std::string(" #") + std::to_string(i % 7);
        s.service_text = "service " + s.account;
        s.label = monitored ? 1 : 0;
        s.timestamp = static_cast<double>(i);
        features.push_back(build_feature(embedder, s));
        samples.push_back(std::move(s));
    }

    SelectConfig cfg;
    cfg.embed_width = 32;
    cfg.hidden = 32;
    cfg.max_epochs = 80;
    cfg.seed = 5;
    TrainReport report;
    SelectModel model = train_select(samples, features, cfg, &report);
    CHECK(report.best_val_metric >= 0.9);
    CHECK(!report.epochs.empty());

    // checkpoint fidelity: reloaded parameters give the same probabilities
    const std::string text = optim::checkpoint_to_string(model.params);
    SelectModel clone;
    clone.config = model.config;
    clone.params = optim::checkpoint_from_string(text);
    Tensor x = Tensor::matrix(1, 4 * cfg.embed_width);
    std::copy(features[0].begin(), features[0].end(), x.data.begin());
    std::vector<double> p1, p2;
    model.forward(x, nullptr, &p1);
    clone.forward(x, nullptr, &p2);
    CHECK(p1[0] == doctest::Approx(p2[0]).epsilon(1e-12));
}

TEST_CASE("training rejects empty and malformed inputs") {
    SelectConfig cfg;
    CHECK_THROWS_AS(train_select({}, {}, cfg), Error);

    MetricSample s;
    s.account = "a";
    s.metric_key = "m";
    s.label = 1;
    cfg.hidden = 0;
    CHECK_THROWS_AS(train_select({s}, {{0.0}}, cfg), Error);
}

TEST_CASE("select dataset document round-trips") {
    std::vector<MetricSample> samples;
    MetricSample s;
    s.account = "acct1";
    s.metric_key = "ram_util";
    s.service_text = "storefront";
    s.dependent_texts = {"auth service", "billing"};
    s.metric_text = "Raw RAM utilization in MBs";
    s.dimension_texts = {"vm", "region"};
    s.label = 1;
    s.timestamp = 1234.5;
    samples.push_back(s);

    const std::string path = "/tmp/monrec_select_test.jsonl";
    save_select_dataset(samples, path);
    auto back = load_select_dataset(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].account == "acct1");
    CHECK(back[0].dependent_texts == s.dependent_texts);
    CHECK(back[0].label == 1);
    CHECK(back[0].timestamp == doctest::Approx(1234.5));
}
