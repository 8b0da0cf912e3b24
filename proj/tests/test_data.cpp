#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "data.hpp"

using namespace masklm;

namespace {

bool same_example(const Example& a, const Example& b) {
    return a.tokens == b.tokens && a.label == b.label && a.tags == b.tags;
}

bool same_split(const Split& a, const Split& b) {
    if (a.items.size() != b.items.size()) return false;
    for (size_t i = 0; i < a.items.size(); ++i) {
        if (!same_example(a.items[i], b.items[i])) return false;
    }
    return true;
}

double unigram_entropy(const std::vector<int64_t>& counts) {
    int64_t total = 0;
    for (int64_t c : counts) total += c;
    double h = 0.0;
    for (int64_t c : counts) {
        if (c == 0) continue;
        double p = double(c) / double(total);
        h -= p * std::log(p);
    }
    return h;
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
}

std::string error_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("vocabulary must cover reserved ids, clusters and singletons") {
    Vocab v;
    v.size = 15;
    CHECK_THROWS_AS(v.validate(), Error);
    v.size = 16;
    CHECK_NOTHROW(v.validate());
}

TEST_CASE("cluster membership hand values") {
    CHECK(MarkovChain::cluster_of(4) == 0);
    CHECK(MarkovChain::cluster_of(5) == 0);
    CHECK(MarkovChain::cluster_of(10) == 3);
    CHECK(MarkovChain::cluster_of(11) == 3);
    CHECK(MarkovChain::cluster_of(3) == -1);
    CHECK(MarkovChain::cluster_of(12) == -1);

    CHECK(MarkovChain::cluster_member(0, 0) == 4);
    CHECK(MarkovChain::cluster_member(0, 1) == 5);
    CHECK(MarkovChain::cluster_member(3, 1) == 11);
    CHECK_THROWS_AS(MarkovChain::cluster_member(4, 0), Error);
    CHECK_THROWS_AS(MarkovChain::cluster_member(0, 2), Error);
}

TEST_CASE("chain samples stay inside the content vocabulary") {
    MarkovChain chain(64);
    Rng rng(3);
    std::vector<int32_t> toks = chain.sample(5000, rng);
    REQUIRE(toks.size() == 5000);
    for (int32_t t : toks) {
        CHECK(t >= kNumReservedIds);
        CHECK(t < 64);
    }
}

TEST_CASE("synonym pair members are emitted interchangeably") {
    // Pair members share a chain state, so both their frequency and their
    // next-token behaviour must match up to sampling noise.
    MarkovChain chain(64);
    Rng rng(41);
    std::vector<int32_t> toks = chain.sample(2'000'000, rng);

    std::vector<int64_t> counts(64, 0);
    std::map<int32_t, std::vector<int64_t>> next_counts;
    for (int64_t pair = 0; pair < MarkovChain::kNumClusters; ++pair) {
        next_counts[MarkovChain::cluster_member(pair, 0)].assign(64, 0);
        next_counts[MarkovChain::cluster_member(pair, 1)].assign(64, 0);
    }
    for (size_t i = 0; i < toks.size(); ++i) {
        ++counts[static_cast<size_t>(toks[i])];
        if (i + 1 < toks.size()) {
            auto it = next_counts.find(toks[i]);
            if (it != next_counts.end()) ++it->second[static_cast<size_t>(toks[i + 1])];
        }
    }

    for (int64_t pair = 0; pair < MarkovChain::kNumClusters; ++pair) {
        int32_t a = MarkovChain::cluster_member(pair, 0);
        int32_t b = MarkovChain::cluster_member(pair, 1);
        INFO("pair " << pair);
        double fa = double(counts[static_cast<size_t>(a)]);
        double fb = double(counts[static_cast<size_t>(b)]);
        CHECK(std::abs(fa - fb) / (fa + fb) < 0.05);

        const auto& na = next_counts[a];
        const auto& nb = next_counts[b];
        double ta = 0, tb = 0;
        for (int64_t t = 0; t < 64; ++t) {
            ta += double(na[static_cast<size_t>(t)]);
            tb += double(nb[static_cast<size_t>(t)]);
        }
        double tv = 0.0;
        for (int64_t t = 0; t < 64; ++t) {
            tv += std::abs(double(na[static_cast<size_t>(t)]) / ta - double(nb[static_cast<size_t>(t)]) / tb);
        }
        CHECK(tv / 2.0 < 0.08);
    }
}

TEST_CASE("corpus generation is deterministic and shaped as requested") {
    Vocab v;
    TaskDataset a = gen_corpus(9, v, 40, 12);
    TaskDataset b = gen_corpus(9, v, 40, 12);
    CHECK(same_split(a.train, b.train));
    CHECK(same_split(a.dev, b.dev));
    CHECK(same_split(a.test, b.test));

    CHECK(a.train.items.size() == 40);
    CHECK(a.dev.items.size() == 5);
    CHECK(a.test.items.size() == 5);
    for (const Example& ex : a.train.items) {
        REQUIRE(ex.tokens.size() == 14);
        CHECK(ex.tokens.front() == kClsId);
        CHECK(ex.tokens.back() == kSepId);
        CHECK(ex.label == -1);
    }

    TaskDataset c = gen_corpus(10, v, 40, 12);
    CHECK_FALSE(same_split(a.train, c.train));

    TaskDataset empty = gen_corpus(9, v, 0, 12);
    CHECK(empty.train.items.empty());
    CHECK(empty.dev.items.empty());
    CHECK(empty.test.items.empty());
}

TEST_CASE("corpus splits do not share sequences") {
    Vocab v;
    TaskDataset ds = gen_corpus(123, v, 64, 16);
    std::set<std::vector<int32_t>> train_seqs;
    for (const Example& ex : ds.train.items) train_seqs.insert(ex.tokens);
    for (const Example& ex : ds.dev.items) CHECK(train_seqs.count(ex.tokens) == 0);
    for (const Example& ex : ds.test.items) CHECK(train_seqs.count(ex.tokens) == 0);
}

TEST_CASE("corpus unigram entropy sits measurably below the uniform bound") {
    Vocab v;
    TaskDataset ds = gen_corpus(7, v, 2000, 24);
    std::vector<int64_t> counts(64, 0);
    for (const Example& ex : ds.train.items) {
        for (size_t i = 1; i + 1 < ex.tokens.size(); ++i) ++counts[static_cast<size_t>(ex.tokens[i])];
    }
    double h = unigram_entropy(counts);
    CHECK(h < std::log(64.0) - 0.1);
    CHECK(h > 3.0);
}

TEST_CASE("classification datasets are balanced and carry exactly one trigger") {
    Vocab v;
    TaskDataset ds = gen_classification_task(5, v, 2, 60, 12);
    CHECK(ds.kind == TaskKind::classification);
    CHECK(ds.num_labels == 2);

    for (const Split* split : {&ds.train, &ds.dev, &ds.test}) {
        REQUIRE(split->items.size() == 60);
        std::vector<int64_t> per_class(2, 0);
        for (const Example& ex : split->items) {
            REQUIRE(ex.label >= 0);
            REQUIRE(ex.label < 2);
            ++per_class[static_cast<size_t>(ex.label)];
            REQUIRE(ex.tokens.size() == 14);
            CHECK(ex.tokens.front() == kClsId);
            CHECK(ex.tokens.back() == kSepId);

            // the planted trigger is the only cluster token, so counting
            // triggers classifies every example perfectly
            int64_t found = 0;
            for (int32_t t : ex.tokens) {
                int64_t c = MarkovChain::cluster_of(t);
                if (c < 0) continue;
                ++found;
                CHECK(t == MarkovChain::cluster_member(ex.label, 0));
            }
            CHECK(found == 1);
        }
        CHECK(per_class[0] == 30);
        CHECK(per_class[1] == 30);
    }

    TaskDataset again = gen_classification_task(5, v, 2, 60, 12);
    CHECK(same_split(ds.train, again.train));
    CHECK(same_split(ds.dev, again.dev));
    CHECK(same_split(ds.test, again.test));
}

TEST_CASE("classification variants share labels but use the other pair member") {
    Vocab v;
    TaskDataset a = gen_classification_task(8, v, 3, 30, 10, 0);
    TaskDataset b = gen_classification_task(8, v, 3, 30, 10, 1);
    REQUIRE(a.train.items.size() == b.train.items.size());
    for (size_t i = 0; i < a.train.items.size(); ++i) {
        CHECK(a.train.items[i].label == b.train.items[i].label);
    }
    for (const Example& ex : b.train.items) {
        for (int32_t t : ex.tokens) {
            if (MarkovChain::cluster_of(t) >= 0) {
                CHECK(t == MarkovChain::cluster_member(ex.label, 1));
            }
        }
    }
}

TEST_CASE("classification generator rejects bad arguments") {
    Vocab v;
    CHECK_THROWS_AS(gen_classification_task(1, v, 1, 30), Error);
    CHECK_THROWS_AS(gen_classification_task(1, v, 5, 30), Error);
    CHECK_THROWS_AS(gen_classification_task(1, v, 2, 31), Error);
    CHECK_THROWS_AS(gen_classification_task(1, v, 2, 30, 12, 2), Error);
    std::string msg = error_message([&] { gen_classification_task(1, v, 2, 31); });
    CHECK(msg.find("balance") != std::string::npos);
}

TEST_CASE("tagging datasets follow the previous-token rule") {
    Vocab v;
    TaskDataset ds = gen_tagging_task(11, v, 3, 50, 12);
    CHECK(ds.kind == TaskKind::tagging);
    CHECK(ds.num_labels == 3);

    for (const Split* split : {&ds.train, &ds.dev, &ds.test}) {
        REQUIRE(split->items.size() == 50);
        for (const Example& ex : split->items) {
            REQUIRE(ex.tags.size() == ex.tokens.size());
            CHECK(ex.tags[0] == 0);
            int64_t planted = 0;
            for (size_t p = 0; p < ex.tokens.size(); ++p) {
                if (MarkovChain::cluster_of(ex.tokens[p]) >= 0) ++planted;
                if (p == 0) continue;
                int64_t c = MarkovChain::cluster_of(ex.tokens[p - 1]);
                int32_t want = (c >= 0 && c < 2) ? int32_t(c + 1) : 0;
                CHECK(ex.tags[p] == want);
            }
            CHECK(planted >= 2);
            CHECK(planted <= 4);
        }
    }

    TaskDataset again = gen_tagging_task(11, v, 3, 50, 12);
    CHECK(same_split(ds.train, again.train));
}

TEST_CASE("tagging tag frequencies are consistent across splits") {
    Vocab v;
    TaskDataset ds = gen_tagging_task(19, v, 5, 400, 12);
    auto freqs = [&](const Split& s) {
        std::vector<double> f(5, 0.0);
        int64_t total = 0;
        for (const Example& ex : s.items) {
            for (int32_t t : ex.tags) {
                f[static_cast<size_t>(t)] += 1.0;
                ++total;
            }
        }
        for (double& x : f) x /= double(total);
        return f;
    };
    std::vector<double> tr = freqs(ds.train), de = freqs(ds.dev), te = freqs(ds.test);
    for (size_t t = 0; t < 5; ++t) {
        INFO("tag " << t);
        CHECK(std::abs(tr[t] - de[t]) < 0.02);
        CHECK(std::abs(tr[t] - te[t]) < 0.02);
    }
}

TEST_CASE("tagging generator rejects bad tag counts") {
    Vocab v;
    CHECK_THROWS_AS(gen_tagging_task(1, v, 1, 10), Error);
    CHECK_THROWS_AS(gen_tagging_task(1, v, 6, 10), Error);
}

TEST_CASE("mlm corruption hits the target rate and split") {
    Vocab v;
    TokenBatch batch;
    batch.batch = 1000;
    batch.len = 120;
    batch.ids.assign(static_cast<size_t>(batch.batch * batch.len), 20);

    auto [corrupted, targets] = mlm_corrupt(batch, v, 77);
    REQUIRE(targets.size() == batch.ids.size());

    int64_t selected = 0, masked = 0, changed = 0, kept = 0;
    for (size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0) {
            CHECK(corrupted.ids[i] == 20);
            continue;
        }
        CHECK(targets[i] == 20);
        ++selected;
        if (corrupted.ids[i] == kMaskId) {
            ++masked;
        } else if (corrupted.ids[i] == 20) {
            ++kept;
        } else {
            CHECK(corrupted.ids[i] >= kNumReservedIds);
            CHECK(corrupted.ids[i] < v.size);
            ++changed;
        }
    }
    double n = double(batch.ids.size());
    CHECK(double(selected) / n == doctest::Approx(0.15).epsilon(0.034));  // 0.15 +- 0.005
    double s = double(selected);
    CHECK(double(masked) / s == doctest::Approx(0.8).epsilon(0.03));
    // a "random token" draw can coincide with the original, so the observed
    // unchanged share sits slightly above 0.10
    CHECK(double(changed) / s > 0.07);
    CHECK(double(changed) / s < 0.13);
    CHECK(double(kept) / s > 0.07);
    CHECK(double(kept) / s < 0.14);

    auto [c2, t2] = mlm_corrupt(batch, v, 77);
    CHECK(c2.ids == corrupted.ids);
    CHECK(t2 == targets);
    auto [c3, t3] = mlm_corrupt(batch, v, 78);
    CHECK(c3.ids != corrupted.ids);
}

TEST_CASE("mlm corruption never touches reserved positions") {
    Vocab v;
    TokenBatch batch;
    batch.batch = 200;
    batch.len = 8;
    batch.ids.assign(1600, kPadId);
    for (int64_t i = 0; i < batch.batch; ++i) {
        batch.ids[static_cast<size_t>(i * 8 + 0)] = kClsId;
        batch.ids[static_cast<size_t>(i * 8 + 1)] = 30;
        batch.ids[static_cast<size_t>(i * 8 + 2)] = 31;
        batch.ids[static_cast<size_t>(i * 8 + 3)] = kSepId;
    }
    auto [corrupted, targets] = mlm_corrupt(batch, v, 5);
    for (int64_t i = 0; i < batch.batch; ++i) {
        for (int64_t p : {int64_t(0), int64_t(3), int64_t(4), int64_t(5), int64_t(6), int64_t(7)}) {
            size_t at = static_cast<size_t>(i * 8 + p);
            CHECK(corrupted.ids[at] == batch.ids[at]);
            CHECK(targets[at] == -1);
        }
    }

    TokenBatch bad = batch;
    bad.ids[1] = 64;
    CHECK_THROWS_AS(mlm_corrupt(bad, v, 5), Error);
}

TEST_CASE("tsv roundtrip preserves every task kind") {
    Vocab v;
    std::string path = temp_file("masklm_roundtrip.tsv");

    TaskDataset cls = gen_classification_task(3, v, 2, 20, 9);
    save_split_tsv(path, TaskKind::classification, cls.train);
    Split cls_back = load_split_tsv(path, TaskKind::classification, 2, v.size, 64);
    CHECK(same_split(cls.train, cls_back));

    TaskDataset tag = gen_tagging_task(3, v, 3, 20, 9);
    save_split_tsv(path, TaskKind::tagging, tag.train);
    Split tag_back = load_split_tsv(path, TaskKind::tagging, 3, v.size, 64);
    CHECK(same_split(tag.train, tag_back));

    TaskDataset cor = gen_corpus(3, v, 20, 9);
    save_split_tsv(path, TaskKind::mlm_corpus, cor.train);
    Split cor_back = load_split_tsv(path, TaskKind::mlm_corpus, 0, v.size, 64);
    CHECK(same_split(cor.train, cor_back));

    std::remove(path.c_str());
}

TEST_CASE("tsv loading truncates over-long rows and counts them") {
    std::string path = temp_file("masklm_truncate.tsv");
    write_file(path, "0\t1 20 21 22 23 2\n1\t1 20 2\n");
    int64_t cut = -1;
    Split s = load_split_tsv(path, TaskKind::classification, 2, 64, 4, &cut);
    CHECK(cut == 1);
    REQUIRE(s.items.size() == 2);
    CHECK(s.items[0].tokens.size() == 4);
    CHECK(s.items[1].tokens.size() == 3);

    write_file(path, "1 20 21 22 23 2\n0 1 2 1 2 0\n");
    cut = -1;
    Split t = load_split_tsv(path, TaskKind::tagging, 3, 64, 4, &cut);
    CHECK(cut == 1);
    REQUIRE(t.items.size() == 1);
    CHECK(t.items[0].tokens.size() == 4);
    CHECK(t.items[0].tags.size() == 4);
    std::remove(path.c_str());
}

TEST_CASE("tsv parse failures carry the offending line number") {
    std::string path = temp_file("masklm_badfile.tsv");

    write_file(path, "0\t1 20 2\n1 20 2\n");
    std::string msg = error_message([&] { load_split_tsv(path, TaskKind::classification, 2, 64, 64); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("label<TAB>") != std::string::npos);

    write_file(path, "0\t1 20 2\n1\t1 2x 2\n");
    msg = error_message([&] { load_split_tsv(path, TaskKind::classification, 2, 64, 64); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("malformed") != std::string::npos);

    write_file(path, "3\t1 20 2\n");
    msg = error_message([&] { load_split_tsv(path, TaskKind::classification, 2, 64, 64); });
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("label 3") != std::string::npos);

    write_file(path, "0\t1 99 2\n");
    msg = error_message([&] { load_split_tsv(path, TaskKind::classification, 2, 64, 64); });
    CHECK(msg.find("99") != std::string::npos);
    CHECK(msg.find("vocabulary") != std::string::npos);

    write_file(path, "1 20 2\n0 0\n");
    msg = error_message([&] { load_split_tsv(path, TaskKind::tagging, 3, 64, 64); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("2 tags for 3 tokens") != std::string::npos);

    write_file(path, "1 20 2\n");
    msg = error_message([&] { load_split_tsv(path, TaskKind::tagging, 3, 64, 64); });
    CHECK(msg.find("without matching tag line") != std::string::npos);

    write_file(path, "1 20 2\n0 0 7\n");
    msg = error_message([&] { load_split_tsv(path, TaskKind::tagging, 3, 64, 64); });
    CHECK(msg.find("tag 7") != std::string::npos);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_split_tsv(path, TaskKind::classification, 2, 64, 64), Error);
}

TEST_CASE("empty tsv files load as empty splits") {
    std::string path = temp_file("masklm_empty.tsv");
    write_file(path, "");
    Split s = load_split_tsv(path, TaskKind::classification, 2, 64, 64);
    CHECK(s.items.empty());
    std::remove(path.c_str());
}

TEST_CASE("labeled batches align labels with padded positions") {
    Vocab v;
    Example a;
    a.tokens = {kClsId, 20, 4, kSepId};
    a.tags = {0, 0, 0, 1};
    a.label = 1;
    Example b;
    b.tokens = {kClsId, 21, kSepId};
    b.tags = {0, 0, 0};
    b.label = 0;
    std::vector<const Example*> items = {&a, &b};

    LabeledBatch cls = make_classification_batch(items, 16);
    CHECK(cls.tokens.batch == 2);
    CHECK(cls.tokens.len == 4);
    CHECK(cls.labels == std::vector<int32_t>{1, 0});

    LabeledBatch tag = make_tagging_batch(items, 16);
    CHECK(tag.labels == std::vector<int32_t>{0, 0, 0, 1, 0, 0, 0, -1});

    LabeledBatch mlm = make_mlm_batch(items, 16, v, 9);
    CHECK(mlm.labels.size() == 8);
    CHECK(mlm.labels[7] == -1);  // pad slot can never be selected
    LabeledBatch mlm2 = make_mlm_batch(items, 16, v, 9);
    CHECK(mlm.tokens.ids == mlm2.tokens.ids);
    CHECK(mlm.labels == mlm2.labels);
}

TEST_CASE("task kind names roundtrip") {
    CHECK(task_kind_from_name("classification") == TaskKind::classification);
    CHECK(task_kind_from_name("tagging") == TaskKind::tagging);
    CHECK(task_kind_from_name("mlm-corpus") == TaskKind::mlm_corpus);
    CHECK(task_kind_name(TaskKind::tagging) == "tagging");
    CHECK_THROWS_AS(task_kind_from_name("parsing"), Error);
}
