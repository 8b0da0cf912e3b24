#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "analysis.hpp"

using namespace masklm;

namespace {

TransformerConfig tiny_config(int64_t num_labels = 2) {
    TransformerConfig c;
    c.num_blocks = 2;
    c.hidden = 32;
    c.feed_forward = 64;
    c.heads = 2;
    c.vocab_size = 64;
    c.max_len = 16;
    c.num_labels = num_labels;
    return c;
}

bool params_bitwise_equal(const Model& a, const Model& b) {
    auto pa = parameters(const_cast<Model&>(a));
    auto pb = parameters(const_cast<Model&>(b));
    if (pa.size() != pb.size()) return false;
    for (size_t i = 0; i < pa.size(); ++i) {
        if (!pa[i].t.defined() != !pb[i].t.defined()) return false;
        if (!pa[i].t.defined()) continue;
        const auto& da = pa[i].t.data();
        const auto& db = pb[i].t.data();
        if (da.size() != db.size()) return false;
        if (std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) != 0) return false;
    }
    return true;
}

void fill_params(Model& m, float v) {
    for (auto& p : parameters(m)) std::fill(p.t.data().begin(), p.t.data().end(), v);
}

bool all_params_are(const Model& m, float v) {
    for (auto& p : parameters(m)) {
        for (float x : p.t.data()) {
            if (x != v) return false;
        }
    }
    return true;
}

BitMatrix bits(int64_t rows, int64_t cols, const std::vector<int>& v) {
    BitMatrix m(rows, cols);
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) m.set(r, c, v[size_t(r * cols + c)] != 0);
    }
    return m;
}

std::string error_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool eval_equal(const EvalResult& a, const EvalResult& b) {
    if (a.loss != b.loss || a.count != b.count || a.metrics.size() != b.metrics.size()) return false;
    for (size_t i = 0; i < a.metrics.size(); ++i) {
        if (a.metrics[i] != b.metrics[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("mask dissimilarity matches hand-worked values") {
    BitMatrix init = bits(1, 4, {0, 0, 0, 0});

    // identical trained masks, both moved: 0 / (2 + 2)
    BitMatrix same = bits(1, 4, {1, 1, 0, 0});
    CHECK(dissimilarity(init, same, init, same) == 0.0);

    // one shared flip, one private flip each: 2 / (2 + 2)
    BitMatrix t1 = bits(1, 4, {1, 1, 0, 0});
    BitMatrix t2 = bits(1, 4, {1, 0, 1, 0});
    CHECK(dissimilarity(init, t1, init, t2) == 0.5);

    // fully disjoint single flips: 2 / (1 + 1)
    BitMatrix zero2 = bits(1, 2, {0, 0});
    CHECK(dissimilarity(zero2, bits(1, 2, {1, 0}), zero2, bits(1, 2, {0, 1})) == 1.0);

    // neither run moved: the ratio is undefined
    std::string msg = error_message([&] { dissimilarity(init, init, init, init); });
    CHECK(msg.find("undefined") != std::string::npos);
}

TEST_CASE("mask dissimilarity is symmetric and validates shapes") {
    Rng rng(1234);
    BitMatrix i1(6, 9), i2(6, 9), t1(6, 9), t2(6, 9);
    for (int64_t r = 0; r < 6; ++r) {
        for (int64_t c = 0; c < 9; ++c) {
            i1.set(r, c, rng.next_below(2));
            i2.set(r, c, rng.next_below(2));
            t1.set(r, c, rng.next_below(2));
            t2.set(r, c, rng.next_below(2));
        }
    }
    CHECK(dissimilarity(i1, t1, i2, t2) == dissimilarity(i2, t2, i1, t1));

    BitMatrix other(5, 9);
    CHECK(error_message([&] { dissimilarity(other, t1, i2, t2); }).find("shape") != std::string::npos);
    CHECK(error_message([&] { dissimilarity(i1, t1, i2, other); }).find("shape") != std::string::npos);
}

TEST_CASE("layerwise mask comparison pools sums and flags shared inits") {
    NamedMasks init1, trained1, init2, trained2;
    BitMatrix zero4 = bits(1, 4, {0, 0, 0, 0});
    // layer p: apart 2, moved 2 + 2
    init1.emplace_back("p", zero4);
    trained1.emplace_back("p", bits(1, 4, {1, 1, 0, 0}));
    init2.emplace_back("p", zero4);
    trained2.emplace_back("p", bits(1, 4, {1, 0, 1, 0}));
    // layer q: apart 2, moved 1 + 1
    BitMatrix zero2 = bits(1, 2, {0, 0});
    init1.emplace_back("q", zero2);
    trained1.emplace_back("q", bits(1, 2, {1, 0}));
    init2.emplace_back("q", zero2);
    trained2.emplace_back("q", bits(1, 2, {0, 1}));

    MaskSetDiff diff = mask_dissimilarity("left", init1, trained1, "right", init2, trained2);
    CHECK(diff.task1 == "left");
    CHECK(diff.task2 == "right");
    CHECK(diff.shared_init);
    REQUIRE(diff.per_layer.size() == 2);
    CHECK(diff.per_layer[0].first == "p");
    CHECK(diff.per_layer[0].second == 0.5);
    CHECK(diff.per_layer[1].first == "q");
    CHECK(diff.per_layer[1].second == 1.0);
    CHECK(diff.pooled == doctest::Approx(4.0 / 6.0).epsilon(1e-15));

    std::string text = diff.report.render();
    CHECK(text.find("#table layers") != std::string::npos);
    CHECK(text.find("shared_init\tyes") != std::string::npos);
    CHECK(text.find("task_a\tleft") != std::string::npos);

    // different inits are reported, not rejected
    NamedMasks init2b = init2;
    init2b[0].second = bits(1, 4, {0, 1, 0, 0});
    NamedMasks trained2b = trained2;
    MaskSetDiff moved = mask_dissimilarity("left", init1, trained1, "right", init2b, trained2b);
    CHECK(!moved.shared_init);
    CHECK(moved.report.render().find("shared_init\tno") != std::string::npos);

    // mismatched layer lists and dead layers are errors
    NamedMasks renamed = init2;
    renamed[1].first = "r";
    CHECK(error_message([&] {
              mask_dissimilarity("left", init1, trained1, "right", renamed, trained2);
          }).find("layer order") != std::string::npos);
    NamedMasks shorter(init1.begin(), init1.begin() + 1);
    CHECK(error_message([&] {
              mask_dissimilarity("left", shorter, trained1, "right", init2, trained2);
          }).find("different numbers of layers") != std::string::npos);
    CHECK(error_message([&] {
              mask_dissimilarity("left", init1, init1, "right", init2, init2);
          }).find("layer 'p'") != std::string::npos);
}

TEST_CASE("storage accounting reproduces the reference-architecture numbers") {
    TransformerConfig arch = bert_base_config();
    MaskPlan plan;
    for (int64_t b = 2; b < 12; ++b) plan.blocks.push_back(b);
    plan.pooler = true;
    plan.classifier = true;

    std::vector<std::pair<std::string, int64_t>> tasks = {
        {"mrpc", 2}, {"sst2", 2}, {"cola", 2}, {"rte", 2}, {"qnli", 2}, {"sem", 2},
        {"trec", 6}, {"ag", 4},   {"pos", 49}, {"ner", 9}, {"swag", 1}};
    MemoryReport rep = memory_report(arch, plan, tasks);

    CHECK(rep.backbone_floats == 109482240);
    CHECK(rep.backbone_kb == 437928.96);
    CHECK(rep.plan_bits == 71368704);
    CHECK(rep.plan_kb == 8921.088);
    CHECK(float_kb(1536) == 6.144);
    CHECK(bit_kb(1536) == 0.192);

    REQUIRE(rep.tasks.size() == 11);
    // the first finetuned copy replaces the pretrained weights; later tasks
    // each add a full backbone
    CHECK(rep.tasks[0].finetune_added_floats == 1536);
    CHECK(rep.tasks[1].finetune_added_floats == 109482240 + 1536);
    CHECK(rep.tasks[6].finetune_added_floats == 109482240 + 4608);

    // masking: classifier floats only for a new label count, mask bits for
    // the plan plus the classifier every time
    CHECK(rep.tasks[0].mask_added_floats == 1536);
    CHECK(rep.tasks[0].mask_added_bits == 71368704 + 1536);
    CHECK(rep.tasks[1].mask_added_floats == 0);
    CHECK(rep.tasks[1].mask_added_bits == 71368704 + 1536);
    CHECK(rep.tasks[6].mask_added_floats == 4608);
    CHECK(rep.tasks[6].mask_added_bits == 71368704 + 4608);
    CHECK(rep.tasks[7].mask_added_floats == 3072);
    CHECK(rep.tasks[8].mask_added_floats == 37632);
    CHECK(rep.tasks[9].mask_added_floats == 6912);
    CHECK(rep.tasks[10].mask_added_floats == 768);

    CHECK(rep.tasks[0].finetune_total_kb == float_kb(109482240 + 1536));
    CHECK(rep.tasks[0].mask_total_kb == float_kb(109482240 + 1536) + bit_kb(71370240));
    CHECK(rep.tasks[0].mask_total_kb == doctest::Approx(446856.384).epsilon(1e-12));

    // closed forms for the cumulative totals
    int64_t all_heads = 768 * (2 + 2 + 2 + 2 + 2 + 2 + 6 + 4 + 49 + 9 + 1);
    int64_t distinct_heads = 768 * (2 + 6 + 4 + 49 + 9 + 1);
    int64_t all_bits = 11 * 71368704 + all_heads;  // one head bit per head float
    CHECK(rep.tasks.back().finetune_total_kb == float_kb(11 * 109482240LL + all_heads));
    CHECK(rep.tasks.back().mask_total_kb == float_kb(109482240 + distinct_heads) + bit_kb(all_bits));
    CHECK(rep.tasks.back().mask_total_kb < rep.tasks.back().finetune_total_kb / 8.0);

    std::string text = rep.report.render();
    CHECK(text.find("backbone_kb\t437928.96") != std::string::npos);
    CHECK(text.find("plan_mask_kb\t8921.088") != std::string::npos);
    CHECK(text.find("masked_weight_storage_ratio\t0.03125") != std::string::npos);
    CHECK(text.find("#table tasks") != std::string::npos);
    CHECK(memory_report(arch, plan, tasks).report.render() == text);
}

TEST_CASE("storage accounting respects the plan and validates input") {
    TransformerConfig arch = tiny_config();
    MaskPlan plan = MaskPlan::bottom_up(2);
    plan.pooler = false;
    plan.classifier = false;

    MemoryReport rep = memory_report(arch, plan, {{"one", 2}, {"two", 3}});
    int64_t per_block = 4 * 32 * 32 + 2 * 32 * 64;
    CHECK(rep.plan_bits == 2 * per_block);
    // no classifier in the plan, so no classifier mask bits either
    CHECK(rep.tasks[0].mask_added_bits == rep.plan_bits);
    CHECK(rep.tasks[1].mask_added_bits == rep.plan_bits);
    CHECK(rep.tasks[1].mask_added_floats == 32 * 3);

    MaskPlan bad = plan;
    bad.blocks = {0, 5};
    CHECK(error_message([&] { memory_report(arch, bad, {{"t", 2}}); }).find("outside") != std::string::npos);
    bad.blocks = {1, 1};
    CHECK(error_message([&] { memory_report(arch, bad, {{"t", 2}}); }).find("repeats") != std::string::npos);
    CHECK(error_message([&] { memory_report(arch, plan, {{"t", 0}}); }).find("at least one label") !=
          std::string::npos);
}

TEST_CASE("majority vote picks the most common label, ties to the lowest") {
    CHECK(majority_vote({1, 1, 2, 0}, 3) == 1);
    CHECK(majority_vote({0, 0, 1, 1}, 2) == 0);
    CHECK(majority_vote({2, 2, 0, 0, 1}, 3) == 0);
    CHECK(majority_vote({2}, 3) == 2);
    CHECK(error_message([] { majority_vote({}, 2); }).find("empty") != std::string::npos);
    CHECK(error_message([] { majority_vote({3}, 3); }).find("outside") != std::string::npos);
}

TEST_CASE("ensemble prediction combines members per mode") {
    Vocab v;
    TaskDataset task = gen_classification_task(73, v, 3, 24, 8);
    Model m1 = init_model(tiny_config(3), 61);
    Model m2 = init_model(tiny_config(3), 62);
    Model m3 = init_model(tiny_config(3), 63);
    std::vector<Model*> members{&m1, &m2, &m3};

    std::vector<std::vector<int32_t>> seqs;
    for (size_t i = 0; i < 5; ++i) seqs.push_back(task.dev.items[i].tokens);
    TokenBatch tb = make_batch(seqs, 16);

    std::vector<std::vector<float>> logits;
    for (Model* m : members) logits.push_back(classify_sequence(*m, tb).data());

    auto argmax3 = [](const std::vector<double>& row) {
        int64_t best = 0;
        for (int64_t j = 1; j < 3; ++j) {
            if (row[size_t(j)] > row[size_t(best)]) best = j;
        }
        return best;
    };

    std::vector<int64_t> by_labels = ensemble_predict(members, tb, EnsembleMode::labels);
    std::vector<int64_t> by_logits = ensemble_predict(members, tb, EnsembleMode::logits);
    std::vector<int64_t> by_probs = ensemble_predict(members, tb, EnsembleMode::probs);
    REQUIRE(by_labels.size() == 5);

    for (int64_t b = 0; b < 5; ++b) {
        std::vector<int64_t> votes;
        std::vector<double> mean_logit(3, 0.0), mean_prob(3, 0.0);
        for (const auto& lg : logits) {
            size_t base = size_t(b) * 3;
            std::vector<double> row{double(lg[base]), double(lg[base + 1]), double(lg[base + 2])};
            votes.push_back(argmax3(row));
            double top = std::max({row[0], row[1], row[2]});
            double z = std::exp(row[0] - top) + std::exp(row[1] - top) + std::exp(row[2] - top);
            for (int j = 0; j < 3; ++j) {
                mean_logit[size_t(j)] += row[size_t(j)];
                mean_prob[size_t(j)] += std::exp(row[size_t(j)] - top) / z;
            }
        }
        CHECK(by_labels[size_t(b)] == majority_vote(votes, 3));
        CHECK(by_logits[size_t(b)] == argmax3(mean_logit));
        CHECK(by_probs[size_t(b)] == argmax3(mean_prob));
    }

    // reruns agree bitwise
    CHECK(ensemble_predict(members, tb, EnsembleMode::probs) == by_probs);

    // accuracy agrees with counting correct majority votes by hand
    int64_t correct = 0;
    for (size_t start = 0; start < task.dev.items.size(); start += 7) {
        size_t stop = std::min(task.dev.items.size(), start + 7);
        std::vector<std::vector<int32_t>> chunk;
        for (size_t j = start; j < stop; ++j) chunk.push_back(task.dev.items[j].tokens);
        std::vector<int64_t> pred = ensemble_predict(members, make_batch(chunk, 16), EnsembleMode::labels);
        for (size_t j = start; j < stop; ++j) {
            if (pred[j - start] == task.dev.items[j].label) ++correct;
        }
    }
    CHECK(ensemble_accuracy(members, task.dev, EnsembleMode::labels, 7) ==
          double(correct) / double(task.dev.items.size()));
}

TEST_CASE("ensemble prediction validates its membership") {
    Model solo = init_model(tiny_config(3), 1);
    Model narrow = init_model(tiny_config(2), 2);
    Model wide = init_model(tiny_config(3), 3);
    TokenBatch tb = make_batch({{kClsId, 20, kSepId}}, 16);

    CHECK(error_message([&] { ensemble_predict({&solo}, tb, EnsembleMode::labels); }).find("at least two") !=
          std::string::npos);
    CHECK(error_message([&] {
              ensemble_predict({&solo, &narrow}, tb, EnsembleMode::labels);
          }).find("disagree on the number of labels") != std::string::npos);
    CHECK(ensemble_predict({&solo, &wide}, tb, EnsembleMode::labels).size() == 1);
    CHECK(error_message([] { ensemble_mode_from_name("blend"); }).find("unknown ensemble mode") !=
          std::string::npos);
    CHECK(ensemble_mode_from_name("probs") == EnsembleMode::probs);
    CHECK(ensemble_mode_name(EnsembleMode::logits) == "logits");
}

TEST_CASE("linear interpolation hits hand values and exact endpoints") {
    Model a = init_model(tiny_config(), 11);
    Model b = init_model(tiny_config(), 12);
    fill_params(a, 2.0f);
    fill_params(b, 4.0f);

    CHECK(all_params_are(interpolate_linear(a, b, 0.5f), 3.0f));
    CHECK(all_params_are(interpolate_linear(a, b, 0.25f), 2.5f));
    CHECK(params_bitwise_equal(interpolate_linear(a, b, 0.0f), a));
    CHECK(params_bitwise_equal(interpolate_linear(a, b, 1.0f), b));
}

TEST_CASE("linear interpolation is symmetric under endpoint swap") {
    Model a = init_model(tiny_config(), 21);
    Model b = init_model(tiny_config(), 22);
    CHECK(params_bitwise_equal(interpolate_linear(a, b, 0.25f), interpolate_linear(b, a, 0.75f)));
    CHECK(params_bitwise_equal(interpolate_linear(a, b, 0.6f), interpolate_linear(b, a, 1.0f - 0.6f)));

    // the midpoint differs from both endpoints, classifier included
    Model mid = interpolate_linear(a, b, 0.5f);
    CHECK(!params_bitwise_equal(mid, a));
    CHECK(0 != std::memcmp(mid.classifier.W.data().data(), a.classifier.W.data().data(),
                           mid.classifier.W.data().size() * sizeof(float)));
}

TEST_CASE("linear interpolation validates its endpoints") {
    Model a = init_model(tiny_config(), 31);
    Model b = init_model(tiny_config(), 32);
    CHECK(error_message([&] { interpolate_linear(a, b, 1.5f); }).find("[0, 1]") != std::string::npos);
    CHECK(error_message([&] { interpolate_linear(a, b, -0.1f); }).find("[0, 1]") != std::string::npos);

    TransformerConfig deeper = tiny_config();
    deeper.num_blocks = 3;
    Model c = init_model(deeper, 33);
    CHECK(error_message([&] { interpolate_linear(a, c, 0.5f); }).find("number of blocks") !=
          std::string::npos);

    Model masked = clone_model(a);
    MaskingConfig mcfg;
    mcfg.seed = 5;
    apply_mask_plan(masked, MaskPlan::bottom_up(2), mcfg);
    CHECK(error_message([&] { interpolate_linear(masked, b, 0.5f); }).find("materialize") !=
          std::string::npos);
    // a materialized copy is a valid endpoint
    Model dense = materialize(masked);
    CHECK(interpolate_linear(dense, b, 0.5f).cfg.num_blocks == 2);
}

TEST_CASE("path evaluation covers the grid with exact endpoint rows") {
    Vocab v;
    TaskDataset task = gen_classification_task(51, v, 2, 48, 9);
    Model a = init_model(tiny_config(), 53);
    Model b = init_model(tiny_config(), 54);

    PathResult pr = eval_path(a, b, "run-a", "run-b", TaskKind::classification, task.dev, "dev", 11, 12);
    REQUIRE(pr.points.size() == 11);
    for (int64_t i = 0; i < 11; ++i) {
        CHECK(pr.points[size_t(i)].position == double(i) / 10.0);
    }
    CHECK(eval_equal(pr.points.front().eval, evaluate(a, TaskKind::classification, task.dev, 12)));
    CHECK(eval_equal(pr.points.back().eval, evaluate(b, TaskKind::classification, task.dev, 12)));

    double lowest = 2.0, at = -1.0;
    for (const auto& p : pr.points) {
        double value = p.eval.metric("accuracy");
        if (value < lowest) {
            lowest = value;
            at = p.position;
        }
    }
    CHECK(pr.min_value == lowest);
    CHECK(pr.min_position == at);

    std::string text = pr.report.render();
    CHECK(text.find("op\tlinear_path") != std::string::npos);
    CHECK(text.find("endpoint_a\trun-a") != std::string::npos);
    CHECK(text.find("endpoint_b\trun-b") != std::string::npos);
    CHECK(text.find("dataset\tdev") != std::string::npos);
    CHECK(text.find("#table path") != std::string::npos);
    CHECK(text.find("gamma\tloss\taccuracy") != std::string::npos);

    // bitwise reproducible end to end
    PathResult again = eval_path(a, b, "run-a", "run-b", TaskKind::classification, task.dev, "dev", 11, 12);
    CHECK(again.report.render() == text);

    CHECK(error_message([&] {
              eval_path(a, b, "a", "b", TaskKind::classification, task.dev, "dev", 10, 12);
          }).find("at least 11") != std::string::npos);
    CHECK(error_message([&] {
              eval_path(a, b, "a", "b", TaskKind::mlm_corpus, task.dev, "dev", 11, 12);
          }).find("classification or tagging") != std::string::npos);
}

TEST_CASE("bernstein weights form a partition of unity with hand values") {
    std::vector<double> w = bernstein_weights(4, 0.5);
    REQUIRE(w.size() == 5);
    CHECK(w[0] == 0.0625);
    CHECK(w[1] == 0.25);
    CHECK(w[2] == 0.375);
    CHECK(w[3] == 0.25);
    CHECK(w[4] == 0.0625);

    std::vector<double> at0 = bernstein_weights(4, 0.0);
    CHECK(at0[0] == 1.0);
    CHECK(at0[4] == 0.0);
    std::vector<double> at1 = bernstein_weights(4, 1.0);
    CHECK(at1[0] == 0.0);
    CHECK(at1[4] == 1.0);

    Rng rng(99);
    for (int64_t degree = 1; degree <= 6; ++degree) {
        for (int rep = 0; rep < 8; ++rep) {
            double t = rng.next_double();
            double sum = 0.0;
            for (double x : bernstein_weights(degree, t)) sum += x;
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
    CHECK(error_message([] { bernstein_weights(0, 0.5); }).find("degree") != std::string::npos);
    CHECK(error_message([] { bernstein_weights(3, 1.5); }).find("[0, 1]") != std::string::npos);
}

TEST_CASE("curve points honor endpoints and start on the straight segment") {
    Model a = init_model(tiny_config(), 71);
    Model b = init_model(tiny_config(), 72);
    BezierCurve curve = make_bezier(a, b, 3);
    REQUIRE(curve.control.size() == 5);

    // interior control points sit evenly on the segment
    CHECK(params_bitwise_equal(curve.control[1], interpolate_linear(a, b, 0.25f)));
    CHECK(params_bitwise_equal(curve.control[2], interpolate_linear(a, b, 0.5f)));
    CHECK(params_bitwise_equal(curve.control[3], interpolate_linear(a, b, 0.75f)));

    CHECK(params_bitwise_equal(bezier_point(curve, 0.0), a));
    CHECK(params_bitwise_equal(bezier_point(curve, 1.0), b));

    // with collinear controls the curve still traces the segment
    Model on_curve = bezier_point(curve, 0.3);
    Model on_line = interpolate_linear(a, b, 0.3f);
    auto pc = parameters(on_curve);
    auto pl = parameters(on_line);
    double worst = 0.0;
    for (size_t i = 0; i < pc.size(); ++i) {
        if (!pc[i].t.defined()) continue;
        for (size_t e = 0; e < pc[i].t.data().size(); ++e) {
            worst = std::max(worst, std::abs(double(pc[i].t.data()[e]) - double(pl[i].t.data()[e])));
        }
    }
    CHECK(worst < 1e-6);

    // the combination hand value: controls 0,0,0,0,1 at t = 0.5
    Model zeros = init_model(tiny_config(), 73);
    Model ones = init_model(tiny_config(), 74);
    fill_params(zeros, 0.0f);
    fill_params(ones, 1.0f);
    BezierCurve steps = make_bezier(zeros, ones, 3);
    for (size_t i = 1; i + 1 < steps.control.size(); ++i) fill_params(steps.control[i], 0.0f);
    CHECK(all_params_are(bezier_point(steps, 0.5), 0.0625f));

    CHECK(error_message([&] { bezier_point(curve, 1.25); }).find("[0, 1]") != std::string::npos);
    CHECK(error_message([&] { make_bezier(a, b, 0); }).find("interior control point") != std::string::npos);
    BezierCurve degenerate;
    degenerate.control.push_back(clone_model(a));
    CHECK(error_message([&] { bezier_point(degenerate, 0.5); }).find("two control points") !=
          std::string::npos);
}

TEST_CASE("curve training bends the path without touching the endpoints") {
    Vocab v;
    TaskDataset task = gen_classification_task(31, v, 2, 96, 9);
    Model a = init_model(tiny_config(), 41);
    Model b = init_model(tiny_config(), 42);
    Model a0 = clone_model(a);
    Model b0 = clone_model(b);

    TrainConfig cfg;
    cfg.lr = 3e-3f;
    cfg.batch_size = 12;
    cfg.max_epochs = 6;
    cfg.early_stop_patience = 6;
    cfg.seed = 3;

    BezierCurve curve = make_bezier(a, b, 3);
    TrainOutcome out = train_bezier(curve, task, cfg);

    CHECK(params_bitwise_equal(curve.control.front(), a0));
    CHECK(params_bitwise_equal(curve.control.back(), b0));
    CHECK(params_bitwise_equal(bezier_point(curve, 0.0), a0));
    CHECK(params_bitwise_equal(bezier_point(curve, 1.0), b0));

    // the kept curve is never worse than its straight-line start, and here
    // training genuinely moves it
    CHECK(out.best_dev_value >= out.dev_values[0]);
    CHECK(out.best_dev_value > out.dev_values[0]);
    CHECK(out.best_dev_eval.loss == -out.best_dev_value);
    CHECK(!params_bitwise_equal(curve.control[2], interpolate_linear(a0, b0, 0.5f)));

    std::string text = out.report.render();
    CHECK(text.find("op\tcurve_train") != std::string::npos);
    CHECK(text.find("straight_line_dev_loss") != std::string::npos);
    CHECK(text.find("curve_bends\t3") != std::string::npos);
    CHECK(text.find("#table epochs") != std::string::npos);
    CHECK(text.find("wall") == std::string::npos);

    // bitwise rerun: fresh curve, same config
    BezierCurve curve2 = make_bezier(a0, b0, 3);
    TrainOutcome out2 = train_bezier(curve2, task, cfg);
    CHECK(out2.report.render() == text);
    for (size_t i = 0; i < curve.control.size(); ++i) {
        CHECK(params_bitwise_equal(curve2.control[i], curve.control[i]));
    }

    // trained-curve evaluation keeps exact endpoint rows
    PathResult pr = eval_curve(curve, "run-a", "run-b", TaskKind::classification, task.dev, "dev", 11, 12);
    CHECK(eval_equal(pr.points.front().eval, evaluate(a0, TaskKind::classification, task.dev, 12)));
    CHECK(eval_equal(pr.points.back().eval, evaluate(b0, TaskKind::classification, task.dev, 12)));
    CHECK(pr.report.render().find("op\tcurve_path") != std::string::npos);
    CHECK(pr.report.render().find("t\tloss\taccuracy") != std::string::npos);
}

TEST_CASE("curve training validates its inputs") {
    Vocab v;
    TaskDataset task = gen_classification_task(31, v, 2, 24, 8);
    Model a = init_model(tiny_config(), 41);
    Model b = init_model(tiny_config(), 42);
    TrainConfig cfg;

    BezierCurve no_bends;
    no_bends.control.push_back(clone_model(a));
    no_bends.control.push_back(clone_model(b));
    CHECK(error_message([&] { train_bezier(no_bends, task, cfg); }).find("interior") != std::string::npos);

    BezierCurve curve = make_bezier(a, b, 1);
    TaskDataset corpus = gen_corpus(5, v, 16, 8);
    CHECK(error_message([&] { train_bezier(curve, corpus, cfg); }).find("classification or tagging") !=
          std::string::npos);

    TaskDataset wide = gen_classification_task(32, v, 3, 24, 8);
    CHECK(error_message([&] { train_bezier(curve, wide, cfg); }).find("labels") != std::string::npos);
}

TEST_CASE("embedding dump is labeled, shaped, and deterministic") {
    Vocab v;
    TaskDataset task = gen_classification_task(7, v, 2, 24, 8);
    Model m = init_model(tiny_config(), 9);

    std::string path = temp_file("masklm_dump_a.tsv");
    dump_cls_embeddings(m, task.dev, path, 7);
    std::string text = read_file(path);

    std::vector<std::string> lines;
    std::istringstream ss(text);
    for (std::string line; std::getline(ss, line);) lines.push_back(line);
    REQUIRE(lines.size() == task.dev.items.size());

    for (size_t i = 0; i < lines.size(); ++i) {
        std::istringstream fields(lines[i]);
        std::string field;
        std::vector<std::string> parts;
        while (std::getline(fields, field, '\t')) parts.push_back(field);
        REQUIRE(parts.size() == size_t(1 + 32));
        CHECK(parts[0] == std::to_string(task.dev.items[i].label));
    }

    // first line equals an independently encoded position-0 vector
    std::vector<std::vector<int32_t>> seqs;
    for (size_t i = 0; i < 7; ++i) seqs.push_back(task.dev.items[i].tokens);
    Tensor cls = take_position(encode(m, make_batch(seqs, 16)), 0);
    std::string expect = std::to_string(task.dev.items[0].label);
    for (int64_t e = 0; e < 32; ++e) expect += "\t" + format_double(double(cls.data()[size_t(e)]));
    CHECK(lines[0] == expect);

    std::string path2 = temp_file("masklm_dump_b.tsv");
    dump_cls_embeddings(m, task.dev, path2, 7);
    CHECK(read_file(path2) == text);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);

    Split empty;
    CHECK(error_message([&] { dump_cls_embeddings(m, empty, path, 7); }).find("empty") != std::string::npos);
    TaskDataset corpus = gen_corpus(5, v, 8, 6);
    CHECK(error_message([&] { dump_cls_embeddings(m, corpus.train, path, 7); }).find("label") !=
          std::string::npos);
    CHECK(error_message([&] {
              dump_cls_embeddings(m, task.dev, "/nonexistent_dir/x.tsv", 7);
          }).find("cannot open") != std::string::npos);
}
