#include "analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

namespace masklm {

namespace {

void check_pair_shape(const BitMatrix& x, const BitMatrix& y, const std::string& what) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        fail(ErrKind::invalid_argument, what + " differ in shape");
    }
}

}  // namespace

double dissimilarity(const BitMatrix& init1, const BitMatrix& trained1, const BitMatrix& init2,
                     const BitMatrix& trained2) {
    check_pair_shape(init1, trained1, "run 1's init and trained masks");
    check_pair_shape(init2, trained2, "run 2's init and trained masks");
    check_pair_shape(trained1, trained2, "the two runs' masks");
    int64_t moved = BitMatrix::l1_distance(trained1, init1) + BitMatrix::l1_distance(trained2, init2);
    if (moved == 0) {
        fail(ErrKind::invalid_argument,
             "dissimilarity is undefined: neither run moved its mask from initialization");
    }
    return double(BitMatrix::l1_distance(trained1, trained2)) / double(moved);
}

MaskSetDiff mask_dissimilarity(const std::string& task1, const NamedMasks& init1, const NamedMasks& trained1,
                               const std::string& task2, const NamedMasks& init2, const NamedMasks& trained2) {
    if (init1.size() != trained1.size() || init2.size() != trained2.size() || init1.size() != init2.size()) {
        fail(ErrKind::invalid_argument, "mask sets cover different numbers of layers");
    }
    if (init1.empty()) fail(ErrKind::invalid_argument, "mask sets are empty");

    MaskSetDiff out;
    out.task1 = task1;
    out.task2 = task2;
    out.shared_init = true;

    auto& layers = out.report.add_table("layers", {"layer", "dissimilarity", "moved_a", "moved_b", "apart"});
    int64_t apart_sum = 0, moved_sum = 0;
    for (size_t i = 0; i < init1.size(); ++i) {
        const std::string& name = init1[i].first;
        if (trained1[i].first != name || init2[i].first != name || trained2[i].first != name) {
            fail(ErrKind::invalid_argument,
                 "mask sets disagree on layer order: '" + name + "' vs '" + trained1[i].first + "' / '" +
                     init2[i].first + "' / '" + trained2[i].first + "'");
        }
        check_pair_shape(init1[i].second, trained1[i].second, "layer '" + name + "' masks");
        check_pair_shape(init2[i].second, trained2[i].second, "layer '" + name + "' masks");
        check_pair_shape(trained1[i].second, trained2[i].second, "layer '" + name + "' masks");

        int64_t moved1 = BitMatrix::l1_distance(trained1[i].second, init1[i].second);
        int64_t moved2 = BitMatrix::l1_distance(trained2[i].second, init2[i].second);
        int64_t apart = BitMatrix::l1_distance(trained1[i].second, trained2[i].second);
        if (moved1 + moved2 == 0) {
            fail(ErrKind::invalid_argument, "dissimilarity is undefined for layer '" + name +
                                                "': neither run moved its mask from initialization");
        }
        double s = double(apart) / double(moved1 + moved2);
        out.per_layer.emplace_back(name, s);
        apart_sum += apart;
        moved_sum += moved1 + moved2;
        if (!(init1[i].second == init2[i].second)) out.shared_init = false;

        layers.rows.push_back({name, format_double(s), std::to_string(moved1), std::to_string(moved2),
                               std::to_string(apart)});
    }
    out.pooled = double(apart_sum) / double(moved_sum);

    Report& rep = out.report;
    rep.put("tool", "masklm");
    rep.put("format_version", int64_t(1));
    rep.put("op", "mask_diff");
    rep.put("task_a", task1);
    rep.put("task_b", task2);
    rep.put("shared_init", out.shared_init ? "yes" : "no");
    rep.put("pooled_dissimilarity", out.pooled);
    return out;
}

double float_kb(int64_t count) { return double(count) * 4.0 / 1000.0; }

double bit_kb(int64_t count) { return double(count) / 8000.0; }

MemoryReport memory_report(const TransformerConfig& arch, const MaskPlan& plan,
                           const std::vector<std::pair<std::string, int64_t>>& tasks) {
    arch.validate();
    std::vector<bool> picked(static_cast<size_t>(arch.num_blocks), false);
    for (int64_t b : plan.blocks) {
        if (b < 0 || b >= arch.num_blocks) {
            fail(ErrKind::invalid_argument, "mask plan block " + std::to_string(b) + " outside [0," +
                                                std::to_string(arch.num_blocks) + ")");
        }
        if (picked[size_t(b)]) fail(ErrKind::invalid_argument, "mask plan repeats block " + std::to_string(b));
        picked[size_t(b)] = true;
    }

    MemoryReport out;
    out.backbone_floats = backbone_param_count(arch);
    out.backbone_kb = float_kb(out.backbone_floats);
    out.plan_bits = plan_mask_bits(arch, plan);
    out.plan_kb = bit_kb(out.plan_bits);

    int64_t finetune_floats = out.backbone_floats;  // the first finetuned copy replaces the pretrained one
    int64_t mask_floats = out.backbone_floats;      // the frozen backbone is stored once, period
    int64_t mask_bits = 0;
    std::set<int64_t> label_counts_seen;

    auto& table = out.report.add_table(
        "tasks", {"task", "labels", "finetune_added_floats", "finetune_added_kb", "finetune_total_kb",
                  "mask_added_floats", "mask_added_bits", "mask_added_kb", "mask_total_kb"});
    for (const auto& [name, k] : tasks) {
        if (k < 1) fail(ErrKind::invalid_argument, "task '" + name + "' needs at least one label");
        int64_t head = arch.hidden * k;

        TaskMemory row;
        row.task = name;
        row.num_labels = k;
        row.finetune_added_floats = head + (out.tasks.empty() ? 0 : out.backbone_floats);
        row.mask_added_floats = label_counts_seen.insert(k).second ? head : 0;
        row.mask_added_bits = out.plan_bits + (plan.classifier ? head : 0);

        finetune_floats += row.finetune_added_floats;
        mask_floats += row.mask_added_floats;
        mask_bits += row.mask_added_bits;
        row.finetune_total_kb = float_kb(finetune_floats);
        row.mask_total_kb = float_kb(mask_floats) + bit_kb(mask_bits);
        out.tasks.push_back(row);

        double added_kb = float_kb(row.mask_added_floats) + bit_kb(row.mask_added_bits);
        table.rows.push_back({name, std::to_string(k), std::to_string(row.finetune_added_floats),
                              format_double(float_kb(row.finetune_added_floats)),
                              format_double(row.finetune_total_kb), std::to_string(row.mask_added_floats),
                              std::to_string(row.mask_added_bits), format_double(added_kb),
                              format_double(row.mask_total_kb)});
    }

    Report& rep = out.report;
    rep.put("tool", "masklm");
    rep.put("format_version", int64_t(1));
    rep.put("op", "memory");
    rep.put("model_blocks", arch.num_blocks);
    rep.put("model_hidden", arch.hidden);
    rep.put("model_feed_forward", arch.feed_forward);
    rep.put("model_vocab", arch.vocab_size);
    rep.put("model_max_len", arch.max_len);
    rep.put("backbone_floats", out.backbone_floats);
    rep.put("backbone_kb", out.backbone_kb);
    std::string blocks;
    for (int64_t b : plan.blocks) {
        if (!blocks.empty()) blocks += ",";
        blocks += std::to_string(b);
    }
    rep.put("plan_blocks", blocks);
    rep.put("plan_pooler", plan.pooler ? "yes" : "no");
    rep.put("plan_classifier", plan.classifier ? "yes" : "no");
    rep.put("plan_mask_bits", out.plan_bits);
    rep.put("plan_mask_kb", out.plan_kb);
    // one selection bit versus one 32-bit float for every masked weight
    rep.put("masked_weight_storage_ratio", bit_kb(1) / float_kb(1));
    return out;
}

std::string ensemble_mode_name(EnsembleMode mode) {
    switch (mode) {
        case EnsembleMode::labels: return "labels";
        case EnsembleMode::logits: return "logits";
        case EnsembleMode::probs: return "probs";
    }
    fail(ErrKind::internal, "unknown ensemble mode");
}

EnsembleMode ensemble_mode_from_name(const std::string& name) {
    if (name == "labels") return EnsembleMode::labels;
    if (name == "logits") return EnsembleMode::logits;
    if (name == "probs") return EnsembleMode::probs;
    fail(ErrKind::invalid_argument, "unknown ensemble mode '" + name + "' (labels, logits, probs)");
}

int64_t majority_vote(const std::vector<int64_t>& votes, int64_t num_labels) {
    if (num_labels < 1) fail(ErrKind::invalid_argument, "majority vote needs at least one class");
    if (votes.empty()) fail(ErrKind::invalid_argument, "majority vote over an empty ballot");
    std::vector<int64_t> counts(static_cast<size_t>(num_labels), 0);
    for (int64_t v : votes) {
        if (v < 0 || v >= num_labels) {
            fail(ErrKind::invalid_argument, "vote " + std::to_string(v) + " outside [0," +
                                                std::to_string(num_labels) + ")");
        }
        ++counts[size_t(v)];
    }
    int64_t best = 0;
    for (int64_t c = 1; c < num_labels; ++c) {
        if (counts[size_t(c)] > counts[size_t(best)]) best = c;
    }
    return best;
}

std::vector<int64_t> ensemble_predict(const std::vector<Model*>& models, const TokenBatch& batch,
                                      EnsembleMode mode) {
    if (models.size() < 2) fail(ErrKind::invalid_argument, "an ensemble needs at least two models");
    for (Model* m : models) {
        if (m == nullptr) fail(ErrKind::invalid_argument, "ensemble contains a null model");
    }
    int64_t k = models[0]->cfg.num_labels;
    for (Model* m : models) {
        if (m->cfg.num_labels != k) {
            fail(ErrKind::invalid_argument, "ensemble members disagree on the number of labels (" +
                                                std::to_string(k) + " vs " +
                                                std::to_string(m->cfg.num_labels) + ")");
        }
    }

    std::vector<std::vector<float>> outs;
    outs.reserve(models.size());
    for (Model* m : models) outs.push_back(classify_sequence(*m, batch).data());

    auto argmax_d = [](const std::vector<double>& row) {
        size_t best = 0;
        for (size_t j = 1; j < row.size(); ++j) {
            if (row[j] > row[best]) best = j;
        }
        return int64_t(best);
    };

    std::vector<int64_t> pred(static_cast<size_t>(batch.batch), 0);
    std::vector<double> mix(static_cast<size_t>(k));
    std::vector<int64_t> votes(models.size());
    for (int64_t b = 0; b < batch.batch; ++b) {
        size_t base = size_t(b) * size_t(k);
        if (mode == EnsembleMode::labels) {
            for (size_t i = 0; i < outs.size(); ++i) {
                double top = double(outs[i][base]);
                int64_t arg = 0;
                for (int64_t j = 1; j < k; ++j) {
                    double v = double(outs[i][base + size_t(j)]);
                    if (v > top) {
                        top = v;
                        arg = j;
                    }
                }
                votes[i] = arg;
            }
            pred[size_t(b)] = majority_vote(votes, k);
            continue;
        }
        std::fill(mix.begin(), mix.end(), 0.0);
        for (const auto& o : outs) {
            if (mode == EnsembleMode::logits) {
                for (int64_t j = 0; j < k; ++j) mix[size_t(j)] += double(o[base + size_t(j)]);
            } else {
                // mean of softmax rows, each normalized in double
                double top = double(o[base]);
                for (int64_t j = 1; j < k; ++j) top = std::max(top, double(o[base + size_t(j)]));
                double z = 0.0;
                for (int64_t j = 0; j < k; ++j) z += std::exp(double(o[base + size_t(j)]) - top);
                for (int64_t j = 0; j < k; ++j) {
                    mix[size_t(j)] += std::exp(double(o[base + size_t(j)]) - top) / z;
                }
            }
        }
        pred[size_t(b)] = argmax_d(mix);
    }
    return pred;
}

double ensemble_accuracy(const std::vector<Model*>& models, const Split& split, EnsembleMode mode,
                         int64_t batch_size) {
    if (batch_size <= 0) fail(ErrKind::invalid_argument, "batch_size must be positive");
    if (split.items.empty()) fail(ErrKind::invalid_argument, "cannot evaluate an empty split");
    int64_t max_len = models.empty() || models[0] == nullptr ? 0 : models[0]->cfg.max_len;

    int64_t correct = 0;
    for (size_t start = 0; start < split.items.size(); start += size_t(batch_size)) {
        size_t stop = std::min(split.items.size(), start + size_t(batch_size));
        std::vector<std::vector<int32_t>> seqs;
        for (size_t j = start; j < stop; ++j) seqs.push_back(split.items[j].tokens);
        TokenBatch tb = make_batch(seqs, max_len);
        std::vector<int64_t> pred = ensemble_predict(models, tb, mode);
        for (size_t j = start; j < stop; ++j) {
            if (split.items[j].label < 0) fail(ErrKind::invalid_argument, "every example needs a label");
            if (pred[j - start] == int64_t(split.items[j].label)) ++correct;
        }
    }
    return double(correct) / double(split.items.size());
}

namespace {

// every dense tensor slot of the model, in one fixed order shared by all
// the weight-space combination code below
std::vector<Tensor*> dense_fields(Model& m) {
    std::vector<Tensor*> out{&m.tok_emb, &m.pos_emb, &m.type_emb, &m.emb_norm.gain, &m.emb_norm.bias};
    for (auto& blk : m.blocks) {
        for (Linear* l : {&blk.key, &blk.query, &blk.value, &blk.attn_out, &blk.ff_in, &blk.ff_out}) {
            out.push_back(&l->W);
            out.push_back(&l->b);
        }
        out.push_back(&blk.norm1.gain);
        out.push_back(&blk.norm1.bias);
        out.push_back(&blk.norm2.gain);
        out.push_back(&blk.norm2.bias);
    }
    out.push_back(&m.pooler.W);
    out.push_back(&m.pooler.b);
    out.push_back(&m.classifier.W);
    out.push_back(&m.classifier.b);
    return out;
}

void check_same_arch(const Model& a, const Model& b) {
    auto differ = [](const char* what) {
        fail(ErrKind::invalid_argument, std::string("models disagree on ") + what);
    };
    if (a.cfg.num_blocks != b.cfg.num_blocks) differ("the number of blocks");
    if (a.cfg.hidden != b.cfg.hidden) differ("the hidden size");
    if (a.cfg.feed_forward != b.cfg.feed_forward) differ("the feed-forward size");
    if (a.cfg.heads != b.cfg.heads) differ("the head count");
    if (a.cfg.vocab_size != b.cfg.vocab_size) differ("the vocabulary size");
    if (a.cfg.max_len != b.cfg.max_len) differ("the maximum length");
    if (a.cfg.num_labels != b.cfg.num_labels) differ("the number of labels");
    if (a.cfg.type_vocab != b.cfg.type_vocab) differ("the segment vocabulary");
}

bool has_masks(const Model& m) {
    for (auto& slot : mask_eligible(const_cast<Model&>(m))) {
        if (slot.layer->mask) return true;
    }
    return false;
}

void require_dense_endpoints(const Model& a, const Model& b, const char* who) {
    if (has_masks(a) || has_masks(b)) {
        fail(ErrKind::invalid_argument,
             std::string(who) + " endpoints must be dense; materialize masked models first");
    }
}

}  // namespace

Model interpolate_linear(const Model& a, const Model& b, float gamma) {
    if (!(gamma >= 0.0f && gamma <= 1.0f)) {
        fail(ErrKind::invalid_argument, "interpolation coefficient must lie in [0, 1]");
    }
    check_same_arch(a, b);
    require_dense_endpoints(a, b, "interpolation");
    if (gamma == 0.0f) return clone_model(a);
    if (gamma == 1.0f) return clone_model(b);

    Model out = clone_model(a);
    auto dst = dense_fields(out);
    auto sa = dense_fields(const_cast<Model&>(a));
    auto sb = dense_fields(const_cast<Model&>(b));
    float ca = 1.0f - gamma;
    for (size_t f = 0; f < dst.size(); ++f) {
        if (!sa[f]->defined()) continue;
        auto& od = dst[f]->data();
        const auto& ad = sa[f]->data();
        if (!sb[f]->defined() || sb[f]->data().size() != od.size()) {
            fail(ErrKind::invalid_argument, "interpolation endpoints disagree in shape");
        }
        const auto& bd = sb[f]->data();
        for (size_t e = 0; e < od.size(); ++e) od[e] = ca * ad[e] + gamma * bd[e];
    }
    return out;
}

namespace {

PathResult path_engine(const char* op, const char* axis, const std::function<Model(double)>& model_at,
                       const std::string& label_a, const std::string& label_b, TaskKind kind,
                       const Split& split, const std::string& split_label, int64_t points,
                       int64_t batch_size) {
    if (kind == TaskKind::mlm_corpus) {
        fail(ErrKind::invalid_argument, "paths are evaluated on classification or tagging tasks");
    }
    if (points < 11) fail(ErrKind::invalid_argument, "a path needs at least 11 evaluation points");

    PathResult out;
    for (int64_t i = 0; i < points; ++i) {
        double pos = double(i) / double(points - 1);
        Model at = model_at(pos);
        out.points.push_back({pos, evaluate(at, kind, split, batch_size)});
    }
    out.min_value = primary_metric(out.points[0].eval, kind);
    out.min_position = 0.0;
    for (const auto& p : out.points) {
        double v = primary_metric(p.eval, kind);
        if (v < out.min_value) {
            out.min_value = v;
            out.min_position = p.position;
        }
    }

    Report& rep = out.report;
    rep.put("tool", "masklm");
    rep.put("format_version", int64_t(1));
    rep.put("op", op);
    rep.put("endpoint_a", label_a);
    rep.put("endpoint_b", label_b);
    rep.put("dataset", split_label);
    rep.put("task_kind", task_kind_name(kind));
    rep.put("points", points);
    rep.put("batch_size", batch_size);
    rep.put("min_value", out.min_value);
    rep.put(std::string("min_") + axis, out.min_position);

    std::vector<std::string> cols{axis, "loss"};
    for (const auto& [name, value] : out.points[0].eval.metrics) cols.push_back(name);
    auto& table = rep.add_table("path", cols);
    for (const auto& p : out.points) {
        std::vector<std::string> row{format_double(p.position), format_double(p.eval.loss)};
        for (const auto& [name, value] : p.eval.metrics) row.push_back(format_double(value));
        table.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace

PathResult eval_path(const Model& a, const Model& b, const std::string& label_a, const std::string& label_b,
                     TaskKind kind, const Split& split, const std::string& split_label, int64_t points,
                     int64_t batch_size) {
    check_same_arch(a, b);
    require_dense_endpoints(a, b, "interpolation");
    auto model_at = [&](double pos) { return interpolate_linear(a, b, float(pos)); };
    return path_engine("linear_path", "gamma", model_at, label_a, label_b, kind, split, split_label, points,
                       batch_size);
}

std::vector<double> bernstein_weights(int64_t degree, double t) {
    if (degree < 1) fail(ErrKind::invalid_argument, "curve degree must be >= 1");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrKind::invalid_argument, "curve parameter must lie in [0, 1]");
    std::vector<double> comb(static_cast<size_t>(degree) + 1, 1.0);
    for (int64_t i = 1; i <= degree; ++i) {
        comb[size_t(i)] = comb[size_t(i - 1)] * double(degree - i + 1) / double(i);
    }
    std::vector<double> w(static_cast<size_t>(degree) + 1);
    for (int64_t i = 0; i <= degree; ++i) {
        w[size_t(i)] = comb[size_t(i)] * std::pow(1.0 - t, double(degree - i)) * std::pow(t, double(i));
    }
    return w;
}

BezierCurve make_bezier(const Model& a, const Model& b, int64_t bends) {
    if (bends < 1) fail(ErrKind::invalid_argument, "a curve needs at least one interior control point");
    check_same_arch(a, b);
    require_dense_endpoints(a, b, "curve");

    BezierCurve c;
    c.control.push_back(clone_model(a));
    for (int64_t i = 1; i <= bends; ++i) {
        c.control.push_back(interpolate_linear(a, b, float(double(i) / double(bends + 1))));
    }
    c.control.push_back(clone_model(b));
    return c;
}

Model bezier_point(const BezierCurve& curve, double t) {
    if (curve.control.size() < 2) fail(ErrKind::invalid_argument, "a curve needs at least two control points");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrKind::invalid_argument, "curve parameter must lie in [0, 1]");
    if (t == 0.0) return clone_model(curve.control.front());
    if (t == 1.0) return clone_model(curve.control.back());

    std::vector<double> w = bernstein_weights(int64_t(curve.control.size()) - 1, t);
    Model out = clone_model(curve.control.front());
    auto dst = dense_fields(out);
    std::vector<std::vector<Tensor*>> srcs;
    for (const Model& p : curve.control) srcs.push_back(dense_fields(const_cast<Model&>(p)));

    for (size_t f = 0; f < dst.size(); ++f) {
        if (!dst[f]->defined()) continue;
        auto& od = dst[f]->data();
        for (const auto& s : srcs) {
            if (!s[f]->defined() || s[f]->data().size() != od.size()) {
                fail(ErrKind::invalid_argument, "curve control points disagree in shape");
            }
        }
        for (size_t e = 0; e < od.size(); ++e) {
            double acc = 0.0;
            for (size_t i = 0; i < srcs.size(); ++i) acc += w[i] * double(srcs[i][f]->data()[e]);
            od[e] = float(acc);
        }
    }
    return out;
}

namespace {

// Bernstein combination as tape ops, so the loss gradient reaches the
// interior control points.
Model combine_on_tape(std::vector<Model>& control, const std::vector<double>& w) {
    Model out;
    out.cfg = control[0].cfg;
    out.blocks.resize(control[0].blocks.size());
    auto dst = dense_fields(out);
    std::vector<std::vector<Tensor*>> srcs;
    for (Model& p : control) srcs.push_back(dense_fields(p));

    for (size_t f = 0; f < dst.size(); ++f) {
        if (!srcs[0][f]->defined()) continue;
        Tensor acc = scale(*srcs[0][f], float(w[0]));
        for (size_t i = 1; i < srcs.size(); ++i) acc = add(acc, scale(*srcs[i][f], float(w[i])));
        *dst[f] = acc;
    }
    return out;
}

// mean loss (and mean primary metric) over a fixed t grid
EvalResult curve_grid_eval(const BezierCurve& curve, TaskKind kind, const Split& dev, int64_t batch_size,
                           int64_t grid) {
    double loss_sum = 0.0, value_sum = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < grid; ++i) {
        Model at = bezier_point(curve, double(i) / double(grid - 1));
        EvalResult e = evaluate(at, kind, dev, batch_size);
        loss_sum += e.loss;
        value_sum += primary_metric(e, kind);
        count += e.count;
    }
    EvalResult out;
    out.loss = loss_sum / double(grid);
    out.count = count;
    out.metrics.emplace_back("curve_value", value_sum / double(grid));
    return out;
}

constexpr int64_t kCurveDevGrid = 11;

}  // namespace

TrainOutcome train_bezier(BezierCurve& curve, const TaskDataset& task, const TrainConfig& cfg) {
    cfg.validate();
    if (curve.control.size() < 3) {
        fail(ErrKind::invalid_argument, "the curve has no interior control points to train");
    }
    for (size_t i = 1; i < curve.control.size(); ++i) {
        check_same_arch(curve.control[0], curve.control[i]);
        if (has_masks(curve.control[i])) {
            fail(ErrKind::invalid_argument, "curve control points must be dense");
        }
    }
    if (has_masks(curve.control[0])) fail(ErrKind::invalid_argument, "curve control points must be dense");
    if (task.kind == TaskKind::mlm_corpus) {
        fail(ErrKind::invalid_argument, "curve training needs a classification or tagging task");
    }
    if (task.num_labels != curve.control[0].cfg.num_labels) {
        fail(ErrKind::invalid_argument,
             "task has " + std::to_string(task.num_labels) + " labels but the models have " +
                 std::to_string(curve.control[0].cfg.num_labels));
    }
    if (task.train.items.empty() || task.dev.items.empty()) {
        fail(ErrKind::invalid_argument, "training needs non-empty train and dev splits");
    }

    auto t0 = std::chrono::steady_clock::now();
    set_all_trainable(curve.control.front(), false);
    set_all_trainable(curve.control.back(), false);
    std::vector<NamedTensor> params;
    for (size_t i = 1; i + 1 < curve.control.size(); ++i) {
        set_all_trainable(curve.control[i], true);
        for (auto& p : trainable_parameters(curve.control[i])) {
            params.push_back({"bend" + std::to_string(i) + "." + p.name, p.t});
        }
    }

    int64_t degree = int64_t(curve.control.size()) - 1;
    Rng t_rng = Rng(cfg.seed).derive(0xBE2D);
    auto batch_loss = [&](const std::vector<const Example*>& items, uint64_t,
                          uint64_t) -> std::pair<Tensor, int64_t> {
        // one fresh t per optimizer step
        Model mix = combine_on_tape(curve.control, bernstein_weights(degree, t_rng.next_double()));
        return task_batch_loss(mix, task.kind, items);
    };
    auto eval_dev = [&]() { return curve_grid_eval(curve, task.kind, task.dev, cfg.batch_size, kCurveDevGrid); };
    auto dev_value = [](const EvalResult& e) { return -e.loss; };

    LoopResult log = train_loop(cfg, task.train, params, batch_loss, eval_dev, dev_value);
    for (size_t i = 1; i + 1 < curve.control.size(); ++i) set_all_trainable(curve.control[i], false);

    TrainOutcome out;
    out.best_epoch = log.best_epoch;
    out.best_dev_eval = log.dev_evals[static_cast<size_t>(log.best_epoch)];
    out.best_dev_value = -out.best_dev_eval.loss;
    out.train_losses = log.train_losses;
    for (const auto& d : log.dev_evals) out.dev_values.push_back(-d.loss);
    out.steps = log.steps;

    Report& rep = out.report;
    rep.put("tool", "masklm");
    rep.put("format_version", int64_t(1));
    rep.put("op", "curve_train");
    rep.put("curve_bends", int64_t(curve.control.size()) - 2);
    rep.put("curve_degree", degree);
    rep.put("lr", format_float(cfg.lr));
    rep.put("lr_schedule", "constant (no warmup, no decay)");
    rep.put("batch_size", cfg.batch_size);
    rep.put("max_epochs", cfg.max_epochs);
    rep.put("early_stop_patience", cfg.early_stop_patience);
    rep.put("seed", uint64_t(cfg.seed));
    rep.put("task_kind", task_kind_name(task.kind));
    rep.put("task_seed", uint64_t(task.seed));
    rep.put("task_variant", task.variant);
    rep.put("train_examples", int64_t(task.train.items.size()));
    rep.put("dev_examples", int64_t(task.dev.items.size()));
    rep.put("dev_grid_points", kCurveDevGrid);
    rep.put("best_epoch", log.best_epoch);
    rep.put("optimizer_steps", log.steps);
    rep.put("best_curve_dev_loss", out.best_dev_eval.loss);
    rep.put("straight_line_dev_loss", log.dev_evals[0].loss);

    auto& epochs = rep.add_table("epochs", {"epoch", "train_loss", "curve_dev_loss", "curve_dev_value"});
    for (size_t e = 0; e < log.dev_evals.size(); ++e) {
        epochs.rows.push_back({std::to_string(e), e == 0 ? "-" : format_double(log.train_losses[e - 1]),
                               format_double(log.dev_evals[e].loss),
                               format_double(log.dev_evals[e].metric("curve_value"))});
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

PathResult eval_curve(const BezierCurve& curve, const std::string& label_a, const std::string& label_b,
                      TaskKind kind, const Split& split, const std::string& split_label, int64_t points,
                      int64_t batch_size) {
    if (curve.control.size() < 2) fail(ErrKind::invalid_argument, "a curve needs at least two control points");
    auto model_at = [&](double pos) { return bezier_point(curve, pos); };
    return path_engine("curve_path", "t", model_at, label_a, label_b, kind, split, split_label, points,
                       batch_size);
}

void dump_cls_embeddings(Model& m, const Split& split, const std::string& path, int64_t batch_size) {
    if (batch_size <= 0) fail(ErrKind::invalid_argument, "batch_size must be positive");
    if (split.items.empty()) fail(ErrKind::invalid_argument, "cannot dump an empty split");

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrKind::io, "cannot open '" + path + "' for writing");

    for (size_t start = 0; start < split.items.size(); start += size_t(batch_size)) {
        size_t stop = std::min(split.items.size(), start + size_t(batch_size));
        std::vector<std::vector<int32_t>> seqs;
        for (size_t j = start; j < stop; ++j) {
            if (split.items[j].label < 0) {
                fail(ErrKind::invalid_argument, "every example needs a label to dump");
            }
            seqs.push_back(split.items[j].tokens);
        }
        TokenBatch tb = make_batch(seqs, m.cfg.max_len);
        Tensor vecs = take_position(encode(m, tb), 0);
        const auto& data = vecs.data();
        int64_t d = m.cfg.hidden;
        for (size_t j = start; j < stop; ++j) {
            out << split.items[j].label;
            size_t base = (j - start) * size_t(d);
            for (int64_t e = 0; e < d; ++e) out << '\t' << format_double(double(data[base + size_t(e)]));
            out << '\n';
        }
    }
    out.flush();
    if (!out) fail(ErrKind::io, "write to '" + path + "' failed");
}

}  // namespace masklm
