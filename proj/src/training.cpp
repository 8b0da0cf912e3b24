#include "training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

namespace masklm {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::pretrain: return "pretrain";
        case Regime::finetune: return "finetune";
        case Regime::mask: return "mask";
    }
    fail(ErrKind::internal, "unknown regime");
}

Regime regime_from_name(const std::string& name) {
    if (name == "pretrain") return Regime::pretrain;
    if (name == "finetune") return Regime::finetune;
    if (name == "mask") return Regime::mask;
    fail(ErrKind::invalid_argument, "unknown training regime '" + name + "'");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0f)) fail(ErrKind::invalid_argument, "learning rate must be positive");
    if (batch_size <= 0) fail(ErrKind::invalid_argument, "batch_size must be positive");
    if (max_epochs <= 0) fail(ErrKind::invalid_argument, "max_epochs must be positive");
    if (early_stop_patience <= 0 || early_stop_patience > max_epochs) {
        fail(ErrKind::invalid_argument, "early_stop_patience must lie in [1, max_epochs]");
    }
    if (regime == Regime::mask) masking.validate();
}

Adam::Adam(std::vector<NamedTensor> params, float lr) : lr_(lr) {
    if (!(lr > 0.0f)) fail(ErrKind::invalid_argument, "learning rate must be positive");
    slots_.reserve(params.size());
    for (auto& p : params) {
        if (!p.t.defined()) {
            fail(ErrKind::invalid_argument, "optimizer handed the undefined tensor '" + p.name + "'");
        }
        Slot s;
        s.p = std::move(p);
        s.m.assign(s.p.t.data().size(), 0.0f);
        s.v.assign(s.p.t.data().size(), 0.0f);
        slots_.push_back(std::move(s));
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(0.9, double(t_));
    double bc2 = 1.0 - std::pow(0.999, double(t_));
    for (auto& s : slots_) {
        auto& data = s.p.t.data();
        const std::vector<float>& g = s.p.t.node->grad;
        bool has = !g.empty();
        for (size_t i = 0; i < data.size(); ++i) {
            float gi = has ? g[i] : 0.0f;
            if (!std::isfinite(gi)) {
                fail(ErrKind::internal, "non-finite gradient in '" + s.p.name + "' at optimizer step " +
                                            std::to_string(t_));
            }
            s.m[i] = 0.9f * s.m[i] + 0.1f * gi;
            s.v[i] = 0.999f * s.v[i] + 0.001f * gi * gi;
            double mhat = double(s.m[i]) / bc1;
            double vhat = double(s.v[i]) / bc2;
            data[i] = float(double(data[i]) - double(lr_) * mhat / (std::sqrt(vhat) + 1e-8));
        }
    }
}

void Adam::zero_grad() {
    for (auto& s : slots_) {
        auto& g = s.p.t.node->grad;
        std::fill(g.begin(), g.end(), 0.0f);
    }
}

double mcc_from_confusion(const std::vector<int64_t>& cm, int64_t k) {
    if (k < 2 || int64_t(cm.size()) != k * k) {
        fail(ErrKind::invalid_argument, "confusion matrix must be k*k with k >= 2");
    }
    double correct = 0.0, total = 0.0;
    std::vector<double> gold(static_cast<size_t>(k), 0.0), pred(static_cast<size_t>(k), 0.0);
    for (int64_t g = 0; g < k; ++g) {
        for (int64_t p = 0; p < k; ++p) {
            double v = double(cm[static_cast<size_t>(g * k + p)]);
            total += v;
            gold[static_cast<size_t>(g)] += v;
            pred[static_cast<size_t>(p)] += v;
            if (g == p) correct += v;
        }
    }
    double gp = 0.0, gg = 0.0, pp = 0.0;
    for (int64_t i = 0; i < k; ++i) {
        gp += gold[static_cast<size_t>(i)] * pred[static_cast<size_t>(i)];
        gg += gold[static_cast<size_t>(i)] * gold[static_cast<size_t>(i)];
        pp += pred[static_cast<size_t>(i)] * pred[static_cast<size_t>(i)];
    }
    double den = std::sqrt((total * total - pp) * (total * total - gg));
    if (den == 0.0) return 0.0;
    return (correct * total - gp) / den;
}

double micro_f1_from_confusion(const std::vector<int64_t>& cm, int64_t k) {
    if (k < 2 || int64_t(cm.size()) != k * k) {
        fail(ErrKind::invalid_argument, "confusion matrix must be k*k with k >= 2");
    }
    int64_t tp = 0, fp = 0, fn = 0;
    for (int64_t g = 0; g < k; ++g) {
        for (int64_t p = 0; p < k; ++p) {
            int64_t v = cm[static_cast<size_t>(g * k + p)];
            if (p != 0 && g == p) tp += v;
            if (p != 0 && g != p) fp += v;
            if (g != 0 && g != p) fn += v;
        }
    }
    if (fp + fn == 0) return 1.0;  // nothing mislabeled anywhere
    if (tp == 0) return 0.0;
    double prec = double(tp) / double(tp + fp);
    double rec = double(tp) / double(tp + fn);
    return 2.0 * prec * rec / (prec + rec);
}

bool EvalResult::has(const std::string& name) const {
    for (const auto& [k, v] : metrics) {
        if (k == name) return true;
    }
    return false;
}

double EvalResult::metric(const std::string& name) const {
    for (const auto& [k, v] : metrics) {
        if (k == name) return v;
    }
    fail(ErrKind::invalid_argument, "metric '" + name + "' was not computed for this task kind");
}

namespace {

int64_t argmax_row(const std::vector<float>& data, size_t base, int64_t width) {
    int64_t best = 0;
    float best_v = data[base];
    for (int64_t j = 1; j < width; ++j) {
        float v = data[base + static_cast<size_t>(j)];
        if (v > best_v) {
            best_v = v;
            best = j;
        }
    }
    return best;
}

int64_t count_scored(const std::vector<int32_t>& labels) {
    int64_t n = 0;
    for (int32_t l : labels) {
        if (l >= 0) ++n;
    }
    return n;
}

// seeds for nested deterministic streams (corruption per epoch/batch etc.)
uint64_t stream_seed(uint64_t base, uint64_t a, uint64_t b) { return Rng(base).derive(a).derive(b).next_u64(); }

}  // namespace

EvalResult evaluate(Model& m, TaskKind kind, const Split& split, int64_t batch_size, const Vocab* vocab,
                    uint64_t mlm_seed) {
    if (batch_size <= 0) fail(ErrKind::invalid_argument, "batch_size must be positive");
    if (split.items.empty()) fail(ErrKind::invalid_argument, "cannot evaluate an empty split");
    if (kind == TaskKind::mlm_corpus && vocab == nullptr) {
        fail(ErrKind::invalid_argument, "mlm evaluation needs a vocabulary");
    }

    int64_t k = m.cfg.num_labels;
    std::vector<int64_t> cm(static_cast<size_t>(k * k), 0);
    double loss_sum = 0.0;
    int64_t scored_total = 0, correct = 0;

    for (size_t start = 0, bidx = 0; start < split.items.size(); start += size_t(batch_size), ++bidx) {
        std::vector<const Example*> items;
        size_t stop = std::min(split.items.size(), start + size_t(batch_size));
        for (size_t j = start; j < stop; ++j) items.push_back(&split.items[j]);

        LabeledBatch lb;
        Tensor logits;
        int64_t width = 0;
        if (kind == TaskKind::classification) {
            lb = make_classification_batch(items, m.cfg.max_len);
            logits = classify_sequence(m, lb.tokens);
            width = k;
        } else if (kind == TaskKind::tagging) {
            lb = make_tagging_batch(items, m.cfg.max_len);
            logits = reshape(tag_tokens(m, lb.tokens), {lb.tokens.batch * lb.tokens.len, k});
            width = k;
        } else {
            lb = make_mlm_batch(items, m.cfg.max_len, *vocab, stream_seed(mlm_seed, 0xE7A1, bidx));
            logits = reshape(mlm_logits(m, lb.tokens), {lb.tokens.batch * lb.tokens.len, m.cfg.vocab_size});
            width = m.cfg.vocab_size;
        }

        int64_t scored = count_scored(lb.labels);
        if (scored == 0) continue;
        Tensor loss = cross_entropy(logits, lb.labels);
        loss_sum += double(loss.data()[0]) * double(scored);
        scored_total += scored;

        const auto& ldata = logits.data();
        for (size_t i = 0; i < lb.labels.size(); ++i) {
            int32_t want = lb.labels[i];
            if (want < 0) continue;
            int64_t got = argmax_row(ldata, i * static_cast<size_t>(width), width);
            if (got == want) ++correct;
            if (kind != TaskKind::mlm_corpus) ++cm[static_cast<size_t>(int64_t(want) * k + got)];
        }
    }
    if (scored_total == 0) fail(ErrKind::invalid_argument, "split has nothing to score");

    EvalResult r;
    r.loss = loss_sum / double(scored_total);
    r.count = scored_total;
    double acc = double(correct) / double(scored_total);
    r.metrics.emplace_back("accuracy", acc);
    if (kind == TaskKind::classification) {
        r.metrics.emplace_back("mcc", mcc_from_confusion(cm, k));
        r.metrics.emplace_back("error_rate", 1.0 - acc);
    } else if (kind == TaskKind::tagging) {
        r.metrics.emplace_back("micro_f1", micro_f1_from_confusion(cm, k));
        r.metrics.emplace_back("error_rate", 1.0 - acc);
    }
    return r;
}

double primary_metric(const EvalResult& r, TaskKind kind) {
    switch (kind) {
        case TaskKind::classification: return r.metric("accuracy");
        case TaskKind::tagging: return r.metric("micro_f1");
        case TaskKind::mlm_corpus: return -r.loss;
    }
    fail(ErrKind::internal, "unknown task kind");
}

namespace {

struct Snapshot {
    std::vector<std::vector<float>> data;

    static Snapshot take(const std::vector<NamedTensor>& params) {
        Snapshot s;
        s.data.reserve(params.size());
        for (const auto& p : params) s.data.push_back(p.t.data());
        return s;
    }

    void restore(std::vector<NamedTensor>& params) const {
        for (size_t i = 0; i < params.size(); ++i) params[i].t.data() = data[i];
    }
};

}  // namespace

LoopResult train_loop(const TrainConfig& cfg, const Split& train, std::vector<NamedTensor> params,
                      const std::function<std::pair<Tensor, int64_t>(const std::vector<const Example*>&,
                                                                     uint64_t, uint64_t)>& batch_loss,
                      const std::function<EvalResult()>& eval_dev,
                      const std::function<double(const EvalResult&)>& dev_value) {
    Adam adam(params, cfg.lr);
    Rng root(cfg.seed);

    LoopResult log;
    log.dev_evals.push_back(eval_dev());
    double best_value = dev_value(log.dev_evals[0]);
    Snapshot best = Snapshot::take(params);

    for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<int64_t> order(train.items.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = root.derive(uint64_t(2 * epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t scored_sum = 0;
        for (size_t start = 0, bidx = 0; start < order.size(); start += size_t(cfg.batch_size), ++bidx) {
            std::vector<const Example*> items;
            size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            for (size_t j = start; j < stop; ++j) {
                items.push_back(&train.items[static_cast<size_t>(order[j])]);
            }
            Tape tape;
            auto [loss, scored] = batch_loss(items, uint64_t(epoch), uint64_t(bidx));
            if (scored == 0) continue;
            tape.backward(loss);
            adam.step();
            adam.zero_grad();
            ++log.steps;
            loss_sum += double(loss.data()[0]) * double(scored);
            scored_sum += scored;
        }
        log.train_losses.push_back(scored_sum > 0 ? loss_sum / double(scored_sum) : 0.0);

        log.dev_evals.push_back(eval_dev());
        double value = dev_value(log.dev_evals.back());
        if (value > best_value) {
            best_value = value;
            log.best_epoch = epoch;
            best = Snapshot::take(params);
        } else if (epoch - log.best_epoch >= cfg.early_stop_patience) {
            break;
        }
    }
    best.restore(params);
    return log;
}

namespace {

LoopResult run_epochs(const TrainConfig& cfg, const Split& train, TaskKind kind,
                      std::vector<NamedTensor> params,
                      const std::function<std::pair<Tensor, int64_t>(const std::vector<const Example*>&,
                                                                     uint64_t, uint64_t)>& batch_loss,
                      const std::function<EvalResult()>& eval_dev) {
    return train_loop(cfg, train, std::move(params), batch_loss, eval_dev,
                      [kind](const EvalResult& r) { return primary_metric(r, kind); });
}

void echo_config(Report& rep, const TrainConfig& cfg, const Model& m) {
    rep.put("tool", "masklm");
    rep.put("format_version", int64_t(1));
    rep.put("regime", regime_name(cfg.regime));
    rep.put("lr", format_float(cfg.lr));
    rep.put("lr_schedule", "constant (no warmup, no decay)");
    rep.put("batch_size", cfg.batch_size);
    rep.put("max_epochs", cfg.max_epochs);
    rep.put("early_stop_patience", cfg.early_stop_patience);
    rep.put("seed", uint64_t(cfg.seed));
    rep.put("model_blocks", m.cfg.num_blocks);
    rep.put("model_hidden", m.cfg.hidden);
    rep.put("model_heads", m.cfg.heads);
    rep.put("model_feed_forward", m.cfg.feed_forward);
    rep.put("model_vocab", m.cfg.vocab_size);
    rep.put("model_max_len", m.cfg.max_len);
    rep.put("model_num_labels", m.cfg.num_labels);
}

void echo_task(Report& rep, const TaskDataset& task) {
    rep.put("task_kind", task_kind_name(task.kind));
    rep.put("task_seed", uint64_t(task.seed));
    rep.put("task_variant", task.variant);
    rep.put("train_examples", int64_t(task.train.items.size()));
    rep.put("dev_examples", int64_t(task.dev.items.size()));
}

void fill_outcome(TrainOutcome& out, const LoopResult& log, TaskKind kind) {
    out.best_epoch = log.best_epoch;
    out.best_dev_eval = log.dev_evals[static_cast<size_t>(log.best_epoch)];
    out.best_dev_value = primary_metric(out.best_dev_eval, kind);
    out.train_losses = log.train_losses;
    for (const auto& d : log.dev_evals) out.dev_values.push_back(primary_metric(d, kind));
    out.steps = log.steps;
}

void epochs_table(Report& rep, const LoopResult& log, TaskKind kind) {
    auto& t = rep.add_table("epochs", {"epoch", "train_loss", "dev_loss", "dev_value"});
    for (size_t e = 0; e < log.dev_evals.size(); ++e) {
        t.rows.push_back({std::to_string(e), e == 0 ? "-" : format_double(log.train_losses[e - 1]),
                          format_double(log.dev_evals[e].loss),
                          format_double(primary_metric(log.dev_evals[e], kind))});
    }
}

void best_fields(Report& rep, const LoopResult& log) {
    const EvalResult& best = log.dev_evals[static_cast<size_t>(log.best_epoch)];
    rep.put("best_epoch", log.best_epoch);
    rep.put("optimizer_steps", log.steps);
    rep.put("best_dev_loss", best.loss);
    for (const auto& [name, value] : best.metrics) rep.put("best_dev_" + name, value);
}

void draw_classifier(Model& m, uint64_t seed) {
    Rng rng = Rng(seed).derive(0xC1A5);
    for (auto& v : m.classifier.W.data()) v = rng.next_normal() * 0.02f;
}

void require_dense(Model& m, const char* who) {
    for (auto& slot : mask_eligible(m)) {
        if (slot.layer->mask) {
            fail(ErrKind::invalid_argument,
                 std::string(who) + " expects a dense model; materialize or drop the masks first");
        }
    }
}

void require_head_task(const Model& m, const TaskDataset& task) {
    if (task.kind == TaskKind::mlm_corpus) {
        fail(ErrKind::invalid_argument, "this regime needs a classification or tagging task");
    }
    if (task.num_labels != m.cfg.num_labels) {
        fail(ErrKind::invalid_argument,
             "task has " + std::to_string(task.num_labels) + " labels but the model head has " +
                 std::to_string(m.cfg.num_labels));
    }
    if (task.train.items.empty() || task.dev.items.empty()) {
        fail(ErrKind::invalid_argument, "training needs non-empty train and dev splits");
    }
}

}  // namespace

std::pair<Tensor, int64_t> task_batch_loss(Model& m, TaskKind kind, const std::vector<const Example*>& items) {
    if (kind == TaskKind::mlm_corpus) {
        fail(ErrKind::invalid_argument, "task_batch_loss handles classification and tagging only");
    }
    if (kind == TaskKind::classification) {
        LabeledBatch lb = make_classification_batch(items, m.cfg.max_len);
        Tensor loss = cross_entropy(classify_sequence(m, lb.tokens), lb.labels);
        return {loss, int64_t(items.size())};
    }
    LabeledBatch lb = make_tagging_batch(items, m.cfg.max_len);
    Tensor logits = reshape(tag_tokens(m, lb.tokens), {lb.tokens.batch * lb.tokens.len, m.cfg.num_labels});
    return {cross_entropy(logits, lb.labels), count_scored(lb.labels)};
}

TrainOutcome pretrain(Model& m, const TaskDataset& corpus, const Vocab& vocab, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.regime != Regime::pretrain) fail(ErrKind::invalid_argument, "config regime is not pretrain");
    vocab.validate();
    if (vocab.size > m.cfg.vocab_size) {
        fail(ErrKind::invalid_argument, "data vocabulary exceeds the model's embedding table");
    }
    if (corpus.train.items.empty() || corpus.dev.items.empty()) {
        fail(ErrKind::invalid_argument, "pretraining needs non-empty train and dev splits");
    }
    require_dense(m, "pretraining");

    auto t0 = std::chrono::steady_clock::now();
    set_all_trainable(m, true);
    auto params = trainable_parameters(m);

    uint64_t dev_seed = stream_seed(cfg.seed, 0xDE, 0);
    auto batch_loss = [&](const std::vector<const Example*>& items, uint64_t epoch,
                          uint64_t bidx) -> std::pair<Tensor, int64_t> {
        LabeledBatch lb =
            make_mlm_batch(items, m.cfg.max_len, vocab, stream_seed(cfg.seed, 0xC0 + epoch, bidx));
        int64_t scored = count_scored(lb.labels);
        if (scored == 0) return {Tensor(), 0};
        Tensor logits =
            reshape(mlm_logits(m, lb.tokens), {lb.tokens.batch * lb.tokens.len, m.cfg.vocab_size});
        return {cross_entropy(logits, lb.labels), scored};
    };
    auto eval_dev = [&]() {
        return evaluate(m, TaskKind::mlm_corpus, corpus.dev, cfg.batch_size, &vocab, dev_seed);
    };

    LoopResult log = run_epochs(cfg, corpus.train, TaskKind::mlm_corpus, params, batch_loss, eval_dev);
    set_all_trainable(m, false);

    TrainOutcome out;
    fill_outcome(out, log, TaskKind::mlm_corpus);
    echo_config(out.report, cfg, m);
    echo_task(out.report, corpus);
    best_fields(out.report, log);
    epochs_table(out.report, log, TaskKind::mlm_corpus);
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

TrainOutcome finetune(Model& m, const TaskDataset& task, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.regime != Regime::finetune) fail(ErrKind::invalid_argument, "config regime is not finetune");
    require_head_task(m, task);
    require_dense(m, "finetuning");

    auto t0 = std::chrono::steady_clock::now();
    draw_classifier(m, cfg.seed);
    set_all_trainable(m, true);
    auto params = trainable_parameters(m);

    auto batch_loss = [&](const std::vector<const Example*>& items, uint64_t, uint64_t) {
        return task_batch_loss(m, task.kind, items);
    };
    auto eval_dev = [&]() { return evaluate(m, task.kind, task.dev, cfg.batch_size); };

    LoopResult log = run_epochs(cfg, task.train, task.kind, params, batch_loss, eval_dev);
    set_all_trainable(m, false);

    TrainOutcome out;
    fill_outcome(out, log, task.kind);
    echo_config(out.report, cfg, m);
    echo_task(out.report, task);
    best_fields(out.report, log);
    epochs_table(out.report, log, task.kind);
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

TrainOutcome train_masks(Model& m, const TaskDataset& task, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.regime != Regime::mask) fail(ErrKind::invalid_argument, "config regime is not mask");
    require_head_task(m, task);
    require_dense(m, "mask training");

    auto t0 = std::chrono::steady_clock::now();
    // the head stays a frozen random projection; only its mask can adapt
    draw_classifier(m, cfg.seed);
    apply_mask_plan(m, cfg.plan, cfg.masking);
    auto params = trainable_parameters(m);
    for (const auto& p : params) {
        if (p.name.size() < 7 || p.name.substr(p.name.size() - 7) != ".scores") {
            fail(ErrKind::internal, "mask regime found trainable dense tensor '" + p.name + "'");
        }
    }

    auto batch_loss = [&](const std::vector<const Example*>& items, uint64_t, uint64_t) {
        return task_batch_loss(m, task.kind, items);
    };
    auto eval_dev = [&]() { return evaluate(m, task.kind, task.dev, cfg.batch_size); };

    LoopResult log = run_epochs(cfg, task.train, task.kind, params, batch_loss, eval_dev);

    TrainOutcome out;
    fill_outcome(out, log, task.kind);
    echo_config(out.report, cfg, m);
    echo_task(out.report, task);
    out.report.put("masking_seed", uint64_t(cfg.masking.seed));
    out.report.put("init_sparsity", format_float(cfg.masking.init_sparsity));
    out.report.put("threshold", format_float(cfg.masking.tau));
    std::string blocks;
    for (int64_t b : cfg.plan.blocks) {
        if (!blocks.empty()) blocks += ",";
        blocks += std::to_string(b);
    }
    out.report.put("plan_blocks", blocks);
    out.report.put("plan_pooler", cfg.plan.pooler ? "yes" : "no");
    out.report.put("plan_classifier", cfg.plan.classifier ? "yes" : "no");
    best_fields(out.report, log);
    epochs_table(out.report, log, task.kind);

    auto& spars = out.report.add_table("mask_sparsity", {"layer", "zero_fraction"});
    for (auto& slot : mask_eligible(m)) {
        if (!slot.layer->mask) continue;
        spars.rows.push_back({slot.key, format_double(double(realized_sparsity(*slot.layer->mask)))});
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

namespace {

constexpr int kMantissa[5] = {1, 3, 5, 7, 9};
constexpr int64_t kMinExp = -9;
constexpr int64_t kMaxExp = 1;

struct LatticePoint {
    int64_t exp;
    int mi;
    bool operator<(const LatticePoint& o) const { return exp != o.exp ? exp < o.exp : mi < o.mi; }
};

double lattice_value(LatticePoint p) { return double(kMantissa[p.mi]) * std::pow(10.0, double(p.exp)); }

LatticePoint lattice_from(float lr) {
    if (!(lr > 0.0f)) fail(ErrKind::invalid_argument, "learning rate must be positive");
    double target = std::log(double(lr));
    LatticePoint best{0, 0};
    double best_d = 1e300;
    for (int64_t e = kMinExp; e <= kMaxExp; ++e) {
        for (int mi = 0; mi < 5; ++mi) {
            double d = std::abs(std::log(lattice_value({e, mi})) - target);
            if (d < best_d) {
                best_d = d;
                best = {e, mi};
            }
        }
    }
    if (best_d > 1e-3) {
        fail(ErrKind::invalid_argument,
             "lr " + format_float(lr) + " is not on the {1,3,5,7,9}x10^e lattice");
    }
    return best;
}

}  // namespace

GridOutcome lr_grid_search(const std::vector<float>& initial, const std::function<double(float)>& objective,
                           int64_t max_extensions) {
    if (initial.empty()) fail(ErrKind::invalid_argument, "grid search needs at least one initial point");
    std::map<LatticePoint, double> tried;
    auto eval_point = [&](LatticePoint p) { tried.emplace(p, objective(float(lattice_value(p)))); };
    for (float lr : initial) {
        LatticePoint p = lattice_from(lr);
        if (!tried.count(p)) eval_point(p);
    }

    GridOutcome out;
    int64_t extensions = 0;
    for (;;) {
        auto best_it = tried.begin();
        int64_t best_count = 1;
        for (auto it = std::next(tried.begin()); it != tried.end(); ++it) {
            if (it->second > best_it->second) {
                best_it = it;
                best_count = 1;
            } else if (it->second == best_it->second) {
                ++best_count;
            }
        }
        bool at_low = best_it == tried.begin();
        bool at_high = std::next(best_it) == tried.end();
        if (best_count != 1 || (!at_low && !at_high)) break;

        LatticePoint p = best_it->first;
        LatticePoint next{0, 0};
        if (at_low) {
            if (p.mi > 0) {
                next = {p.exp, p.mi - 1};
            } else if (p.exp > kMinExp) {
                next = {p.exp - 1, 4};
            } else {
                out.capped = true;
                break;
            }
        } else {
            if (p.mi < 4) {
                next = {p.exp, p.mi + 1};
            } else if (p.exp < kMaxExp) {
                next = {p.exp + 1, 0};
            } else {
                out.capped = true;
                break;
            }
        }
        if (extensions >= max_extensions) {
            out.capped = true;
            break;
        }
        ++extensions;
        eval_point(next);
    }

    auto best_it = tried.begin();
    for (auto it = std::next(tried.begin()); it != tried.end(); ++it) {
        if (it->second > best_it->second) best_it = it;
    }
    out.best_lr = float(lattice_value(best_it->first));
    out.best_value = best_it->second;
    for (const auto& [p, v] : tried) out.table.emplace_back(float(lattice_value(p)), v);
    return out;
}

std::vector<float> finetune_lr_grid() { return {1e-5f, 3e-5f, 5e-5f, 7e-5f, 9e-5f}; }

std::vector<float> mask_lr_grid() { return {7e-5f, 1e-4f, 3e-4f, 5e-4f, 7e-4f, 9e-4f, 1e-3f}; }

}  // namespace masklm
