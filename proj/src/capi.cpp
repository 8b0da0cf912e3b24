#include "masklm.h"

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "analysis.hpp"
#include "serialize.hpp"
#include "training.hpp"

using namespace masklm;

struct mlm_model {
    Model model;
    CheckpointMeta meta;
};

struct mlm_dataset {
    TaskDataset task;
    int64_t vocab_size = 0;
};

struct mlm_report {
    Report rep;
};

namespace {

thread_local std::string t_error;

constexpr const char* kVersion = "0.1.0";

mlm_status to_status(ErrKind k) {
    switch (k) {
        case ErrKind::invalid_argument: return MLM_EINVAL;
        case ErrKind::io: return MLM_EIO;
        case ErrKind::format: return MLM_EFORMAT;
        case ErrKind::internal: return MLM_EINTERNAL;
    }
    return MLM_EINTERNAL;
}

template <typename Fn>
mlm_status guarded(Fn&& fn) {
    try {
        fn();
        return MLM_OK;
    } catch (const Error& e) {
        t_error = e.what();
        return to_status(e.kind());
    } catch (const std::exception& e) {
        t_error = e.what();
        return MLM_EINTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (p == nullptr) fail(ErrKind::invalid_argument, std::string("null ") + what);
}

TransformerConfig to_arch(const mlm_arch* a) {
    require(a, "architecture");
    TransformerConfig c;
    c.num_blocks = a->num_blocks;
    c.hidden = a->hidden;
    c.feed_forward = a->feed_forward;
    c.heads = a->heads;
    c.vocab_size = a->vocab_size;
    c.max_len = a->max_len;
    c.num_labels = a->num_labels;
    c.type_vocab = a->type_vocab;
    return c;
}

void from_arch(const TransformerConfig& c, mlm_arch* a) {
    a->num_blocks = c.num_blocks;
    a->hidden = c.hidden;
    a->feed_forward = c.feed_forward;
    a->heads = c.heads;
    a->vocab_size = c.vocab_size;
    a->max_len = c.max_len;
    a->num_labels = c.num_labels;
    a->type_vocab = c.type_vocab;
}

TrainConfig to_train_config(const mlm_train_config* c) {
    require(c, "training config");
    if (c->regime != MLM_REGIME_FINETUNE && c->regime != MLM_REGIME_MASK) {
        fail(ErrKind::invalid_argument, "regime must be MLM_REGIME_FINETUNE or MLM_REGIME_MASK");
    }
    TrainConfig t;
    t.regime = c->regime == MLM_REGIME_MASK ? Regime::mask : Regime::finetune;
    t.lr = c->lr;
    t.batch_size = c->batch_size;
    t.max_epochs = c->max_epochs;
    t.early_stop_patience = c->early_stop_patience;
    t.seed = c->seed;
    t.masking.seed = c->mask_init.seed;
    t.masking.init_sparsity = c->mask_init.init_sparsity;
    t.masking.init_halfwidth = c->mask_init.init_halfwidth;
    t.masking.tau = c->mask_init.tau;
    if (c->num_mask_blocks > 0) {
        require(c->mask_blocks, "mask block list");
        t.plan.blocks.assign(c->mask_blocks, c->mask_blocks + c->num_mask_blocks);
    }
    t.plan.pooler = c->mask_pooler != 0;
    t.plan.classifier = c->mask_classifier != 0;
    return t;
}

const Split& split_ref(const TaskDataset& task, const char* name) {
    require(name, "split name");
    std::string s(name);
    if (s == "train") return task.train;
    if (s == "dev") return task.dev;
    if (s == "test") return task.test;
    fail(ErrKind::invalid_argument, "unknown split '" + s + "' (train, dev, test)");
}

void fill_result(const TrainOutcome& o, mlm_train_result* result) {
    if (result == nullptr) return;
    result->best_dev_value = o.best_dev_value;
    result->best_epoch = o.best_epoch;
    result->steps = o.steps;
    result->wall_seconds = o.wall_seconds;
}

void hand_out_report(Report rep, mlm_report** out) {
    if (out == nullptr) return;
    *out = new mlm_report{std::move(rep)};
}

bool model_has_masks(const Model& m) {
    for (auto& slot : mask_eligible(const_cast<Model&>(m))) {
        if (slot.layer->mask) return true;
    }
    return false;
}

void put_eval_fields(Report& rep, const EvalResult& ev) {
    rep.put("count", ev.count);
    rep.put("loss", ev.loss);
    for (const auto& [name, value] : ev.metrics) rep.put(name, value);
}

}  // namespace

extern "C" {

const char* mlm_last_error(void) { return t_error.c_str(); }

const char* mlm_version(void) { return kVersion; }

void mlm_arch_default(mlm_arch* out) {
    if (out == nullptr) return;
    from_arch(TransformerConfig{}, out);
}

void mlm_mask_init_default(mlm_mask_init* out) {
    if (out == nullptr) return;
    MaskingConfig m;
    out->seed = m.seed;
    out->init_sparsity = m.init_sparsity;
    out->init_halfwidth = m.init_halfwidth;
    out->tau = m.tau;
}

void mlm_train_config_default(mlm_train_config* out) {
    if (out == nullptr) return;
    TrainConfig t;
    out->regime = MLM_REGIME_FINETUNE;
    out->lr = t.lr;
    out->batch_size = t.batch_size;
    out->max_epochs = t.max_epochs;
    out->early_stop_patience = t.early_stop_patience;
    out->seed = t.seed;
    mlm_mask_init_default(&out->mask_init);
    out->mask_blocks = nullptr;
    out->num_mask_blocks = 0;
    out->mask_pooler = 1;
    out->mask_classifier = 1;
}

/* ---- models ---- */

mlm_status mlm_model_init(const mlm_arch* arch, uint64_t seed, mlm_model** out) {
    return guarded([&] {
        require(out, "output handle");
        TransformerConfig cfg = to_arch(arch);
        auto* h = new mlm_model{init_model(cfg, seed), {}};
        h->meta.arch = cfg;
        h->meta.seed = seed;
        h->meta.regime = "init";
        *out = h;
    });
}

mlm_status mlm_model_clone(const mlm_model* m, mlm_model** out) {
    return guarded([&] {
        require(m, "model");
        require(out, "output handle");
        *out = new mlm_model{clone_model(m->model), m->meta};
    });
}

mlm_status mlm_model_materialize(const mlm_model* m, mlm_model** out) {
    return guarded([&] {
        require(m, "model");
        require(out, "output handle");
        auto* h = new mlm_model{materialize(m->model), m->meta};
        h->meta.regime = "materialized";
        *out = h;
    });
}

void mlm_model_free(mlm_model* m) { delete m; }

mlm_status mlm_model_arch(const mlm_model* m, mlm_arch* out) {
    return guarded([&] {
        require(m, "model");
        require(out, "architecture output");
        from_arch(m->model.cfg, out);
    });
}

int32_t mlm_model_is_masked(const mlm_model* m) {
    if (m == nullptr) return -1;
    return model_has_masks(m->model) ? 1 : 0;
}

const char* mlm_model_regime(const mlm_model* m) {
    return m == nullptr ? nullptr : m->meta.regime.c_str();
}

uint64_t mlm_model_seed(const mlm_model* m) { return m == nullptr ? 0 : m->meta.seed; }

mlm_status mlm_model_save(const mlm_model* m, const char* path, const char* regime, const char* note) {
    return guarded([&] {
        require(m, "model");
        require(path, "path");
        CheckpointMeta meta = m->meta;
        if (regime != nullptr) meta.regime = regime;
        if (note != nullptr) meta.note = note;
        save_checkpoint(path, m->model, meta);
    });
}

mlm_status mlm_model_load(const char* path, mlm_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "output handle");
        LoadedCheckpoint lc = load_checkpoint(path);
        *out = new mlm_model{std::move(lc.model), std::move(lc.meta)};
    });
}

/* ---- datasets ---- */

mlm_status mlm_dataset_corpus(uint64_t seed, int64_t vocab_size, int64_t num_seq, int64_t len,
                              mlm_dataset** out) {
    return guarded([&] {
        require(out, "output handle");
        Vocab v{vocab_size};
        *out = new mlm_dataset{gen_corpus(seed, v, num_seq, len), vocab_size};
    });
}

mlm_status mlm_dataset_classification(uint64_t seed, int64_t vocab_size, int64_t num_labels,
                                      int64_t per_split, int64_t len, int64_t variant,
                                      mlm_dataset** out) {
    return guarded([&] {
        require(out, "output handle");
        Vocab v{vocab_size};
        *out = new mlm_dataset{gen_classification_task(seed, v, num_labels, per_split, len, variant),
                               vocab_size};
    });
}

mlm_status mlm_dataset_tagging(uint64_t seed, int64_t vocab_size, int64_t num_labels, int64_t per_split,
                               int64_t len, int64_t variant, mlm_dataset** out) {
    return guarded([&] {
        require(out, "output handle");
        Vocab v{vocab_size};
        *out = new mlm_dataset{gen_tagging_task(seed, v, num_labels, per_split, len, variant), vocab_size};
    });
}

mlm_status mlm_dataset_save(const mlm_dataset* d, const char* dir) {
    return guarded([&] {
        require(d, "dataset");
        require(dir, "directory");
        save_dataset(dir, d->task, d->vocab_size);
    });
}

mlm_status mlm_dataset_load(const char* dir, mlm_dataset** out) {
    return guarded([&] {
        require(dir, "directory");
        require(out, "output handle");
        LoadedDataset ld = load_dataset(dir);
        *out = new mlm_dataset{std::move(ld.task), ld.vocab_size};
    });
}

void mlm_dataset_free(mlm_dataset* d) { delete d; }

const char* mlm_dataset_kind(const mlm_dataset* d) {
    if (d == nullptr) return nullptr;
    switch (d->task.kind) {
        case TaskKind::classification: return "classification";
        case TaskKind::tagging: return "tagging";
        case TaskKind::mlm_corpus: return "mlm-corpus";
    }
    return nullptr;
}

int64_t mlm_dataset_num_labels(const mlm_dataset* d) { return d == nullptr ? -1 : d->task.num_labels; }

int64_t mlm_dataset_vocab_size(const mlm_dataset* d) { return d == nullptr ? -1 : d->vocab_size; }

int64_t mlm_dataset_split_count(const mlm_dataset* d, const char* split) {
    int64_t n = -1;
    mlm_status s = guarded([&] {
        require(d, "dataset");
        n = int64_t(split_ref(d->task, split).items.size());
    });
    return s == MLM_OK ? n : -1;
}

/* ---- training and evaluation ---- */

mlm_status mlm_pretrain(mlm_model* m, const mlm_dataset* corpus, const mlm_train_config* cfg,
                        mlm_train_result* result, mlm_report** report) {
    return guarded([&] {
        require(m, "model");
        require(corpus, "corpus");
        if (corpus->task.kind != TaskKind::mlm_corpus) {
            fail(ErrKind::invalid_argument, "pretraining needs an mlm-corpus dataset");
        }
        TrainConfig t = to_train_config(cfg);
        t.regime = Regime::pretrain;
        Vocab v{corpus->vocab_size};
        TrainOutcome o = pretrain(m->model, corpus->task, v, t);
        m->meta.regime = "pretrain";
        fill_result(o, result);
        hand_out_report(std::move(o.report), report);
    });
}

mlm_status mlm_train(mlm_model* m, const mlm_dataset* task, const mlm_train_config* cfg,
                     mlm_train_result* result, mlm_report** report) {
    return guarded([&] {
        require(m, "model");
        require(task, "task");
        TrainConfig t = to_train_config(cfg);
        TrainOutcome o = t.regime == Regime::mask ? train_masks(m->model, task->task, t)
                                                  : finetune(m->model, task->task, t);
        m->meta.regime = regime_name(t.regime);
        fill_result(o, result);
        hand_out_report(std::move(o.report), report);
    });
}

mlm_status mlm_evaluate(mlm_model* m, const mlm_dataset* task, const char* split, int64_t batch_size,
                        double* loss, double* metric_value, mlm_report** report) {
    return guarded([&] {
        require(m, "model");
        require(task, "task");
        const Split& sp = split_ref(task->task, split);
        Vocab v{task->vocab_size};
        const Vocab* vp = task->task.kind == TaskKind::mlm_corpus ? &v : nullptr;
        EvalResult ev = evaluate(m->model, task->task.kind, sp, batch_size, vp);
        if (loss != nullptr) *loss = ev.loss;
        if (metric_value != nullptr) *metric_value = primary_metric(ev, task->task.kind);
        if (report != nullptr) {
            Report rep;
            rep.put("op", "eval");
            rep.put("task_kind", task_kind_name(task->task.kind));
            rep.put("split", split);
            rep.put("batch_size", batch_size);
            put_eval_fields(rep, ev);
            hand_out_report(std::move(rep), report);
        }
    });
}

size_t mlm_lr_grid(int32_t regime, float* out, size_t cap) {
    std::vector<float> grid;
    if (regime == MLM_REGIME_FINETUNE) {
        grid = finetune_lr_grid();
    } else if (regime == MLM_REGIME_MASK) {
        grid = mask_lr_grid();
    } else {
        return 0;
    }
    if (out != nullptr) {
        for (size_t i = 0; i < grid.size() && i < cap; ++i) out[i] = grid[i];
    }
    return grid.size();
}

mlm_status mlm_grid_search(const mlm_model* base, const mlm_dataset* task, const mlm_train_config* cfg,
                           const float* lrs, size_t num_lrs, float* best_lr, double* best_value,
                           int32_t* capped, mlm_report** report) {
    return guarded([&] {
        require(base, "model");
        require(task, "task");
        if (num_lrs == 0) fail(ErrKind::invalid_argument, "the learning-rate grid is empty");
        require(lrs, "learning-rate grid");
        TrainConfig t = to_train_config(cfg);

        GridOutcome g = lr_grid_search(std::vector<float>(lrs, lrs + num_lrs), [&](float lr) {
            Model work = clone_model(base->model);
            TrainConfig per = t;
            per.lr = lr;
            TrainOutcome o = per.regime == Regime::mask ? train_masks(work, task->task, per)
                                                        : finetune(work, task->task, per);
            return o.best_dev_value;
        });

        if (best_lr != nullptr) *best_lr = g.best_lr;
        if (best_value != nullptr) *best_value = g.best_value;
        if (capped != nullptr) *capped = g.capped ? 1 : 0;
        if (report != nullptr) {
            Report rep;
            rep.put("op", "lr_grid");
            rep.put("regime", regime_name(t.regime));
            rep.put("task_kind", task_kind_name(task->task.kind));
            rep.put("batch_size", t.batch_size);
            rep.put("max_epochs", t.max_epochs);
            rep.put("early_stop_patience", t.early_stop_patience);
            rep.put("seed", t.seed);
            rep.put("best_lr", double(g.best_lr));
            rep.put("best_dev_value", g.best_value);
            rep.put("grid_capped", g.capped ? "yes" : "no");
            auto& table = rep.add_table("grid", {"lr", "dev_value"});
            for (const auto& [lr, value] : g.table) {
                table.rows.push_back({format_float(lr), format_double(value)});
            }
            hand_out_report(std::move(rep), report);
        }
    });
}

/* ---- mask artifacts ---- */

mlm_status mlm_mask_save(const mlm_model* m, const mlm_train_config* cfg, double dev_metric,
                         const char* metric_name, const char* path) {
    return guarded([&] {
        require(m, "model");
        require(metric_name, "metric name");
        require(path, "path");
        TrainConfig t = to_train_config(cfg);
        save_maskfile(path, extract_masks(m->model, t, dev_metric, metric_name));
    });
}

mlm_status mlm_mask_apply(const mlm_model* backbone, const char* mask_path, mlm_model** out) {
    return guarded([&] {
        require(backbone, "backbone");
        require(mask_path, "mask path");
        require(out, "output handle");
        MaskFileData d = load_maskfile(mask_path);
        auto* h = new mlm_model{reconstruct(backbone->model, d), backbone->meta};
        h->meta.regime = "mask-reconstructed";
        *out = h;
    });
}

mlm_status mlm_mask_stats(const char* mask_path, mlm_report** out) {
    return guarded([&] {
        require(mask_path, "mask path");
        require(out, "report output");
        MaskFileData d = load_maskfile(mask_path);
        auto init = initial_masks(d.arch, d.plan, d.masking);

        Report rep;
        rep.put("op", "mask_stats");
        rep.put("tau", format_float(d.tau));
        rep.put("init_sparsity", format_float(d.masking.init_sparsity));
        rep.put("init_seed", d.masking.seed);
        rep.put("train_seed", d.train_seed);
        rep.put("num_labels", d.arch.num_labels);
        rep.put("metric_name", d.metric_name);
        rep.put("dev_metric", d.dev_metric);

        int64_t total_kept = 0, total_cells = 0, total_moved = 0;
        auto& table = rep.add_table("layers", {"layer", "rows", "cols", "kept", "density", "moved"});
        for (size_t i = 0; i < d.layers.size(); ++i) {
            const auto& [name, bits] = d.layers[i];
            if (i >= init.size() || init[i].first != name) {
                fail(ErrKind::format, std::string(mask_path) + ": stored layers do not match the plan at '" +
                                          name + "'");
            }
            int64_t cells = bits.rows() * bits.cols();
            int64_t kept = bits.count_ones();
            int64_t moved = BitMatrix::l1_distance(bits, init[i].second);
            total_kept += kept;
            total_cells += cells;
            total_moved += moved;
            table.rows.push_back({name, std::to_string(bits.rows()), std::to_string(bits.cols()),
                                  std::to_string(kept), format_double(double(kept) / double(cells)),
                                  std::to_string(moved)});
        }
        rep.put("total_kept", total_kept);
        rep.put("total_cells", total_cells);
        rep.put("overall_density", double(total_kept) / double(total_cells));
        rep.put("moved_from_init", total_moved);
        *out = new mlm_report{std::move(rep)};
    });
}

mlm_status mlm_mask_dissimilarity(const char* path_a, const char* path_b, double* pooled,
                                  mlm_report** out) {
    return guarded([&] {
        require(path_a, "first mask path");
        require(path_b, "second mask path");
        MaskFileData a = load_maskfile(path_a);
        MaskFileData b = load_maskfile(path_b);
        MaskSetDiff diff = mask_dissimilarity(path_a, initial_masks(a.arch, a.plan, a.masking), a.layers,
                                              path_b, initial_masks(b.arch, b.plan, b.masking), b.layers);
        if (pooled != nullptr) *pooled = diff.pooled;
        hand_out_report(std::move(diff.report), out);
    });
}

/* ---- analysis ---- */

mlm_status mlm_memory_report(const mlm_arch* arch, const int64_t* mask_blocks, size_t num_mask_blocks,
                             int32_t mask_pooler, int32_t mask_classifier,
                             const char* const* task_names, const int64_t* task_labels, size_t num_tasks,
                             mlm_report** out) {
    return guarded([&] {
        require(out, "report output");
        TransformerConfig cfg = to_arch(arch);
        MaskPlan plan;
        if (num_mask_blocks > 0) {
            require(mask_blocks, "mask block list");
            plan.blocks.assign(mask_blocks, mask_blocks + num_mask_blocks);
        }
        plan.pooler = mask_pooler != 0;
        plan.classifier = mask_classifier != 0;
        std::vector<std::pair<std::string, int64_t>> tasks;
        if (num_tasks > 0) {
            require(task_names, "task names");
            require(task_labels, "task label counts");
            for (size_t i = 0; i < num_tasks; ++i) {
                require(task_names[i], "task name");
                tasks.emplace_back(task_names[i], task_labels[i]);
            }
        }
        MemoryReport mr = memory_report(cfg, plan, tasks);
        hand_out_report(std::move(mr.report), out);
    });
}

mlm_status mlm_ensemble_accuracy(mlm_model* const* models, size_t num_models, const mlm_dataset* task,
                                 const char* split, const char* mode, int64_t batch_size,
                                 double* accuracy) {
    return guarded([&] {
        require(models, "model list");
        require(task, "task");
        require(mode, "ensemble mode");
        require(accuracy, "accuracy output");
        std::vector<Model*> ms;
        for (size_t i = 0; i < num_models; ++i) {
            require(models[i], "model");
            ms.push_back(&models[i]->model);
        }
        *accuracy = ensemble_accuracy(ms, split_ref(task->task, split), ensemble_mode_from_name(mode),
                                      batch_size);
    });
}

mlm_status mlm_connect_linear(const mlm_model* a, const mlm_model* b, const char* label_a,
                              const char* label_b, const mlm_dataset* task, const char* split,
                              int64_t points, int64_t batch_size, mlm_report** out) {
    return guarded([&] {
        require(a, "first endpoint");
        require(b, "second endpoint");
        require(label_a, "first endpoint label");
        require(label_b, "second endpoint label");
        require(task, "task");
        PathResult pr = eval_path(a->model, b->model, label_a, label_b, task->task.kind,
                                  split_ref(task->task, split), split, points, batch_size);
        hand_out_report(std::move(pr.report), out);
    });
}

mlm_status mlm_connect_bezier(const mlm_model* a, const mlm_model* b, const char* label_a,
                              const char* label_b, const mlm_dataset* task, const mlm_train_config* cfg,
                              int64_t bends, int64_t points, int64_t batch_size,
                              mlm_report** train_report, mlm_report** path_report) {
    return guarded([&] {
        require(a, "first endpoint");
        require(b, "second endpoint");
        require(label_a, "first endpoint label");
        require(label_b, "second endpoint label");
        require(task, "task");
        TrainConfig t = to_train_config(cfg);
        BezierCurve curve = make_bezier(a->model, b->model, bends);
        TrainOutcome o = train_bezier(curve, task->task, t);
        PathResult pr = eval_curve(curve, label_a, label_b, task->task.kind,
                                   split_ref(task->task, "test"), "test", points, batch_size);
        hand_out_report(std::move(o.report), train_report);
        hand_out_report(std::move(pr.report), path_report);
    });
}

mlm_status mlm_dump_embeddings(mlm_model* m, const mlm_dataset* task, const char* split,
                               const char* path, int64_t batch_size) {
    return guarded([&] {
        require(m, "model");
        require(task, "task");
        require(path, "path");
        dump_cls_embeddings(m->model, split_ref(task->task, split), path, batch_size);
    });
}

/* ---- reports ---- */

mlm_status mlm_report_new(mlm_report** out) {
    return guarded([&] {
        require(out, "report output");
        *out = new mlm_report{};
    });
}

mlm_status mlm_report_put(mlm_report* r, const char* key, const char* value) {
    return guarded([&] {
        require(r, "report");
        require(key, "key");
        require(value, "value");
        r->rep.put(key, value);
    });
}

mlm_status mlm_report_put_i64(mlm_report* r, const char* key, int64_t value) {
    return guarded([&] {
        require(r, "report");
        require(key, "key");
        r->rep.put(key, value);
    });
}

mlm_status mlm_report_put_f64(mlm_report* r, const char* key, double value) {
    return guarded([&] {
        require(r, "report");
        require(key, "key");
        r->rep.put(key, value);
    });
}

mlm_status mlm_report_add_table(mlm_report* r, const char* name, const char* const* columns,
                                size_t num_columns) {
    return guarded([&] {
        require(r, "report");
        require(name, "table name");
        if (num_columns == 0) fail(ErrKind::invalid_argument, "a table needs at least one column");
        require(columns, "column list");
        std::vector<std::string> cols;
        for (size_t i = 0; i < num_columns; ++i) {
            require(columns[i], "column name");
            cols.emplace_back(columns[i]);
        }
        r->rep.add_table(name, std::move(cols));
    });
}

mlm_status mlm_report_add_row(mlm_report* r, const char* table, const char* const* cells,
                              size_t num_cells) {
    return guarded([&] {
        require(r, "report");
        require(table, "table name");
        require(cells, "cell list");
        for (auto& t : r->rep.tables) {
            if (t.name != table) continue;
            if (num_cells != t.columns.size()) {
                fail(ErrKind::invalid_argument, "table '" + t.name + "' has " +
                                                    std::to_string(t.columns.size()) + " columns, row has " +
                                                    std::to_string(num_cells) + " cells");
            }
            std::vector<std::string> row;
            for (size_t i = 0; i < num_cells; ++i) {
                require(cells[i], "cell");
                row.emplace_back(cells[i]);
            }
            t.rows.push_back(std::move(row));
            return;
        }
        fail(ErrKind::invalid_argument, std::string("no table named '") + table + "'");
    });
}

mlm_status mlm_report_render(const mlm_report* r, char** out) {
    return guarded([&] {
        require(r, "report");
        require(out, "output string");
        std::string text = r->rep.render();
        char* buf = new char[text.size() + 1];
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out = buf;
    });
}

mlm_status mlm_report_save(const mlm_report* r, const char* path) {
    return guarded([&] {
        require(r, "report");
        require(path, "path");
        write_file_atomic(path, r->rep.render());
    });
}

void mlm_report_free(mlm_report* r) { delete r; }

void mlm_string_free(char* s) { delete[] s; }

mlm_status mlm_format_double(double v, char* buf, size_t cap) {
    return guarded([&] {
        require(buf, "buffer");
        std::string text = format_double(v);
        if (text.size() + 1 > cap) {
            fail(ErrKind::invalid_argument, "buffer of " + std::to_string(cap) + " bytes cannot hold '" +
                                                text + "'");
        }
        std::memcpy(buf, text.c_str(), text.size() + 1);
    });
}

mlm_status mlm_format_float(float v, char* buf, size_t cap) {
    return guarded([&] {
        require(buf, "buffer");
        std::string text = format_float(v);
        if (text.size() + 1 > cap) {
            fail(ErrKind::invalid_argument, "buffer of " + std::to_string(cap) + " bytes cannot hold '" +
                                                text + "'");
        }
        std::memcpy(buf, text.c_str(), text.size() + 1);
    });
}

}  // extern "C"
