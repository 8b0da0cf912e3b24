#include "masklm.h"

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <utility>
#include <vector>

// Every command here drives the shared C API and nothing else, so this
// binary doubles as a workout for the exported surface. Exit codes:
// 0 success, 1 bad input (flags, files, incompatible artifacts),
// 2 internal fault.

namespace {

[[noreturn]] void die(mlm_status st) {
    std::fprintf(stderr, "error: %s\n", mlm_last_error());
    std::exit(st == MLM_EINTERNAL ? 2 : 1);
}

void check(mlm_status st) {
    if (st != MLM_OK) die(st);
}

[[noreturn]] void die_user(const std::string& msg) {
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    std::exit(1);
}

[[noreturn]] void die_internal(const std::string& msg) {
    std::fprintf(stderr, "internal error: %s\n", msg.c_str());
    std::exit(2);
}

struct ModelDelete {
    void operator()(mlm_model* m) const { mlm_model_free(m); }
};
struct DatasetDelete {
    void operator()(mlm_dataset* d) const { mlm_dataset_free(d); }
};
struct ReportDelete {
    void operator()(mlm_report* r) const { mlm_report_free(r); }
};
using ModelPtr = std::unique_ptr<mlm_model, ModelDelete>;
using DatasetPtr = std::unique_ptr<mlm_dataset, DatasetDelete>;
using ReportPtr = std::unique_ptr<mlm_report, ReportDelete>;

ModelPtr load_model(const std::string& path) {
    mlm_model* raw = nullptr;
    check(mlm_model_load(path.c_str(), &raw));
    return ModelPtr(raw);
}

DatasetPtr load_dataset(const std::string& dir) {
    mlm_dataset* raw = nullptr;
    check(mlm_dataset_load(dir.c_str(), &raw));
    return DatasetPtr(raw);
}

ModelPtr clone_model(const mlm_model* m) {
    mlm_model* raw = nullptr;
    check(mlm_model_clone(m, &raw));
    return ModelPtr(raw);
}

ModelPtr apply_mask(const mlm_model* backbone, const std::string& mask_path) {
    mlm_model* raw = nullptr;
    check(mlm_mask_apply(backbone, mask_path.c_str(), &raw));
    return ModelPtr(raw);
}

ReportPtr new_report() {
    mlm_report* raw = nullptr;
    check(mlm_report_new(&raw));
    return ReportPtr(raw);
}

std::string fmt(double v) {
    char buf[64];
    check(mlm_format_double(v, buf, sizeof buf));
    return buf;
}

std::string fmt_f(float v) {
    char buf[64];
    check(mlm_format_float(v, buf, sizeof buf));
    return buf;
}

std::string render_report(const mlm_report* r) {
    char* text = nullptr;
    check(mlm_report_render(r, &text));
    std::string out(text);
    mlm_string_free(text);
    return out;
}

// Pulls one key/value line out of a rendered report. Tables follow the
// key/value block, so the scan stops at the first "#table" marker.
std::string report_value(const std::string& text, const std::string& key) {
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        if (text.compare(pos, 6, "#table") == 0) break;
        size_t klen = key.size();
        if (eol - pos > klen && text.compare(pos, klen, key) == 0 && text[pos + klen] == '\t') {
            return text.substr(pos + klen + 1, eol - pos - klen - 1);
        }
        pos = eol + 1;
    }
    die_internal("report is missing '" + key + "'");
}

// Flag echo appended to every report so a file names its own invocation.
using Echo = std::vector<std::pair<std::string, std::string>>;

void stamp_and_save(mlm_report* r, const char* command, const Echo& echo, const std::string& path) {
    check(mlm_report_put(r, "cli_command", command));
    check(mlm_report_put(r, "cli_version", mlm_version()));
    for (const auto& [key, value] : echo) {
        check(mlm_report_put(r, ("cli_" + key).c_str(), value.c_str()));
    }
    check(mlm_report_save(r, path.c_str()));
    std::printf("report -> %s\n", path.c_str());
}

int64_t parse_int(const std::string& text, const std::string& what) {
    char* end = nullptr;
    long long v = std::strtoll(text.c_str(), &end, 10);
    if (end == text.c_str() || *end != '\0') {
        die_user(what + " '" + text + "' is not an integer");
    }
    return int64_t(v);
}

// Block selectors: "all", "none", "bottom:c", "top:c", or a comma list
// of block indices like "2,3,7".
std::vector<int64_t> parse_blocks(const std::string& spec, int64_t num_blocks) {
    std::vector<int64_t> out;
    if (spec == "none") return out;
    if (spec == "all") {
        for (int64_t i = 0; i < num_blocks; ++i) out.push_back(i);
        return out;
    }
    auto ranged_count = [&](const std::string& text) {
        int64_t c = parse_int(text, "block count");
        if (c < 0 || c > num_blocks) {
            die_user("block count " + text + " outside [0, " + std::to_string(num_blocks) +
                     "] for this backbone");
        }
        return c;
    };
    if (spec.rfind("bottom:", 0) == 0) {
        int64_t c = ranged_count(spec.substr(7));
        for (int64_t i = 0; i < c; ++i) out.push_back(i);
        return out;
    }
    if (spec.rfind("top:", 0) == 0) {
        int64_t c = ranged_count(spec.substr(4));
        for (int64_t i = num_blocks - c; i < num_blocks; ++i) out.push_back(i);
        return out;
    }
    size_t pos = 0;
    while (pos <= spec.size()) {
        size_t comma = spec.find(',', pos);
        if (comma == std::string::npos) comma = spec.size();
        int64_t i = parse_int(spec.substr(pos, comma - pos), "block index");
        if (i < 0 || i >= num_blocks) {
            die_user("block index " + std::to_string(i) + " outside [0, " +
                     std::to_string(num_blocks) + ") for this backbone");
        }
        out.push_back(i);
        pos = comma + 1;
    }
    return out;
}

std::string blocks_csv(const std::vector<int64_t>& blocks) {
    if (blocks.empty()) return "none";
    std::string out;
    for (size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(blocks[i]);
    }
    return out;
}

int32_t parse_regime(const std::string& name) {
    if (name == "finetune") return MLM_REGIME_FINETUNE;
    if (name == "mask") return MLM_REGIME_MASK;
    die_user("unknown regime '" + name + "' (expected finetune or mask)");
}

const char* metric_name_for(const mlm_dataset* d) {
    return std::string(mlm_dataset_kind(d)) == "tagging" ? "micro_f1" : "accuracy";
}

void require_labeled(const mlm_dataset* d, const char* verb) {
    if (std::string(mlm_dataset_kind(d)) == "mlm-corpus") {
        die_user(std::string(verb) + " needs a labeled task dataset, not an mlm corpus");
    }
}

void require_compatible(const mlm_model* m, const mlm_dataset* d) {
    mlm_arch arch;
    check(mlm_model_arch(m, &arch));
    int64_t vocab = mlm_dataset_vocab_size(d);
    if (arch.vocab_size != vocab) {
        die_user("dataset was generated over " + std::to_string(vocab) +
                 " token ids but the model embeds " + std::to_string(arch.vocab_size));
    }
    if (std::string(mlm_dataset_kind(d)) != "mlm-corpus" &&
        arch.num_labels != mlm_dataset_num_labels(d)) {
        die_user("model classifier has " + std::to_string(arch.num_labels) +
                 " labels but the dataset has " + std::to_string(mlm_dataset_num_labels(d)) +
                 "; pretrain a backbone with --num-labels " +
                 std::to_string(mlm_dataset_num_labels(d)));
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

// Shared knobs for every command that runs the training loop.
struct TrainFlags {
    float lr;
    int64_t batch;
    int64_t epochs;
    int64_t patience;
    uint64_t seed;
};

TrainFlags default_train_flags() {
    mlm_train_config d;
    mlm_train_config_default(&d);
    return TrainFlags{d.lr, d.batch_size, d.max_epochs, d.early_stop_patience, d.seed};
}

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_batch = true) {
    cmd->add_option("--lr", f.lr, "learning rate (constant, no schedule)")
        ->capture_default_str();
    if (with_batch) {
        cmd->add_option("--batch", f.batch, "examples per optimizer step")->capture_default_str();
    }
    cmd->add_option("--epochs", f.epochs, "epoch budget")->capture_default_str();
    cmd->add_option("--patience", f.patience, "epochs without dev improvement before stopping")
        ->capture_default_str();
    cmd->add_option("--seed", f.seed, "training stream seed (batch order, classifier init)")
        ->capture_default_str();
}

void apply_train_flags(mlm_train_config& tc, const TrainFlags& f) {
    tc.lr = f.lr;
    tc.batch_size = f.batch;
    tc.max_epochs = f.epochs;
    tc.early_stop_patience = f.patience;
    tc.seed = f.seed;
}

void echo_train_flags(Echo& echo, const TrainFlags& f) {
    echo.emplace_back("lr", fmt_f(f.lr));
    echo.emplace_back("batch", std::to_string(f.batch));
    echo.emplace_back("epochs", std::to_string(f.epochs));
    echo.emplace_back("patience", std::to_string(f.patience));
    echo.emplace_back("seed", std::to_string(f.seed));
}

// ---- gen-data ----

struct GenDataOpts {
    std::string kind;
    std::string out;
    uint64_t seed = 0;
    int64_t vocab_size = 64;
    int64_t num_labels = 2;
    int64_t per_split = 96;
    int64_t len = 12;
    int64_t variant = 0;
    int64_t num_seq = 256;
    std::string report;
};

void run_gen_data(const GenDataOpts& o) {
    mlm_dataset* raw = nullptr;
    if (o.kind == "classification") {
        check(mlm_dataset_classification(o.seed, o.vocab_size, o.num_labels, o.per_split, o.len,
                                         o.variant, &raw));
    } else if (o.kind == "tagging") {
        check(mlm_dataset_tagging(o.seed, o.vocab_size, o.num_labels, o.per_split, o.len, o.variant,
                                  &raw));
    } else if (o.kind == "corpus") {
        check(mlm_dataset_corpus(o.seed, o.vocab_size, o.num_seq, o.len, &raw));
    } else {
        die_user("unknown kind '" + o.kind + "' (classification, tagging, corpus)");
    }
    DatasetPtr d(raw);
    check(mlm_dataset_save(d.get(), o.out.c_str()));

    ReportPtr rep = new_report();
    check(mlm_report_put(rep.get(), "op", "gen_data"));
    check(mlm_report_put(rep.get(), "kind", mlm_dataset_kind(d.get())));
    check(mlm_report_put_i64(rep.get(), "num_labels", mlm_dataset_num_labels(d.get())));
    check(mlm_report_put_i64(rep.get(), "vocab_size", mlm_dataset_vocab_size(d.get())));
    check(mlm_report_put_i64(rep.get(), "train_count", mlm_dataset_split_count(d.get(), "train")));
    check(mlm_report_put_i64(rep.get(), "dev_count", mlm_dataset_split_count(d.get(), "dev")));
    check(mlm_report_put_i64(rep.get(), "test_count", mlm_dataset_split_count(d.get(), "test")));

    Echo echo{{"kind", o.kind},
              {"out", o.out},
              {"seed", std::to_string(o.seed)},
              {"vocab_size", std::to_string(o.vocab_size)},
              {"len", std::to_string(o.len)},
              {"variant", std::to_string(o.variant)}};
    if (o.kind == "corpus") {
        echo.emplace_back("num_seq", std::to_string(o.num_seq));
    } else {
        echo.emplace_back("num_labels", std::to_string(o.num_labels));
        echo.emplace_back("per_split", std::to_string(o.per_split));
    }
    std::string report = o.report.empty() ? o.out + "/report.tsv" : o.report;
    std::printf("dataset -> %s (train %" PRId64 " / dev %" PRId64 " / test %" PRId64 ")\n",
                o.out.c_str(), mlm_dataset_split_count(d.get(), "train"),
                mlm_dataset_split_count(d.get(), "dev"), mlm_dataset_split_count(d.get(), "test"));
    stamp_and_save(rep.get(), "gen-data", echo, report);
}

void add_gen_data(CLI::App& app) {
    auto o = std::make_shared<GenDataOpts>();
    CLI::App* c = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
    c->add_option("--kind", o->kind, "classification, tagging, or corpus")->required();
    c->add_option("--out", o->out, "dataset directory to create")->required();
    c->add_option("--seed", o->seed, "generator seed")->capture_default_str();
    c->add_option("--vocab-size", o->vocab_size, "token id space")->capture_default_str();
    c->add_option("--num-labels", o->num_labels, "classes (labeled kinds)")->capture_default_str();
    c->add_option("--per-split", o->per_split, "examples per split (labeled kinds)")
        ->capture_default_str();
    c->add_option("--len", o->len, "tokens per example before [CLS]/[SEP]")->capture_default_str();
    c->add_option("--variant", o->variant, "task family variant (labeled kinds)")
        ->capture_default_str();
    c->add_option("--num-seq", o->num_seq, "training sequences (corpus kind)")
        ->capture_default_str();
    c->add_option("--report", o->report, "report path (default <out>/report.tsv)");
    c->callback([o] { run_gen_data(*o); });
}

// ---- pretrain ----

struct PretrainOpts {
    std::string data;
    std::string out;
    int64_t blocks = 2;
    int64_t hidden = 32;
    int64_t feed_forward = 64;
    int64_t heads = 2;
    int64_t max_len = 16;
    int64_t num_labels = 2;
    int64_t type_vocab = 0;
    uint64_t model_seed = 0;
    TrainFlags train = default_train_flags();
    std::string note;
    std::string report;
};

void run_pretrain(const PretrainOpts& o) {
    DatasetPtr corpus = load_dataset(o.data);
    if (std::string(mlm_dataset_kind(corpus.get())) != "mlm-corpus") {
        die_user("pretrain needs an mlm corpus; '" + o.data + "' holds " +
                 mlm_dataset_kind(corpus.get()) + " data");
    }
    mlm_arch arch;
    mlm_arch_default(&arch);
    arch.num_blocks = o.blocks;
    arch.hidden = o.hidden;
    arch.feed_forward = o.feed_forward;
    arch.heads = o.heads;
    arch.max_len = o.max_len;
    arch.num_labels = o.num_labels;
    arch.type_vocab = o.type_vocab;
    arch.vocab_size = mlm_dataset_vocab_size(corpus.get());

    mlm_model* raw = nullptr;
    check(mlm_model_init(&arch, o.model_seed, &raw));
    ModelPtr m(raw);

    mlm_train_config tc;
    mlm_train_config_default(&tc);
    apply_train_flags(tc, o.train);

    mlm_train_result res{};
    mlm_report* rraw = nullptr;
    check(mlm_pretrain(m.get(), corpus.get(), &tc, &res, &rraw));
    ReportPtr rep(rraw);

    check(mlm_model_save(m.get(), o.out.c_str(), nullptr, o.note.empty() ? nullptr : o.note.c_str()));

    Echo echo{{"data", o.data},
              {"out", o.out},
              {"blocks", std::to_string(o.blocks)},
              {"hidden", std::to_string(o.hidden)},
              {"feed_forward", std::to_string(o.feed_forward)},
              {"heads", std::to_string(o.heads)},
              {"max_len", std::to_string(o.max_len)},
              {"num_labels", std::to_string(o.num_labels)},
              {"type_vocab", std::to_string(o.type_vocab)},
              {"vocab_size", std::to_string(arch.vocab_size)},
              {"model_seed", std::to_string(o.model_seed)}};
    echo_train_flags(echo, o.train);

    std::printf("checkpoint -> %s (best epoch %" PRId64 ", dev loss %s, %.1fs)\n", o.out.c_str(),
                res.best_epoch, fmt(-res.best_dev_value).c_str(), res.wall_seconds);
    std::string report = o.report.empty() ? o.out + ".report.tsv" : o.report;
    stamp_and_save(rep.get(), "pretrain", echo, report);
}

void add_pretrain(CLI::App& app) {
    auto o = std::make_shared<PretrainOpts>();
    CLI::App* c = app.add_subcommand("pretrain", "masked-language-model pretraining from scratch");
    c->add_option("--data", o->data, "corpus dataset directory")->required();
    c->add_option("--out", o->out, "checkpoint path to write")->required();
    c->add_option("--blocks", o->blocks, "encoder blocks")->capture_default_str();
    c->add_option("--hidden", o->hidden, "hidden width")->capture_default_str();
    c->add_option("--ff", o->feed_forward, "feed-forward width")->capture_default_str();
    c->add_option("--heads", o->heads, "attention heads")->capture_default_str();
    c->add_option("--max-len", o->max_len, "sequence capacity")->capture_default_str();
    c->add_option("--num-labels", o->num_labels, "classifier width baked into the checkpoint")
        ->capture_default_str();
    c->add_option("--type-vocab", o->type_vocab, "segment vocabulary (0 disables)")
        ->capture_default_str();
    c->add_option("--model-seed", o->model_seed, "weight initialization seed")
        ->capture_default_str();
    add_train_flags(c, o->train);
    c->add_option("--note", o->note, "free-form note stored in the checkpoint");
    c->add_option("--report", o->report, "report path (default <out>.report.tsv)");
    c->callback([o] { run_pretrain(*o); });
}

// ---- train ----

struct TrainOpts {
    std::string backbone;
    std::string data;
    std::string regime = "finetune";
    std::string out;
    TrainFlags train = default_train_flags();
    float init_sparsity;
    uint64_t mask_seed;
    std::string mask_blocks = "all";
    int32_t mask_pooler = 1;
    int32_t mask_classifier = 1;
    std::string report;

    TrainOpts() {
        mlm_mask_init d;
        mlm_mask_init_default(&d);
        init_sparsity = d.init_sparsity;
        mask_seed = d.seed;
    }
};

void run_train(const TrainOpts& o) {
    ModelPtr backbone = load_model(o.backbone);
    DatasetPtr task = load_dataset(o.data);
    require_labeled(task.get(), "train");
    require_compatible(backbone.get(), task.get());

    mlm_arch arch;
    check(mlm_model_arch(backbone.get(), &arch));

    mlm_train_config tc;
    mlm_train_config_default(&tc);
    apply_train_flags(tc, o.train);
    tc.regime = parse_regime(o.regime);
    std::vector<int64_t> blocks = parse_blocks(o.mask_blocks, arch.num_blocks);
    tc.mask_init.seed = o.mask_seed;
    tc.mask_init.init_sparsity = o.init_sparsity;
    tc.mask_blocks = blocks.data();
    tc.num_mask_blocks = blocks.size();
    tc.mask_pooler = o.mask_pooler;
    tc.mask_classifier = o.mask_classifier;

    ModelPtr worker = clone_model(backbone.get());
    mlm_train_result res{};
    mlm_report* rraw = nullptr;
    check(mlm_train(worker.get(), task.get(), &tc, &res, &rraw));
    ReportPtr rep(rraw);

    const char* metric = metric_name_for(task.get());
    if (tc.regime == MLM_REGIME_MASK) {
        check(mlm_mask_save(worker.get(), &tc, res.best_dev_value, metric, o.out.c_str()));
    } else {
        check(mlm_model_save(worker.get(), o.out.c_str(), nullptr, nullptr));
    }

    Echo echo{{"backbone", o.backbone}, {"data", o.data}, {"regime", o.regime}, {"out", o.out}};
    echo_train_flags(echo, o.train);
    if (tc.regime == MLM_REGIME_MASK) {
        echo.emplace_back("init_sparsity", fmt_f(o.init_sparsity));
        echo.emplace_back("mask_seed", std::to_string(o.mask_seed));
        echo.emplace_back("mask_blocks", blocks_csv(blocks));
        echo.emplace_back("mask_pooler", o.mask_pooler ? "1" : "0");
        echo.emplace_back("mask_classifier", o.mask_classifier ? "1" : "0");
    }

    std::printf("%s -> %s (best dev %s %s at epoch %" PRId64 ", %.1fs)\n",
                tc.regime == MLM_REGIME_MASK ? "mask file" : "checkpoint", o.out.c_str(), metric,
                fmt(res.best_dev_value).c_str(), res.best_epoch, res.wall_seconds);
    std::string report = o.report.empty() ? o.out + ".report.tsv" : o.report;
    stamp_and_save(rep.get(), "train", echo, report);
}

void add_train(CLI::App& app) {
    auto o = std::make_shared<TrainOpts>();
    CLI::App* c = app.add_subcommand("train", "adapt a pretrained backbone to a labeled task");
    c->add_option("--backbone", o->backbone, "pretrained checkpoint")->required();
    c->add_option("--data", o->data, "task dataset directory")->required();
    c->add_option("--regime", o->regime, "finetune (update weights) or mask (select weights)")
        ->capture_default_str();
    c->add_option("--out", o->out, "checkpoint (finetune) or mask file (mask) to write")
        ->required();
    add_train_flags(c, o->train);
    c->add_option("--init-sparsity", o->init_sparsity, "fraction of weights starting masked out")
        ->capture_default_str();
    c->add_option("--mask-seed", o->mask_seed, "mask score initialization seed")
        ->capture_default_str();
    c->add_option("--mask-blocks", o->mask_blocks,
                  "blocks to mask: all, none, bottom:c, top:c, or i,j,k")
        ->capture_default_str();
    c->add_option("--mask-pooler", o->mask_pooler, "mask the pooler (0/1)")->capture_default_str();
    c->add_option("--mask-classifier", o->mask_classifier, "mask the classifier (0/1)")
        ->capture_default_str();
    c->add_option("--report", o->report, "report path (default <out>.report.tsv)");
    c->callback([o] { run_train(*o); });
}

// ---- grid-search ----

struct GridSearchOpts {
    std::string backbone;
    std::string data;
    std::string regime = "finetune";
    std::vector<float> lrs;
    TrainFlags train = default_train_flags();
    float init_sparsity;
    uint64_t mask_seed;
    std::string mask_blocks = "all";
    std::string report = "lr_grid_report.tsv";

    GridSearchOpts() {
        mlm_mask_init d;
        mlm_mask_init_default(&d);
        init_sparsity = d.init_sparsity;
        mask_seed = d.seed;
    }
};

void run_grid_search(const GridSearchOpts& o) {
    ModelPtr backbone = load_model(o.backbone);
    DatasetPtr task = load_dataset(o.data);
    require_labeled(task.get(), "grid-search");
    require_compatible(backbone.get(), task.get());

    mlm_arch arch;
    check(mlm_model_arch(backbone.get(), &arch));

    mlm_train_config tc;
    mlm_train_config_default(&tc);
    apply_train_flags(tc, o.train);
    tc.regime = parse_regime(o.regime);
    std::vector<int64_t> blocks = parse_blocks(o.mask_blocks, arch.num_blocks);
    tc.mask_init.seed = o.mask_seed;
    tc.mask_init.init_sparsity = o.init_sparsity;
    tc.mask_blocks = blocks.data();
    tc.num_mask_blocks = blocks.size();

    std::vector<float> lrs = o.lrs;
    if (lrs.empty()) {
        lrs.resize(16);
        lrs.resize(mlm_lr_grid(tc.regime, lrs.data(), lrs.size()));
    }

    float best_lr = 0.0f;
    double best_value = 0.0;
    int32_t capped = 0;
    mlm_report* rraw = nullptr;
    check(mlm_grid_search(backbone.get(), task.get(), &tc, lrs.data(), lrs.size(), &best_lr,
                          &best_value, &capped, &rraw));
    ReportPtr rep(rraw);

    std::string grid_csv;
    for (size_t i = 0; i < lrs.size(); ++i) {
        if (i) grid_csv += ',';
        grid_csv += fmt_f(lrs[i]);
    }
    Echo echo{{"backbone", o.backbone},
              {"data", o.data},
              {"regime", o.regime},
              {"initial_grid", grid_csv}};
    echo_train_flags(echo, o.train);
    if (tc.regime == MLM_REGIME_MASK) {
        echo.emplace_back("init_sparsity", fmt_f(o.init_sparsity));
        echo.emplace_back("mask_seed", std::to_string(o.mask_seed));
        echo.emplace_back("mask_blocks", blocks_csv(blocks));
    }

    std::printf("best lr %s (dev %s)%s\n", fmt_f(best_lr).c_str(), fmt(best_value).c_str(),
                capped ? " [extension capped at the grid limit]" : "");
    stamp_and_save(rep.get(), "grid-search", echo, o.report);
}

void add_grid_search(CLI::App& app) {
    auto o = std::make_shared<GridSearchOpts>();
    CLI::App* c = app.add_subcommand(
        "grid-search", "learning-rate search with automatic extension past a winning border");
    c->add_option("--backbone", o->backbone, "pretrained checkpoint")->required();
    c->add_option("--data", o->data, "task dataset directory")->required();
    c->add_option("--regime", o->regime, "finetune or mask")->capture_default_str();
    c->add_option("--lrs", o->lrs, "initial grid (default: the regime's standard lattice)")
        ->delimiter(',');
    add_train_flags(c, o->train);
    c->add_option("--init-sparsity", o->init_sparsity, "mask regime: initial sparsity")
        ->capture_default_str();
    c->add_option("--mask-seed", o->mask_seed, "mask regime: score init seed")
        ->capture_default_str();
    c->add_option("--mask-blocks", o->mask_blocks, "mask regime: blocks to mask")
        ->capture_default_str();
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_grid_search(*o); });
}

// ---- eval ----

struct EvalOpts {
    std::string model;
    std::string mask;
    std::string data;
    std::string split = "test";
    int64_t batch = 32;
    std::string report = "eval_report.tsv";
};

void run_eval(const EvalOpts& o) {
    ModelPtr m = load_model(o.model);
    if (!o.mask.empty()) m = apply_mask(m.get(), o.mask);
    DatasetPtr task = load_dataset(o.data);
    require_compatible(m.get(), task.get());

    double loss = 0.0, metric = 0.0;
    mlm_report* rraw = nullptr;
    check(mlm_evaluate(m.get(), task.get(), o.split.c_str(), o.batch, &loss, &metric, &rraw));
    ReportPtr rep(rraw);

    Echo echo{{"model", o.model},
              {"data", o.data},
              {"split", o.split},
              {"batch", std::to_string(o.batch)}};
    if (!o.mask.empty()) echo.emplace_back("mask", o.mask);

    std::printf("%s: loss %s, %s %s\n", o.split.c_str(), fmt(loss).c_str(),
                metric_name_for(task.get()), fmt(metric).c_str());
    stamp_and_save(rep.get(), "eval", echo, o.report);
}

void add_eval(CLI::App& app) {
    auto o = std::make_shared<EvalOpts>();
    CLI::App* c = app.add_subcommand(
        "eval", "measure a model on one split; point --data anywhere for cross-dataset checks");
    c->add_option("--model", o->model, "dense checkpoint")->required();
    c->add_option("--mask", o->mask, "mask file to lay over the checkpoint first");
    c->add_option("--data", o->data, "dataset directory")->required();
    c->add_option("--split", o->split, "train, dev, or test")->capture_default_str();
    c->add_option("--batch", o->batch, "evaluation batch size")->capture_default_str();
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_eval(*o); });
}

// ---- sweep-sparsity ----

struct SweepSparsityOpts {
    std::string backbone;
    std::string data;
    std::vector<double> sparsities{0.01, 0.03, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35,
                                   0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80,
                                   0.85, 0.90, 0.95};
    std::vector<uint64_t> seeds{1, 2, 3, 4};
    TrainFlags train = default_train_flags();
    std::string mask_blocks = "all";
    std::string report = "sparsity_sweep.tsv";
};

void run_sweep_sparsity(const SweepSparsityOpts& o) {
    ModelPtr backbone = load_model(o.backbone);
    DatasetPtr task = load_dataset(o.data);
    require_labeled(task.get(), "sweep-sparsity");
    require_compatible(backbone.get(), task.get());
    if (o.sparsities.empty()) die_user("sweep-sparsity needs at least one --sparsities value");
    if (o.seeds.empty()) die_user("sweep-sparsity needs at least one --seeds value");

    mlm_arch arch;
    check(mlm_model_arch(backbone.get(), &arch));
    std::vector<int64_t> blocks = parse_blocks(o.mask_blocks, arch.num_blocks);

    ReportPtr rep = new_report();
    check(mlm_report_put(rep.get(), "op", "sweep_sparsity"));
    check(mlm_report_put(rep.get(), "metric_name", metric_name_for(task.get())));
    const char* run_cols[] = {"sparsity", "seed", "best_epoch", "dev_value"};
    check(mlm_report_add_table(rep.get(), "runs", run_cols, 4));
    const char* sum_cols[] = {"sparsity", "mean_dev", "std_dev", "runs"};
    check(mlm_report_add_table(rep.get(), "summary", sum_cols, 4));

    for (double p : o.sparsities) {
        std::vector<double> values;
        for (uint64_t seed : o.seeds) {
            mlm_train_config tc;
            mlm_train_config_default(&tc);
            apply_train_flags(tc, o.train);
            tc.regime = MLM_REGIME_MASK;
            tc.seed = seed;
            tc.mask_init.seed = seed;
            tc.mask_init.init_sparsity = float(p);
            tc.mask_blocks = blocks.data();
            tc.num_mask_blocks = blocks.size();

            ModelPtr worker = clone_model(backbone.get());
            mlm_train_result res{};
            check(mlm_train(worker.get(), task.get(), &tc, &res, nullptr));
            values.push_back(res.best_dev_value);

            std::string p_s = fmt(p), seed_s = std::to_string(seed),
                        epoch_s = std::to_string(res.best_epoch), dev_s = fmt(res.best_dev_value);
            const char* cells[] = {p_s.c_str(), seed_s.c_str(), epoch_s.c_str(), dev_s.c_str()};
            check(mlm_report_add_row(rep.get(), "runs", cells, 4));
            std::printf("p=%s seed=%" PRIu64 " dev=%s (%.1fs)\n", p_s.c_str(), seed, dev_s.c_str(),
                        res.wall_seconds);
        }
        std::string p_s = fmt(p), mean_s = fmt(mean_of(values)), std_s = fmt(stddev_of(values)),
                    n_s = std::to_string(values.size());
        const char* cells[] = {p_s.c_str(), mean_s.c_str(), std_s.c_str(), n_s.c_str()};
        check(mlm_report_add_row(rep.get(), "summary", cells, 4));
    }

    std::string seeds_csv;
    for (size_t i = 0; i < o.seeds.size(); ++i) {
        if (i) seeds_csv += ',';
        seeds_csv += std::to_string(o.seeds[i]);
    }
    Echo echo{{"backbone", o.backbone},
              {"data", o.data},
              {"seeds", seeds_csv},
              {"mask_blocks", blocks_csv(blocks)}};
    echo_train_flags(echo, o.train);
    stamp_and_save(rep.get(), "sweep-sparsity", echo, o.report);
}

void add_sweep_sparsity(CLI::App& app) {
    auto o = std::make_shared<SweepSparsityOpts>();
    CLI::App* c = app.add_subcommand(
        "sweep-sparsity", "mask-train across initial sparsities, several seeds each");
    c->add_option("--backbone", o->backbone, "pretrained checkpoint")->required();
    c->add_option("--data", o->data, "task dataset directory")->required();
    c->add_option("--sparsities", o->sparsities, "initial sparsity ladder")->delimiter(',');
    c->add_option("--seeds", o->seeds, "one full run per seed")->delimiter(',');
    add_train_flags(c, o->train);
    c->add_option("--mask-blocks", o->mask_blocks, "blocks to mask")->capture_default_str();
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_sweep_sparsity(*o); });
}

// ---- sweep-layers ----

struct SweepLayersOpts {
    std::string backbone;
    std::string data;
    std::vector<int64_t> counts;
    std::string direction = "both";
    std::vector<uint64_t> seeds{1, 2, 3, 4};
    TrainFlags train = default_train_flags();
    float init_sparsity = 0.05f;
    std::string report = "layer_sweep.tsv";
};

void run_sweep_layers(const SweepLayersOpts& o) {
    ModelPtr backbone = load_model(o.backbone);
    DatasetPtr task = load_dataset(o.data);
    require_labeled(task.get(), "sweep-layers");
    require_compatible(backbone.get(), task.get());
    if (o.seeds.empty()) die_user("sweep-layers needs at least one --seeds value");

    mlm_arch arch;
    check(mlm_model_arch(backbone.get(), &arch));
    std::vector<int64_t> counts = o.counts;
    if (counts.empty()) {
        for (int64_t c = 2; c <= arch.num_blocks; c += 2) counts.push_back(c);
    }
    for (int64_t c : counts) {
        if (c < 1 || c > arch.num_blocks) {
            die_user("count " + std::to_string(c) + " outside [1, " +
                     std::to_string(arch.num_blocks) + "] for this backbone");
        }
    }
    std::vector<std::string> directions;
    if (o.direction == "both") {
        directions = {"bottom", "top"};
    } else if (o.direction == "bottom" || o.direction == "top") {
        directions = {o.direction};
    } else {
        die_user("unknown direction '" + o.direction + "' (bottom, top, both)");
    }

    ReportPtr rep = new_report();
    check(mlm_report_put(rep.get(), "op", "sweep_layers"));
    check(mlm_report_put(rep.get(), "metric_name", metric_name_for(task.get())));
    const char* run_cols[] = {"direction", "count", "blocks", "seed", "best_epoch", "dev_value"};
    check(mlm_report_add_table(rep.get(), "runs", run_cols, 6));
    const char* sum_cols[] = {"direction", "count", "blocks", "mean_dev", "std_dev", "runs"};
    check(mlm_report_add_table(rep.get(), "summary", sum_cols, 6));

    for (const std::string& dir : directions) {
        for (int64_t count : counts) {
            std::vector<int64_t> blocks =
                parse_blocks(dir + ":" + std::to_string(count), arch.num_blocks);
            std::string blocks_s = blocks_csv(blocks);
            std::vector<double> values;
            for (uint64_t seed : o.seeds) {
                mlm_train_config tc;
                mlm_train_config_default(&tc);
                apply_train_flags(tc, o.train);
                tc.regime = MLM_REGIME_MASK;
                tc.seed = seed;
                tc.mask_init.seed = seed;
                tc.mask_init.init_sparsity = o.init_sparsity;
                tc.mask_blocks = blocks.data();
                tc.num_mask_blocks = blocks.size();

                ModelPtr worker = clone_model(backbone.get());
                mlm_train_result res{};
                check(mlm_train(worker.get(), task.get(), &tc, &res, nullptr));
                values.push_back(res.best_dev_value);

                std::string count_s = std::to_string(count), seed_s = std::to_string(seed),
                            epoch_s = std::to_string(res.best_epoch),
                            dev_s = fmt(res.best_dev_value);
                const char* cells[] = {dir.c_str(),    count_s.c_str(), blocks_s.c_str(),
                                       seed_s.c_str(), epoch_s.c_str(), dev_s.c_str()};
                check(mlm_report_add_row(rep.get(), "runs", cells, 6));
                std::printf("%s:%s seed=%" PRIu64 " dev=%s (%.1fs)\n", dir.c_str(),
                            count_s.c_str(), seed, dev_s.c_str(), res.wall_seconds);
            }
            std::string count_s = std::to_string(count), mean_s = fmt(mean_of(values)),
                        std_s = fmt(stddev_of(values)), n_s = std::to_string(values.size());
            const char* cells[] = {dir.c_str(),   count_s.c_str(), blocks_s.c_str(),
                                   mean_s.c_str(), std_s.c_str(),  n_s.c_str()};
            check(mlm_report_add_row(rep.get(), "summary", cells, 6));
        }
    }

    std::string seeds_csv, counts_csv;
    for (size_t i = 0; i < o.seeds.size(); ++i) {
        if (i) seeds_csv += ',';
        seeds_csv += std::to_string(o.seeds[i]);
    }
    for (size_t i = 0; i < counts.size(); ++i) {
        if (i) counts_csv += ',';
        counts_csv += std::to_string(counts[i]);
    }
    Echo echo{{"backbone", o.backbone},
              {"data", o.data},
              {"direction", o.direction},
              {"counts", counts_csv},
              {"seeds", seeds_csv},
              {"init_sparsity", fmt_f(o.init_sparsity)}};
    echo_train_flags(echo, o.train);
    stamp_and_save(rep.get(), "sweep-layers", echo, o.report);
}

void add_sweep_layers(CLI::App& app) {
    auto o = std::make_shared<SweepLayersOpts>();
    CLI::App* c = app.add_subcommand(
        "sweep-layers", "mask-train over block ranges grown from the bottom or the top");
    c->add_option("--backbone", o->backbone, "pretrained checkpoint")->required();
    c->add_option("--data", o->data, "task dataset directory")->required();
    c->add_option("--counts", o->counts, "blocks to mask per run (default 2,4,... up to depth)")
        ->delimiter(',');
    c->add_option("--direction", o->direction, "bottom, top, or both")->capture_default_str();
    c->add_option("--seeds", o->seeds, "one full run per seed")->delimiter(',');
    add_train_flags(c, o->train);
    c->add_option("--init-sparsity", o->init_sparsity, "initial sparsity for every run")
        ->capture_default_str();
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_sweep_layers(*o); });
}

// ---- analyze-masks ----

struct AnalyzeMasksOpts {
    std::vector<std::string> masks;
    std::string report = "mask_analysis.tsv";
};

void run_analyze_masks(const AnalyzeMasksOpts& o) {
    ReportPtr rep = new_report();
    check(mlm_report_put(rep.get(), "op", "analyze_masks"));
    check(mlm_report_put_i64(rep.get(), "num_masks", int64_t(o.masks.size())));

    const char* mask_cols[] = {"index",   "path",    "metric_name",     "dev_metric",
                               "kept",    "cells",   "overall_density", "moved_from_init"};
    check(mlm_report_add_table(rep.get(), "masks", mask_cols, 8));
    for (size_t i = 0; i < o.masks.size(); ++i) {
        mlm_report* sraw = nullptr;
        check(mlm_mask_stats(o.masks[i].c_str(), &sraw));
        ReportPtr stats(sraw);
        std::string text = render_report(stats.get());
        std::string idx = std::to_string(i), metric = report_value(text, "metric_name"),
                    dev = report_value(text, "dev_metric"), kept = report_value(text, "total_kept"),
                    cells = report_value(text, "total_cells"),
                    density = report_value(text, "overall_density"),
                    moved = report_value(text, "moved_from_init");
        const char* row[] = {idx.c_str(),   o.masks[i].c_str(), metric.c_str(), dev.c_str(),
                             kept.c_str(),  cells.c_str(),      density.c_str(), moved.c_str()};
        check(mlm_report_add_row(rep.get(), "masks", row, 8));
        std::printf("%s: density %s, moved %s, %s %s\n", o.masks[i].c_str(), density.c_str(),
                    moved.c_str(), metric.c_str(), dev.c_str());
    }

    const char* pair_cols[] = {"a", "b", "dissimilarity"};
    check(mlm_report_add_table(rep.get(), "pairwise", pair_cols, 3));
    for (size_t i = 0; i < o.masks.size(); ++i) {
        for (size_t j = i + 1; j < o.masks.size(); ++j) {
            double pooled = 0.0;
            check(mlm_mask_dissimilarity(o.masks[i].c_str(), o.masks[j].c_str(), &pooled, nullptr));
            std::string a = std::to_string(i), b = std::to_string(j), s = fmt(pooled);
            const char* row[] = {a.c_str(), b.c_str(), s.c_str()};
            check(mlm_report_add_row(rep.get(), "pairwise", row, 3));
            std::printf("dissimilarity(%zu, %zu) = %s\n", i, j, s.c_str());
        }
    }

    Echo echo;
    for (size_t i = 0; i < o.masks.size(); ++i) {
        echo.emplace_back("mask_" + std::to_string(i), o.masks[i]);
    }
    stamp_and_save(rep.get(), "analyze-masks", echo, o.report);
}

void add_analyze_masks(CLI::App& app) {
    auto o = std::make_shared<AnalyzeMasksOpts>();
    CLI::App* c = app.add_subcommand(
        "analyze-masks", "per-file density and drift plus pairwise mask dissimilarity");
    c->add_option("masks", o->masks, "mask files to compare")->required()->expected(-1);
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_analyze_masks(*o); });
}

// ---- memory ----

struct MemoryOpts {
    int64_t blocks = 12;
    int64_t hidden = 768;
    int64_t feed_forward = 3072;
    int64_t heads = 12;
    int64_t vocab_size = 30522;
    int64_t max_len = 512;
    int64_t type_vocab = 2;
    std::string mask_blocks = "all";
    int32_t mask_pooler = 1;
    int32_t mask_classifier = 1;
    std::vector<std::string> tasks;
    std::string report = "memory_report.tsv";
};

void run_memory(const MemoryOpts& o) {
    mlm_arch arch;
    mlm_arch_default(&arch);
    arch.num_blocks = o.blocks;
    arch.hidden = o.hidden;
    arch.feed_forward = o.feed_forward;
    arch.heads = o.heads;
    arch.vocab_size = o.vocab_size;
    arch.max_len = o.max_len;
    arch.type_vocab = o.type_vocab;

    std::vector<int64_t> blocks = parse_blocks(o.mask_blocks, arch.num_blocks);

    std::vector<std::string> names;
    std::vector<int64_t> labels;
    for (const std::string& spec : o.tasks) {
        size_t colon = spec.rfind(':');
        if (colon == std::string::npos || colon == 0) {
            die_user("task spec '" + spec + "' is not name:labels");
        }
        names.push_back(spec.substr(0, colon));
        labels.push_back(parse_int(spec.substr(colon + 1), "label count"));
    }
    std::vector<const char*> name_ptrs;
    for (const std::string& n : names) name_ptrs.push_back(n.c_str());

    mlm_report* rraw = nullptr;
    check(mlm_memory_report(&arch, blocks.data(), blocks.size(), o.mask_pooler, o.mask_classifier,
                            name_ptrs.data(), labels.data(), names.size(), &rraw));
    ReportPtr rep(rraw);

    std::string text = render_report(rep.get());
    std::printf("backbone %s KB, plan masks %s KB (bit/float ratio %s)\n",
                report_value(text, "backbone_kb").c_str(),
                report_value(text, "plan_mask_kb").c_str(),
                report_value(text, "masked_weight_storage_ratio").c_str());

    Echo echo{{"blocks", std::to_string(o.blocks)},
              {"hidden", std::to_string(o.hidden)},
              {"feed_forward", std::to_string(o.feed_forward)},
              {"heads", std::to_string(o.heads)},
              {"vocab_size", std::to_string(o.vocab_size)},
              {"max_len", std::to_string(o.max_len)},
              {"type_vocab", std::to_string(o.type_vocab)},
              {"mask_blocks", blocks_csv(blocks)},
              {"mask_pooler", o.mask_pooler ? "1" : "0"},
              {"mask_classifier", o.mask_classifier ? "1" : "0"}};
    for (size_t i = 0; i < o.tasks.size(); ++i) {
        echo.emplace_back("task_" + std::to_string(i), o.tasks[i]);
    }
    stamp_and_save(rep.get(), "memory", echo, o.report);
}

void add_memory(CLI::App& app) {
    auto o = std::make_shared<MemoryOpts>();
    CLI::App* c = app.add_subcommand(
        "memory", "bit-exact storage accounting for serving many tasks from one backbone");
    c->add_option("--blocks", o->blocks, "encoder blocks")->capture_default_str();
    c->add_option("--hidden", o->hidden, "hidden width")->capture_default_str();
    c->add_option("--ff", o->feed_forward, "feed-forward width")->capture_default_str();
    c->add_option("--heads", o->heads, "attention heads")->capture_default_str();
    c->add_option("--vocab-size", o->vocab_size, "token vocabulary")->capture_default_str();
    c->add_option("--max-len", o->max_len, "sequence capacity")->capture_default_str();
    c->add_option("--type-vocab", o->type_vocab, "segment vocabulary (0 disables)")
        ->capture_default_str();
    c->add_option("--mask-blocks", o->mask_blocks, "blocks covered by each task's mask")
        ->capture_default_str();
    c->add_option("--mask-pooler", o->mask_pooler, "mask the pooler (0/1)")->capture_default_str();
    c->add_option("--mask-classifier", o->mask_classifier, "mask the classifier (0/1)")
        ->capture_default_str();
    c->add_option("--tasks", o->tasks, "served tasks as name:labels, e.g. sst2:2,pos:17")
        ->delimiter(',');
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_memory(*o); });
}

// ---- ensemble ----

struct EnsembleOpts {
    std::string backbone;
    std::vector<std::string> models;
    std::vector<std::string> masks;
    std::string data;
    std::string split = "test";
    std::string mode = "labels";
    int64_t batch = 32;
    std::string report = "ensemble_report.tsv";
};

void run_ensemble(const EnsembleOpts& o) {
    if (o.models.empty() && o.masks.empty()) {
        die_user("ensemble needs members via --models and/or --masks");
    }
    if (!o.masks.empty() && o.backbone.empty()) {
        die_user("--masks needs --backbone to reconstruct the task models");
    }
    DatasetPtr task = load_dataset(o.data);
    require_labeled(task.get(), "ensemble");

    ModelPtr backbone;
    if (!o.backbone.empty()) backbone = load_model(o.backbone);

    std::vector<ModelPtr> owned;
    std::vector<std::string> sources;
    for (const std::string& path : o.models) {
        owned.push_back(load_model(path));
        sources.push_back(path);
    }
    for (const std::string& path : o.masks) {
        owned.push_back(apply_mask(backbone.get(), path));
        sources.push_back(path);
    }
    for (const ModelPtr& m : owned) require_compatible(m.get(), task.get());

    std::vector<mlm_model*> members;
    for (const ModelPtr& m : owned) members.push_back(m.get());

    double ensemble_acc = 0.0;
    check(mlm_ensemble_accuracy(members.data(), members.size(), task.get(), o.split.c_str(),
                                o.mode.c_str(), o.batch, &ensemble_acc));

    ReportPtr rep = new_report();
    check(mlm_report_put(rep.get(), "op", "ensemble"));
    check(mlm_report_put(rep.get(), "mode", o.mode.c_str()));
    check(mlm_report_put(rep.get(), "split", o.split.c_str()));
    check(mlm_report_put_i64(rep.get(), "members", int64_t(members.size())));
    check(mlm_report_put_f64(rep.get(), "ensemble_accuracy", ensemble_acc));

    const char* cols[] = {"index", "source", "solo_accuracy"};
    check(mlm_report_add_table(rep.get(), "members", cols, 3));
    for (size_t i = 0; i < members.size(); ++i) {
        double solo = 0.0;
        check(mlm_evaluate(members[i], task.get(), o.split.c_str(), o.batch, nullptr, &solo,
                           nullptr));
        std::string idx = std::to_string(i), solo_s = fmt(solo);
        const char* row[] = {idx.c_str(), sources[i].c_str(), solo_s.c_str()};
        check(mlm_report_add_row(rep.get(), "members", row, 3));
        std::printf("member %zu (%s): accuracy %s\n", i, sources[i].c_str(), solo_s.c_str());
    }
    std::printf("ensemble of %zu (%s vote): accuracy %s\n", members.size(), o.mode.c_str(),
                fmt(ensemble_acc).c_str());

    Echo echo{{"data", o.data},
              {"split", o.split},
              {"mode", o.mode},
              {"batch", std::to_string(o.batch)}};
    if (!o.backbone.empty()) echo.emplace_back("backbone", o.backbone);
    for (size_t i = 0; i < sources.size(); ++i) {
        echo.emplace_back("member_" + std::to_string(i), sources[i]);
    }
    stamp_and_save(rep.get(), "ensemble", echo, o.report);
}

void add_ensemble(CLI::App& app) {
    auto o = std::make_shared<EnsembleOpts>();
    CLI::App* c = app.add_subcommand("ensemble", "pool several task models over one split");
    c->add_option("--backbone", o->backbone, "checkpoint the --masks reconstruct onto");
    c->add_option("--models", o->models, "dense checkpoint members")->delimiter(',');
    c->add_option("--masks", o->masks, "mask file members (need --backbone)")->delimiter(',');
    c->add_option("--data", o->data, "task dataset directory")->required();
    c->add_option("--split", o->split, "train, dev, or test")->capture_default_str();
    c->add_option("--mode", o->mode, "vote by labels, logits, or probs")->capture_default_str();
    c->add_option("--batch", o->batch, "evaluation batch size")->capture_default_str();
    c->add_option("--report", o->report, "report path")->capture_default_str();
    c->callback([o] { run_ensemble(*o); });
}

// ---- connect ----

struct ConnectOpts {
    std::string model_a;
    std::string model_b;
    std::string mask_a;
    std::string mask_b;
    std::string data;
    std::string split = "test";
    bool linear = false;
    bool bezier = false;
    int64_t points = 11;
    int64_t bends = 1;
    int64_t batch = 32;
    TrainFlags train = default_train_flags();
    std::string report = "path_report.tsv";
    std::string train_report;
};

void run_connect(const ConnectOpts& o) {
    if (o.linear == o.bezier) die_user("pick exactly one of --linear or --bezier");

    ModelPtr a = load_model(o.model_a);
    if (!o.mask_a.empty()) a = apply_mask(a.get(), o.mask_a);
    ModelPtr b = load_model(o.model_b);
    if (!o.mask_b.empty()) b = apply_mask(b.get(), o.mask_b);
    DatasetPtr task = load_dataset(o.data);
    require_labeled(task.get(), "connect");
    require_compatible(a.get(), task.get());
    require_compatible(b.get(), task.get());

    std::string label_a = o.mask_a.empty() ? o.model_a : o.mask_a;
    std::string label_b = o.mask_b.empty() ? o.model_b : o.mask_b;

    Echo echo{{"model_a", o.model_a},
              {"model_b", o.model_b},
              {"data", o.data},
              {"split", o.split},
              {"points", std::to_string(o.points)},
              {"batch", std::to_string(o.batch)}};
    if (!o.mask_a.empty()) echo.emplace_back("mask_a", o.mask_a);
    if (!o.mask_b.empty()) echo.emplace_back("mask_b", o.mask_b);

    if (o.linear) {
        mlm_report* rraw = nullptr;
        check(mlm_connect_linear(a.get(), b.get(), label_a.c_str(), label_b.c_str(), task.get(),
                                 o.split.c_str(), o.points, o.batch, &rraw));
        ReportPtr rep(rraw);
        std::string text = render_report(rep.get());
        std::printf("linear path: min %s %s\n", metric_name_for(task.get()),
                    report_value(text, "min_value").c_str());
        stamp_and_save(rep.get(), "connect", echo, o.report);
        return;
    }

    mlm_train_config tc;
    mlm_train_config_default(&tc);
    apply_train_flags(tc, o.train);

    mlm_report* traw = nullptr;
    mlm_report* praw = nullptr;
    check(mlm_connect_bezier(a.get(), b.get(), label_a.c_str(), label_b.c_str(), task.get(), &tc,
                             o.bends, o.points, o.batch, &traw, &praw));
    ReportPtr train_rep(traw);
    ReportPtr path_rep(praw);

    echo.emplace_back("bends", std::to_string(o.bends));
    echo_train_flags(echo, o.train);

    std::string text = render_report(path_rep.get());
    std::printf("trained curve: min %s %s\n", metric_name_for(task.get()),
                report_value(text, "min_value").c_str());
    std::string train_path = o.train_report.empty() ? o.report + ".train.tsv" : o.train_report;
    stamp_and_save(train_rep.get(), "connect", echo, train_path);
    stamp_and_save(path_rep.get(), "connect", echo, o.report);
}

void add_connect(CLI::App& app) {
    auto o = std::make_shared<ConnectOpts>();
    CLI::App* c = app.add_subcommand(
        "connect", "evaluate a straight line or a trained curve between two task models");
    c->add_option("--model-a", o->model_a, "first endpoint checkpoint")->required();
    c->add_option("--model-b", o->model_b, "second endpoint checkpoint")->required();
    c->add_option("--mask-a", o->mask_a, "mask file laid over --model-a first");
    c->add_option("--mask-b", o->mask_b, "mask file laid over --model-b first");
    c->add_option("--data", o->data, "task dataset directory")->required();
    c->add_option("--split", o->split, "train, dev, or test")->capture_default_str();
    c->add_flag("--linear", o->linear, "evaluate evenly spaced interpolations");
    c->add_flag("--bezier", o->bezier, "train curve bends, then evaluate along the curve");
    c->add_option("--points", o->points, "evaluation points along the path")
        ->capture_default_str();
    c->add_option("--bends", o->bends, "trained control points (--bezier)")
        ->capture_default_str();
    c->add_option("--batch", o->batch, "evaluation batch size")->capture_default_str();
    add_train_flags(c, o->train, /*with_batch=*/false);
    c->add_option("--train-batch", o->train.batch, "bend-training batch size (--bezier)")
        ->capture_default_str();
    c->add_option("--report", o->report, "path report")->capture_default_str();
    c->add_option("--train-report", o->train_report,
                  "bend-training report (--bezier, default <report>.train.tsv)");
    c->callback([o] { run_connect(*o); });
}

// ---- dump-embeddings ----

struct DumpOpts {
    std::string model;
    std::string mask;
    std::string data;
    std::string split = "dev";
    std::string out;
    int64_t batch = 32;
    std::string report;
};

void run_dump(const DumpOpts& o) {
    ModelPtr m = load_model(o.model);
    if (!o.mask.empty()) m = apply_mask(m.get(), o.mask);
    DatasetPtr task = load_dataset(o.data);
    require_compatible(m.get(), task.get());

    check(mlm_dump_embeddings(m.get(), task.get(), o.split.c_str(), o.out.c_str(), o.batch));

    mlm_arch arch;
    check(mlm_model_arch(m.get(), &arch));
    ReportPtr rep = new_report();
    check(mlm_report_put(rep.get(), "op", "dump_embeddings"));
    check(mlm_report_put(rep.get(), "split", o.split.c_str()));
    check(mlm_report_put_i64(rep.get(), "examples", mlm_dataset_split_count(task.get(), o.split.c_str())));
    check(mlm_report_put_i64(rep.get(), "hidden", arch.hidden));
    check(mlm_report_put(rep.get(), "out", o.out.c_str()));

    Echo echo{{"model", o.model},
              {"data", o.data},
              {"split", o.split},
              {"out", o.out},
              {"batch", std::to_string(o.batch)}};
    if (!o.mask.empty()) echo.emplace_back("mask", o.mask);

    std::printf("embeddings -> %s (%" PRId64 " examples x %" PRId64 " dims)\n", o.out.c_str(),
                mlm_dataset_split_count(task.get(), o.split.c_str()), arch.hidden);
    std::string report = o.report.empty() ? o.out + ".report.tsv" : o.report;
    stamp_and_save(rep.get(), "dump-embeddings", echo, report);
}

void add_dump(CLI::App& app) {
    auto o = std::make_shared<DumpOpts>();
    CLI::App* c = app.add_subcommand(
        "dump-embeddings", "write each example's pooled encoder position as label\\tTSV floats");
    c->add_option("--model", o->model, "dense checkpoint")->required();
    c->add_option("--mask", o->mask, "mask file laid over the checkpoint first");
    c->add_option("--data", o->data, "dataset directory")->required();
    c->add_option("--split", o->split, "train, dev, or test")->capture_default_str();
    c->add_option("--out", o->out, "embedding TSV path")->required();
    c->add_option("--batch", o->batch, "forward batch size")->capture_default_str();
    c->add_option("--report", o->report, "report path (default <out>.report.tsv)");
    c->callback([o] { run_dump(*o); });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masklm: train binary weight-selection masks over a frozen transformer backbone"};
    app.require_subcommand(1);
    app.set_version_flag("--version", mlm_version());

    add_gen_data(app);
    add_pretrain(app);
    add_train(app);
    add_grid_search(app);
    add_eval(app);
    add_sweep_sparsity(app);
    add_sweep_layers(app);
    add_analyze_masks(app);
    add_memory(app);
    add_ensemble(app);
    add_connect(app);
    add_dump(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return 0;
}
