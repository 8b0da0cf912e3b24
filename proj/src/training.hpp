#pragma once

#include <functional>

#include "data.hpp"
#include "report.hpp"

namespace masklm {

enum class Regime { pretrain, finetune, mask };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct TrainConfig {
    Regime regime = Regime::finetune;
    float lr = 5e-5f;
    int64_t batch_size = 32;
    int64_t max_epochs = 10;
    int64_t early_stop_patience = 2;
    uint64_t seed = 0;
    MaskingConfig masking;  // mask regime only
    MaskPlan plan;          // mask regime only

    void validate() const;
};

// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) over a fixed
// parameter list. A missing gradient buffer counts as zero, so momentum
// keeps decaying for tensors a batch did not touch. Non-finite gradients
// abort, naming the offending tensor.
class Adam {
public:
    Adam(std::vector<NamedTensor> params, float lr);

    void step();
    void zero_grad();
    int64_t steps() const { return t_; }

private:
    struct Slot {
        NamedTensor p;
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    float lr_;
    int64_t t_ = 0;
};

// Confusion-matrix metrics, exposed for direct checking. cm is k*k
// row-major indexed [gold * k + pred]. Zero denominators yield 0, except
// that an error-free micro-F1 with no positives anywhere is a perfect 1.
double mcc_from_confusion(const std::vector<int64_t>& cm, int64_t k);
double micro_f1_from_confusion(const std::vector<int64_t>& cm, int64_t k);  // label 0 = background

struct EvalResult {
    double loss = 0.0;
    int64_t count = 0;  // scored units: sequences, non-pad tokens, or corrupted positions
    std::vector<std::pair<std::string, double>> metrics;

    bool has(const std::string& name) const;
    double metric(const std::string& name) const;  // errors when the task kind lacks it
};

// Deterministic full-split evaluation in fixed order. classification:
// accuracy, mcc, error_rate. tagging: accuracy, micro_f1, error_rate over
// non-pad positions. mlm-corpus (vocab required): accuracy over corrupted
// positions, with seeded corruption so repeated calls agree. Works across
// datasets: any split whose ids fit the model's vocabulary is fair game.
EvalResult evaluate(Model& m, TaskKind kind, const Split& split, int64_t batch_size,
                    const Vocab* vocab = nullptr, uint64_t mlm_seed = 1);

// Higher-is-better scalar used for early stopping and grid search:
// accuracy, micro_f1, or negated MLM loss.
double primary_metric(const EvalResult& r, TaskKind kind);

// Cross-entropy batch loss for a head task, with the number of scored
// units. Usable for any model whose head matches the task.
std::pair<Tensor, int64_t> task_batch_loss(Model& m, TaskKind kind, const std::vector<const Example*>& items);

struct LoopResult {
    std::vector<double> train_losses;  // per epoch, starting at epoch 1
    std::vector<EvalResult> dev_evals;  // index = epoch, starting at 0
    int64_t best_epoch = 0;
    int64_t steps = 0;
};

// The shared epoch loop: seeded reshuffle per epoch, last partial batch
// kept, early stopping on dev_value (higher is better) with the best
// epoch's parameter values restored on exit. batch_loss runs inside a tape
// and may return scored = 0 to skip a batch.
LoopResult train_loop(const TrainConfig& cfg, const Split& train, std::vector<NamedTensor> params,
                      const std::function<std::pair<Tensor, int64_t>(const std::vector<const Example*>&,
                                                                     uint64_t, uint64_t)>& batch_loss,
                      const std::function<EvalResult()>& eval_dev,
                      const std::function<double(const EvalResult&)>& dev_value);

struct TrainOutcome {
    Report report;
    int64_t best_epoch = 0;
    double best_dev_value = 0.0;  // primary_metric at the best epoch
    EvalResult best_dev_eval;
    std::vector<double> train_losses;  // per epoch, starting at epoch 1
    std::vector<double> dev_values;    // per evaluated epoch, starting at epoch 0
    int64_t steps = 0;                 // optimizer steps taken
    double wall_seconds = 0.0;         // console diagnostics only, never rendered
};

// Masked-language-model training of every parameter. Dev corruption reuses
// one seed across epochs so the early-stopping signal is comparable.
TrainOutcome pretrain(Model& m, const TaskDataset& corpus, const Vocab& vocab, const TrainConfig& cfg);

// Classification or tagging on a dense model: the classifier is freshly
// drawn from cfg.seed, then every parameter updates.
TrainOutcome finetune(Model& m, const TaskDataset& task, const TrainConfig& cfg);

// Mask training: the classifier is freshly drawn and frozen, cfg.plan is
// engaged with cfg.masking, and the optimizer sees exactly the mask scores.
// The model is left holding the best epoch's scores.
TrainOutcome train_masks(Model& m, const TaskDataset& task, const TrainConfig& cfg);

struct GridOutcome {
    float best_lr = 0.0f;
    double best_value = 0.0;
    bool capped = false;                          // wanted to extend but hit a limit
    std::vector<std::pair<float, double>> table;  // ascending lr
};

// Evaluates a higher-is-better objective on lattice points {1,3,5,7,9}x10^e.
// While the unique best value sits on the tried border, the adjacent lattice
// point joins the grid (at most max_extensions additions). Ties resolve to
// the lowest lr.
GridOutcome lr_grid_search(const std::vector<float>& initial, const std::function<double(float)>& objective,
                           int64_t max_extensions = 8);

std::vector<float> finetune_lr_grid();  // 1e-5 .. 9e-5
std::vector<float> mask_lr_grid();      // 7e-5 .. 1e-3, denser near 1e-4

}  // namespace masklm
