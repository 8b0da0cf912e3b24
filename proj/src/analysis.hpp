#pragma once

#include "training.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace masklm {

// ---- mask overlap ----------------------------------------------------

// How far apart two trained masks ended up, relative to how far each moved
// from its own initialization:
//
//     |trained1 - trained2|_1 / (|trained1 - init1|_1 + |trained2 - init2|_1)
//
// 0 when both runs picked identical masks, 1 when every flipped bit is
// disjoint. Errors if neither run moved (the ratio is undefined then).
double dissimilarity(const BitMatrix& init1, const BitMatrix& trained1, const BitMatrix& init2,
                     const BitMatrix& trained2);

using NamedMasks = std::vector<std::pair<std::string, BitMatrix>>;

struct MaskSetDiff {
    std::string task1, task2;
    bool shared_init = false;  // the two runs started from identical masks
    std::vector<std::pair<std::string, double>> per_layer;
    double pooled = 0.0;  // numerators and denominators summed over layers
    Report report;
};

// Layerwise dissimilarity between two mask sets. All four sets must cover
// the same layers with the same shapes.
MaskSetDiff mask_dissimilarity(const std::string& task1, const NamedMasks& init1, const NamedMasks& trained1,
                               const std::string& task2, const NamedMasks& init2, const NamedMasks& trained2);

// ---- storage accounting ----------------------------------------------

// KB means 1000 bytes throughout: floats cost 4 bytes, mask bits exactly
// 1/8 byte (packing overhead is not charged here).
double float_kb(int64_t count);
double bit_kb(int64_t count);

struct TaskMemory {
    std::string task;
    int64_t num_labels = 0;
    // dense finetuning: every task needs its own classifier, and every task
    // after the first needs a full backbone copy (the first can simply
    // replace the pretrained weights on disk)
    int64_t finetune_added_floats = 0;
    // masking: classifier floats only for the first task with this label
    // count (same-width heads share the frozen random classifier), plus
    // mask bits for the planned layers and the classifier
    int64_t mask_added_floats = 0;
    int64_t mask_added_bits = 0;
    double finetune_total_kb = 0.0;
    double mask_total_kb = 0.0;
};

struct MemoryReport {
    int64_t backbone_floats = 0;
    double backbone_kb = 0.0;
    int64_t plan_bits = 0;  // mask bits per task before the classifier head
    double plan_kb = 0.0;
    std::vector<TaskMemory> tasks;
    Report report;
};

// Pure arithmetic over the architecture: cumulative storage for serving a
// task list via per-task finetuned copies versus one frozen backbone plus
// per-task masks.
MemoryReport memory_report(const TransformerConfig& arch, const MaskPlan& plan,
                           const std::vector<std::pair<std::string, int64_t>>& tasks);

// ---- ensembles --------------------------------------------------------

enum class EnsembleMode { labels, logits, probs };

std::string ensemble_mode_name(EnsembleMode mode);
EnsembleMode ensemble_mode_from_name(const std::string& name);

// Most common vote; ties resolve to the lowest class index.
int64_t majority_vote(const std::vector<int64_t>& votes, int64_t num_labels);

// Combines classifier outputs across models: per-example majority over
// predicted labels, argmax of the mean logits, or argmax of the mean
// softmax probabilities. All members must agree on the number of labels.
std::vector<int64_t> ensemble_predict(const std::vector<Model*>& models, const TokenBatch& batch,
                                      EnsembleMode mode);

double ensemble_accuracy(const std::vector<Model*>& models, const Split& split, EnsembleMode mode,
                         int64_t batch_size);

// ---- weight-space paths ------------------------------------------------

// (1-gamma) * a + gamma * b over every dense parameter, classifier
// included. gamma 0 and 1 return bitwise copies of the endpoints; masked
// endpoints must be materialized dense first. Symmetric: swapping the
// endpoints and replacing gamma by 1-gamma gives bitwise identical weights.
Model interpolate_linear(const Model& a, const Model& b, float gamma);

struct PathPoint {
    double position;  // gamma along a segment, or t along a curve
    EvalResult eval;
};

struct PathResult {
    std::vector<PathPoint> points;
    double min_value = 0.0;  // worst primary-metric value seen on the path
    double min_position = 0.0;
    Report report;
};

// Evaluates the straight segment between two models at `points` evenly
// spaced gammas (at least 11, so the endpoints and midpoint are always
// sampled). Endpoint rows are bitwise reproductions of evaluating a and b
// directly.
PathResult eval_path(const Model& a, const Model& b, const std::string& label_a, const std::string& label_b,
                     TaskKind kind, const Split& split, const std::string& split_label, int64_t points,
                     int64_t batch_size);

// ---- trainable curves between endpoints ---------------------------------

// All degree+1 Bernstein basis values at t, computed in double; they sum
// to 1 up to rounding.
std::vector<double> bernstein_weights(int64_t degree, double t);

struct BezierCurve {
    std::vector<Model> control;  // front() and back() are the fixed endpoints
};

// Control polygon with `bends` interior points placed evenly on the
// straight segment, so the initial curve traces that segment exactly.
BezierCurve make_bezier(const Model& a, const Model& b, int64_t bends = 3);

// Bernstein combination of the control points at t. t = 0 and t = 1 return
// bitwise copies of the endpoints.
Model bezier_point(const BezierCurve& curve, double t);

// Minimizes the expected task loss along the curve: each optimizer step
// draws one t uniformly, forms the combined model on the tape, and updates
// the interior control points only. The endpoints never change. Dev score
// per epoch is the mean loss over a fixed t grid, so the returned best
// curve is never worse than the straight-line initialization there.
TrainOutcome train_bezier(BezierCurve& curve, const TaskDataset& task, const TrainConfig& cfg);

PathResult eval_curve(const BezierCurve& curve, const std::string& label_a, const std::string& label_b,
                      TaskKind kind, const Split& split, const std::string& split_label, int64_t points,
                      int64_t batch_size);

// ---- embedding dumps -----------------------------------------------------

// One line per example: the label, then the topmost block's position-0
// hidden vector, tab-separated. Bytewise deterministic for a fixed model
// and split.
void dump_cls_embeddings(Model& m, const Split& split, const std::string& path, int64_t batch_size);

}  // namespace masklm
