#pragma once

#include "model.hpp"
#include "training.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace masklm {

// Dense model snapshots ("MWCK") and packed mask artifacts ("MSKB"). Both
// formats are little-endian regardless of platform, written via a temp file
// plus rename so readers never see a half-written artifact.

struct CheckpointMeta {
    TransformerConfig arch;  // filled from the model on save, from the file on load
    uint64_t seed = 0;
    std::string regime;  // how the weights came to be: "init", "pretrain", ...
    std::string note;    // free-form provenance, e.g. the task or lr
};

void save_checkpoint(const std::string& path, const Model& m, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    Model model;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Everything needed to serve or re-derive one task's mask: the binarized
// masks themselves, the backbone architecture and init recipe (so
// initialization masks can be rebuilt for dissimilarity studies without the
// backbone at hand), and the frozen random classifier, which lives nowhere
// else.
struct MaskFileData {
    float tau = 0.5f;
    MaskPlan plan;
    MaskingConfig masking;
    uint64_t train_seed = 0;
    TransformerConfig arch;  // num_labels is the task's label count
    std::string metric_name;
    double dev_metric = 0.0;  // preserved bit-for-bit through the file
    std::vector<std::pair<std::string, BitMatrix>> layers;
    std::vector<float> classifier;  // [arch.hidden * arch.num_labels], row-major
};

void save_maskfile(const std::string& path, const MaskFileData& d);
MaskFileData load_maskfile(const std::string& path);

// Pulls the binarized masks and frozen classifier out of a mask-trained
// model, tagged with the config that produced them.
MaskFileData extract_masks(const Model& m, const TrainConfig& cfg, double dev_metric,
                           const std::string& metric_name);

// Backbone checkpoint + mask file -> dense task model with the masked
// weights folded in, everything frozen. Its forward matches the in-memory
// masked model the file was extracted from.
Model reconstruct(const Model& backbone, const MaskFileData& d);

// Rebuilds the initialization-time masks from the stored recipe, for
// comparing trained masks against their shared starting point.
std::vector<std::pair<std::string, BitMatrix>> initial_masks(const TransformerConfig& arch,
                                                             const MaskPlan& plan,
                                                             const MaskingConfig& mcfg);

// The temp-file-plus-rename write every artifact producer goes through.
void write_file_atomic(const std::string& path, const std::string& bytes);

// A dataset directory: one TSV per split plus a meta file recording kind,
// label count, generation seed, variant and vocabulary size, written last
// so its presence marks a complete directory. A loaded dataset trains and
// evaluates exactly like a freshly generated one.
void save_dataset(const std::string& dir, const TaskDataset& task, int64_t vocab_size);

struct LoadedDataset {
    TaskDataset task;
    int64_t vocab_size = 0;
};

LoadedDataset load_dataset(const std::string& dir);

}  // namespace masklm
