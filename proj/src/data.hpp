#pragma once

#include <string>
#include <utility>

#include "model.hpp"

namespace masklm {

struct Vocab {
    int64_t size = 64;

    void validate() const;
    int64_t content_start() const { return kNumReservedIds; }
};

enum class TaskKind { classification, tagging, mlm_corpus };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

struct Example {
    std::vector<int32_t> tokens;  // CLS + content + SEP
    int32_t label = -1;           // classification only
    std::vector<int32_t> tags;    // tagging only, aligned with tokens
};

struct Split {
    std::vector<Example> items;
};

struct TaskDataset {
    TaskKind kind = TaskKind::mlm_corpus;
    int64_t num_labels = 0;  // classes or tag count; 0 for a plain corpus
    uint64_t seed = 0;
    int64_t variant = 0;  // classification/tagging trigger surface (0 or 1)
    Split train, dev, test;
};

// First-order Markov chain over the content vocabulary. Its transition
// structure depends on the vocabulary size only, so every dataset drawn at
// one size shares corpus statistics regardless of seed. Tokens 4..11 form
// four two-member clusters whose members are emitted interchangeably,
// making the pair (4,5) etc. distributionally identical synonyms.
class MarkovChain {
public:
    explicit MarkovChain(int64_t vocab_size);

    int64_t vocab_size() const { return vocab_; }
    int64_t num_states() const { return int64_t(cum_rows_.size()); }

    std::vector<int32_t> sample(int64_t len, Rng& rng) const;

    // cluster index 0..3 for tokens 4..11, -1 otherwise
    static int64_t cluster_of(int32_t token);
    static int32_t cluster_member(int64_t cluster, int64_t variant);
    static constexpr int64_t kNumClusters = 4;

private:
    int64_t vocab_;
    std::vector<std::vector<double>> cum_rows_;
};

// Plain pretraining text: train = num_seq sequences of `len` content tokens
// wrapped in CLS/SEP; dev and test get num_seq/8 each (at least 1 when
// num_seq > 0).
TaskDataset gen_corpus(uint64_t seed, const Vocab& vocab, int64_t num_seq, int64_t len);

// k-way sequence classification (2 <= k <= 4): corpus-like sequences are
// scrubbed of all cluster tokens, then the class-c trigger (cluster c,
// member `variant`) is injected at a random content position. Exactly
// balanced classes. Variants 0 and 1 define the same task over disjoint
// surface tokens (synonym members), supporting cross-dataset evaluation.
TaskDataset gen_classification_task(uint64_t seed, const Vocab& vocab, int64_t k, int64_t num_per_split,
                                    int64_t len = 12, int64_t variant = 0);

// Token tagging (2 <= k <= 5): tag of position i is 1 + cluster(token at
// i-1) when that token belongs to clusters 0..k-2, else 0. Sequences are
// scrubbed, then 2..4 trigger tokens from the usable clusters are injected.
TaskDataset gen_tagging_task(uint64_t seed, const Vocab& vocab, int64_t k, int64_t num_per_split,
                             int64_t len = 12, int64_t variant = 0);

// BERT-style corruption: each non-reserved position is picked with
// probability 0.15; picked positions become MASK (80%), a random content
// token (10%) or stay unchanged (10%). Targets carry the original id at
// picked positions and -1 elsewhere.
std::pair<TokenBatch, std::vector<int32_t>> mlm_corrupt(const TokenBatch& batch, const Vocab& vocab,
                                                        uint64_t seed);

// One split per file. classification: "label<TAB>id id id...". tagging:
// alternating token and tag lines, both space separated. mlm-corpus: one
// id line per sequence.
Split load_split_tsv(const std::string& path, TaskKind kind, int64_t num_labels, int64_t vocab_size,
                     int64_t max_len, int64_t* truncated = nullptr);
void save_split_tsv(const std::string& path, TaskKind kind, const Split& split);

// Token ids + aligned label buffer ready for the loss. classification:
// one label per sequence. tagging/mlm: one per position, -1 where ignored.
struct LabeledBatch {
    TokenBatch tokens;
    std::vector<int32_t> labels;
};

LabeledBatch make_classification_batch(const std::vector<const Example*>& items, int64_t max_len);
LabeledBatch make_tagging_batch(const std::vector<const Example*>& items, int64_t max_len);
LabeledBatch make_mlm_batch(const std::vector<const Example*>& items, int64_t max_len, const Vocab& vocab,
                            uint64_t seed);

}  // namespace masklm
