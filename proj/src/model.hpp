#pragma once

#include <optional>

#include "masking.hpp"

namespace masklm {

struct TransformerConfig {
    int64_t num_blocks = 4;
    int64_t hidden = 64;
    int64_t feed_forward = 256;
    int64_t heads = 4;
    int64_t vocab_size = 64;
    int64_t max_len = 32;
    int64_t num_labels = 2;
    int64_t type_vocab = 0;  // segment embedding rows; 0 for single-segment models

    void validate() const;
};

// Dimensions of the reference full-scale encoder, used by the memory
// accounting golden values. Never instantiated as live weights here.
TransformerConfig bert_base_config();

// Linear layer that can operate dense (W, optional bias) or masked: when
// `mask` is engaged the forward selects W elementwise through the binarized
// scores and only the scores can train.
struct Linear {
    Tensor W;  // [in, out]
    Tensor b;  // [out]; undefined for bias-free layers

    std::optional<MaskedLinear> mask;

    Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gain, bias;
};

struct EncoderBlock {
    Linear key, query, value, attn_out;  // all hidden x hidden
    LayerNormParams norm1;
    Linear ff_in;   // hidden x feed_forward
    Linear ff_out;  // feed_forward x hidden
    LayerNormParams norm2;
};

struct Model {
    TransformerConfig cfg;
    Tensor tok_emb;   // [vocab, hidden]
    Tensor pos_emb;   // [max_len, hidden]
    Tensor type_emb;  // [type_vocab, hidden]; undefined when type_vocab == 0
    LayerNormParams emb_norm;
    std::vector<EncoderBlock> blocks;
    Linear pooler;      // hidden x hidden, with bias; tanh applied in the head
    Linear classifier;  // hidden x num_labels, bias-free
};

// Fresh random weights: normals scaled by 0.02, zero biases, unit layernorm
// gains. Everything starts frozen; training regimes decide what trains.
Model init_model(const TransformerConfig& cfg, uint64_t seed);

Model clone_model(const Model& m);

// Rectangular id batch, kPadId-padded to `len` columns.
struct TokenBatch {
    int64_t batch = 0;
    int64_t len = 0;
    std::vector<int32_t> ids;  // batch * len entries
};

// Pads to the longest sequence (capped at max_len); over-long sequences are
// cut to max_len and counted into *truncated when provided.
TokenBatch make_batch(const std::vector<std::vector<int32_t>>& seqs, int64_t max_len,
                      int64_t* truncated = nullptr);

// Collects each block's post-softmax attention weights [batch, heads, n, n].
struct AttentionProbe {
    std::vector<Tensor> weights;
};

// Multi-head self attention over x [batch, n, hidden] followed by the
// output projection. pad_bias [batch,1,1,n] is added to the raw scores
// before softmax (0 for real keys, a large negative number for padding).
Tensor attention_sublayer(const TransformerConfig& cfg, const EncoderBlock& blk, const Tensor& x,
                          const Tensor& pad_bias, AttentionProbe* probe = nullptr);

// Embeddings + positions (+ segment row 0) -> layernorm -> L blocks of
// attention and feed-forward with residual + post-layernorm.
Tensor encode(const Model& m, const TokenBatch& batch, AttentionProbe* probe = nullptr);

// tanh(h0 * W_P + b_P) * W_T -> [batch, num_labels]
Tensor classify_sequence(const Model& m, const TokenBatch& batch);

// W_T applied at every position -> [batch, n, num_labels]
Tensor tag_tokens(const Model& m, const TokenBatch& batch);

// Output projection tied to the token embedding table -> [batch, n, vocab].
Tensor mlm_logits(const Model& m, const TokenBatch& batch);

// Which encoder blocks (plus heads) carry masks. Embeddings, biases and
// layernorms are never eligible.
struct MaskPlan {
    std::vector<int64_t> blocks;
    bool pooler = true;
    bool classifier = true;

    static MaskPlan bottom_up(int64_t count);
    static MaskPlan top_down(int64_t count, int64_t num_blocks);
};

// Engages masks with fresh scores on every planned layer and freezes every
// dense parameter. Afterwards the trainable set is exactly the new scores.
void apply_mask_plan(Model& m, const MaskPlan& plan, const MaskingConfig& mcfg);

void drop_masks(Model& m);

// Dense snapshot: masked weights folded in as W (.) M_bin, masks dropped,
// everything frozen.
Model materialize(const Model& m);

void set_all_trainable(Model& m, bool trainable);

struct NamedTensor {
    std::string name;
    Tensor t;
};

// Dense parameters in canonical manifest order (scores excluded).
std::vector<NamedTensor> parameters(const Model& m);

// Tensors the optimizer may update right now: engaged mask scores plus any
// dense parameter marked trainable.
std::vector<NamedTensor> trainable_parameters(const Model& m);

// Mask-eligible layers in canonical order, keyed for plans and mask files.
struct MaskSlot {
    std::string key;
    Linear* layer;
};
std::vector<MaskSlot> mask_eligible(Model& m);

// Pure arithmetic over the architecture (no weights involved).
int64_t backbone_param_count(const TransformerConfig& cfg);  // excludes the classifier
int64_t classifier_param_count(const TransformerConfig& cfg);
int64_t per_block_maskable_count(const TransformerConfig& cfg);
int64_t plan_mask_bits(const TransformerConfig& cfg, const MaskPlan& plan);  // blocks + pooler

}  // namespace masklm
