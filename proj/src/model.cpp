#include "model.hpp"

#include <algorithm>
#include <cmath>

namespace masklm {

void TransformerConfig::validate() const {
    if (num_blocks < 0) fail(ErrKind::invalid_argument, "num_blocks must be >= 0");
    if (hidden <= 0 || feed_forward <= 0 || heads <= 0)
        fail(ErrKind::invalid_argument, "hidden, feed_forward and heads must be positive");
    if (hidden % heads != 0)
        fail(ErrKind::invalid_argument, "hidden (" + std::to_string(hidden) + ") not divisible by heads (" +
                                            std::to_string(heads) + ")");
    if (max_len < 1) fail(ErrKind::invalid_argument, "max_len must be >= 1");
    if (vocab_size < kNumReservedIds)
        fail(ErrKind::invalid_argument, "vocab_size must cover the reserved ids");
    if (num_labels < 1) fail(ErrKind::invalid_argument, "num_labels must be >= 1");
    if (type_vocab < 0) fail(ErrKind::invalid_argument, "type_vocab must be >= 0");
}

TransformerConfig bert_base_config() {
    TransformerConfig c;
    c.num_blocks = 12;
    c.hidden = 768;
    c.feed_forward = 3072;
    c.heads = 12;
    c.vocab_size = 30522;
    c.max_len = 512;
    c.num_labels = 2;
    c.type_vocab = 2;
    return c;
}

Tensor Linear::forward(const Tensor& x) const {
    if (mask) return masked_forward(*mask, x);
    Tensor y = matmul(x, W);
    if (b.defined()) y = add(y, b);
    return y;
}

namespace {

Tensor randn_tensor(Rng& rng, Shape shape, float std_dev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.next_normal() * std_dev;
    return t;
}

Linear init_linear(Rng& rng, int64_t in, int64_t out, bool with_bias) {
    Linear l;
    l.W = randn_tensor(rng, {in, out}, 0.02f);
    if (with_bias) l.b = Tensor({out}, 0.0f);
    return l;
}

LayerNormParams init_norm(int64_t d) {
    LayerNormParams n;
    n.gain = Tensor({d}, 1.0f);
    n.bias = Tensor({d}, 0.0f);
    return n;
}

}  // namespace

Model init_model(const TransformerConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng(seed);
    // draws happen in manifest order so a seed pins every weight
    m.tok_emb = randn_tensor(rng, {cfg.vocab_size, cfg.hidden}, 0.02f);
    m.pos_emb = randn_tensor(rng, {cfg.max_len, cfg.hidden}, 0.02f);
    if (cfg.type_vocab > 0) m.type_emb = randn_tensor(rng, {cfg.type_vocab, cfg.hidden}, 0.02f);
    m.emb_norm = init_norm(cfg.hidden);
    m.blocks.resize(size_t(cfg.num_blocks));
    for (auto& blk : m.blocks) {
        blk.key = init_linear(rng, cfg.hidden, cfg.hidden, true);
        blk.query = init_linear(rng, cfg.hidden, cfg.hidden, true);
        blk.value = init_linear(rng, cfg.hidden, cfg.hidden, true);
        blk.attn_out = init_linear(rng, cfg.hidden, cfg.hidden, true);
        blk.norm1 = init_norm(cfg.hidden);
        blk.ff_in = init_linear(rng, cfg.hidden, cfg.feed_forward, true);
        blk.ff_out = init_linear(rng, cfg.feed_forward, cfg.hidden, true);
        blk.norm2 = init_norm(cfg.hidden);
    }
    m.pooler = init_linear(rng, cfg.hidden, cfg.hidden, true);
    m.classifier = init_linear(rng, cfg.hidden, cfg.num_labels, false);
    return m;
}

namespace {

Tensor deep_copy(const Tensor& t) {
    if (!t.defined()) return Tensor();
    Tensor c = t.detached_copy();
    c.set_requires_grad(t.requires_grad());
    return c;
}

Linear clone_linear(const Linear& l) {
    Linear c;
    c.W = deep_copy(l.W);
    c.b = deep_copy(l.b);
    if (l.mask) {
        MaskedLinear ml;
        ml.W = c.W;
        ml.bias = c.b;
        ml.scores = deep_copy(l.mask->scores);
        ml.tau = l.mask->tau;
        c.mask = std::move(ml);
    }
    return c;
}

LayerNormParams clone_norm(const LayerNormParams& n) { return {deep_copy(n.gain), deep_copy(n.bias)}; }

}  // namespace

Model clone_model(const Model& m) {
    Model c;
    c.cfg = m.cfg;
    c.tok_emb = deep_copy(m.tok_emb);
    c.pos_emb = deep_copy(m.pos_emb);
    c.type_emb = deep_copy(m.type_emb);
    c.emb_norm = clone_norm(m.emb_norm);
    c.blocks.reserve(m.blocks.size());
    for (const auto& blk : m.blocks) {
        EncoderBlock b;
        b.key = clone_linear(blk.key);
        b.query = clone_linear(blk.query);
        b.value = clone_linear(blk.value);
        b.attn_out = clone_linear(blk.attn_out);
        b.norm1 = clone_norm(blk.norm1);
        b.ff_in = clone_linear(blk.ff_in);
        b.ff_out = clone_linear(blk.ff_out);
        b.norm2 = clone_norm(blk.norm2);
        c.blocks.push_back(std::move(b));
    }
    c.pooler = clone_linear(m.pooler);
    c.classifier = clone_linear(m.classifier);
    return c;
}

TokenBatch make_batch(const std::vector<std::vector<int32_t>>& seqs, int64_t max_len, int64_t* truncated) {
    TokenBatch b;
    b.batch = int64_t(seqs.size());
    int64_t longest = 1;
    for (const auto& s : seqs) {
        if (int64_t(s.size()) > max_len && truncated) ++*truncated;
        longest = std::max(longest, std::min(int64_t(s.size()), max_len));
    }
    b.len = longest;
    b.ids.assign(size_t(b.batch * b.len), kPadId);
    for (size_t i = 0; i < seqs.size(); ++i) {
        size_t keep = std::min(seqs[i].size(), size_t(b.len));
        std::copy_n(seqs[i].begin(), keep, b.ids.begin() + int64_t(i) * b.len);
    }
    return b;
}

Tensor attention_sublayer(const TransformerConfig& cfg, const EncoderBlock& blk, const Tensor& x,
                          const Tensor& pad_bias, AttentionProbe* probe) {
    int64_t batch = x.dim(0), n = x.dim(1);
    int64_t heads = cfg.heads, dh = cfg.hidden / cfg.heads;
    auto split = [&](const Tensor& t) {
        return permute(reshape(t, {batch, n, heads, dh}), {0, 2, 1, 3});  // [B,h,n,dh]
    };
    Tensor k = split(blk.key.forward(x));
    Tensor q = split(blk.query.forward(x));
    Tensor v = split(blk.value.forward(x));
    Tensor scores = scale(matmul(q, transpose_last(k)), 1.0f / std::sqrt(float(dh)));
    scores = add(scores, pad_bias);
    Tensor weights = softmax(scores, 3);  // [B,h,n,n]
    if (probe) probe->weights.push_back(weights);
    Tensor ctx = matmul(weights, v);  // [B,h,n,dh]
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {batch, n, cfg.hidden});
    return blk.attn_out.forward(merged);
}

Tensor encode(const Model& m, const TokenBatch& batch, AttentionProbe* probe) {
    if (batch.batch <= 0 || batch.len <= 0)
        fail(ErrKind::invalid_argument, "empty token batch");
    if (batch.len > m.cfg.max_len)
        fail(ErrKind::invalid_argument, "batch length " + std::to_string(batch.len) +
                                            " exceeds the model maximum " + std::to_string(m.cfg.max_len));
    if (int64_t(batch.ids.size()) != batch.batch * batch.len)
        fail(ErrKind::invalid_argument, "token batch id buffer does not match its dimensions");

    Tensor h = embedding_lookup(m.tok_emb, batch.ids, {batch.batch, batch.len});
    std::vector<int32_t> positions(size_t(batch.len));
    for (int64_t i = 0; i < batch.len; ++i) positions[size_t(i)] = int32_t(i);
    h = add(h, embedding_lookup(m.pos_emb, positions, {batch.len}));
    if (m.type_emb.defined()) {
        std::vector<int32_t> segment(size_t(batch.len), 0);
        h = add(h, embedding_lookup(m.type_emb, segment, {batch.len}));
    }
    h = layer_norm(h, m.emb_norm.gain, m.emb_norm.bias);

    Tensor pad_bias({batch.batch, 1, 1, batch.len}, 0.0f);
    for (int64_t i = 0; i < batch.batch; ++i)
        for (int64_t j = 0; j < batch.len; ++j)
            if (batch.ids[size_t(i * batch.len + j)] == kPadId)
                pad_bias.data()[size_t(i * batch.len + j)] = -1e9f;

    for (const auto& blk : m.blocks) {
        Tensor a = attention_sublayer(m.cfg, blk, h, pad_bias, probe);
        h = layer_norm(add(h, a), blk.norm1.gain, blk.norm1.bias);
        Tensor f = blk.ff_out.forward(gelu(blk.ff_in.forward(h)));
        h = layer_norm(add(h, f), blk.norm2.gain, blk.norm2.bias);
    }
    return h;
}

Tensor classify_sequence(const Model& m, const TokenBatch& batch) {
    Tensor h0 = take_position(encode(m, batch), 0);
    Tensor pooled = masklm::tanh(m.pooler.forward(h0));
    return m.classifier.forward(pooled);
}

Tensor tag_tokens(const Model& m, const TokenBatch& batch) {
    return m.classifier.forward(encode(m, batch));
}

Tensor mlm_logits(const Model& m, const TokenBatch& batch) {
    return matmul(encode(m, batch), transpose_last(m.tok_emb));
}

MaskPlan MaskPlan::bottom_up(int64_t count) {
    if (count < 0) fail(ErrKind::invalid_argument, "block count must be >= 0");
    MaskPlan p;
    for (int64_t i = 0; i < count; ++i) p.blocks.push_back(i);
    return p;
}

MaskPlan MaskPlan::top_down(int64_t count, int64_t num_blocks) {
    if (count < 0 || count > num_blocks)
        fail(ErrKind::invalid_argument, "block count must lie in [0, num_blocks]");
    MaskPlan p;
    for (int64_t i = num_blocks - count; i < num_blocks; ++i) p.blocks.push_back(i);
    return p;
}

std::vector<MaskSlot> mask_eligible(Model& m) {
    std::vector<MaskSlot> slots;
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        std::string base = "block" + std::to_string(i) + ".";
        auto& blk = m.blocks[i];
        slots.push_back({base + "attention.key", &blk.key});
        slots.push_back({base + "attention.query", &blk.query});
        slots.push_back({base + "attention.value", &blk.value});
        slots.push_back({base + "attention.output", &blk.attn_out});
        slots.push_back({base + "ffn.inner", &blk.ff_in});
        slots.push_back({base + "ffn.outer", &blk.ff_out});
    }
    slots.push_back({"pooler", &m.pooler});
    slots.push_back({"classifier", &m.classifier});
    return slots;
}

void apply_mask_plan(Model& m, const MaskPlan& plan, const MaskingConfig& mcfg) {
    mcfg.validate();
    std::vector<bool> selected(m.blocks.size(), false);
    for (int64_t b : plan.blocks) {
        if (b < 0 || b >= int64_t(m.blocks.size()))
            fail(ErrKind::invalid_argument, "mask plan block " + std::to_string(b) +
                                                " outside [0," + std::to_string(m.blocks.size()) + ")");
        if (selected[size_t(b)])
            fail(ErrKind::invalid_argument, "mask plan repeats block " + std::to_string(b));
        selected[size_t(b)] = true;
    }

    drop_masks(m);
    set_all_trainable(m, false);

    Rng root(mcfg.seed);
    auto slots = mask_eligible(m);
    for (size_t ordinal = 0; ordinal < slots.size(); ++ordinal) {
        auto& slot = slots[ordinal];
        bool wanted;
        if (slot.key == "pooler")
            wanted = plan.pooler;
        else if (slot.key == "classifier")
            wanted = plan.classifier;
        else {
            size_t blk = size_t(std::stoll(slot.key.substr(5)));
            wanted = selected[blk];
        }
        if (!wanted) continue;
        // scores derive from (seed, slot position) so each layer's init is
        // independent of which other layers the plan selects
        Rng stream = root.derive(uint64_t(ordinal));
        slot.layer->mask = make_masked(slot.layer->W, slot.layer->b, mcfg, stream);
    }
}

void drop_masks(Model& m) {
    for (auto& slot : mask_eligible(m)) slot.layer->mask.reset();
}

Model materialize(const Model& m) {
    Model c = clone_model(m);
    for (auto& slot : mask_eligible(c)) {
        if (!slot.layer->mask) continue;
        BitMatrix bits = slot.layer->mask->binary_mask();
        slot.layer->W = apply_bitmask(slot.layer->W, bits);
        slot.layer->mask.reset();
    }
    set_all_trainable(c, false);
    return c;
}

namespace {

template <typename Fn>
void visit_dense(const Model& m, Fn&& fn) {
    fn("embedding.word", m.tok_emb);
    fn("embedding.position", m.pos_emb);
    if (m.type_emb.defined()) fn("embedding.type", m.type_emb);
    fn("embedding.norm.gain", m.emb_norm.gain);
    fn("embedding.norm.bias", m.emb_norm.bias);
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        std::string base = "block" + std::to_string(i) + ".";
        const auto& blk = m.blocks[i];
        fn(base + "attention.key.weight", blk.key.W);
        fn(base + "attention.key.bias", blk.key.b);
        fn(base + "attention.query.weight", blk.query.W);
        fn(base + "attention.query.bias", blk.query.b);
        fn(base + "attention.value.weight", blk.value.W);
        fn(base + "attention.value.bias", blk.value.b);
        fn(base + "attention.output.weight", blk.attn_out.W);
        fn(base + "attention.output.bias", blk.attn_out.b);
        fn(base + "norm1.gain", blk.norm1.gain);
        fn(base + "norm1.bias", blk.norm1.bias);
        fn(base + "ffn.inner.weight", blk.ff_in.W);
        fn(base + "ffn.inner.bias", blk.ff_in.b);
        fn(base + "ffn.outer.weight", blk.ff_out.W);
        fn(base + "ffn.outer.bias", blk.ff_out.b);
        fn(base + "norm2.gain", blk.norm2.gain);
        fn(base + "norm2.bias", blk.norm2.bias);
    }
    fn("pooler.weight", m.pooler.W);
    fn("pooler.bias", m.pooler.b);
    fn("classifier.weight", m.classifier.W);
}

}  // namespace

std::vector<NamedTensor> parameters(const Model& m) {
    std::vector<NamedTensor> out;
    visit_dense(m, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
    return out;
}

std::vector<NamedTensor> trainable_parameters(const Model& m) {
    std::vector<NamedTensor> out;
    visit_dense(m, [&](const std::string& name, const Tensor& t) {
        if (t.defined() && t.requires_grad()) out.push_back({name, t});
    });
    auto slots = mask_eligible(const_cast<Model&>(m));
    for (auto& slot : slots)
        if (slot.layer->mask && slot.layer->mask->scores.requires_grad())
            out.push_back({slot.key + ".scores", slot.layer->mask->scores});
    return out;
}

void set_all_trainable(Model& m, bool trainable) {
    visit_dense(m, [&](const std::string&, const Tensor& t) {
        if (t.defined()) const_cast<Tensor&>(t).set_requires_grad(trainable);
    });
}

int64_t backbone_param_count(const TransformerConfig& cfg) {
    int64_t d = cfg.hidden, ff = cfg.feed_forward;
    int64_t embeddings = cfg.vocab_size * d + cfg.max_len * d + cfg.type_vocab * d + 2 * d;
    int64_t per_block = 4 * (d * d + d) + (d * ff + ff) + (ff * d + d) + 4 * d;
    int64_t pooler = d * d + d;
    return embeddings + cfg.num_blocks * per_block + pooler;
}

int64_t classifier_param_count(const TransformerConfig& cfg) { return cfg.hidden * cfg.num_labels; }

int64_t per_block_maskable_count(const TransformerConfig& cfg) {
    return 4 * cfg.hidden * cfg.hidden + 2 * cfg.hidden * cfg.feed_forward;
}

int64_t plan_mask_bits(const TransformerConfig& cfg, const MaskPlan& plan) {
    int64_t bits = int64_t(plan.blocks.size()) * per_block_maskable_count(cfg);
    if (plan.pooler) bits += cfg.hidden * cfg.hidden;
    return bits;
}

}  // namespace masklm
