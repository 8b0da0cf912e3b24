#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace masklm {

void Vocab::validate() const {
    if (size < kNumReservedIds + 12) {
        fail(ErrKind::invalid_argument,
             "vocabulary size " + std::to_string(size) + " too small, need at least " +
                 std::to_string(kNumReservedIds + 12) + " ids");
    }
}

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::classification: return "classification";
        case TaskKind::tagging: return "tagging";
        case TaskKind::mlm_corpus: return "mlm-corpus";
    }
    fail(ErrKind::internal, "unknown task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "classification") return TaskKind::classification;
    if (name == "tagging") return TaskKind::tagging;
    if (name == "mlm-corpus") return TaskKind::mlm_corpus;
    fail(ErrKind::invalid_argument, "unknown task kind '" + name + "'");
}

namespace {

constexpr int64_t kClusterTokens = 2 * MarkovChain::kNumClusters;  // ids 4..11
constexpr int64_t kFirstSingleton = kNumReservedIds + kClusterTokens;

}  // namespace

MarkovChain::MarkovChain(int64_t vocab_size) : vocab_(vocab_size) {
    Vocab v;
    v.size = vocab_size;
    v.validate();

    // One state per cluster plus one per singleton token. Row weights come
    // from a fixed arithmetic pattern, not a seed, so two corpora at the
    // same vocabulary size have identical transition statistics.
    int64_t states = kNumClusters + (vocab_ - kFirstSingleton);
    cum_rows_.assign(static_cast<size_t>(states), {});
    for (int64_t s = 0; s < states; ++s) {
        auto& row = cum_rows_[static_cast<size_t>(s)];
        row.resize(static_cast<size_t>(states));
        double total = 0.0;
        for (int64_t t = 0; t < states; ++t) {
            double w = 1.0 + double((5 * s + 3 * t + s * t) % 7);
            total += w;
            row[static_cast<size_t>(t)] = total;
        }
        for (auto& c : row) c /= total;
        row.back() = 1.0;  // guard against rounding in the last bin
    }
}

int64_t MarkovChain::cluster_of(int32_t token) {
    if (token < kNumReservedIds || token >= kFirstSingleton) return -1;
    return (token - kNumReservedIds) / 2;
}

int32_t MarkovChain::cluster_member(int64_t cluster, int64_t variant) {
    if (cluster < 0 || cluster >= kNumClusters || variant < 0 || variant > 1) {
        fail(ErrKind::invalid_argument, "no cluster member for cluster " + std::to_string(cluster) +
                                            " variant " + std::to_string(variant));
    }
    return int32_t(kNumReservedIds + 2 * cluster + variant);
}

std::vector<int32_t> MarkovChain::sample(int64_t len, Rng& rng) const {
    if (len < 0) fail(ErrKind::invalid_argument, "negative sample length");
    int64_t states = num_states();
    std::vector<int32_t> out;
    out.reserve(static_cast<size_t>(len));
    int64_t s = int64_t(rng.next_below(uint64_t(states)));
    for (int64_t i = 0; i < len; ++i) {
        if (s < kNumClusters) {
            out.push_back(cluster_member(s, int64_t(rng.next_below(2))));
        } else {
            out.push_back(int32_t(kFirstSingleton + (s - kNumClusters)));
        }
        const auto& row = cum_rows_[static_cast<size_t>(s)];
        double u = rng.next_double();
        s = std::upper_bound(row.begin(), row.end(), u) - row.begin();
        if (s >= states) s = states - 1;
    }
    return out;
}

namespace {

std::vector<int32_t> wrap_sequence(std::vector<int32_t> content) {
    std::vector<int32_t> seq;
    seq.reserve(content.size() + 2);
    seq.push_back(kClsId);
    seq.insert(seq.end(), content.begin(), content.end());
    seq.push_back(kSepId);
    return seq;
}

int32_t random_singleton(const Vocab& vocab, Rng& rng) {
    return int32_t(kFirstSingleton + int64_t(rng.next_below(uint64_t(vocab.size - kFirstSingleton))));
}

// Replaces every cluster token so the only triggers present afterwards are
// the ones a task generator plants deliberately.
void scrub_clusters(std::vector<int32_t>& content, const Vocab& vocab, Rng& rng) {
    for (auto& t : content) {
        if (MarkovChain::cluster_of(t) >= 0) t = random_singleton(vocab, rng);
    }
}

}  // namespace

TaskDataset gen_corpus(uint64_t seed, const Vocab& vocab, int64_t num_seq, int64_t len) {
    vocab.validate();
    if (num_seq < 0 || len <= 0) fail(ErrKind::invalid_argument, "corpus needs num_seq >= 0 and len > 0");

    MarkovChain chain(vocab.size);
    Rng root(seed);
    TaskDataset ds;
    ds.kind = TaskKind::mlm_corpus;
    ds.seed = seed;

    int64_t held_out = num_seq > 0 ? std::max<int64_t>(num_seq / 8, 1) : 0;
    Split* splits[3] = {&ds.train, &ds.dev, &ds.test};
    int64_t counts[3] = {num_seq, held_out, held_out};
    for (int part = 0; part < 3; ++part) {
        Rng rng = root.derive(uint64_t(part));
        for (int64_t i = 0; i < counts[part]; ++i) {
            Example ex;
            ex.tokens = wrap_sequence(chain.sample(len, rng));
            splits[part]->items.push_back(std::move(ex));
        }
    }
    return ds;
}

TaskDataset gen_classification_task(uint64_t seed, const Vocab& vocab, int64_t k, int64_t num_per_split,
                                    int64_t len, int64_t variant) {
    vocab.validate();
    if (k < 2 || k > MarkovChain::kNumClusters) {
        fail(ErrKind::invalid_argument,
             "classification needs between 2 and 4 classes, got " + std::to_string(k));
    }
    if (len <= 0 || num_per_split < 0) fail(ErrKind::invalid_argument, "need len > 0 and num_per_split >= 0");
    if (num_per_split % k != 0) {
        fail(ErrKind::invalid_argument, "num_per_split " + std::to_string(num_per_split) +
                                            " not divisible by " + std::to_string(k) +
                                            " classes, cannot balance exactly");
    }
    if (variant != 0 && variant != 1) fail(ErrKind::invalid_argument, "variant must be 0 or 1");

    MarkovChain chain(vocab.size);
    Rng root(seed);
    TaskDataset ds;
    ds.kind = TaskKind::classification;
    ds.num_labels = k;
    ds.seed = seed;
    ds.variant = variant;

    Split* splits[3] = {&ds.train, &ds.dev, &ds.test};
    for (int part = 0; part < 3; ++part) {
        Rng rng = root.derive(uint64_t(part));
        std::vector<int32_t> labels;
        labels.reserve(static_cast<size_t>(num_per_split));
        for (int64_t i = 0; i < num_per_split; ++i) labels.push_back(int32_t(i % k));
        rng.shuffle(labels);
        for (int32_t label : labels) {
            std::vector<int32_t> content = chain.sample(len, rng);
            scrub_clusters(content, vocab, rng);
            content[rng.next_below(uint64_t(len))] = MarkovChain::cluster_member(label, variant);
            Example ex;
            ex.tokens = wrap_sequence(std::move(content));
            ex.label = label;
            splits[part]->items.push_back(std::move(ex));
        }
    }
    return ds;
}

TaskDataset gen_tagging_task(uint64_t seed, const Vocab& vocab, int64_t k, int64_t num_per_split,
                             int64_t len, int64_t variant) {
    vocab.validate();
    if (k < 2 || k > MarkovChain::kNumClusters + 1) {
        fail(ErrKind::invalid_argument, "tagging needs between 2 and 5 tags, got " + std::to_string(k));
    }
    if (len < 2 || num_per_split < 0) fail(ErrKind::invalid_argument, "need len >= 2 and num_per_split >= 0");
    if (variant != 0 && variant != 1) fail(ErrKind::invalid_argument, "variant must be 0 or 1");

    MarkovChain chain(vocab.size);
    Rng root(seed);
    TaskDataset ds;
    ds.kind = TaskKind::tagging;
    ds.num_labels = k;
    ds.seed = seed;
    ds.variant = variant;

    Split* splits[3] = {&ds.train, &ds.dev, &ds.test};
    for (int part = 0; part < 3; ++part) {
        Rng rng = root.derive(uint64_t(part));
        for (int64_t i = 0; i < num_per_split; ++i) {
            std::vector<int32_t> content = chain.sample(len, rng);
            scrub_clusters(content, vocab, rng);

            int64_t planted = std::min<int64_t>(2 + int64_t(rng.next_below(3)), len);
            std::vector<int64_t> positions(static_cast<size_t>(len));
            std::iota(positions.begin(), positions.end(), 0);
            rng.shuffle(positions);
            for (int64_t j = 0; j < planted; ++j) {
                int64_t cluster = int64_t(rng.next_below(uint64_t(k - 1)));
                content[static_cast<size_t>(positions[static_cast<size_t>(j)])] =
                    MarkovChain::cluster_member(cluster, variant);
            }

            Example ex;
            ex.tokens = wrap_sequence(std::move(content));
            ex.tags.assign(ex.tokens.size(), 0);
            for (size_t p = 1; p < ex.tokens.size(); ++p) {
                int64_t c = MarkovChain::cluster_of(ex.tokens[p - 1]);
                if (c >= 0 && c < k - 1) ex.tags[p] = int32_t(c + 1);
            }
            splits[part]->items.push_back(std::move(ex));
        }
    }
    return ds;
}

std::pair<TokenBatch, std::vector<int32_t>> mlm_corrupt(const TokenBatch& batch, const Vocab& vocab,
                                                        uint64_t seed) {
    vocab.validate();
    TokenBatch out = batch;
    std::vector<int32_t> targets(batch.ids.size(), -1);
    Rng rng(seed);
    for (size_t i = 0; i < batch.ids.size(); ++i) {
        int32_t id = batch.ids[i];
        if (id < kNumReservedIds) continue;
        if (id >= vocab.size) {
            fail(ErrKind::invalid_argument, "token id " + std::to_string(id) +
                                                " outside vocabulary of size " + std::to_string(vocab.size));
        }
        if (rng.next_double() >= 0.15) continue;
        targets[i] = id;
        double roll = rng.next_double();
        if (roll < 0.8) {
            out.ids[i] = kMaskId;
        } else if (roll < 0.9) {
            out.ids[i] = int32_t(kNumReservedIds + int64_t(rng.next_below(uint64_t(vocab.size - kNumReservedIds))));
        }
        // final 10%: keep the original token, target still set
    }
    return {std::move(out), std::move(targets)};
}

namespace {

std::vector<int32_t> parse_id_line(const std::string& line, int64_t line_no, const char* what,
                                   int64_t upper, const char* range_name) {
    std::vector<int32_t> out;
    std::istringstream ss(line);
    int64_t value = 0;
    while (ss >> value) {
        if (value < 0 || value >= upper) {
            fail(ErrKind::format, "line " + std::to_string(line_no) + ": " + what + " " +
                                      std::to_string(value) + " outside " + range_name + " of size " +
                                      std::to_string(upper));
        }
        out.push_back(int32_t(value));
    }
    if (!ss.eof()) {
        fail(ErrKind::format,
             "line " + std::to_string(line_no) + ": malformed " + what + " list '" + line + "'");
    }
    return out;
}

}  // namespace

Split load_split_tsv(const std::string& path, TaskKind kind, int64_t num_labels, int64_t vocab_size,
                     int64_t max_len, int64_t* truncated) {
    if (max_len <= 0) fail(ErrKind::invalid_argument, "max_len must be positive");
    std::ifstream in(path);
    if (!in) fail(ErrKind::io, "cannot open '" + path + "' for reading");

    Split split;
    int64_t cut = 0;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        Example ex;
        if (kind == TaskKind::classification) {
            size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                fail(ErrKind::format,
                     "line " + std::to_string(line_no) + ": expected 'label<TAB>token ids'");
            }
            std::vector<int32_t> label =
                parse_id_line(line.substr(0, tab), line_no, "label", num_labels, "label set");
            if (label.size() != 1) {
                fail(ErrKind::format, "line " + std::to_string(line_no) + ": expected exactly one label");
            }
            ex.label = label[0];
            ex.tokens = parse_id_line(line.substr(tab + 1), line_no, "token id", vocab_size, "vocabulary");
        } else if (kind == TaskKind::tagging) {
            ex.tokens = parse_id_line(line, line_no, "token id", vocab_size, "vocabulary");
            if (!std::getline(in, line)) {
                fail(ErrKind::format,
                     "line " + std::to_string(line_no) + ": token line without matching tag line");
            }
            ++line_no;
            ex.tags = parse_id_line(line, line_no, "tag", num_labels, "tag set");
            if (ex.tags.size() != ex.tokens.size()) {
                fail(ErrKind::format, "line " + std::to_string(line_no) + ": " +
                                          std::to_string(ex.tags.size()) + " tags for " +
                                          std::to_string(ex.tokens.size()) + " tokens");
            }
        } else {
            ex.tokens = parse_id_line(line, line_no, "token id", vocab_size, "vocabulary");
        }
        if (int64_t(ex.tokens.size()) > max_len) {
            ex.tokens.resize(static_cast<size_t>(max_len));
            if (!ex.tags.empty()) ex.tags.resize(static_cast<size_t>(max_len));
            ++cut;
        }
        split.items.push_back(std::move(ex));
    }
    if (truncated) *truncated = cut;
    return split;
}

void save_split_tsv(const std::string& path, TaskKind kind, const Split& split) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrKind::io, "cannot open '" + path + "' for writing");
    auto write_ids = [&out](const std::vector<int32_t>& ids) {
        for (size_t i = 0; i < ids.size(); ++i) {
            if (i) out << ' ';
            out << ids[i];
        }
        out << '\n';
    };
    for (const Example& ex : split.items) {
        if (kind == TaskKind::classification) out << ex.label << '\t';
        write_ids(ex.tokens);
        if (kind == TaskKind::tagging) write_ids(ex.tags);
    }
    out.flush();
    if (!out) fail(ErrKind::io, "failed writing '" + path + "'");
}

namespace {

TokenBatch batch_tokens(const std::vector<const Example*>& items, int64_t max_len) {
    std::vector<std::vector<int32_t>> seqs;
    seqs.reserve(items.size());
    for (const Example* ex : items) seqs.push_back(ex->tokens);
    return make_batch(seqs, max_len);
}

}  // namespace

LabeledBatch make_classification_batch(const std::vector<const Example*>& items, int64_t max_len) {
    LabeledBatch b;
    b.tokens = batch_tokens(items, max_len);
    b.labels.reserve(items.size());
    for (const Example* ex : items) b.labels.push_back(ex->label);
    return b;
}

LabeledBatch make_tagging_batch(const std::vector<const Example*>& items, int64_t max_len) {
    LabeledBatch b;
    b.tokens = batch_tokens(items, max_len);
    b.labels.assign(static_cast<size_t>(b.tokens.batch * b.tokens.len), -1);
    for (size_t i = 0; i < items.size(); ++i) {
        const Example* ex = items[i];
        int64_t n = std::min<int64_t>(int64_t(ex->tags.size()), b.tokens.len);
        for (int64_t p = 0; p < n; ++p) {
            b.labels[i * static_cast<size_t>(b.tokens.len) + static_cast<size_t>(p)] = ex->tags[static_cast<size_t>(p)];
        }
    }
    return b;
}

LabeledBatch make_mlm_batch(const std::vector<const Example*>& items, int64_t max_len, const Vocab& vocab,
                            uint64_t seed) {
    LabeledBatch b;
    auto [corrupted, targets] = mlm_corrupt(batch_tokens(items, max_len), vocab, seed);
    b.tokens = std::move(corrupted);
    b.labels = std::move(targets);
    return b;
}

}  // namespace masklm
