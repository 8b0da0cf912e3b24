#include "serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace masklm {

namespace {

using nlohmann::json;

void put_u32(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(char(uint8_t(v >> (8 * i))));
}

void put_u64(std::string& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(char(uint8_t(v >> (8 * i))));
}

void put_i64(std::string& b, int64_t v) { put_u64(b, uint64_t(v)); }

void put_f32(std::string& b, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(b, u);
}

void put_str(std::string& b, const std::string& s) {
    put_u64(b, s.size());
    b += s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrKind::io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrKind::io, "read from '" + path + "' failed");
    return ss.str();
}

// Little-endian cursor over a loaded file. Every primitive read names what
// it was after and where the file ran out.
struct Reader {
    const std::string& buf;
    const std::string& path;
    size_t off = 0;

    void need(uint64_t n, const std::string& what) {
        if (uint64_t(buf.size()) - uint64_t(off) < n) {
            fail(ErrKind::format, path + ": truncated at byte " + std::to_string(off) + " reading " + what +
                                      " (expected " + std::to_string(uint64_t(off) + n) + " bytes, file has " +
                                      std::to_string(buf.size()) + ")");
        }
    }

    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[off + size_t(i)])) << (8 * i);
        off += 4;
        return v;
    }

    uint64_t u64(const std::string& what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[off + size_t(i)])) << (8 * i);
        off += 8;
        return v;
    }

    int64_t i64(const std::string& what) { return int64_t(u64(what)); }

    float f32(const std::string& what) {
        uint32_t u = u32(what);
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    }

    std::string str(const std::string& what) {
        uint64_t n = u64(what + " length");
        need(n, what);
        std::string s = buf.substr(off, size_t(n));
        off += size_t(n);
        return s;
    }

    const char* raw(uint64_t n, const std::string& what) {
        need(n, what);
        const char* p = buf.data() + off;
        off += size_t(n);
        return p;
    }

    void expect_magic(const char* magic, const std::string& kind) {
        need(4, "magic");
        if (std::memcmp(buf.data(), magic, 4) != 0) {
            fail(ErrKind::format, path + ": bad magic at byte 0 (not a " + kind + " file)");
        }
        off = 4;
    }

    void expect_end() {
        if (off != buf.size()) {
            fail(ErrKind::format, path + ": " + std::to_string(buf.size() - off) +
                                      " unexpected trailing bytes at byte " + std::to_string(off));
        }
    }
};

void require_no_masks(const Model& m, const char* what) {
    for (auto& slot : mask_eligible(const_cast<Model&>(m))) {
        if (slot.layer->mask) {
            fail(ErrKind::invalid_argument,
                 std::string(what) + " hold dense weights; materialize or drop the masks first");
        }
    }
}

json parse_json(Reader& r, const std::string& what) {
    size_t at = r.off;
    std::string text = r.str(what);
    try {
        return json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrKind::format,
             r.path + ": " + what + " at byte " + std::to_string(at) + " is not valid JSON: " + e.what());
    }
}

constexpr uint32_t kCheckpointVersion = 1;
constexpr uint32_t kMaskVersion = 1;

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrKind::io, "cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) fail(ErrKind::io, "write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) fail(ErrKind::io, "cannot move '" + tmp.string() + "' into place: " + ec.message());
}

void save_checkpoint(const std::string& path, const Model& m, const CheckpointMeta& meta) {
    require_no_masks(m, "checkpoints");

    json cfg = {
        {"arch",
         {{"num_blocks", m.cfg.num_blocks},
          {"hidden", m.cfg.hidden},
          {"feed_forward", m.cfg.feed_forward},
          {"heads", m.cfg.heads},
          {"vocab_size", m.cfg.vocab_size},
          {"max_len", m.cfg.max_len},
          {"num_labels", m.cfg.num_labels},
          {"type_vocab", m.cfg.type_vocab}}},
        {"seed", meta.seed},
        {"regime", meta.regime},
        {"note", meta.note},
    };

    auto params = parameters(m);
    std::string blob;
    blob += "MWCK";
    put_u32(blob, kCheckpointVersion);
    put_str(blob, cfg.dump());
    put_u64(blob, params.size());
    uint64_t offset = 0;
    for (const auto& p : params) {
        put_str(blob, p.name);
        put_u32(blob, uint32_t(p.t.shape().size()));
        for (int64_t d : p.t.shape()) put_i64(blob, d);
        put_u64(blob, offset);
        offset += uint64_t(p.t.data().size()) * 4;
    }
    put_u64(blob, offset);
    for (const auto& p : params) {
        for (float v : p.t.data()) put_f32(blob, v);
    }
    write_file_atomic(path, blob);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::string buf = slurp(path);
    Reader r{buf, path};
    r.expect_magic("MWCK", "checkpoint");
    uint32_t version = r.u32("format version");
    if (version != kCheckpointVersion) {
        fail(ErrKind::format, path + ": unsupported checkpoint version " + std::to_string(version) +
                                  " at byte 4 (expected " + std::to_string(kCheckpointVersion) + ")");
    }

    json cfg = parse_json(r, "config block");
    CheckpointMeta meta;
    try {
        const json& a = cfg.at("arch");
        meta.arch.num_blocks = a.at("num_blocks").get<int64_t>();
        meta.arch.hidden = a.at("hidden").get<int64_t>();
        meta.arch.feed_forward = a.at("feed_forward").get<int64_t>();
        meta.arch.heads = a.at("heads").get<int64_t>();
        meta.arch.vocab_size = a.at("vocab_size").get<int64_t>();
        meta.arch.max_len = a.at("max_len").get<int64_t>();
        meta.arch.num_labels = a.at("num_labels").get<int64_t>();
        meta.arch.type_vocab = a.at("type_vocab").get<int64_t>();
        meta.seed = cfg.at("seed").get<uint64_t>();
        meta.regime = cfg.at("regime").get<std::string>();
        meta.note = cfg.value("note", std::string());
    } catch (const json::exception& e) {
        fail(ErrKind::format, path + ": config block is missing fields: " + e.what());
    }
    try {
        meta.arch.validate();
    } catch (const Error& e) {
        fail(ErrKind::format, path + ": config block describes an invalid architecture: " + e.what());
    }

    Model model = init_model(meta.arch, 0);
    auto params = parameters(model);

    uint64_t count = r.u64("tensor count");
    if (count != params.size()) {
        fail(ErrKind::format, path + ": manifest lists " + std::to_string(count) +
                                  " tensors but this architecture has " + std::to_string(params.size()));
    }

    struct Entry {
        size_t param;
        uint64_t offset;
        uint64_t bytes;
    };
    std::vector<Entry> entries;
    std::set<std::string> seen;
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = r.str("tensor name");
        uint32_t rank = r.u32("tensor rank");
        if (rank > 8) fail(ErrKind::format, path + ": tensor '" + name + "' claims rank " + std::to_string(rank));
        Shape shape;
        for (uint32_t dgt = 0; dgt < rank; ++dgt) shape.push_back(r.i64("tensor dimension"));
        uint64_t offset = r.u64("tensor offset");

        size_t idx = params.size();
        for (size_t p = 0; p < params.size(); ++p) {
            if (params[p].name == name) {
                idx = p;
                break;
            }
        }
        if (idx == params.size()) fail(ErrKind::format, path + ": manifest names unknown tensor '" + name + "'");
        if (!seen.insert(name).second) {
            fail(ErrKind::format, path + ": manifest repeats tensor '" + name + "'");
        }
        if (shape != params[idx].t.shape()) {
            fail(ErrKind::format, path + ": tensor '" + name + "' has shape " + shape_str(shape) +
                                      ", architecture expects " + shape_str(params[idx].t.shape()));
        }
        entries.push_back({idx, offset, uint64_t(params[idx].t.data().size()) * 4});
    }

    uint64_t payload_len = r.u64("payload length");
    size_t payload_start = r.off;
    r.need(payload_len, "payload");

    std::vector<Entry> sorted = entries;
    std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) { return a.offset < b.offset; });
    uint64_t end = 0;
    for (const auto& e : sorted) {
        if (e.offset < end) {
            fail(ErrKind::format, path + ": manifest offsets overlap around tensor '" +
                                      params[e.param].name + "' (offset " + std::to_string(e.offset) + ")");
        }
        if (e.offset > payload_len || payload_len - e.offset < e.bytes) {
            fail(ErrKind::format, path + ": tensor '" + params[e.param].name + "' (offset " +
                                      std::to_string(e.offset) + ", " + std::to_string(e.bytes) +
                                      " bytes) extends past the " + std::to_string(payload_len) +
                                      "-byte payload");
        }
        end = e.offset + e.bytes;
    }

    for (const auto& e : entries) {
        auto& data = params[e.param].t.data();
        const char* src = buf.data() + payload_start + size_t(e.offset);
        for (size_t i = 0; i < data.size(); ++i) {
            uint32_t u = 0;
            for (int byte = 0; byte < 4; ++byte) {
                u |= uint32_t(uint8_t(src[i * 4 + size_t(byte)])) << (8 * byte);
            }
            std::memcpy(&data[i], &u, 4);
        }
    }
    r.off = payload_start + size_t(payload_len);
    r.expect_end();
    return {std::move(model), std::move(meta)};
}

void save_maskfile(const std::string& path, const MaskFileData& d) {
    d.masking.validate();
    d.arch.validate();
    if (int64_t(d.classifier.size()) != d.arch.hidden * d.arch.num_labels) {
        fail(ErrKind::invalid_argument,
             "classifier has " + std::to_string(d.classifier.size()) + " floats, expected " +
                 std::to_string(d.arch.hidden * d.arch.num_labels));
    }
    if (d.layers.empty()) fail(ErrKind::invalid_argument, "mask file needs at least one layer");

    json desc = {
        {"arch",
         {{"num_blocks", d.arch.num_blocks},
          {"hidden", d.arch.hidden},
          {"feed_forward", d.arch.feed_forward},
          {"heads", d.arch.heads},
          {"vocab_size", d.arch.vocab_size},
          {"max_len", d.arch.max_len},
          {"num_labels", d.arch.num_labels},
          {"type_vocab", d.arch.type_vocab}}},
        {"plan",
         {{"blocks", d.plan.blocks}, {"pooler", d.plan.pooler}, {"classifier", d.plan.classifier}}},
        {"masking",
         {{"seed", d.masking.seed},
          {"init_sparsity", double(d.masking.init_sparsity)},
          {"init_halfwidth", double(d.masking.init_halfwidth)},
          {"tau", double(d.masking.tau)}}},
        {"train_seed", d.train_seed},
        {"metric_name", d.metric_name},
    };

    std::string blob;
    blob += "MSKB";
    put_u32(blob, kMaskVersion);
    put_f32(blob, d.tau);
    put_str(blob, desc.dump());
    uint64_t metric_bits;
    std::memcpy(&metric_bits, &d.dev_metric, 8);
    put_u64(blob, metric_bits);
    put_u64(blob, d.layers.size());
    for (const auto& [name, bits] : d.layers) {
        if (bits.rows() < 1 || bits.cols() < 1) {
            fail(ErrKind::invalid_argument, "layer '" + name + "' mask has no cells");
        }
        put_str(blob, name);
        put_i64(blob, bits.rows());
        put_i64(blob, bits.cols());
        blob.append(reinterpret_cast<const char*>(bits.bytes().data()), bits.bytes().size());
    }
    put_u64(blob, d.classifier.size());
    for (float v : d.classifier) put_f32(blob, v);
    write_file_atomic(path, blob);
}

MaskFileData load_maskfile(const std::string& path) {
    std::string buf = slurp(path);
    Reader r{buf, path};
    r.expect_magic("MSKB", "mask");
    uint32_t version = r.u32("format version");
    if (version != kMaskVersion) {
        fail(ErrKind::format, path + ": unsupported mask file version " + std::to_string(version) +
                                  " at byte 4 (expected " + std::to_string(kMaskVersion) + ")");
    }

    MaskFileData d;
    d.tau = r.f32("threshold");
    json desc = parse_json(r, "plan descriptor");
    try {
        const json& a = desc.at("arch");
        d.arch.num_blocks = a.at("num_blocks").get<int64_t>();
        d.arch.hidden = a.at("hidden").get<int64_t>();
        d.arch.feed_forward = a.at("feed_forward").get<int64_t>();
        d.arch.heads = a.at("heads").get<int64_t>();
        d.arch.vocab_size = a.at("vocab_size").get<int64_t>();
        d.arch.max_len = a.at("max_len").get<int64_t>();
        d.arch.num_labels = a.at("num_labels").get<int64_t>();
        d.arch.type_vocab = a.at("type_vocab").get<int64_t>();
        const json& plan = desc.at("plan");
        d.plan.blocks = plan.at("blocks").get<std::vector<int64_t>>();
        d.plan.pooler = plan.at("pooler").get<bool>();
        d.plan.classifier = plan.at("classifier").get<bool>();
        const json& mk = desc.at("masking");
        d.masking.seed = mk.at("seed").get<uint64_t>();
        d.masking.init_sparsity = float(mk.at("init_sparsity").get<double>());
        d.masking.init_halfwidth = float(mk.at("init_halfwidth").get<double>());
        d.masking.tau = float(mk.at("tau").get<double>());
        d.train_seed = desc.at("train_seed").get<uint64_t>();
        d.metric_name = desc.at("metric_name").get<std::string>();
    } catch (const json::exception& e) {
        fail(ErrKind::format, path + ": plan descriptor is missing fields: " + e.what());
    }
    try {
        d.arch.validate();
    } catch (const Error& e) {
        fail(ErrKind::format, path + ": plan descriptor has an invalid architecture: " + e.what());
    }

    uint64_t metric_bits = r.u64("dev metric");
    std::memcpy(&d.dev_metric, &metric_bits, 8);

    uint64_t layer_count = r.u64("layer count");
    std::set<std::string> seen;
    for (uint64_t i = 0; i < layer_count; ++i) {
        std::string name = r.str("layer name");
        if (!seen.insert(name).second) fail(ErrKind::format, path + ": repeated layer '" + name + "'");
        int64_t rows = r.i64("mask rows");
        int64_t cols = r.i64("mask cols");
        if (rows < 1 || cols < 1 || rows > (int64_t(1) << 24) || cols > (int64_t(1) << 24)) {
            fail(ErrKind::format, path + ": layer '" + name + "' claims " + std::to_string(rows) + "x" +
                                      std::to_string(cols) + " mask");
        }
        BitMatrix bits(rows, cols);
        uint64_t nbytes = uint64_t(bits.bytes().size());
        const char* src = r.raw(nbytes, "layer '" + name + "' bit payload");
        std::memcpy(bits.bytes().data(), src, size_t(nbytes));
        // the pad bits of the final byte must be zero
        for (int64_t cell = rows * cols; cell < int64_t(nbytes) * 8; ++cell) {
            if ((uint8_t(bits.bytes()[size_t(cell >> 3)]) >> (cell & 7)) & 1u) {
                fail(ErrKind::format, path + ": layer '" + name + "' has nonzero padding bits");
            }
        }
        d.layers.emplace_back(std::move(name), std::move(bits));
    }

    uint64_t cls_count = r.u64("classifier float count");
    if (int64_t(cls_count) != d.arch.hidden * d.arch.num_labels) {
        fail(ErrKind::format, path + ": classifier holds " + std::to_string(cls_count) +
                                  " floats, descriptor promises " +
                                  std::to_string(d.arch.hidden * d.arch.num_labels));
    }
    d.classifier.resize(size_t(cls_count));
    for (auto& v : d.classifier) v = r.f32("classifier weight");
    r.expect_end();
    return d;
}

MaskFileData extract_masks(const Model& m, const TrainConfig& cfg, double dev_metric,
                           const std::string& metric_name) {
    MaskFileData d;
    d.tau = cfg.masking.tau;
    d.plan = cfg.plan;
    d.masking = cfg.masking;
    d.train_seed = cfg.seed;
    d.arch = m.cfg;
    d.metric_name = metric_name;
    d.dev_metric = dev_metric;
    for (auto& slot : mask_eligible(const_cast<Model&>(m))) {
        if (!slot.layer->mask) continue;
        d.layers.emplace_back(slot.key, slot.layer->mask->binary_mask());
    }
    if (d.layers.empty()) fail(ErrKind::invalid_argument, "the model has no engaged masks to extract");
    d.classifier = m.classifier.W.data();
    return d;
}

Model reconstruct(const Model& backbone, const MaskFileData& d) {
    require_no_masks(backbone, "reconstruction backbones");
    auto check = [&](int64_t file_v, int64_t backbone_v, const char* field) {
        if (file_v != backbone_v) {
            fail(ErrKind::invalid_argument, std::string("mask file was built for ") + field + " " +
                                                std::to_string(file_v) + " but the backbone has " +
                                                std::to_string(backbone_v));
        }
    };
    check(d.arch.num_blocks, backbone.cfg.num_blocks, "block count");
    check(d.arch.hidden, backbone.cfg.hidden, "hidden size");
    check(d.arch.feed_forward, backbone.cfg.feed_forward, "feed-forward size");
    check(d.arch.heads, backbone.cfg.heads, "head count");
    check(d.arch.vocab_size, backbone.cfg.vocab_size, "vocabulary size");
    check(d.arch.max_len, backbone.cfg.max_len, "sequence capacity");
    check(d.arch.type_vocab, backbone.cfg.type_vocab, "segment vocabulary");
    if (int64_t(d.classifier.size()) != d.arch.hidden * d.arch.num_labels) {
        fail(ErrKind::invalid_argument,
             "classifier has " + std::to_string(d.classifier.size()) + " floats, expected " +
                 std::to_string(d.arch.hidden * d.arch.num_labels));
    }

    Model out = clone_model(backbone);
    out.cfg.num_labels = d.arch.num_labels;
    out.classifier.W = Tensor({d.arch.hidden, d.arch.num_labels}, d.classifier);

    auto slots = mask_eligible(out);
    for (const auto& [name, bits] : d.layers) {
        Linear* layer = nullptr;
        for (auto& slot : slots) {
            if (slot.key == name) {
                layer = slot.layer;
                break;
            }
        }
        if (layer == nullptr) {
            fail(ErrKind::invalid_argument, "mask file names unknown layer '" + name + "'");
        }
        if (layer->W.dim(0) != bits.rows() || layer->W.dim(1) != bits.cols()) {
            fail(ErrKind::invalid_argument,
                 "mask for '" + name + "' is " + std::to_string(bits.rows()) + "x" +
                     std::to_string(bits.cols()) + " but the layer weight is " +
                     std::to_string(layer->W.dim(0)) + "x" + std::to_string(layer->W.dim(1)));
        }
        layer->W = apply_bitmask(layer->W, bits);
    }
    set_all_trainable(out, false);
    return out;
}

std::vector<std::pair<std::string, BitMatrix>> initial_masks(const TransformerConfig& arch,
                                                             const MaskPlan& plan,
                                                             const MaskingConfig& mcfg) {
    arch.validate();
    mcfg.validate();
    std::vector<bool> selected(static_cast<size_t>(arch.num_blocks), false);
    for (int64_t b : plan.blocks) {
        if (b < 0 || b >= arch.num_blocks) {
            fail(ErrKind::invalid_argument, "mask plan block " + std::to_string(b) + " outside [0," +
                                                std::to_string(arch.num_blocks) + ")");
        }
        if (selected[size_t(b)]) fail(ErrKind::invalid_argument, "mask plan repeats block " + std::to_string(b));
        selected[size_t(b)] = true;
    }

    // mirrors the layer walk and per-slot streams used when masks are first
    // engaged on a model, so these are the exact initialization masks
    struct Spec {
        std::string key;
        int64_t rows, cols;
        bool wanted;
    };
    int64_t d = arch.hidden, ff = arch.feed_forward;
    std::vector<Spec> specs;
    for (int64_t i = 0; i < arch.num_blocks; ++i) {
        std::string base = "block" + std::to_string(i) + ".";
        bool w = selected[size_t(i)];
        specs.push_back({base + "attention.key", d, d, w});
        specs.push_back({base + "attention.query", d, d, w});
        specs.push_back({base + "attention.value", d, d, w});
        specs.push_back({base + "attention.output", d, d, w});
        specs.push_back({base + "ffn.inner", d, ff, w});
        specs.push_back({base + "ffn.outer", ff, d, w});
    }
    specs.push_back({"pooler", d, d, plan.pooler});
    specs.push_back({"classifier", d, arch.num_labels, plan.classifier});

    Rng root(mcfg.seed);
    std::vector<std::pair<std::string, BitMatrix>> out;
    for (size_t ordinal = 0; ordinal < specs.size(); ++ordinal) {
        if (!specs[ordinal].wanted) continue;
        Rng stream = root.derive(uint64_t(ordinal));
        Tensor scores = init_scores({specs[ordinal].rows, specs[ordinal].cols}, mcfg, stream);
        out.emplace_back(specs[ordinal].key, binarize(scores, mcfg.tau));
    }
    return out;
}

namespace {

constexpr const char* kDatasetMeta = "dataset.meta";
// splits never truncate on load: generation already bounded the lengths
constexpr int64_t kNoTruncation = int64_t(1) << 40;

std::string meta_value(const std::map<std::string, std::string>& kv, const std::string& path,
                       const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrKind::format, path + ": dataset meta is missing '" + key + "'");
    return it->second;
}

int64_t meta_int(const std::map<std::string, std::string>& kv, const std::string& path,
                 const std::string& key) {
    const std::string& v = meta_value(kv, path, key);
    try {
        size_t used = 0;
        int64_t n = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        fail(ErrKind::format, path + ": dataset meta '" + key + "' is not an integer: '" + v + "'");
    }
}

}  // namespace

void save_dataset(const std::string& dir, const TaskDataset& task, int64_t vocab_size) {
    Vocab v{vocab_size};
    v.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrKind::io, "cannot create '" + dir + "': " + ec.message());

    save_split_tsv(dir + "/train.tsv", task.kind, task.train);
    save_split_tsv(dir + "/dev.tsv", task.kind, task.dev);
    save_split_tsv(dir + "/test.tsv", task.kind, task.test);

    Report meta;
    meta.put("op", "dataset");
    meta.put("kind", task_kind_name(task.kind));
    meta.put("num_labels", task.num_labels);
    meta.put("seed", task.seed);
    meta.put("variant", task.variant);
    meta.put("vocab_size", vocab_size);
    meta.put("train_count", int64_t(task.train.items.size()));
    meta.put("dev_count", int64_t(task.dev.items.size()));
    meta.put("test_count", int64_t(task.test.items.size()));
    write_file_atomic(dir + "/" + kDatasetMeta, meta.render());
}

LoadedDataset load_dataset(const std::string& dir) {
    std::string meta_path = dir + "/" + kDatasetMeta;
    std::string text = slurp(meta_path);
    std::map<std::string, std::string> kv;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) break;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            fail(ErrKind::format, meta_path + ": meta line without a tab: '" + line + "'");
        }
        kv.emplace(line.substr(0, tab), line.substr(tab + 1));
    }

    LoadedDataset out;
    out.task.kind = task_kind_from_name(meta_value(kv, meta_path, "kind"));
    out.task.num_labels = meta_int(kv, meta_path, "num_labels");
    out.task.seed = uint64_t(meta_int(kv, meta_path, "seed"));
    out.task.variant = meta_int(kv, meta_path, "variant");
    out.vocab_size = meta_int(kv, meta_path, "vocab_size");

    out.task.train = load_split_tsv(dir + "/train.tsv", out.task.kind, out.task.num_labels,
                                    out.vocab_size, kNoTruncation);
    out.task.dev = load_split_tsv(dir + "/dev.tsv", out.task.kind, out.task.num_labels,
                                  out.vocab_size, kNoTruncation);
    out.task.test = load_split_tsv(dir + "/test.tsv", out.task.kind, out.task.num_labels,
                                   out.vocab_size, kNoTruncation);

    auto check_count = [&](const char* key, const Split& split) {
        int64_t promised = meta_int(kv, meta_path, key);
        if (promised != int64_t(split.items.size())) {
            fail(ErrKind::format, meta_path + ": " + key + " promises " + std::to_string(promised) +
                                      " examples, the split file has " + std::to_string(split.items.size()));
        }
    };
    check_count("train_count", out.task.train);
    check_count("dev_count", out.task.dev);
    check_count("test_count", out.task.test);
    return out;
}

}  // namespace masklm
