#include "skin/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

namespace skin::ckpt {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'I', 'N', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw CheckpointError("truncated checkpoint while reading " + what);
    }
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
    const auto n = read_pod<std::uint32_t>(in, what);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) {
        throw CheckpointError("truncated checkpoint while reading " + what);
    }
    return s;
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw CheckpointError("bad number '" + s + "' for " + key);
    }
    return v;
}

std::size_t parse_size(const std::string& s, const std::string& key) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw CheckpointError("bad integer '" + s + "' for " + key);
    }
    return v;
}

void put_config(Checkpoint& c, const std::string& prefix, const EncoderConfig& cfg) {
    c.meta[prefix + ".layers"] = std::to_string(cfg.layers);
    c.meta[prefix + ".heads"] = std::to_string(cfg.heads);
    c.meta[prefix + ".d_model"] = std::to_string(cfg.d_model);
    c.meta[prefix + ".d_ff"] = std::to_string(cfg.d_ff);
    c.meta[prefix + ".max_len"] = std::to_string(cfg.max_len);
    c.meta[prefix + ".vocab"] = std::to_string(cfg.vocab);
    c.meta[prefix + ".dropout"] = fmt_double(cfg.dropout);
    c.meta[prefix + ".mask_padding"] = cfg.mask_padding ? "1" : "0";
}

EncoderConfig get_config(const Checkpoint& c, const std::string& prefix) {
    EncoderConfig cfg;
    auto sz = [&](const char* k) { return parse_size(c.meta_at(prefix + k), prefix + k); };
    cfg.layers = sz(".layers");
    cfg.heads = sz(".heads");
    cfg.d_model = sz(".d_model");
    cfg.d_ff = sz(".d_ff");
    cfg.max_len = sz(".max_len");
    cfg.vocab = sz(".vocab");
    cfg.dropout = parse_double(c.meta_at(prefix + ".dropout"), prefix + ".dropout");
    cfg.mask_padding = c.meta_at(prefix + ".mask_padding") == "1";
    cfg.validate();
    return cfg;
}

void put_params(Checkpoint& c, const ParamList& list) {
    for (const auto& p : list) {
        Tensor copy(p.tensor->shape(), std::vector<double>(p.tensor->data().begin(), p.tensor->data().end()));
        c.put("param." + p.name, std::move(copy));
    }
}

void get_params(const Checkpoint& c, const ParamList& list) {
    for (const auto& p : list) {
        const Tensor& src = c.get("param." + p.name);
        if (src.shape() != p.tensor->shape()) {
            throw CheckpointError("parameter " + p.name + " has shape " + shape_str(src.shape()) + ", model expects " +
                                  shape_str(p.tensor->shape()));
        }
        std::copy(src.data().begin(), src.data().end(), p.tensor->data().begin());
    }
}

void expect_kind(const Checkpoint& c, const std::string& expected) {
    const std::string found = kind_of(c);
    if (found != expected) {
        throw KindMismatch(expected, found);
    }
}

}  // namespace

void Checkpoint::put(const std::string& name, Tensor t) {
    for (auto& [n, existing] : tensors) {
        if (n == name) {
            existing = std::move(t);
            return;
        }
    }
    tensors.emplace_back(name, std::move(t));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) {
            return true;
        }
    }
    return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) {
            return t;
        }
    }
    throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) {
        throw CheckpointError("checkpoint has no metadata '" + key + "'");
    }
    return it->second;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
    // Write to a sibling file first so an interrupted save never leaves a
    // truncated checkpoint behind.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
        out.write(kMagic, sizeof(kMagic));
        write_pod<std::uint32_t>(out, kVersion);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
        for (const auto& [k, v] : ckpt.meta) {
            write_string(out, k);
            write_string(out, v);
        }
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
        for (const auto& [name, t] : ckpt.tensors) {
            write_string(out, name);
            // A default-constructed tensor has no shape and no data; store it as [0].
            const Shape shape = (t.rank() == 0 && t.size() == 0) ? Shape{0} : t.shape();
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
            for (std::size_t d : shape) {
                write_pod<std::uint64_t>(out, d);
            }
            out.write(reinterpret_cast<const char*>(t.data().data()),
                      static_cast<std::streamsize>(t.size() * sizeof(double)));
        }
        if (!out) {
            throw IoError("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError(path.string() + " is not a checkpoint");
    }
    const auto version = read_pod<std::uint32_t>(in, "version");
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    const auto nmeta = read_pod<std::uint32_t>(in, "metadata count");
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        std::string k = read_string(in, "metadata key");
        c.meta[k] = read_string(in, "metadata value");
    }
    const auto ntensors = read_pod<std::uint32_t>(in, "tensor count");
    for (std::uint32_t i = 0; i < ntensors; ++i) {
        std::string name = read_string(in, "tensor name");
        const auto rank = read_pod<std::uint32_t>(in, name);
        if (rank > 8) {
            throw CheckpointError("tensor " + name + " has implausible rank " + std::to_string(rank));
        }
        Shape shape(rank);
        for (auto& d : shape) {
            d = read_pod<std::uint64_t>(in, name);
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) {
            throw CheckpointError("truncated checkpoint while reading " + name);
        }
        c.tensors.emplace_back(std::move(name), std::move(t));
    }
    return c;
}

std::string kind_of(const Checkpoint& ckpt) { return ckpt.meta_at("kind"); }

void put_skin(Checkpoint& ckpt, SkinParams& params) {
    ckpt.meta["kind"] = "skin";
    ckpt.meta["classes"] = std::to_string(params.classes());
    put_config(ckpt, "lite", params.lite.config);
    put_config(ckpt, "strong", params.strong.config);
    put_params(ckpt, params.params());
}

SkinParams get_skin(const Checkpoint& ckpt) {
    expect_kind(ckpt, "skin");
    rnd::Engine rng(0);
    SkinParams p = SkinParams::init(get_config(ckpt, "lite"), get_config(ckpt, "strong"),
                                    parse_size(ckpt.meta_at("classes"), "classes"), rng);
    get_params(ckpt, p.params());
    return p;
}

void put_baseline(Checkpoint& ckpt, BaselineParams& params) {
    ckpt.meta["kind"] = "baseline:" + to_string(params.kind);
    ckpt.meta["classes"] = std::to_string(params.classes());
    ckpt.meta["cap"] = std::to_string(params.cap);
    ckpt.meta["half"] = std::to_string(params.half);
    put_config(ckpt, "strong", params.strong.config);
    put_params(ckpt, params.params());
}

BaselineParams get_baseline(const Checkpoint& ckpt, BaselineKind expected) {
    expect_kind(ckpt, "baseline:" + to_string(expected));
    rnd::Engine rng(0);
    BaselineParams p = BaselineParams::init(expected, get_config(ckpt, "strong"),
                                            parse_size(ckpt.meta_at("classes"), "classes"),
                                            parse_size(ckpt.meta_at("cap"), "cap"),
                                            parse_size(ckpt.meta_at("half"), "half"), rng);
    get_params(ckpt, p.params());
    return p;
}

void put_vocab(Checkpoint& ckpt, const Vocab& vocab) {
    std::string joined;
    for (const auto& t : vocab.tokens()) {
        joined += t;
        joined += '\n';
    }
    ckpt.meta["vocab"] = joined;
}

Vocab get_vocab(const Checkpoint& ckpt) {
    const std::string& joined = ckpt.meta_at("vocab");
    std::vector<std::string> tokens;
    std::size_t start = 0;
    for (std::size_t i = 0; i < joined.size(); ++i) {
        if (joined[i] == '\n') {
            tokens.push_back(joined.substr(start, i - start));
            start = i + 1;
        }
    }
    return Vocab::from_tokens(tokens);
}

void put_state(Checkpoint& ckpt, const std::string& prefix, const StageState& state) {
    ckpt.put(prefix + ".scalars",
             Tensor({4}, std::vector<double>{static_cast<double>(state.epochs_done), state.best_loss,
                                             static_cast<double>(state.stale_epochs), state.finished ? 1.0 : 0.0}));
    Tensor curve({state.curve.size(), 4});
    for (std::size_t i = 0; i < state.curve.size(); ++i) {
        const auto& e = state.curve[i];
        curve.at(i, 0) = e.stage;
        curve.at(i, 1) = static_cast<double>(e.epoch);
        curve.at(i, 2) = e.mean_loss;
        curve.at(i, 3) = e.train_acc;
    }
    ckpt.put(prefix + ".curve", std::move(curve));
    Tensor steps({state.adam.size()});
    for (std::size_t i = 0; i < state.adam.size(); ++i) {
        steps[i] = static_cast<double>(state.adam[i].t);
        ckpt.put(prefix + ".adam." + std::to_string(i) + ".m", state.adam[i].m);
        ckpt.put(prefix + ".adam." + std::to_string(i) + ".v", state.adam[i].v);
    }
    ckpt.put(prefix + ".adam_steps", std::move(steps));
}

bool has_state(const Checkpoint& ckpt, const std::string& prefix) { return ckpt.has(prefix + ".scalars"); }

StageState get_state(const Checkpoint& ckpt, const std::string& prefix) {
    StageState s;
    const Tensor& sc = ckpt.get(prefix + ".scalars");
    if (sc.size() != 4) {
        throw CheckpointError(prefix + ".scalars must hold 4 values");
    }
    s.epochs_done = static_cast<std::size_t>(sc[0]);
    s.best_loss = sc[1];
    s.stale_epochs = static_cast<std::size_t>(sc[2]);
    s.finished = sc[3] != 0.0;
    const Tensor& curve = ckpt.get(prefix + ".curve");
    const std::size_t rows = curve.size() / 4;
    for (std::size_t i = 0; i < rows; ++i) {
        EpochStats e;
        e.stage = static_cast<int>(curve.data()[i * 4]);
        e.epoch = static_cast<std::size_t>(curve.data()[i * 4 + 1]);
        e.mean_loss = curve.data()[i * 4 + 2];
        e.train_acc = curve.data()[i * 4 + 3];
        s.curve.push_back(e);
    }
    const Tensor& steps = ckpt.get(prefix + ".adam_steps");
    s.adam.resize(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        s.adam[i].t = static_cast<std::int64_t>(steps[i]);
        s.adam[i].m = ckpt.get(prefix + ".adam." + std::to_string(i) + ".m");
        s.adam[i].v = ckpt.get(prefix + ".adam." + std::to_string(i) + ".v");
    }
    return s;
}

void put_keys(Checkpoint& ckpt, std::span<const KeySegment> keys) {
    Tensor t({keys.size(), 2});
    for (std::size_t i = 0; i < keys.size(); ++i) {
        t.at(i, 0) = static_cast<double>(keys[i].k);
        t.at(i, 1) = static_cast<double>(keys[i].start);
    }
    ckpt.put("keys", std::move(t));
}

std::vector<KeySegment> get_keys(const Checkpoint& ckpt, std::span<const SegmentedDoc> docs) {
    const Tensor& t = ckpt.get("keys");
    const std::size_t rows = t.size() / 2;
    if (rows != docs.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(rows) + " key segments for " +
                              std::to_string(docs.size()) + " documents");
    }
    std::vector<KeySegment> keys(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto k = static_cast<std::size_t>(t.data()[i * 2]);
        const auto [start, end] = key_span_bounds(k, docs[i].n, docs[i].l);
        if (static_cast<std::size_t>(t.data()[i * 2 + 1]) != start) {
            throw CheckpointError("stored key start disagrees with the selection rule for document " +
                                  std::to_string(i));
        }
        keys[i].k = k;
        keys[i].start = start;
        keys[i].span.assign(docs[i].tokens.begin() + static_cast<std::ptrdiff_t>(start),
                            docs[i].tokens.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return keys;
}

}  // namespace skin::ckpt
