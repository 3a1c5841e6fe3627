#include "skin/textio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace skin {

namespace {
const std::vector<std::string> kReserved = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
}

Vocab::Vocab() {
    for (const auto& t : kReserved) {
        add(t);
    }
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < kReservedTokens ||
        !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
        throw ValidationError("vocab must start with [PAD], [UNK], [CLS], [SEP]");
    }
    Vocab v;
    for (std::size_t i = kReservedTokens; i < tokens.size(); ++i) {
        if (v.find(tokens[i])) {
            throw ValidationError("vocab: duplicate token '" + tokens[i] + "'");
        }
        v.add(tokens[i]);
    }
    return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open vocab file " + path.string());
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(line);
    }
    return from_tokens(tokens);
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write vocab file " + path.string());
    }
    for (const auto& t : tokens_) {
        out << t << '\n';
    }
}

Vocab Vocab::build(std::span<const std::string> texts) {
    Vocab v;
    for (const auto& text : texts) {
        for (const auto& w : split_words(text)) {
            if (!v.find(w)) {
                v.add(w);
            }
        }
    }
    return v;
}

TokenId Vocab::add(std::string_view token) {
    if (auto existing = find(token)) {
        return *existing;
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(token);
    ids_.emplace(tokens_.back(), id);
    return id;
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

TokenId Vocab::lookup(std::string_view token) const { return find(token).value_or(kUnkId); }

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw ValidationError("vocab: id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isspace(uc)) {
            flush();
        } else if (uc < 0x80 && std::ispunct(uc)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(static_cast<char>(std::tolower(uc)));
        }
    }
    flush();
    return words;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab) {
    std::vector<TokenId> ids;
    for (const auto& w : split_words(text)) {
        ids.push_back(vocab.lookup(w));
    }
    return ids;
}

std::span<const TokenId> SegmentedDoc::segment(std::size_t i) const {
    if (i >= n) {
        throw std::out_of_range("segment index " + std::to_string(i) + " >= " + std::to_string(n));
    }
    return std::span<const TokenId>(tokens).subspan(i * l, l);
}

void validate_segmentation(std::size_t n, std::size_t l) {
    if (n < 2) {
        throw ConfigError("segment count n must be at least 2, got " + std::to_string(n));
    }
    if (l < 4 || l % 4 != 0) {
        throw ConfigError("segment length l must be a positive multiple of 4, got " +
                          std::to_string(l));
    }
}

SegmentedDoc segment_document(std::span<const TokenId> ids, std::size_t n, std::size_t l, int label) {
    validate_segmentation(n, l);
    if (label < 0) {
        throw ValidationError("label must be non-negative");
    }
    SegmentedDoc doc;
    doc.n = n;
    doc.l = l;
    doc.label = label;
    doc.raw_length = ids.size();
    const std::size_t total = n * l;
    const std::size_t keep = std::min(total, ids.size());
    doc.tokens.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
    doc.tokens.resize(total, kPadId);
    return doc;
}

std::vector<TokenId> wrap_specials(std::span<const TokenId> ids) {
    std::vector<TokenId> out;
    out.reserve(ids.size() + 2);
    out.push_back(kClsId);
    out.insert(out.end(), ids.begin(), ids.end());
    out.push_back(kSepId);
    return out;
}

std::vector<Record> load_jsonl(const std::filesystem::path& path, std::size_t num_classes) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open dataset " + path.string());
    }
    std::vector<Record> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
            continue;
        }
        const std::string where = path.string() + " line " + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(where + ": malformed JSON (" + e.what() + ")", line_no);
        }
        if (!obj.is_object()) {
            throw ParseError(where + ": expected a JSON object", line_no);
        }
        if (!obj.contains("text") || !obj["text"].is_string()) {
            throw ParseError(where + ": missing string field \"text\"", line_no);
        }
        if (!obj.contains("label") || !obj["label"].is_number_integer()) {
            throw ParseError(where + ": missing integer field \"label\"", line_no);
        }
        Record rec;
        rec.text = obj["text"].get<std::string>();
        const auto label = obj["label"].get<long long>();
        if (label < 0 || static_cast<unsigned long long>(label) >= num_classes) {
            throw ValidationError(where + ": label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        rec.label = static_cast<int>(label);
        if (obj.contains("key_index")) {
            if (!obj["key_index"].is_number_unsigned()) {
                throw ParseError(where + ": \"key_index\" must be a non-negative integer", line_no);
            }
            rec.key_index = obj["key_index"].get<std::size_t>();
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_jsonl(const std::filesystem::path& path, std::span<const Record> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& r : records) {
        nlohmann::ordered_json obj;
        obj["text"] = r.text;
        obj["label"] = r.label;
        if (r.key_index) {
            obj["key_index"] = *r.key_index;
        }
        out << obj.dump() << '\n';
    }
}

std::size_t held_out_count(std::size_t total, double eval_fraction) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw ValidationError("eval fraction must lie strictly between 0 and 1");
    }
    return static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(total)));
}

void validate(const SynthSpec& spec) {
    validate_segmentation(spec.n, spec.l);
    if (spec.classes < 2) {
        throw ConfigError("synth: need at least 2 classes");
    }
    if (spec.signal_tokens > spec.l) {
        throw ConfigError("synth: signal tokens per key segment exceed segment length");
    }
    if (spec.signal_tokens > 0 && spec.signal_pool == 0) {
        throw ConfigError("synth: signal pool is empty");
    }
    if (spec.vocab_size < spec.classes * spec.signal_pool + 1) {
        throw ConfigError("synth: vocab size " + std::to_string(spec.vocab_size) +
                          " leaves no room for disjoint signal (" +
                          std::to_string(spec.classes * spec.signal_pool) + ") and noise pools");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0) {
        throw ConfigError("synth: noise rate must lie in [0, 1]");
    }
}

Vocab synth_vocab(const SynthSpec& spec) {
    validate(spec);
    Vocab v;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t j = 0; j < spec.signal_pool; ++j) {
            v.add("c" + std::to_string(c) + "s" + std::to_string(j));
        }
    }
    const std::size_t noise = spec.vocab_size - spec.classes * spec.signal_pool;
    for (std::size_t j = 0; j < noise; ++j) {
        v.add("w" + std::to_string(j));
    }
    return v;
}

bool is_signal_token(const SynthSpec& spec, TokenId id) {
    const auto first = static_cast<TokenId>(kReservedTokens);
    return id >= first && id < first + static_cast<TokenId>(spec.classes * spec.signal_pool);
}

std::vector<SynthDoc> synth_generate(const SynthSpec& spec) {
    validate(spec);
    const auto signal_base = static_cast<TokenId>(kReservedTokens);
    const auto noise_base = static_cast<TokenId>(kReservedTokens + spec.classes * spec.signal_pool);
    const std::size_t noise_count = spec.vocab_size - spec.classes * spec.signal_pool;
    const std::size_t total = spec.n * spec.l;

    std::vector<SynthDoc> out;
    out.reserve(spec.docs);
    std::vector<std::size_t> positions(spec.l);
    for (std::size_t d = 0; d < spec.docs; ++d) {
        rnd::Engine rng(rnd::derive(spec.seed, 0x73796e7468ULL, d));
        const auto label = static_cast<int>(rnd::index(rng, spec.classes));
        const std::size_t key = rnd::index(rng, spec.n);
        std::vector<TokenId> ids(total);
        for (auto& id : ids) {
            id = noise_base + static_cast<TokenId>(rnd::index(rng, noise_count));
        }
        // Partial Fisher-Yates picks distinct positions inside the key segment.
        for (std::size_t i = 0; i < spec.l; ++i) {
            positions[i] = i;
        }
        for (std::size_t s = 0; s < spec.signal_tokens; ++s) {
            std::swap(positions[s], positions[s + rnd::index(rng, spec.l - s)]);
            std::size_t cls = static_cast<std::size_t>(label);
            if (spec.noise_rate > 0.0 && rnd::uniform01(rng) < spec.noise_rate) {
                cls = rnd::index(rng, spec.classes);
            }
            const auto word = static_cast<TokenId>(cls * spec.signal_pool + rnd::index(rng, spec.signal_pool));
            ids[key * spec.l + positions[s]] = signal_base + word;
        }
        out.push_back({segment_document(ids, spec.n, spec.l, label), key});
    }
    return out;
}

std::string render_text(const SegmentedDoc& doc, const Vocab& vocab) {
    std::string text;
    const std::size_t len = doc.content_length();
    for (std::size_t i = 0; i < len; ++i) {
        if (i) {
            text.push_back(' ');
        }
        text += vocab.token(doc.tokens[i]);
    }
    return text;
}

}  // namespace skin
