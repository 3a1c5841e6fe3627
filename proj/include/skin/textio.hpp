#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "skin/random.hpp"

namespace skin {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what), line_number(line) {}
    std::size_t line_number;
};

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr std::size_t kReservedTokens = 4;

/// Token <-> id table. Ids 0..3 are always [PAD], [UNK], [CLS], [SEP].
class Vocab {
public:
    Vocab();

    // Tokens in id order; the first four must be the reserved tokens.
    static Vocab from_tokens(const std::vector<std::string>& tokens);
    // One token per line, line number = id.
    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    // Lowercased words of `texts` in first-seen order after the reserved ids.
    static Vocab build(std::span<const std::string> texts);

    TokenId add(std::string_view token);
    std::optional<TokenId> find(std::string_view token) const;
    TokenId lookup(std::string_view token) const;
    const std::string& token(TokenId id) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

// Lowercase, split on whitespace, each ASCII punctuation character becomes
// its own word.
std::vector<std::string> split_words(std::string_view text);
std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab);

/// Token sequence of exactly n·l ids viewed as n segments of length l.
struct SegmentedDoc {
    std::vector<TokenId> tokens;
    std::size_t n = 0;
    std::size_t l = 0;
    int label = 0;
    std::size_t raw_length = 0;

    std::span<const TokenId> segment(std::size_t i) const;
    // Number of real (non-padding) tokens after truncation.
    std::size_t content_length() const { return raw_length < tokens.size() ? raw_length : tokens.size(); }
};

// Throws ConfigError unless n >= 2 and l is a positive multiple of 4.
void validate_segmentation(std::size_t n, std::size_t l);

/// Truncates to n·l tokens or pads the tail with [PAD].
SegmentedDoc segment_document(std::span<const TokenId> ids, std::size_t n, std::size_t l, int label);

/// [CLS] + ids + [SEP]
std::vector<TokenId> wrap_specials(std::span<const TokenId> ids);

struct Record {
    std::string text;
    int label = 0;
    std::optional<std::size_t> key_index;
};

/// JSONL with "text" (string) and "label" (int) per line, plus an optional
/// "key_index" (int). Blank lines are skipped but still counted.
std::vector<Record> load_jsonl(const std::filesystem::path& path, std::size_t num_classes);
void save_jsonl(const std::filesystem::path& path, std::span<const Record> records);

/// Held-out half of a split. Training entry points take plain vectors, so a
/// HeldOut cannot be passed to them by accident.
template <class T>
class HeldOut {
public:
    HeldOut() = default;
    explicit HeldOut(std::vector<T> items) : items_(std::move(items)) {}
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const std::vector<T>& items() const { return items_; }

private:
    std::vector<T> items_;
};

template <class T>
struct TrainTestSplit {
    std::vector<T> train;
    HeldOut<T> test;
};

// round(fraction·N) items go to the test side.
std::size_t held_out_count(std::size_t total, double eval_fraction);

template <class T>
TrainTestSplit<T> split_train_test(std::vector<T> docs, double eval_fraction, std::uint64_t seed) {
    if (docs.empty()) {
        throw ValidationError("split_train_test: empty input");
    }
    const std::size_t n_test = held_out_count(docs.size(), eval_fraction);
    rnd::Engine rng(rnd::derive(seed, 0x73706c6974ULL));
    rnd::shuffle(docs, rng);
    TrainTestSplit<T> out;
    std::vector<T> test(std::make_move_iterator(docs.end() - static_cast<std::ptrdiff_t>(n_test)),
                        std::make_move_iterator(docs.end()));
    docs.resize(docs.size() - n_test);
    out.train = std::move(docs);
    out.test = HeldOut<T>(std::move(test));
    return out;
}

/// Planted-key corpus parameters.
struct SynthSpec {
    std::size_t n = 8;
    std::size_t l = 32;
    std::size_t classes = 3;
    std::size_t docs = 2000;
    // Content words (excluding reserved tokens); split into per-class signal
    // pools and a shared noise pool.
    std::size_t vocab_size = 200;
    std::size_t signal_pool = 8;
    // Signal tokens placed at random positions of the planted segment.
    std::size_t signal_tokens = 8;
    // Probability that a signal token is drawn from a uniformly random
    // class's pool instead of the document's own class.
    double noise_rate = 0.0;
    std::uint64_t seed = 7;
};

struct SynthDoc {
    SegmentedDoc doc;
    std::size_t key_index = 0;
};

void validate(const SynthSpec& spec);
// Reserved tokens, then signal words "c<class>s<j>", then noise words "w<j>".
Vocab synth_vocab(const SynthSpec& spec);
bool is_signal_token(const SynthSpec& spec, TokenId id);
std::vector<SynthDoc> synth_generate(const SynthSpec& spec);
// Space-joined words of the document's content tokens.
std::string render_text(const SegmentedDoc& doc, const Vocab& vocab);

}  // namespace skin
