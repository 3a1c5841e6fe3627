#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "skin/baselines.hpp"
#include "skin/skin_model.hpp"
#include "skin/textio.hpp"
#include "skin/training.hpp"

namespace skin::ckpt {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The file holds a different model than the caller asked for.
struct KindMismatch : CheckpointError {
    KindMismatch(const std::string& expected_, const std::string& found_)
        : CheckpointError("checkpoint holds a '" + found_ + "' model, expected '" + expected_ + "'"),
          expected(expected_),
          found(found_) {}
    std::string expected;
    std::string found;
};

inline constexpr std::uint32_t kVersion = 1;

/// Named f64 tensors plus string metadata. Binary layout: "SKINCKPT", u32
/// version, then length-prefixed metadata pairs and tensors (name, rank, u64
/// dims, raw doubles), all little-endian.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void put(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::string& meta_at(const std::string& key) const;
};

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

std::string kind_of(const Checkpoint& ckpt);

// Model (de)serialization. `kind` is "skin" or "baseline:<name>".
void put_skin(Checkpoint& ckpt, SkinParams& params);
SkinParams get_skin(const Checkpoint& ckpt);
void put_baseline(Checkpoint& ckpt, BaselineParams& params);
BaselineParams get_baseline(const Checkpoint& ckpt, BaselineKind expected);

void put_vocab(Checkpoint& ckpt, const Vocab& vocab);
Vocab get_vocab(const Checkpoint& ckpt);

// Training progress, stored under `prefix`.
void put_state(Checkpoint& ckpt, const std::string& prefix, const StageState& state);
StageState get_state(const Checkpoint& ckpt, const std::string& prefix);
bool has_state(const Checkpoint& ckpt, const std::string& prefix);

void put_keys(Checkpoint& ckpt, std::span<const KeySegment> keys);
// Rebuilds spans from the documents the keys were selected on.
std::vector<KeySegment> get_keys(const Checkpoint& ckpt, std::span<const SegmentedDoc> docs);

}  // namespace skin::ckpt
