#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "skin/baselines.hpp"
#include "skin/bench.hpp"
#include "skin/training.hpp"

namespace skin::cli {

struct DataConfig {
    std::string dir;
    std::size_t n = 8;
    std::size_t l = 32;
    std::size_t classes = 3;
    double eval_fraction = 0.3;
};

struct SynthConfig {
    std::size_t docs = 2000;
    std::size_t vocab_size = 200;
    std::size_t signal_pool = 8;
    std::size_t signal_tokens = 8;
    double noise_rate = 0.0;
};

struct ModelConfig {
    std::string kind = "skin";  // skin, truncate, headtail, slidewindow
    std::string dims = "desk";  // desk or paper
    bool mask_padding = false;
    std::size_t cap = 0;   // 0: n·l/2
    std::size_t half = 0;  // 0: l
};

struct EvalConfig {
    std::string run_dir;
    std::string model = "skin";  // skin, prc, truncate, headtail, slidewindow
    std::string split = "test";
    std::string checkpoint;  // empty: picked from run_dir by model
};

/// Everything a command needs; written to the output directory before work
/// starts so the run can be repeated from that file alone.
struct RunConfig {
    std::string command;
    std::uint64_t seed = 7;
    std::string out;
    DataConfig data;
    SynthConfig synth;
    ModelConfig model;
    std::string stage = "all";
    TrainConfig train;
    EvalConfig eval;
    bench::BenchConfig bench;
};

/// One INI key. get/set go through strings so the file reader and the
/// command-line overrides share one parser per field.
struct Binding {
    std::string section;
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

std::vector<Binding> bindings(RunConfig& config);

/// Sets section.key from text; unknown keys and bad values are ConfigErrors.
void set_value(RunConfig& config, const std::string& section, const std::string& key, const std::string& value);

/// Reads an INI file over `config`. Every key must be known.
void load_run_config(const std::filesystem::path& path, RunConfig& config);
std::string to_ini(const RunConfig& config);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

/// Range and enum checks for the fields the command uses.
void validate(const RunConfig& config);

}  // namespace skin::cli
