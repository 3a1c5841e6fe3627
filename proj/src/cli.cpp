#include "skin/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "skin/baselines.hpp"
#include "skin/bench.hpp"
#include "skin/checkpoint.hpp"
#include "skin/config.hpp"
#include "skin/training.hpp"

namespace fs = std::filesystem;

namespace skin::cli {

namespace {

struct Override {
    std::string flag;
    std::string section;
    std::string key;
    bool is_flag = false;
    std::string help;
};

const std::vector<Override>& synth_overrides() {
    static const std::vector<Override> v = {
        {"--docs", "synth", "docs", false, "number of documents"},
        {"--n", "data", "n", false, "segments per document"},
        {"--l", "data", "l", false, "tokens per segment (multiple of 4)"},
        {"--classes", "data", "classes", false, "number of classes"},
        {"--vocab-size", "synth", "vocab_size", false, "content words in the vocabulary"},
        {"--signal-pool", "synth", "signal_pool", false, "signal words per class"},
        {"--signal-tokens", "synth", "signal_tokens", false, "signal tokens in the planted segment"},
        {"--noise-rate", "synth", "noise_rate", false, "probability a signal token comes from a random class"},
        {"--eval-fraction", "data", "eval_fraction", false, "held-out fraction"},
    };
    return v;
}

const std::vector<Override>& train_overrides() {
    static const std::vector<Override> v = {
        {"--data", "data", "dir", false, "corpus directory"},
        {"--model", "model", "kind", false, "skin, truncate, headtail or slidewindow"},
        {"--stage", "train", "stage", false, "1, 2, 3 or all (skin only)"},
        {"--n", "data", "n", false, "segments per document"},
        {"--l", "data", "l", false, "tokens per segment"},
        {"--classes", "data", "classes", false, "number of classes"},
        {"--eval-fraction", "data", "eval_fraction", false, "held-out fraction for unsplit corpora"},
        {"--dims", "model", "dims", false, "encoder sizes: desk or paper"},
        {"--mask-padding", "model", "mask_padding", true, "exclude [PAD] from attention and pooling"},
        {"--cap", "model", "cap", false, "truncation baseline cap (0: n*l/2)"},
        {"--half", "model", "half", false, "head-tail baseline width (0: l)"},
        {"--lr1", "train", "lr1", false, "stage-1 / baseline learning rate"},
        {"--lr2", "train", "lr2", false, "stage-3 learning rate"},
        {"--epochs1", "train", "epochs1", false, "stage-1 / baseline epochs"},
        {"--epochs3", "train", "epochs3", false, "stage-3 epochs"},
        {"--batch", "train", "batch", false, "minibatch size"},
        {"--dropout", "train", "dropout", false, "dropout probability"},
        {"--gamma", "train", "gamma", false, "label smoothing factor"},
        {"--r-l2", "train", "r_l2", false, "L2 coefficient"},
        {"--patience", "train", "patience", false, "early-stop patience in epochs"},
        {"--min-delta", "train", "min_delta", false, "early-stop minimum improvement"},
        {"--normalize-smoothing", "train", "normalize_smoothing", true, "renormalize smoothed targets"},
        {"--ablate-local", "train", "ablate_local", true, "zero the key-segment encoding"},
    };
    return v;
}

const std::vector<Override>& eval_overrides() {
    static const std::vector<Override> v = {
        {"--run", "eval", "run_dir", false, "output directory of a train run"},
        {"--data", "data", "dir", false, "corpus directory"},
        {"--model", "eval", "model", false, "skin, prc, truncate, headtail or slidewindow"},
        {"--split", "eval", "split", false, "test or train"},
        {"--checkpoint", "eval", "checkpoint", false, "explicit checkpoint path"},
        {"--eval-fraction", "data", "eval_fraction", false, "held-out fraction for unsplit corpora"},
        {"--ablate-local", "train", "ablate_local", true, "zero the key-segment encoding"},
    };
    return v;
}

const std::vector<Override>& bench_overrides() {
    static const std::vector<Override> v = {
        {"--methods", "bench", "methods", false, "comma list: bert,slidewindow,skin-invariable,skin-variable"},
        {"--lengths", "bench", "lengths", false, "comma list of total lengths, ascending"},
        {"--trials", "bench", "trials", false, "timed trials per point"},
        {"--warmup", "bench", "warmup", false, "untimed warm-up steps per point"},
        {"--batch", "bench", "batch", false, "documents per training step"},
        {"--segments", "bench", "segments", false, "segment count for fixed-n methods"},
        {"--segment-len", "bench", "segment_len", false, "segment length for skin-variable"},
        {"--max-measured-length", "bench", "max_measured_length", false,
         "longest strong-encoder input that is run; longer ones are extrapolated"},
        {"--paper-dims", "bench", "paper_dims", true, "use the published encoder sizes"},
        {"--modeled-only", "bench", "modeled_only", true, "skip timing, emit modeled costs only"},
    };
    return v;
}

struct Globals {
    std::string config;
    std::string seed;
    std::string out;
    bool force = false;
};

struct Parsed {
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
};

void add_globals(CLI::App* cmd, Globals& g) {
    cmd->add_option("--config", g.config, "INI run configuration");
    cmd->add_option("--seed", g.seed, "master seed");
    cmd->add_option("--out", g.out, "output directory");
    cmd->add_flag("--force", g.force, "write into an existing output directory");
}

void add_overrides(CLI::App* cmd, const std::vector<Override>& list, Parsed& parsed) {
    for (const auto& o : list) {
        if (o.is_flag) {
            cmd->add_flag(o.flag, parsed.flags[o.flag], o.help);
        } else {
            cmd->add_option(o.flag, parsed.values[o.flag], o.help);
        }
    }
}

std::string absolute_or_empty(const std::string& p) {
    return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

RunConfig resolve(const std::string& command, const Globals& g, const CLI::App* cmd,
                  const std::vector<Override>& list, const Parsed& parsed) {
    RunConfig c;
    if (!g.config.empty()) {
        load_run_config(g.config, c);
    }
    c.command = command;
    for (const auto& o : list) {
        if (cmd->count(o.flag) == 0) {
            continue;
        }
        if (o.is_flag) {
            set_value(c, o.section, o.key, parsed.flags.at(o.flag) ? "true" : "false");
        } else {
            set_value(c, o.section, o.key, parsed.values.at(o.flag));
        }
    }
    if (cmd->count("--seed")) {
        set_value(c, "run", "seed", g.seed);
    }
    if (cmd->count("--out")) {
        c.out = g.out;
    }
    if (c.out.empty()) {
        throw ConfigError("--out is required");
    }
    c.out = absolute_or_empty(c.out);
    c.data.dir = absolute_or_empty(c.data.dir);
    c.eval.run_dir = absolute_or_empty(c.eval.run_dir);
    c.eval.checkpoint = absolute_or_empty(c.eval.checkpoint);
    c.train.seed = c.seed;
    c.bench.seed = c.seed;
    c.bench.classes = c.data.classes;
    validate(c);
    return c;
}

bool dir_has_entries(const fs::path& dir) {
    return fs::exists(dir) && fs::is_directory(dir) && fs::directory_iterator(dir) != fs::directory_iterator();
}

// Creates the output directory, refusing to reuse a populated one unless forced.
void prepare_out(const RunConfig& c, bool force) {
    const fs::path dir = c.out;
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw IoError(dir.string() + " exists and is not a directory");
    }
    if (dir_has_entries(dir) && !force) {
        throw IoError("output directory " + dir.string() + " already exists; pass --force to overwrite");
    }
    fs::create_directories(dir);
    save_run_config(dir / "run_config.ini", c);
}

// Training resumes in place, so an existing directory is fine when it was
// produced by the same configuration (the stage selection aside).
void prepare_train_out(const RunConfig& c, bool force) {
    const fs::path dir = c.out;
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw IoError(dir.string() + " exists and is not a directory");
    }
    if (dir_has_entries(dir) && !force) {
        const fs::path previous = dir / "run_config.ini";
        if (!fs::exists(previous)) {
            throw IoError("output directory " + dir.string() + " is not a training run; pass --force to use it");
        }
        RunConfig old;
        load_run_config(previous, old);
        RunConfig a = old;
        RunConfig b = c;
        a.stage = "all";
        b.stage = "all";
        if (to_ini(a) != to_ini(b)) {
            throw IoError("output directory " + dir.string() +
                          " holds a run with a different configuration; pass --force to overwrite");
        }
    }
    fs::create_directories(dir);
    save_run_config(dir / "run_config.ini", c);
}

// ---------------------------------------------------------------- data

struct Corpus {
    Vocab vocab;
    std::vector<SegmentedDoc> docs;
    std::vector<std::optional<std::size_t>> keys;
};

struct SplitFiles {
    fs::path train;
    fs::path test;
    fs::path whole;
};

SplitFiles locate(const fs::path& dir) {
    if (dir.empty()) {
        throw ConfigError("a corpus directory is required (--data)");
    }
    if (!fs::is_directory(dir)) {
        throw IoError("corpus directory not found: " + dir.string());
    }
    SplitFiles f;
    if (fs::exists(dir / "train.jsonl") && fs::exists(dir / "test.jsonl")) {
        f.train = dir / "train.jsonl";
        f.test = dir / "test.jsonl";
    } else if (fs::exists(dir / "data.jsonl")) {
        f.whole = dir / "data.jsonl";
    } else {
        throw IoError("no train.jsonl/test.jsonl or data.jsonl in " + dir.string());
    }
    return f;
}

std::vector<Record> load_split(const RunConfig& c, bool test) {
    const SplitFiles f = locate(c.data.dir);
    if (!f.whole.empty()) {
        auto split = split_train_test(load_jsonl(f.whole, c.data.classes), c.data.eval_fraction,
                                      rnd::derive(c.seed, 0x64617461));
        return test ? split.test.items() : split.train;
    }
    return load_jsonl(test ? f.test : f.train, c.data.classes);
}

Vocab corpus_vocab(const RunConfig& c, const std::vector<Record>& train) {
    const fs::path vocab_file = fs::path(c.data.dir) / "vocab.txt";
    if (fs::exists(vocab_file)) {
        return Vocab::load(vocab_file);
    }
    std::vector<std::string> texts;
    for (const auto& r : train) {
        texts.push_back(r.text);
    }
    return Vocab::build(texts);
}

Corpus to_corpus(const std::vector<Record>& records, Vocab vocab, std::size_t n, std::size_t l) {
    Corpus corpus;
    for (const auto& r : records) {
        corpus.docs.push_back(segment_document(tokenize(r.text, vocab), n, l, r.label));
        corpus.keys.push_back(r.key_index);
    }
    corpus.vocab = std::move(vocab);
    return corpus;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const RunConfig& c, std::ostream& out) {
    SynthSpec spec;
    spec.n = c.data.n;
    spec.l = c.data.l;
    spec.classes = c.data.classes;
    spec.docs = c.synth.docs;
    spec.vocab_size = c.synth.vocab_size;
    spec.signal_pool = c.synth.signal_pool;
    spec.signal_tokens = c.synth.signal_tokens;
    spec.noise_rate = c.synth.noise_rate;
    spec.seed = c.seed;
    validate(spec);
    const Vocab vocab = synth_vocab(spec);
    auto split = split_train_test(synth_generate(spec), c.data.eval_fraction, rnd::derive(c.seed, 0x73706c6974));

    auto records = [&](const std::vector<SynthDoc>& docs) {
        std::vector<Record> rs;
        for (const auto& d : docs) {
            rs.push_back({render_text(d.doc, vocab), d.doc.label, d.key_index});
        }
        return rs;
    };
    const fs::path dir = c.out;
    save_jsonl(dir / "train.jsonl", records(split.train));
    save_jsonl(dir / "test.jsonl", records(split.test.items()));
    vocab.save(dir / "vocab.txt");

    std::vector<std::size_t> train_counts(spec.classes, 0);
    std::vector<std::size_t> test_counts(spec.classes, 0);
    for (const auto& d : split.train) {
        train_counts[static_cast<std::size_t>(d.doc.label)] += 1;
    }
    for (const auto& d : split.test.items()) {
        test_counts[static_cast<std::size_t>(d.doc.label)] += 1;
    }
    out << std::left << std::setw(8) << "label" << std::right << std::setw(8) << "train" << std::setw(8) << "test"
        << std::setw(8) << "total" << '\n';
    for (std::size_t u = 0; u < spec.classes; ++u) {
        out << std::left << std::setw(8) << u << std::right << std::setw(8) << train_counts[u] << std::setw(8)
            << test_counts[u] << std::setw(8) << train_counts[u] + test_counts[u] << '\n';
    }
    out << std::left << std::setw(8) << "total" << std::right << std::setw(8) << split.train.size() << std::setw(8)
        << split.test.size() << std::setw(8) << split.train.size() + split.test.size() << '\n';
    out << "vocab " << vocab.size() << " tokens, " << spec.n << "x" << spec.l << " tokens per document\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

EncoderConfig make_lite(const RunConfig& c, std::size_t vocab, std::size_t max_len) {
    EncoderConfig e = c.model.dims == "paper" ? EncoderConfig::lite_paper(vocab, max_len)
                                              : EncoderConfig::lite_desk(vocab, max_len);
    e.dropout = c.train.dropout;
    e.mask_padding = c.model.mask_padding;
    return e;
}

EncoderConfig make_strong(const RunConfig& c, std::size_t vocab, std::size_t max_len) {
    EncoderConfig e = c.model.dims == "paper" ? EncoderConfig::strong_paper(vocab, max_len)
                                              : EncoderConfig::strong_desk(vocab, max_len);
    e.dropout = c.train.dropout;
    e.mask_padding = c.model.mask_padding;
    return e;
}

void stamp(ckpt::Checkpoint& k, const RunConfig& c, const Vocab& vocab, const std::string& stage) {
    ckpt::put_vocab(k, vocab);
    k.meta["n"] = std::to_string(c.data.n);
    k.meta["l"] = std::to_string(c.data.l);
    k.meta["stage"] = stage;
}

void write_train_log(const fs::path& path, const std::vector<EpochStats>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.precision(17);
    out << "epoch,stage,mean_loss,train_acc\n";
    for (const auto& e : rows) {
        out << e.epoch << ',' << e.stage << ',' << e.mean_loss << ',' << e.train_acc << '\n';
    }
}

std::vector<EpochStats> curve_from(const fs::path& done, const fs::path& progress, const std::string& prefix) {
    for (const auto& p : {done, progress}) {
        if (fs::exists(p)) {
            return ckpt::get_state(ckpt::load(p), prefix).curve;
        }
    }
    return {};
}

void refresh_skin_log(const fs::path& dir) {
    std::vector<EpochStats> rows = curve_from(dir / "stage1.ckpt", dir / "stage1.progress.ckpt", "state");
    auto s3 = curve_from(dir / "stage3.ckpt", dir / "stage3.progress.ckpt", "state");
    rows.insert(rows.end(), s3.begin(), s3.end());
    write_train_log(dir / "train_log.csv", rows);
}

struct Budget {
    std::size_t remaining = std::numeric_limits<std::size_t>::max();
};

// Runs (or resumes) one training stage whose progress lives in `progress`
// and whose final state lands in `done`. Returns false when interrupted.
template <class Model, class Train, class Put>
bool run_resumable(const fs::path& done, const fs::path& progress, Model& params, Train train, Put put,
                   Budget& budget, std::ostream& out, const std::string& label) {
    StageState state;
    if (fs::exists(progress)) {
        state = ckpt::get_state(ckpt::load(progress), "state");
        out << label << ": resuming after epoch " << state.epochs_done << '\n';
    }
    StageHooks hooks;
    hooks.max_epochs_this_run = budget.remaining;
    hooks.on_epoch_end = [&](const StageState& s) {
        const auto& e = s.curve.back();
        out << label << " epoch " << e.epoch << "  loss " << std::fixed << std::setprecision(6) << e.mean_loss
            << "  train_acc " << std::setprecision(4) << e.train_acc << std::defaultfloat << '\n';
        ckpt::Checkpoint k = put(params);
        ckpt::put_state(k, "state", s);
        ckpt::save(progress, k);
    };
    const std::size_t before = state.epochs_done;
    state = train(params, std::move(state), hooks);
    const std::size_t ran = state.epochs_done - before;
    if (budget.remaining != std::numeric_limits<std::size_t>::max()) {
        budget.remaining -= std::min(budget.remaining, ran);
    }
    if (!state.finished) {
        out << label << ": stopped after epoch " << state.epochs_done << " (resume by rerunning)\n";
        return false;
    }
    ckpt::Checkpoint k = put(params);
    ckpt::put_state(k, "state", state);
    ckpt::save(done, k);
    fs::remove(progress);
    return true;
}

int train_skin(const RunConfig& c, const Corpus& corpus, std::size_t max_epochs, std::ostream& out) {
    const fs::path dir = c.out;
    const bool all = c.stage == "all";
    const std::size_t vocab = corpus.vocab.size();
    Budget budget{max_epochs};

    auto put = [&](const std::string& stage) {
        return [&c, &corpus, stage](SkinParams& p) {
            ckpt::Checkpoint k;
            ckpt::put_skin(k, p);
            stamp(k, c, corpus.vocab, stage);
            return k;
        };
    };

    if (all || c.stage == "1") {
        if (fs::exists(dir / "stage1.ckpt")) {
            out << "stage 1: already complete\n";
        } else {
            SkinParams params;
            if (fs::exists(dir / "stage1.progress.ckpt")) {
                params = ckpt::get_skin(ckpt::load(dir / "stage1.progress.ckpt"));
            } else {
                rnd::Engine rng(rnd::derive(c.seed, 0x696e6974));
                params = SkinParams::init(make_lite(c, vocab, c.data.l + 2),
                                          make_strong(c, vocab, c.data.l + c.data.l / 2 + 2), c.data.classes, rng);
            }
            auto train = [&](SkinParams& p, StageState s, const StageHooks& h) {
                return train_stage1(corpus.docs, p, c.train, std::move(s), h);
            };
            const bool ok = run_resumable(dir / "stage1.ckpt", dir / "stage1.progress.ckpt", params, train, put("1"),
                                          budget, out, "stage 1");
            refresh_skin_log(dir);
            if (!ok) {
                return kExitInterrupted;
            }
        }
    }

    if (all || c.stage == "2") {
        if (!fs::exists(dir / "stage1.ckpt")) {
            throw IoError("stage 2 needs " + (dir / "stage1.ckpt").string() + "; run stage 1 first");
        }
        SkinParams params = ckpt::get_skin(ckpt::load(dir / "stage1.ckpt"));
        std::vector<Distilled> distilled = distill_dataset(corpus.docs, params);
        write_selection_jsonl(dir / "selection.jsonl", distilled);
        std::vector<KeySegment> keys;
        for (const auto& d : distilled) {
            keys.push_back(d.key);
        }
        ckpt::Checkpoint k = put("2")(params);
        ckpt::put_keys(k, keys);
        ckpt::save(dir / "stage2.ckpt", k);
        std::size_t hits = 0;
        std::size_t known = 0;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (corpus.keys[i]) {
                known += 1;
                hits += keys[i].k == *corpus.keys[i] ? 1 : 0;
            }
        }
        out << "stage 2: selected key segments for " << keys.size() << " documents";
        if (known > 0) {
            out << " (train selection accuracy " << std::fixed << std::setprecision(4)
                << static_cast<double>(hits) / static_cast<double>(known) << std::defaultfloat << ")";
        }
        out << '\n';
    }

    if (all || c.stage == "3") {
        if (fs::exists(dir / "stage3.ckpt")) {
            out << "stage 3: already complete\n";
        } else {
            if (!fs::exists(dir / "stage2.ckpt")) {
                throw IoError("stage 3 needs " + (dir / "stage2.ckpt").string() + "; run stage 2 first");
            }
            const ckpt::Checkpoint stage2 = ckpt::load(dir / "stage2.ckpt");
            std::vector<KeySegment> keys = ckpt::get_keys(stage2, corpus.docs);
            SkinParams params = fs::exists(dir / "stage3.progress.ckpt")
                                    ? ckpt::get_skin(ckpt::load(dir / "stage3.progress.ckpt"))
                                    : ckpt::get_skin(stage2);
            auto train = [&](SkinParams& p, StageState s, const StageHooks& h) {
                return train_stage3(corpus.docs, keys, p, c.train, std::move(s), h);
            };
            const bool ok = run_resumable(dir / "stage3.ckpt", dir / "stage3.progress.ckpt", params, train, put("3"),
                                          budget, out, "stage 3");
            refresh_skin_log(dir);
            if (!ok) {
                return kExitInterrupted;
            }
        }
    }
    return kExitOk;
}

int train_baseline_cmd(const RunConfig& c, const Corpus& corpus, std::size_t max_epochs, std::ostream& out) {
    const fs::path dir = c.out;
    const BaselineKind kind = parse_baseline_kind(c.model.kind);
    if (c.stage != "all") {
        throw ConfigError("--stage applies to the skin model only");
    }
    if (fs::exists(dir / "baseline.ckpt")) {
        out << to_string(kind) << ": already complete\n";
        return kExitOk;
    }
    const std::size_t cap = c.model.cap ? c.model.cap : default_cap(c.data.n, c.data.l);
    const std::size_t half = c.model.half ? c.model.half : default_half(c.data.l);
    BaselineParams params;
    if (fs::exists(dir / "baseline.progress.ckpt")) {
        params = ckpt::get_baseline(ckpt::load(dir / "baseline.progress.ckpt"), kind);
    } else {
        rnd::Engine rng(rnd::derive(c.seed, 0x696e6974));
        const std::size_t max_len = baseline_input_length(kind, c.data.n, c.data.l, cap, half);
        params = BaselineParams::init(kind, make_strong(c, corpus.vocab.size(), max_len), c.data.classes, cap, half,
                                      rng);
    }
    auto put = [&](BaselineParams& p) {
        ckpt::Checkpoint k;
        ckpt::put_baseline(k, p);
        stamp(k, c, corpus.vocab, "baseline");
        return k;
    };
    auto train = [&](BaselineParams& p, StageState s, const StageHooks& h) {
        return train_baseline(corpus.docs, p, c.train, std::move(s), h);
    };
    Budget budget{max_epochs};
    const bool ok = run_resumable(dir / "baseline.ckpt", dir / "baseline.progress.ckpt", params, train, put, budget,
                                  out, to_string(kind));
    write_train_log(dir / "train_log.csv",
                    curve_from(dir / "baseline.ckpt", dir / "baseline.progress.ckpt", "state"));
    return ok ? kExitOk : kExitInterrupted;
}

int cmd_train(const RunConfig& c, std::size_t max_epochs, std::ostream& out) {
    const std::vector<Record> records = load_split(c, false);
    if (records.empty()) {
        throw ValidationError("training split is empty");
    }
    const Corpus corpus = to_corpus(records, corpus_vocab(c, records), c.data.n, c.data.l);
    out << "training " << c.model.kind << " on " << corpus.docs.size() << " documents\n";
    if (c.model.kind == "skin") {
        return train_skin(c, corpus, max_epochs, out);
    }
    return train_baseline_cmd(c, corpus, max_epochs, out);
}

// ---------------------------------------------------------------- eval

nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["total"] = r.total;
    j["per_class"] = nlohmann::ordered_json::array();
    for (std::size_t u = 0; u < r.per_class.size(); ++u) {
        const auto& m = r.per_class[u];
        j["per_class"].push_back({{"label", u},
                                  {"precision", m.precision},
                                  {"recall", m.recall},
                                  {"f1", m.f1},
                                  {"support", m.support}});
    }
    j["confusion"] = r.confusion;
    return j;
}

// An eval pointed at a run reuses that run's corpus and split unless told otherwise.
void inherit_from_run(RunConfig& c, bool seed_given) {
    if (c.eval.run_dir.empty() || !c.data.dir.empty()) {
        return;
    }
    const fs::path previous = fs::path(c.eval.run_dir) / "run_config.ini";
    if (!fs::exists(previous)) {
        return;
    }
    RunConfig old;
    load_run_config(previous, old);
    c.data.dir = old.data.dir;
    c.data.eval_fraction = old.data.eval_fraction;
    if (!seed_given) {
        c.seed = old.seed;
    }
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
    const std::string& model = c.eval.model;
    fs::path path = c.eval.checkpoint;
    if (path.empty()) {
        if (c.eval.run_dir.empty()) {
            throw ConfigError("eval needs --run or --checkpoint");
        }
        const fs::path run = c.eval.run_dir;
        path = model == "skin" ? run / "stage3.ckpt" : model == "prc" ? run / "stage1.ckpt" : run / "baseline.ckpt";
    }
    const ckpt::Checkpoint k = ckpt::load(path);
    const Vocab vocab = ckpt::get_vocab(k);
    const std::size_t n = std::stoul(k.meta_at("n"));
    const std::size_t l = std::stoul(k.meta_at("l"));

    const bool test = c.eval.split == "test";
    const Corpus corpus = to_corpus(load_split(c, test), vocab, n, l);
    if (corpus.docs.empty()) {
        throw EmptyInputError("evaluation split is empty");
    }
    const HeldOut<SegmentedDoc> held(corpus.docs);

    nlohmann::ordered_json j;
    j["model"] = model;
    j["split"] = c.eval.split;
    EvalReport report;
    std::optional<double> selection;
    if (model == "skin" || model == "prc") {
        const SkinParams params = ckpt::get_skin(k);
        const bool ablate = c.train.ablate_local;
        Predictor predict = model == "skin" ? Predictor([&](const SegmentedDoc& d) { return predict_skin(d, params, ablate); })
                                            : Predictor([&](const SegmentedDoc& d) { return predict_prc(d, params); });
        report = evaluate(predict, held, params.classes());
        const bool all_keys =
            std::all_of(corpus.keys.begin(), corpus.keys.end(), [](const auto& key) { return key.has_value(); });
        if (all_keys) {
            const std::vector<Distilled> distilled = distill_dataset(corpus.docs, params);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < distilled.size(); ++i) {
                hits += distilled[i].key.k == *corpus.keys[i] ? 1 : 0;
            }
            selection = static_cast<double>(hits) / static_cast<double>(distilled.size());
        }
    } else {
        const BaselineParams params = ckpt::get_baseline(k, parse_baseline_kind(model));
        report = evaluate([&](const SegmentedDoc& d) { return baseline_classify(d, params); }, held, params.classes());
    }
    const nlohmann::ordered_json body = report_json(report);
    for (auto it = body.begin(); it != body.end(); ++it) {
        j[it.key()] = it.value();
    }
    if (selection) {
        j["selection_accuracy"] = *selection;
    }
    std::ofstream file(fs::path(c.out) / "eval_report.json");
    if (!file) {
        throw IoError("cannot write " + (fs::path(c.out) / "eval_report.json").string());
    }
    file << j.dump(2) << '\n';
    out << model << " on " << c.eval.split << " (" << report.total << " docs): accuracy " << std::fixed
        << std::setprecision(4) << report.accuracy << "  macro-F1 " << report.macro_f1;
    if (selection) {
        out << "  selection " << *selection;
    }
    out << std::defaultfloat << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const RunConfig& c, std::ostream& out) {
    bench::BenchConfig cfg = c.bench;
    if (cfg.paper_dims && !cfg.modeled_only) {
        throw ConfigError("timing at paper dims is out of reach on one core; add --modeled-only");
    }
    const auto samples = bench::run_cost_sweep(cfg);
    const bench::SweepResult result = bench::summarize(cfg, samples);
    const fs::path dir = c.out;
    bench::write_csv(dir / "bench.csv", result.samples);
    bench::write_summary_json(dir / "bench_summary.json", result);
    bench::write_dat(dir / "bench.dat", result);
    for (const auto& m : result.methods) {
        out << std::left << std::setw(16) << bench::to_string(m.method) << std::right << " modeled exponent "
            << std::fixed << std::setprecision(4) << m.modeled_exponent;
        if (m.modeled_skim_exponent) {
            out << "  skim " << *m.modeled_skim_exponent;
        }
        if (m.time_exponent) {
            out << "  time " << *m.time_exponent;
        }
        bool extrapolated = false;
        for (const auto& p : m.points) {
            extrapolated = extrapolated || p.extrapolated;
        }
        if (extrapolated) {
            out << "  (extrapolated beyond " << cfg.max_measured_length << ")";
        }
        out << std::defaultfloat << '\n';
    }
    if (result.savings) {
        out << "modeled attention savings at L=" << cfg.lengths.back() << ": " << std::fixed << std::setprecision(2)
            << result.savings->percent << "%" << std::defaultfloat << '\n';
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"SkIn: skimming-intensive long-text classification"};
    app.require_subcommand(1);
    Globals g;
    Parsed parsed;
    std::size_t max_epochs = std::numeric_limits<std::size_t>::max();

    auto* synth = app.add_subcommand("synth", "generate a planted-key corpus");
    auto* train = app.add_subcommand("train", "train a model");
    auto* eval = app.add_subcommand("eval", "evaluate a trained model");
    auto* bench_cmd = app.add_subcommand("bench", "cost versus input length");
    for (auto* cmd : {synth, train, eval, bench_cmd}) {
        add_globals(cmd, g);
    }
    add_overrides(synth, synth_overrides(), parsed);
    add_overrides(train, train_overrides(), parsed);
    add_overrides(eval, eval_overrides(), parsed);
    add_overrides(bench_cmd, bench_overrides(), parsed);
    train->add_option("--max-epochs-this-run", max_epochs, "stop after this many epochs (resumable)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            RunConfig c = resolve("synth", g, synth, synth_overrides(), parsed);
            prepare_out(c, g.force);
            return cmd_synth(c, out);
        }
        if (train->parsed()) {
            RunConfig c = resolve("train", g, train, train_overrides(), parsed);
            prepare_train_out(c, g.force);
            return cmd_train(c, max_epochs, out);
        }
        if (eval->parsed()) {
            RunConfig c = resolve("eval", g, eval, eval_overrides(), parsed);
            inherit_from_run(c, eval->count("--seed") > 0 || !g.config.empty());
            prepare_out(c, g.force);
            return cmd_eval(c, out);
        }
        RunConfig c = resolve("bench", g, bench_cmd, bench_overrides(), parsed);
        prepare_out(c, g.force);
        return cmd_bench(c, out);
    } catch (const TrainingDiverged& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
}

}  // namespace skin::cli
