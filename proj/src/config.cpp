#include "skin/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace skin::cli {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string where(const std::string& section, const std::string& key) { return section + "." + key; }

template <class T>
T parse_int(const std::string& s, const std::string& name) {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(name + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

double parse_real(const std::string& s, const std::string& name) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(name + ": expected a number, got '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& s, const std::string& name) {
    if (s == "true" || s == "1") {
        return true;
    }
    if (s == "false" || s == "0") {
        return false;
    }
    throw ConfigError(name + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) {
            out.push_back(item.substr(b, e - b + 1));
        }
    }
    return out;
}

struct Builder {
    std::vector<Binding>& out;
    std::string section;

    void size(const std::string& key, std::size_t& field) {
        const std::string name = where(section, key);
        out.push_back({section, key, [&field] { return std::to_string(field); },
                       [&field, name](const std::string& s) { field = parse_int<std::size_t>(s, name); }});
    }
    void u64(const std::string& key, std::uint64_t& field) {
        const std::string name = where(section, key);
        out.push_back({section, key, [&field] { return std::to_string(field); },
                       [&field, name](const std::string& s) { field = parse_int<std::uint64_t>(s, name); }});
    }
    void real(const std::string& key, double& field) {
        const std::string name = where(section, key);
        out.push_back({section, key, [&field] { return fmt(field); },
                       [&field, name](const std::string& s) { field = parse_real(s, name); }});
    }
    void flag(const std::string& key, bool& field) {
        const std::string name = where(section, key);
        out.push_back({section, key, [&field] { return std::string(field ? "true" : "false"); },
                       [&field, name](const std::string& s) { field = parse_bool(s, name); }});
    }
    void text(const std::string& key, std::string& field) {
        out.push_back({section, key, [&field] { return field; }, [&field](const std::string& s) { field = s; }});
    }
};

}  // namespace

std::vector<Binding> bindings(RunConfig& c) {
    std::vector<Binding> out;
    Builder run{out, "run"};
    run.text("command", c.command);
    run.u64("seed", c.seed);
    run.text("out", c.out);

    Builder data{out, "data"};
    data.text("dir", c.data.dir);
    data.size("n", c.data.n);
    data.size("l", c.data.l);
    data.size("classes", c.data.classes);
    data.real("eval_fraction", c.data.eval_fraction);

    Builder synth{out, "synth"};
    synth.size("docs", c.synth.docs);
    synth.size("vocab_size", c.synth.vocab_size);
    synth.size("signal_pool", c.synth.signal_pool);
    synth.size("signal_tokens", c.synth.signal_tokens);
    synth.real("noise_rate", c.synth.noise_rate);

    Builder model{out, "model"};
    model.text("kind", c.model.kind);
    model.text("dims", c.model.dims);
    model.flag("mask_padding", c.model.mask_padding);
    model.size("cap", c.model.cap);
    model.size("half", c.model.half);

    Builder train{out, "train"};
    train.text("stage", c.stage);
    train.real("r_l2", c.train.r_l2);
    train.real("dropout", c.train.dropout);
    train.real("gamma", c.train.gamma);
    train.real("lr1", c.train.lr1);
    train.real("lr2", c.train.lr2);
    train.real("beta1", c.train.beta1);
    train.real("beta2", c.train.beta2);
    train.size("batch", c.train.batch);
    train.size("epochs1", c.train.epochs1);
    train.size("epochs3", c.train.epochs3);
    train.size("patience", c.train.patience);
    train.real("min_delta", c.train.min_delta);
    train.flag("normalize_smoothing", c.train.normalize_smoothing);
    train.flag("ablate_local", c.train.ablate_local);

    Builder eval{out, "eval"};
    eval.text("run_dir", c.eval.run_dir);
    eval.text("model", c.eval.model);
    eval.text("split", c.eval.split);
    eval.text("checkpoint", c.eval.checkpoint);

    Builder bench{out, "bench"};
    auto& b = c.bench;
    out.push_back({"bench", "methods",
                   [&b] {
                       std::string s;
                       for (auto m : b.methods) {
                           s += (s.empty() ? "" : ",") + bench::to_string(m);
                       }
                       return s;
                   },
                   [&b](const std::string& s) {
                       std::vector<bench::Method> ms;
                       for (const auto& item : split_list(s)) {
                           ms.push_back(bench::parse_method(item));
                       }
                       b.methods = ms;
                   }});
    out.push_back({"bench", "lengths",
                   [&b] {
                       std::string s;
                       for (auto v : b.lengths) {
                           s += (s.empty() ? "" : ",") + std::to_string(v);
                       }
                       return s;
                   },
                   [&b](const std::string& s) {
                       std::vector<std::size_t> ls;
                       for (const auto& item : split_list(s)) {
                           ls.push_back(parse_int<std::size_t>(item, "bench.lengths"));
                       }
                       b.lengths = ls;
                   }});
    bench.size("trials", b.trials);
    bench.size("warmup", b.warmup);
    bench.size("batch", b.batch);
    bench.size("segments", b.segments);
    bench.size("segment_len", b.segment_len);
    bench.size("max_measured_length", b.max_measured_length);
    bench.flag("paper_dims", b.paper_dims);
    bench.flag("modeled_only", b.modeled_only);
    bench.size("classes", b.classes);
    return out;
}

void set_value(RunConfig& config, const std::string& section, const std::string& key, const std::string& value) {
    for (auto& b : bindings(config)) {
        if (b.section == section && b.key == key) {
            b.set(value);
            return;
        }
    }
    throw ConfigError("unknown config key " + where(section, key));
}

void load_run_config(const std::filesystem::path& path, RunConfig& config) {
    if (!std::filesystem::exists(path)) {
        throw IoError("config file not found: " + path.string());
    }
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError("config key '" + section + "' must live inside a [section]");
        }
        for (const auto& [key, value] : body) {
            set_value(config, section, key, value.data());
        }
    }
}

std::string to_ini(const RunConfig& config) {
    RunConfig copy = config;
    std::ostringstream out;
    std::string current;
    for (const auto& b : bindings(copy)) {
        if (b.section != current) {
            if (!current.empty()) {
                out << '\n';
            }
            out << '[' << b.section << "]\n";
            current = b.section;
        }
        out << b.key << " = " << b.get() << '\n';
    }
    return out.str();
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << to_ini(config);
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void validate(const RunConfig& c) {
    validate_segmentation(c.data.n, c.data.l);
    if (c.data.classes < 2) {
        throw ConfigError("data.classes must be at least 2");
    }
    if (!(c.data.eval_fraction > 0.0 && c.data.eval_fraction < 1.0)) {
        throw ConfigError("data.eval_fraction must lie in (0, 1)");
    }
    if (c.model.kind != "skin") {
        parse_baseline_kind(c.model.kind);
    }
    if (c.model.dims != "desk" && c.model.dims != "paper") {
        throw ConfigError("model.dims must be desk or paper, got '" + c.model.dims + "'");
    }
    if (c.stage != "1" && c.stage != "2" && c.stage != "3" && c.stage != "all") {
        throw ConfigError("train.stage must be 1, 2, 3 or all, got '" + c.stage + "'");
    }
    if (c.train.batch == 0) {
        throw ConfigError("train.batch must be positive");
    }
    if (!(c.train.gamma >= 0.0 && c.train.gamma < 0.5)) {
        throw ConfigError("train.gamma must lie in [0, 0.5)");
    }
    if (!(c.train.dropout >= 0.0 && c.train.dropout < 1.0)) {
        throw ConfigError("train.dropout must lie in [0, 1)");
    }
    if (!(c.train.r_l2 >= 0.0)) {
        throw ConfigError("train.r_l2 must be non-negative");
    }
    if (c.eval.model != "skin" && c.eval.model != "prc") {
        parse_baseline_kind(c.eval.model);
    }
    if (c.eval.split != "test" && c.eval.split != "train") {
        throw ConfigError("eval.split must be test or train, got '" + c.eval.split + "'");
    }
}

}  // namespace skin::cli
