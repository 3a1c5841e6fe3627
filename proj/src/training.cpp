#include "skin/training.hpp"

#include <fstream>

#include <json.hpp>

#include "parallel.hpp"
#include "train_loop.hpp"

namespace skin {

Tensor smooth_labels(int label, std::size_t classes, double gamma, bool normalize) {
    if (classes < 2) {
        throw ConfigError("label smoothing needs at least 2 classes");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
        throw ValidationError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    if (!(gamma >= 0.0 && gamma < 0.5)) {
        throw ConfigError("smoothing gamma must lie in [0, 0.5)");
    }
    Tensor t({classes}, gamma);
    t[static_cast<std::size_t>(label)] = 1.0 - gamma;
    if (normalize) {
        const double total = 1.0 + (static_cast<double>(classes) - 2.0) * gamma;
        for (auto& v : t.data()) {
            v /= total;
        }
    }
    return t;
}

double l2_penalty(const ParamList& params, double r_l2, bool add_grad) {
    double sum = 0.0;
    for (const auto& p : params) {
        if (p.role != ParamRole::weight) {
            continue;
        }
        sum += ops::sum_squares(*p.tensor);
        if (add_grad && r_l2 != 0.0) {
            p.tensor->enable_grad();
            auto g = p.tensor->grad();
            auto v = p.tensor->data();
            for (std::size_t i = 0; i < v.size(); ++i) {
                g[i] += 2.0 * r_l2 * v[i];
            }
        }
    }
    return r_l2 * sum;
}

std::size_t argmax(const Tensor& v) {
    if (v.size() == 0) {
        throw EmptyInputError("argmax of an empty tensor");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

namespace {

void check_corpus(std::span<const SegmentedDoc> corpus, std::size_t classes) {
    for (const auto& doc : corpus) {
        if (doc.label < 0 || static_cast<std::size_t>(doc.label) >= classes) {
            throw ValidationError("document label " + std::to_string(doc.label) + " outside [0, " +
                                  std::to_string(classes) + ")");
        }
    }
}

}  // namespace

StageState train_stage1(std::span<const SegmentedDoc> corpus, SkinParams& params, const TrainConfig& config,
                        StageState state, const StageHooks& hooks) {
    const std::size_t classes = params.classes();
    check_corpus(corpus, classes);
    params.lite.config.dropout = config.dropout;
    auto sample = [&](std::size_t d, rnd::Engine& rng, SkinParams& grads) {
        const SegmentedDoc& doc = corpus[d];
        SkimCache cache;
        SkimOutput out = skim_forward(doc, params, true, &rng, &cache);
        Tensor target = smooth_labels(doc.label, classes, config.gamma, config.normalize_smoothing);
        detail::SampleOutcome res;
        res.loss = ops::cross_entropy(out.o_pre, target);
        res.correct = argmax(out.o_pre) == static_cast<std::size_t>(doc.label);
        Tensor d_o = ops::cross_entropy_backward(out.o_pre, target);
        skim_backward(params, cache, out, &d_o, nullptr, grads);
        return res;
    };
    auto subset = [](SkinParams& m) { return m.skim_params(); };
    return detail::run_stage(1, corpus.size(), params, subset, sample, config, config.lr1, config.epochs1,
                             std::move(state), hooks);
}

std::vector<Distilled> distill_dataset(std::span<const SegmentedDoc> corpus, const SkinParams& params) {
    std::vector<Distilled> out(corpus.size());
    detail::parallel_for(corpus.size(), [&](std::size_t d) {
        Distilled& item = out[d];
        item.doc_index = d;
        item.skim = skim_forward(corpus[d], params, false, nullptr, nullptr);
        item.key = select_key_segment(item.skim.g, corpus[d]);
        item.label = corpus[d].label;
    });
    return out;
}

void write_selection_jsonl(const std::filesystem::path& path, std::span<const Distilled> distilled) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& item : distilled) {
        nlohmann::ordered_json j;
        j["doc_id"] = item.doc_index;
        j["k"] = item.key.k;
        j["start"] = item.key.start;
        j["g"] = std::vector<double>(item.skim.g.data().begin(), item.skim.g.data().end());
        out << j.dump() << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

StageState train_stage3(std::span<const SegmentedDoc> corpus, std::span<const KeySegment> keys,
                        SkinParams& params, const TrainConfig& config, StageState state,
                        const StageHooks& hooks) {
    if (keys.size() != corpus.size()) {
        throw DimensionError("stage 3 got " + std::to_string(keys.size()) + " key segments for " +
                             std::to_string(corpus.size()) + " documents");
    }
    const std::size_t classes = params.classes();
    check_corpus(corpus, classes);
    params.lite.config.dropout = config.dropout;
    params.strong.config.dropout = config.dropout;
    auto sample = [&](std::size_t d, rnd::Engine& rng, SkinParams& grads) {
        const SegmentedDoc& doc = corpus[d];
        SkimCache scache;
        SkimOutput skim = skim_forward(doc, params, true, &rng, &scache);
        IntensiveCache icache;
        IntensiveOutput out = intensive_forward(keys[d], skim, params, true, &rng, &icache, config.ablate_local);
        Tensor target = smooth_labels(doc.label, classes, config.gamma, config.normalize_smoothing);
        detail::SampleOutcome res;
        res.loss = ops::cross_entropy(out.o, target);
        res.correct = argmax(out.o) == static_cast<std::size_t>(doc.label);
        Tensor d_o = ops::cross_entropy_backward(out.o, target);
        Tensor d_rg = intensive_backward(params, icache, out, d_o, grads, config.ablate_local);
        skim_backward(params, scache, skim, nullptr, &d_rg, grads);
        return res;
    };
    auto subset = [](SkinParams& m) { return m.params(); };
    return detail::run_stage(3, corpus.size(), params, subset, sample, config, config.lr2, config.epochs3,
                             std::move(state), hooks);
}

Tensor predict_prc(const SegmentedDoc& doc, const SkinParams& params) {
    return skim_forward(doc, params, false, nullptr, nullptr).o_pre;
}

Tensor predict_skin(const SegmentedDoc& doc, const SkinParams& params, bool ablate_local) {
    SkimOutput skim = skim_forward(doc, params, false, nullptr, nullptr);
    KeySegment key = select_key_segment(skim.g, doc);
    return intensive_forward(key, skim, params, false, nullptr, nullptr, ablate_local).o;
}

EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
    const std::size_t classes = confusion.size();
    for (const auto& row : confusion) {
        if (row.size() != classes) {
            throw DimensionError("confusion matrix must be square");
        }
    }
    EvalReport report;
    report.per_class.resize(classes);
    std::size_t diag = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t predicted = 0;
        std::size_t support = 0;
        for (std::size_t o = 0; o < classes; ++o) {
            predicted += confusion[o][c];
            support += confusion[c][o];
        }
        const std::size_t tp = confusion[c][c];
        diag += tp;
        report.total += support;
        ClassMetrics& m = report.per_class[c];
        m.support = support;
        m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        report.macro_f1 += m.f1;
    }
    if (classes > 0) {
        report.macro_f1 /= static_cast<double>(classes);
    }
    report.accuracy = report.total ? static_cast<double>(diag) / static_cast<double>(report.total) : 0.0;
    report.confusion = std::move(confusion);
    return report;
}

EvalReport evaluate(const Predictor& predict, std::span<const SegmentedDoc> docs, std::size_t classes) {
    if (docs.empty()) {
        throw EmptyInputError("evaluate: no documents");
    }
    check_corpus(docs, classes);
    std::vector<std::size_t> predicted(docs.size());
    detail::parallel_for(docs.size(), [&](std::size_t d) {
        Tensor probs = predict(docs[d]);
        if (probs.size() != classes) {
            throw DimensionError("predictor returned " + std::to_string(probs.size()) + " scores for " +
                                 std::to_string(classes) + " classes");
        }
        predicted[d] = argmax(probs);
    });
    std::vector<std::vector<std::size_t>> confusion(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t d = 0; d < docs.size(); ++d) {
        confusion[static_cast<std::size_t>(docs[d].label)][predicted[d]] += 1;
    }
    return report_from_confusion(std::move(confusion));
}

EvalReport evaluate(const Predictor& predict, const HeldOut<SegmentedDoc>& test, std::size_t classes) {
    return evaluate(predict, std::span<const SegmentedDoc>(test.items()), classes);
}

}  // namespace skin
