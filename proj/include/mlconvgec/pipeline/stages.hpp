#pragma once

#include <algorithm>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mlconvgec/decoder/beam.hpp"
#include "mlconvgec/decoder/nbest.hpp"
#include "mlconvgec/lm/ngram.hpp"
#include "mlconvgec/metrics/gleu.hpp"
#include "mlconvgec/metrics/m2.hpp"
#include "mlconvgec/model/checkpoint.hpp"
#include "mlconvgec/pipeline/config.hpp"
#include "mlconvgec/pipeline/manifest.hpp"
#include "mlconvgec/pipeline/synth.hpp"
#include "mlconvgec/pretrain/embeddings.hpp"
#include "mlconvgec/rescorer/mert.hpp"
#include "mlconvgec/textprep/bpe.hpp"
#include "mlconvgec/textprep/corpus.hpp"
#include "mlconvgec/textprep/vocab.hpp"
#include "mlconvgec/trainer/train.hpp"

namespace mlconvgec {

namespace stage {
inline constexpr const char* preprocess = "preprocess";
inline constexpr const char* pretrain = "pretrain";
inline constexpr const char* train = "train";
inline constexpr const char* train_lm = "train-lm";
inline constexpr const char* tune = "tune";
}  // namespace stage

namespace artifact {
inline constexpr const char* bpe_codes = "bpe.codes";
inline constexpr const char* src_vocab = "vocab.src";
inline constexpr const char* tgt_vocab = "vocab.tgt";
inline constexpr const char* train_src = "train.bpe.src";
inline constexpr const char* train_tgt = "train.bpe.tgt";
inline constexpr const char* train_words_tgt = "train.tgt";
inline constexpr const char* dev_src = "dev.src";      // words
inline constexpr const char* dev_bpe_src = "dev.bpe.src";
inline constexpr const char* dev_bpe_tgt = "dev.bpe.tgt";
inline constexpr const char* dev_m2 = "dev.m2";
inline constexpr const char* embeddings = "embeddings.vec";
inline constexpr const char* lm = "lm.arpa";
inline constexpr const char* weights = "weights.txt";
}  // namespace artifact

namespace detail {

inline std::string lines_of(const std::vector<Tokens>& sents) {
    std::string out;
    for (const auto& s : sents) out += join(s) + "\n";
    return out;
}

inline std::vector<int> encode_eos(const Vocabulary& v, const Tokens& t) {
    auto ids = v.encode(t);
    ids.push_back(Vocabulary::eos_index);
    return ids;
}

/// Source with the lowest-numbered annotator's edits applied.
inline Tokens apply_gold(const M2Sentence& s) {
    if (s.gold.empty()) return s.source;
    auto edits = s.gold.begin()->second;
    std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) { return a.start < b.start; });
    Tokens out;
    std::size_t pos = 0;
    for (const auto& e : edits) {
        if (e.start < pos || e.end > s.source.size()) fail(ErrorCategory::ingestion, "overlapping or out-of-range gold edits");
        out.insert(out.end(), s.source.begin() + static_cast<long>(pos), s.source.begin() + static_cast<long>(e.start));
        for (auto& w : split_ws(e.replacement)) out.push_back(w);
        pos = e.end;
    }
    out.insert(out.end(), s.source.begin() + static_cast<long>(pos), s.source.end());
    return out;
}

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(c.canonical()); }

inline std::string checkpoint_name(std::uint64_t seed) { return "model.seed" + std::to_string(seed) + ".ckpt"; }

}  // namespace detail

/// Everything the later stages read from preprocessing.
struct PreparedData {
    BpeModel bpe;
    Vocabulary src_vocab, tgt_vocab;
    std::vector<Tokens> train_src, train_tgt;  // segmented
    std::vector<Tokens> dev_src_words, dev_src, dev_tgt;
    std::vector<M2Sentence> dev_gold;
};

inline PreparedData load_prepared(const std::filesystem::path& work) {
    require_stage(work, stage::preprocess);
    PreparedData d;
    d.bpe = BpeModel::load(work / artifact::bpe_codes);
    d.src_vocab = Vocabulary::load(work / artifact::src_vocab);
    d.tgt_vocab = Vocabulary::load(work / artifact::tgt_vocab);
    d.train_src = read_tokenized(work / artifact::train_src);
    d.train_tgt = read_tokenized(work / artifact::train_tgt);
    d.dev_src_words = read_tokenized(work / artifact::dev_src);
    d.dev_src = read_tokenized(work / artifact::dev_bpe_src);
    d.dev_tgt = read_tokenized(work / artifact::dev_bpe_tgt);
    d.dev_gold = load_m2(work / artifact::dev_m2);
    return d;
}

// ---------------------------------------------------------------------------

/// Drops unchanged pairs, splits off a seeded dev set (or reads an external
/// M2 dev set), learns BPE on both training sides and builds vocabularies.
inline Manifest cmd_preprocess(const ExperimentConfig& cfg, std::ostream& log) {
    const auto work = cfg.work_dir();
    const auto src_path = cfg.path("paths.train_source"), tgt_path = cfg.path("paths.train_target");
    for (const auto& p : {src_path, tgt_path})
        if (!std::filesystem::exists(p)) fail(ErrorCategory::config, "training file " + p.string() + " does not exist");
    const bool external_dev = cfg.has("paths.dev_m2");
    if (external_dev && !std::filesystem::exists(cfg.path("paths.dev_m2"))) {
        fail(ErrorCategory::config, "dev M2 file " + cfg.path("paths.dev_m2").string() + " does not exist");
    }
    const std::size_t merges = cfg.get_size("preprocess.bpe_merges");
    const std::size_t cap = cfg.get_size("preprocess.vocab_size");
    if (cap < Vocabulary::reserved_count) fail(ErrorCategory::config, "preprocess.vocab_size is below the reserved entries");

    IngestReport rep;
    auto corpus = load_parallel(src_path, tgt_path, &rep);
    std::vector<SentencePair> train, dev;
    std::vector<M2Sentence> gold;
    if (external_dev) {
        gold = load_m2(cfg.path("paths.dev_m2"));
        for (const auto& g : gold) dev.push_back({g.source, detail::apply_gold(g)});
        train = std::move(corpus.pairs);
    } else {
        const std::size_t dev_size = cfg.get_size("preprocess.dev_size");
        if (dev_size >= corpus.size()) {
            fail(ErrorCategory::config, "preprocess.dev_size " + std::to_string(dev_size) + " leaves no training data (" +
                                            std::to_string(corpus.size()) + " usable pairs)");
        }
        std::vector<std::size_t> idx(corpus.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng(cfg.get_size("preprocess.seed"));
        rng.shuffle(idx);
        std::vector<std::size_t> dev_idx(idx.begin(), idx.begin() + static_cast<long>(dev_size));
        std::sort(dev_idx.begin(), dev_idx.end());
        std::vector<bool> is_dev(corpus.size(), false);
        for (auto i : dev_idx) is_dev[i] = true;
        for (std::size_t i = 0; i < corpus.size(); ++i) (is_dev[i] ? dev : train).push_back(corpus.pairs[i]);
        for (const auto& p : dev) gold.push_back(parse_m2(format_m2(p.source, extract_system_edits(p.source, p.target))).front());
    }
    if (train.empty()) fail(ErrorCategory::ingestion, "no training pairs left after dropping unchanged ones");

    StageRun run(work, stage::preprocess, detail::config_hash(cfg));
    run.input(src_path);
    run.input(tgt_path);
    if (external_dev) run.input(cfg.path("paths.dev_m2"));

    std::vector<Tokens> words;
    for (const auto& p : train) {
        words.push_back(p.source);
        words.push_back(p.target);
    }
    const auto bpe = learn_bpe(words, merges);
    BpeSegmenter seg(bpe);
    std::vector<Tokens> tsrc, ttgt, twords, dsrc, dsrc_words, dtgt;
    for (const auto& p : train) {
        tsrc.push_back(seg.apply(p.source));
        ttgt.push_back(seg.apply(p.target));
        twords.push_back(p.target);
    }
    for (const auto& p : dev) {
        dsrc_words.push_back(p.source);
        dsrc.push_back(seg.apply(p.source));
        dtgt.push_back(seg.apply(p.target));
    }
    const auto sv = build_vocab(tsrc, cap), tv = build_vocab(ttgt, cap);

    std::string m2;
    for (const auto& g : gold) {
        std::vector<Edit> edits;
        if (!g.gold.empty()) edits = g.gold.begin()->second;
        m2 += format_m2(g.source, edits);
    }
    run.output(artifact::bpe_codes, bpe.serialize());
    run.output(artifact::src_vocab, sv.serialize());
    run.output(artifact::tgt_vocab, tv.serialize());
    run.output(artifact::train_src, detail::lines_of(tsrc));
    run.output(artifact::train_tgt, detail::lines_of(ttgt));
    run.output(artifact::train_words_tgt, detail::lines_of(twords));
    run.output(artifact::dev_src, detail::lines_of(dsrc_words));
    run.output(artifact::dev_bpe_src, detail::lines_of(dsrc));
    run.output(artifact::dev_bpe_tgt, detail::lines_of(dtgt));
    run.output(artifact::dev_m2, external_dev ? read_file(cfg.path("paths.dev_m2")) : m2);
    run.info("pairs_read", std::to_string(rep.read));
    run.info("pairs_kept", std::to_string(rep.kept));
    run.info("train_pairs", std::to_string(train.size()));
    run.info("dev_pairs", std::to_string(dev.size()));
    run.info("bpe_merges", std::to_string(bpe.merges.size()));
    run.info("src_vocab", std::to_string(sv.size()));
    run.info("tgt_vocab", std::to_string(tv.size()));
    run.finish();
    log << "preprocess read=" << rep.read << " kept=" << rep.kept << " train=" << train.size() << " dev=" << dev.size()
        << " merges=" << bpe.merges.size() << " src_vocab=" << sv.size() << " tgt_vocab=" << tv.size() << "\n";
    return run.manifest();
}

/// Skip-gram embeddings for BPE tokens. The corpus is the monolingual file
/// when configured, otherwise both sides of the training data.
inline Manifest cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
    const auto work = cfg.work_dir();
    const auto ecfg = cfg.embedding_config();
    const auto d = load_prepared(work);
    StageRun run(work, stage::pretrain, detail::config_hash(cfg));
    run.input(work / artifact::bpe_codes);
    std::vector<Tokens> corpus;
    if (cfg.has("paths.monolingual")) {
        const auto mono = cfg.path("paths.monolingual");
        if (!std::filesystem::exists(mono)) fail(ErrorCategory::config, "monolingual file " + mono.string() + " does not exist");
        run.input(mono);
        BpeSegmenter seg(d.bpe);
        for (const auto& s : read_tokenized(mono)) corpus.push_back(seg.apply(s));
    } else {
        run.input(work / artifact::train_src);
        run.input(work / artifact::train_tgt);
        corpus = d.train_src;
        corpus.insert(corpus.end(), d.train_tgt.begin(), d.train_tgt.end());
    }
    const auto table = train_embeddings(corpus, ecfg, [&](std::size_t e, double loss) {
        log << "pretrain epoch=" << e + 1 << " loss=" << format_fixed(loss, 6) << "\n";
    });
    run.output(artifact::embeddings, format_embeddings(table));
    run.info("mode", to_string(ecfg.mode));
    run.info("tokens", std::to_string(table.tokens.size()));
    run.info("dim", std::to_string(table.dim));
    run.finish();
    log << "pretrain mode=" << to_string(ecfg.mode) << " tokens=" << table.tokens.size() << " dim=" << table.dim << "\n";
    return run.manifest();
}

/// One best checkpoint per configured seed.
inline Manifest cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    const auto work = cfg.work_dir();
    const auto seeds = cfg.train_seeds();
    const auto& init_mode = cfg.get("train.init");
    if (init_mode != "pretrained" && init_mode != "random") fail(ErrorCategory::config, "train.init must be pretrained or random");
    const auto d = load_prepared(work);
    std::optional<EmbeddingTable> table;
    if (init_mode == "pretrained") {
        require_stage(work, stage::pretrain);
        table = load_embeddings(work / artifact::embeddings);
    }
    const auto mc = cfg.model_config(d.src_vocab.size(), d.tgt_vocab.size());
    for (auto s : seeds) cfg.train_config(s);  // validate before any work

    StageRun run(work, stage::train, detail::config_hash(cfg));
    for (const char* a : {artifact::train_src, artifact::train_tgt, artifact::dev_bpe_src, artifact::dev_bpe_tgt, artifact::dev_m2,
                          artifact::src_vocab, artifact::tgt_vocab})
        run.input(work / a);
    if (table) run.input(work / artifact::embeddings);

    std::vector<TokenPair> pairs, dev;
    for (std::size_t i = 0; i < d.train_src.size(); ++i)
        pairs.push_back({detail::encode_eos(d.src_vocab, d.train_src[i]), detail::encode_eos(d.tgt_vocab, d.train_tgt[i])});
    std::vector<std::vector<int>> dev_sources;
    for (std::size_t i = 0; i < d.dev_src.size(); ++i) {
        dev.push_back({detail::encode_eos(d.src_vocab, d.dev_src[i]), detail::encode_eos(d.tgt_vocab, d.dev_tgt[i])});
        dev_sources.push_back(dev.back().source);
    }
    const auto to_words = [&d](const std::vector<int>& ids) { return desegment(d.tgt_vocab.decode(ids)); };

    struct SeedRun {
        std::uint64_t seed;
        TrainResult result;
        std::string log;
    };
    std::vector<SeedRun> runs;
    for (auto s : seeds) runs.push_back({s, {}, {}});
    std::mutex log_mutex;
    auto train_one = [&](SeedRun& r) {
        ModelParams p(mc);
        Rng rng(r.seed);
        init_params(p, rng);
        if (table) apply_pretrained(p, d.src_vocab, d.tgt_vocab, *table);
        auto eval = make_dev_evaluator(dev_sources, d.dev_gold, to_words, cfg.get_size("train.dev_beam"));
        r.result = mlconvgec::train(pairs, dev, std::move(p), cfg.train_config(r.seed), eval,
                                    [&](const EpochLog& e, const ModelParams&, const TrainResult&) {
                                        const auto line = e.line();
                                        r.log += line.substr(0, line.rfind(" seconds=")) + "\n";
                                        std::lock_guard lock(log_mutex);
                                        log << "train seed=" << r.seed << " " << line << "\n";
                                        return false;
                                    });
    };
    if (cfg.get_bool("train.parallel_seeds") && runs.size() > 1) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(runs.size());
        for (std::size_t i = 0; i < runs.size(); ++i)
            threads.emplace_back([&, i] {
                try {
                    train_one(runs[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        for (auto& r : runs) train_one(r);
    }

    std::string list;
    for (auto& r : runs) {
        Checkpoint ck{std::move(r.result.best), d.src_vocab, d.tgt_vocab,
                      {{"seed", std::to_string(r.seed)},
                       {"best_epoch", std::to_string(r.result.best_epoch)},
                       {"dev_f05", format_double(r.result.best_f05)}}};
        const auto name = detail::checkpoint_name(r.seed);
        const auto blob = serialize_checkpoint(ck);
        run.output(name, blob);
        run.output("train.seed" + std::to_string(r.seed) + ".log", r.log);
        run.info("seed" + std::to_string(r.seed) + ".dev_f05", format_double(r.result.best_f05));
        run.info("seed" + std::to_string(r.seed) + ".best_epoch", std::to_string(r.result.best_epoch));
        list += name + "\n";
        log << "train seed=" << r.seed << " best_epoch=" << r.result.best_epoch
            << " dev_f05=" << format_fixed(r.result.best_f05, 4) << " checkpoint=" << (work / name).string() << "\n";
    }
    run.output("checkpoints.txt", list);
    run.info("init", init_mode);
    run.finish();
    return run.manifest();
}

inline Manifest cmd_train_lm(const ExperimentConfig& cfg, std::ostream& log) {
    const auto work = cfg.work_dir();
    const auto opt = cfg.lm_options();
    std::filesystem::path src;
    if (cfg.has("paths.monolingual")) {
        src = cfg.path("paths.monolingual");
        if (!std::filesystem::exists(src)) fail(ErrorCategory::config, "monolingual file " + src.string() + " does not exist");
    } else {
        require_stage(work, stage::preprocess);
        src = work / artifact::train_words_tgt;
    }
    StageRun run(work, stage::train_lm, detail::config_hash(cfg));
    run.input(src);
    const auto corpus = read_tokenized(src);
    const auto lm = train_lm(corpus, opt);
    run.output(artifact::lm, lm.to_arpa());
    run.info("order", std::to_string(lm.order()));
    run.info("sentences", std::to_string(corpus.size()));
    run.info("vocabulary", std::to_string(lm.vocabulary_size()));
    run.finish();
    log << "train-lm order=" << lm.order() << " sentences=" << corpus.size() << " vocabulary=" << lm.vocabulary_size() << "\n";
    return run.manifest();
}

// ---------------------------------------------------------------------------

struct DecodeRequest {
    std::filesystem::path input;  // word-level sentences, one per line
    std::string name;             // artifacts <name>.nbest and <name>.out
    bool greedy = false;
};

inline std::vector<std::filesystem::path> ensemble_paths(const ExperimentConfig& cfg) {
    const auto work = cfg.work_dir();
    std::vector<std::filesystem::path> out;
    if (cfg.has("decode.ensemble")) {
        for (const auto& e : cfg.get_list("decode.ensemble")) {
            std::filesystem::path p = e;
            if (p.is_relative()) p = std::filesystem::exists(work / p) ? work / p : cfg.base_dir() / p;
            out.push_back(p);
        }
    } else {
        require_stage(work, stage::train);
        for (const auto& line : read_lines(work / "checkpoints.txt"))
            if (!trim(line).empty()) out.push_back(work / std::string(trim(line)));
    }
    if (out.empty()) fail(ErrorCategory::config, "decode needs at least one checkpoint");
    for (const auto& p : out)
        if (!std::filesystem::exists(p)) fail(ErrorCategory::dependency, "checkpoint " + p.string() + " does not exist; run train first");
    return out;
}

/// BPE-segments the input, runs ensemble beam search and writes the n-best
/// list and the top-1 output, both de-segmented.
inline Manifest cmd_decode(const ExperimentConfig& cfg, const DecodeRequest& req, std::ostream& log) {
    const auto work = cfg.work_dir();
    const std::size_t beam = cfg.get_size("decode.beam");
    if (beam < 1) fail(ErrorCategory::config, "decode.beam must be at least 1");
    if (!std::filesystem::exists(req.input)) fail(ErrorCategory::config, "decode input " + req.input.string() + " does not exist");
    const auto paths = ensemble_paths(cfg);
    require_stage(work, stage::preprocess);
    const auto bpe = BpeModel::load(work / artifact::bpe_codes);
    std::vector<Checkpoint> cks;
    for (const auto& p : paths) cks.push_back(load_checkpoint(p));
    for (const auto& ck : cks) {
        if (!(ck.src_vocab == cks[0].src_vocab) || !(ck.tgt_vocab == cks[0].tgt_vocab)) {
            fail(ErrorCategory::contract, "ensemble checkpoints use different vocabularies");
        }
    }
    const auto src_vocab = Vocabulary::load(work / artifact::src_vocab);
    if (!(cks[0].src_vocab == src_vocab)) {
        fail(ErrorCategory::contract, "checkpoint vocabulary does not match the preprocessed vocabulary");
    }

    StageRun run(work, "decode-" + req.name, detail::config_hash(cfg));
    run.input(req.input);
    for (const auto& p : paths) run.input(p);
    std::vector<const ModelParams*> members;
    for (const auto& ck : cks) members.push_back(&ck.params);
    const auto& tv = cks[0].tgt_vocab;

    BpeSegmenter seg(bpe);
    NbestList nbest;
    std::string top1;
    std::size_t n = 0;
    for (const auto& line : read_lines(req.input)) {
        const auto src = detail::encode_eos(cks[0].src_vocab, seg.apply(split_ws(line)));
        std::vector<Hypothesis> hyps;
        if (req.greedy) {
            std::vector<StepScorer> scorers;
            for (const auto* m : members) scorers.push_back(model_scorer(*m, src));
            SearchOptions so;
            so.max_len = cfg.get_size("decode.max_len") ? cfg.get_size("decode.max_len") : default_max_len(src.size());
            for (const auto* m : members) so.max_len = std::min(so.max_len, m->config().max_positions - 1);
            so.max_len = std::max<std::size_t>(1, so.max_len);
            so.banned = {Vocabulary::pad_index, Vocabulary::bos_index};
            hyps.push_back(greedy_search([&](std::span<const int> prefix) { return detail::score_step(scorers, prefix); }, so));
        } else {
            DecodeOptions opt;
            opt.beam = beam;
            opt.max_len = cfg.get_size("decode.max_len");
            hyps = decode_sentence(members, src, opt).nbest;
        }
        auto& group = nbest.emplace_back();
        for (const auto& h : hyps) group.push_back({n, desegment(tv.decode(h.tokens)), h.model_score});
        top1 += join(group.front().hypothesis) + "\n";
        ++n;
    }
    run.output(req.name + ".nbest", format_nbest(nbest));
    run.output(req.name + ".out", top1);
    run.info("sentences", std::to_string(n));
    run.info("ensemble", std::to_string(members.size()));
    run.info("beam", req.greedy ? "greedy" : std::to_string(beam));
    run.finish();
    log << "decode name=" << req.name << " sentences=" << n << " ensemble=" << members.size()
        << " output=" << (work / (req.name + ".out")).string() << "\n";
    return run.manifest();
}

/// Features for a decoded n-best list; the LM is loaded when enabled.
inline FeatureNbest features_for(const ExperimentConfig& cfg, const std::string& name, const std::vector<Tokens>& sources) {
    const auto work = cfg.work_dir();
    require_stage(work, "decode-" + name);
    const auto toggles = cfg.feature_toggles();
    std::optional<NGramModel> lm;
    if (toggles.lm) {
        require_stage(work, stage::train_lm);
        lm = NGramModel::load(work / artifact::lm);
    }
    const auto nb = load_nbest(work / (name + ".nbest"));
    return extract_features(nb, sources, toggles, lm ? &*lm : nullptr);
}

/// MERT on the decoded dev n-best list.
inline Manifest cmd_tune(const ExperimentConfig& cfg, std::ostream& log, const std::string& name = "dev") {
    const auto work = cfg.work_dir();
    const auto d = load_prepared(work);
    const auto feats = features_for(cfg, name, d.dev_src_words);
    const auto names = feature_names(cfg.feature_toggles());
    StageRun run(work, stage::tune, detail::config_hash(cfg));
    run.input(work / (name + ".nbest"));
    run.input(work / artifact::dev_m2);
    if (cfg.feature_toggles().lm) run.input(work / artifact::lm);
    const auto r = mert(feats, d.dev_gold, initial_weights(names), cfg.mert_options());
    for (const auto& w : r.warnings) log << "warning: " << w << "\n";
    run.output(name + ".features", format_feature_nbest(feats, names));
    run.output(artifact::weights, format_weights(r.weights));
    run.info("initial_dev_f05", format_double(r.initial_f_score));
    run.info("dev_f05", format_double(r.f_score));
    run.finish();
    log << "tune initial_dev_f05=" << format_fixed(r.initial_f_score, 4) << " dev_f05=" << format_fixed(r.f_score, 4) << "\n";
    return run.manifest();
}

/// Reranks a decoded n-best list with the tuned weights.
inline Manifest cmd_rescore(const ExperimentConfig& cfg, const std::string& name, const std::filesystem::path& sources_path,
                            std::ostream& log) {
    const auto work = cfg.work_dir();
    require_stage(work, stage::tune);
    const auto w = parse_weights(read_file(work / artifact::weights), (work / artifact::weights).string());
    const auto names = feature_names(cfg.feature_toggles());
    if (w.names != names) {
        fail(ErrorCategory::contract, "weights were tuned for features [" + join(w.names, ",") + "] but rescoring uses [" +
                                          join(names, ",") + "]");
    }
    const auto feats = features_for(cfg, name, read_tokenized(sources_path));
    StageRun run(work, "rescore-" + name, detail::config_hash(cfg));
    run.input(work / artifact::weights);
    run.input(work / (name + ".nbest"));
    const auto ranked = rescore(feats, w);
    std::string out;
    for (const auto& g : ranked) out += (g.empty() ? "" : join(g.front().hypothesis)) + "\n";
    run.output(name + ".rescored.out", out);
    run.finish();
    log << "rescore name=" << name << " output=" << (work / (name + ".rescored.out")).string() << "\n";
    return run.manifest();
}

struct EvalResult {
    ScoreReport m2;
    std::optional<double> gleu;

    std::string human() const {
        std::string s = "Precision " + format_fixed(100 * m2.precision, 2) + "  Recall " + format_fixed(100 * m2.recall, 2) +
                        "  F0.5 " + format_fixed(100 * m2.f05, 2) + "  (TP " + std::to_string(m2.counts.tp) + ", FP " +
                        std::to_string(m2.counts.fp) + ", FN " + std::to_string(m2.counts.fn) + ")";
        if (gleu) s += "  GLEU " + format_fixed(100 * *gleu, 2);
        return s;
    }

    std::string machine() const {
        std::string s = "tp=" + std::to_string(m2.counts.tp) + " fp=" + std::to_string(m2.counts.fp) +
                        " fn=" + std::to_string(m2.counts.fn) + " precision=" + format_double(m2.precision) +
                        " recall=" + format_double(m2.recall) + " f05=" + format_double(m2.f05);
        if (gleu) s += " gleu=" + format_double(*gleu);
        return s;
    }
};

/// M2 score of a hypothesis file, and GLEU when reference files are given
/// (sources come from the M2 file).
inline EvalResult cmd_evaluate(const std::filesystem::path& hyp_path, const std::filesystem::path& m2_path,
                               const std::vector<std::filesystem::path>& refs = {}) {
    const auto gold = load_m2(m2_path);
    const auto hyps = read_tokenized(hyp_path);
    EvalResult r;
    r.m2 = m2_score(hyps, gold);
    if (!refs.empty()) {
        std::vector<Tokens> sources;
        for (const auto& g : gold) sources.push_back(g.source);
        std::vector<std::vector<Tokens>> per_sentence(hyps.size());
        for (const auto& rp : refs) {
            const auto ref = read_tokenized(rp);
            if (ref.size() != hyps.size()) {
                fail(ErrorCategory::alignment, rp.string() + " has " + std::to_string(ref.size()) + " lines, expected " +
                                                   std::to_string(hyps.size()));
            }
            for (std::size_t i = 0; i < ref.size(); ++i) per_sentence[i].push_back(ref[i]);
        }
        r.gleu = gleu(sources, hyps, per_sentence);
    }
    return r;
}

/// preprocess → pretrain → train → train-lm → decode dev → tune → rescore
/// dev → evaluate, in one call. Returns the rescored dev evaluation.
inline EvalResult cmd_run_all(const ExperimentConfig& cfg, std::ostream& log) {
    const auto work = cfg.work_dir();
    cfg.feature_toggles();
    cmd_preprocess(cfg, log);
    if (cfg.get("train.init") == "pretrained") cmd_pretrain(cfg, log);
    cmd_train(cfg, log);
    if (cfg.feature_toggles().lm) cmd_train_lm(cfg, log);
    cmd_decode(cfg, {work / artifact::dev_src, "dev", false}, log);
    const auto beam_eval = cmd_evaluate(work / "dev.out", work / artifact::dev_m2);
    log << "evaluate name=dev " << beam_eval.machine() << "\n";
    cmd_tune(cfg, log);
    cmd_rescore(cfg, "dev", work / artifact::dev_src, log);
    const auto r = cmd_evaluate(work / "dev.rescored.out", work / artifact::dev_m2);
    log << "evaluate name=dev.rescored " << r.machine() << "\n";
    return r;
}

/// Writes a synthetic learner corpus as line-aligned source/target files.
inline void cmd_synth(std::size_t n, std::uint64_t seed, const std::filesystem::path& src, const std::filesystem::path& tgt) {
    std::string s, t;
    for (const auto& p : synthetic_corpus(n, seed)) {
        s += join(p.source) + "\n";
        t += join(p.target) + "\n";
    }
    write_file_atomic(src, s);
    write_file_atomic(tgt, t);
}

}  // namespace mlconvgec
