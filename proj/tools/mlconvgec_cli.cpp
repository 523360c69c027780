#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "mlconvgec/pipeline/stages.hpp"

using namespace mlconvgec;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string work_dir;
    std::vector<std::string> seeds;
    std::size_t beam = 0;
    std::string ensemble;
    std::string features;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config, "experiment config file");
    if (needs_config) opt->required();
    cmd->add_option("--work-dir", c.work_dir, "overrides paths.work_dir");
    cmd->add_option("--seeds,--seed", c.seeds, "training seeds (comma separated or repeated)")->delimiter(',');
    cmd->add_option("--beam", c.beam, "beam width");
    cmd->add_option("--ensemble", c.ensemble, "comma-separated checkpoint list");
    cmd->add_option("--features", c.features, "rescoring feature groups: eo, lm, none");
    cmd->add_option("--set", c.overrides, "section.key=value override (repeatable)");
}

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
    if (c.config.empty()) cfg.set_base_dir(fs::current_path());
    for (const auto& o : c.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) fail(ErrorCategory::config, "--set expects section.key=value, got '" + o + "'");
        cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (!c.work_dir.empty()) cfg.set("paths.work_dir", fs::absolute(c.work_dir).string());
    if (!c.seeds.empty()) cfg.set("train.seeds", join(c.seeds, ","));
    if (c.beam) cfg.set("decode.beam", std::to_string(c.beam));
    if (!c.ensemble.empty()) cfg.set("decode.ensemble", c.ensemble);
    if (!c.features.empty()) cfg.set("rescore.features", c.features);
    return cfg;
}

int report(ErrorCategory cat, const std::string& msg) {
    std::string one_line = msg;
    for (auto& ch : one_line)
        if (ch == '\n') ch = ' ';
    std::cerr << "error: category=" << category_name(cat) << " message=" << one_line << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convolutional encoder-decoder grammatical error correction toolkit"};
    app.require_subcommand(1);
    Common common;

    auto* pre = app.add_subcommand("preprocess", "split dev, learn BPE, build vocabularies");
    add_common(pre, common);
    auto* pt = app.add_subcommand("pretrain", "train subword skip-gram embeddings");
    add_common(pt, common);
    auto* tr = app.add_subcommand("train", "train one model per seed");
    add_common(tr, common);
    auto* lm = app.add_subcommand("train-lm", "train the n-gram language model");
    add_common(lm, common);

    std::string input, name, sources;
    bool greedy = false;
    auto* dec = app.add_subcommand("decode", "ensemble beam search over an input file");
    add_common(dec, common);
    dec->add_option("--input", input, "word-level input, one sentence per line")->required();
    dec->add_option("--name", name, "artifact prefix (default: input file stem)");
    dec->add_flag("--greedy", greedy, "greedy search instead of beam search");

    auto* tune = app.add_subcommand("tune", "MERT on the decoded dev n-best list");
    add_common(tune, common);

    auto* rs = app.add_subcommand("rescore", "rerank a decoded n-best list with tuned weights");
    add_common(rs, common);
    rs->add_option("--name", name, "decode artifact prefix")->required();
    rs->add_option("--sources", sources, "word-level sources of the decoded input")->required();

    std::string hyp, m2;
    std::vector<std::string> refs;
    auto* ev = app.add_subcommand("evaluate", "M2 precision/recall/F0.5 and optional GLEU");
    ev->add_option("--hyp", hyp, "system output, one sentence per line")->required();
    ev->add_option("--m2", m2, "gold M2 annotations")->required();
    ev->add_option("--ref", refs, "reference file for GLEU (repeatable)");

    auto* all = app.add_subcommand("run-all", "preprocess through evaluate in one invocation");
    add_common(all, common);

    std::size_t synth_n = 200;
    std::uint64_t synth_seed = 1;
    std::string synth_src, synth_tgt;
    auto* syn = app.add_subcommand("synth", "write a synthetic learner corpus");
    syn->add_option("-n,--count", synth_n, "number of pairs");
    syn->add_option("--seed", synth_seed, "generator seed");
    syn->add_option("--source", synth_src, "output source file")->required();
    syn->add_option("--target", synth_tgt, "output target file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::cerr << "error: category=usage message=" << msg << "\n";
        return 2;
    }

    try {
        std::ostream& log = std::cout;
        if (*ev) {
            std::vector<fs::path> rp(refs.begin(), refs.end());
            const auto r = cmd_evaluate(hyp, m2, rp);
            std::cout << r.human() << "\n" << r.machine() << "\n";
            return 0;
        }
        if (*syn) {
            cmd_synth(synth_n, synth_seed, synth_src, synth_tgt);
            std::cout << "synth pairs=" << synth_n << " source=" << synth_src << " target=" << synth_tgt << "\n";
            return 0;
        }
        const auto cfg = load_config(common);
        if (*pre) cmd_preprocess(cfg, log);
        if (*pt) cmd_pretrain(cfg, log);
        if (*tr) cmd_train(cfg, log);
        if (*lm) cmd_train_lm(cfg, log);
        if (*dec) cmd_decode(cfg, {input, name.empty() ? fs::path(input).stem().string() : name, greedy}, log);
        if (*tune) cmd_tune(cfg, log);
        if (*rs) cmd_rescore(cfg, name, sources, log);
        if (*all) {
            const auto r = cmd_run_all(cfg, log);
            std::cout << r.human() << "\n";
        }
    } catch (const Error& e) {
        return report(e.category(), e.what());
    } catch (const fs::filesystem_error& e) {
        return report(ErrorCategory::io, e.what());
    } catch (const std::exception& e) {
        std::cerr << "error: category=internal message=" << e.what() << "\n";
        return 1;
    }
    return 0;
}
