#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "mlconvgec/pipeline/stages.hpp"
#include "oracles/temp_dir.hpp"

using namespace mlconvgec;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const oracle::TempDir& dir, std::size_t pairs = 120) {
    cmd_synth(pairs, 7, dir.path("c.src"), dir.path("c.tgt"));
    ExperimentConfig c;
    c.set_base_dir(dir.path());
    const std::map<std::string, std::string> values{
        {"paths.train_source", "c.src"}, {"paths.train_target", "c.tgt"}, {"paths.work_dir", "work"},
        {"preprocess.dev_size", "20"},   {"preprocess.bpe_merges", "80"}, {"preprocess.vocab_size", "300"},
        {"model.embed_dim", "12"},       {"model.hidden_dim", "16"},      {"model.layers", "1"},
        {"model.max_positions", "40"},   {"model.dropout", "0"},          {"train.lr", "0.02"},
        {"train.momentum", "0.9"},       {"train.batch_size", "16"},      {"train.clip", "1"},
        {"train.max_epochs", "3"},       {"pretrain.epochs", "1"},        {"pretrain.buckets", "4096"},
        {"lm.order", "3"},               {"decode.beam", "3"},            {"rescore.restarts", "2"},
    };
    for (const auto& [k, v] : values) c.set(k, v);
    return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files[e.path().filename().string()] = read_file(e.path());
    return files;
}

template <class F>
ErrorCategory category_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCategory::io;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

// One trained work directory shared by the decode-side tests.
class TrainedPipeline : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        dir_ = new oracle::TempDir;
        cfg_ = new ExperimentConfig(small_config(*dir_));
        cfg_->set("train.seeds", "1,2");
        std::ostringstream log;
        cmd_preprocess(*cfg_, log);
        cmd_pretrain(*cfg_, log);
        cmd_train(*cfg_, log);
        cmd_train_lm(*cfg_, log);
        cmd_decode(*cfg_, {work() / artifact::dev_src, "dev", false}, log);
    }
    static void TearDownTestSuite() {
        delete cfg_;
        delete dir_;
    }
    static fs::path work() { return cfg_->work_dir(); }
    static ExperimentConfig single(const std::string& ensemble) {
        auto c = *cfg_;
        c.set("decode.ensemble", ensemble);
        return c;
    }

    static oracle::TempDir* dir_;
    static ExperimentConfig* cfg_;
};

oracle::TempDir* TrainedPipeline::dir_ = nullptr;
ExperimentConfig* TrainedPipeline::cfg_ = nullptr;

}  // namespace

TEST(Config, ParsesSectionsAndResolvesPaths) {
    const auto c = ExperimentConfig::parse("[paths]\ntrain_source = a.txt  # comment\n[decode]\nbeam=5\n", "x.conf", "/base");
    EXPECT_EQ(c.path("paths.train_source"), fs::path("/base/a.txt"));
    EXPECT_EQ(c.get_size("decode.beam"), 5u);
    EXPECT_EQ(c.get_size("model.hidden_dim"), 1024u);
}

TEST(Config, UnknownKeyIsConfigError) {
    EXPECT_EQ(category_of([] { ExperimentConfig::parse("[decode]\nbeams = 5\n"); }), ErrorCategory::config);
    EXPECT_EQ(category_of([] { ExperimentConfig::parse("beam = 5\n"); }), ErrorCategory::parse);
    EXPECT_EQ(category_of([] { ExperimentConfig::parse("[train]\nanneal_trigger = loss\n").train_config(1); }),
              ErrorCategory::config);
}

TEST(Preprocess, DeterministicAcrossRuns) {
    oracle::TempDir d;
    const auto cfg = small_config(d);
    std::ostringstream log;
    cmd_preprocess(cfg, log);
    const auto first = snapshot(cfg.work_dir());
    fs::remove_all(cfg.work_dir());
    cmd_preprocess(cfg, log);
    EXPECT_EQ(snapshot(cfg.work_dir()), first);
    EXPECT_TRUE(first.count("preprocess.manifest.json"));
    EXPECT_FALSE(first.count("preprocess.partial"));
}

TEST(Preprocess, DropsUnchangedPairsAndRecordsCounts) {
    oracle::TempDir d;
    auto cfg = small_config(d);
    std::string src, tgt;
    for (int i = 0; i < 100; ++i) {
        const auto w = "w" + std::to_string(i);
        src += "he go " + w + "\n";
        tgt += (i % 10 == 0 ? "he go " : "he goes ") + w + "\n";
    }
    d.write("c.src", src);
    d.write("c.tgt", tgt);
    std::ostringstream log;
    const auto m = cmd_preprocess(cfg, log);
    EXPECT_EQ(m.info.at("pairs_read"), "100");
    EXPECT_EQ(m.info.at("pairs_kept"), "90");
    EXPECT_EQ(m.info.at("dev_pairs"), "20");
    EXPECT_EQ(m.info.at("train_pairs"), "70");
    EXPECT_EQ(read_lines(cfg.work_dir() / artifact::dev_src).size(), 20u);
}

TEST(Preprocess, DevLargerThanCorpusIsConfigError) {
    oracle::TempDir d;
    auto cfg = small_config(d, 30);
    cfg.set("preprocess.dev_size", "500");
    std::ostringstream log;
    EXPECT_EQ(category_of([&] { cmd_preprocess(cfg, log); }), ErrorCategory::config);
    EXPECT_FALSE(fs::exists(cfg.work_dir() / "preprocess.manifest.json"));
}

TEST(Preprocess, ExternalDevSetReplacesSplit) {
    oracle::TempDir d;
    auto cfg = small_config(d, 60);
    d.write("dev.m2", "S he go home .\nA 1 2|||R:VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\n\nS fine .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\n");
    cfg.set("paths.dev_m2", "dev.m2");
    std::ostringstream log;
    const auto m = cmd_preprocess(cfg, log);
    EXPECT_EQ(m.info.at("dev_pairs"), "2");
    EXPECT_EQ(read_file(cfg.work_dir() / artifact::dev_src), "he go home .\nfine .\n");
    EXPECT_EQ(read_file(cfg.work_dir() / artifact::dev_m2), read_file(d.path("dev.m2")));
}

TEST(Stages, MissingUpstreamIsDependencyErrorNamingStage) {
    oracle::TempDir d;
    const auto cfg = small_config(d);
    std::ostringstream log;
    EXPECT_EQ(category_of([&] { cmd_train(cfg, log); }), ErrorCategory::dependency);
    EXPECT_NE(message_of([&] { cmd_train(cfg, log); }).find("'preprocess'"), std::string::npos);
    EXPECT_EQ(category_of([&] { cmd_tune(cfg, log); }), ErrorCategory::dependency);
}

TEST(Stages, FailedStageLeavesPartialMarker) {
    oracle::TempDir d;
    auto cfg = small_config(d);
    std::ostringstream log;
    cmd_preprocess(cfg, log);
    cfg.set("paths.monolingual", "missing.txt");
    EXPECT_EQ(category_of([&] { cmd_pretrain(cfg, log); }), ErrorCategory::config);
    EXPECT_TRUE(fs::exists(cfg.work_dir() / "pretrain.partial"));
    EXPECT_FALSE(fs::exists(cfg.work_dir() / "pretrain.manifest.json"));
    const auto msg = message_of([&] { require_stage(cfg.work_dir(), stage::pretrain); });
    EXPECT_NE(msg.find("did not finish"), std::string::npos);

    cfg.set("paths.monolingual", "");
    cmd_pretrain(cfg, log);
    EXPECT_FALSE(fs::exists(cfg.work_dir() / "pretrain.partial"));
    EXPECT_NO_THROW(require_stage(cfg.work_dir(), stage::pretrain));
}

TEST(Stages, ChangedInputOrOutputIsDetected) {
    oracle::TempDir d;
    const auto cfg = small_config(d);
    std::ostringstream log;
    cmd_preprocess(cfg, log);
    EXPECT_NO_THROW(require_stage(cfg.work_dir(), stage::preprocess));

    const auto vocab = read_file(cfg.work_dir() / artifact::src_vocab);
    write_file_atomic(cfg.work_dir() / artifact::src_vocab, vocab + "extra\n");
    EXPECT_EQ(category_of([&] { require_stage(cfg.work_dir(), stage::preprocess); }), ErrorCategory::dependency);
    write_file_atomic(cfg.work_dir() / artifact::src_vocab, vocab);

    d.write("c.src", read_file(d.path("c.src")) + "one more line\n");
    EXPECT_EQ(category_of([&] { require_stage(cfg.work_dir(), stage::preprocess); }), ErrorCategory::dependency);
    EXPECT_NE(message_of([&] { cmd_pretrain(cfg, log); }).find("changed"), std::string::npos);
}

TEST(Stages, TrainingIsDeterministicPerSeed) {
    oracle::TempDir d;
    auto cfg = small_config(d);
    cfg.set("train.init", "random");
    cfg.set("train.max_epochs", "2");
    std::ostringstream log;
    cmd_preprocess(cfg, log);
    const auto a = cmd_train(cfg, log);
    const auto first_log = read_file(cfg.work_dir() / "train.seed1.log");
    const auto b = cmd_train(cfg, log);
    EXPECT_EQ(a.outputs, b.outputs);
    EXPECT_EQ(read_file(cfg.work_dir() / "train.seed1.log"), first_log);
}

TEST_F(TrainedPipeline, SeedsGiveDistinctCheckpoints) {
    const auto m = require_stage(work(), stage::train);
    ASSERT_TRUE(m.outputs.count("model.seed1.ckpt"));
    ASSERT_TRUE(m.outputs.count("model.seed2.ckpt"));
    EXPECT_NE(m.outputs.at("model.seed1.ckpt"), m.outputs.at("model.seed2.ckpt"));
    EXPECT_EQ(read_file(work() / "checkpoints.txt"), "model.seed1.ckpt\nmodel.seed2.ckpt\n");
    EXPECT_EQ(m.info.at("init"), "pretrained");
}

TEST_F(TrainedPipeline, DecodeIsDeterministic) {
    const auto before = read_file(work() / "dev.nbest");
    std::ostringstream log;
    cmd_decode(*cfg_, {work() / artifact::dev_src, "again", false}, log);
    EXPECT_EQ(read_file(work() / "again.nbest"), before);
    EXPECT_EQ(read_lines(work() / "dev.out").size(), read_lines(work() / artifact::dev_src).size());
}

TEST_F(TrainedPipeline, EmptyInputGivesEmptyOutputs) {
    const auto in = dir_->write("empty.txt", "");
    std::ostringstream log;
    const auto m = cmd_decode(*cfg_, {in, "empty", false}, log);
    EXPECT_EQ(m.info.at("sentences"), "0");
    EXPECT_EQ(read_file(work() / "empty.out"), "");
    EXPECT_EQ(read_file(work() / "empty.nbest"), "");
}

TEST_F(TrainedPipeline, SelfEnsembleMatchesSingleModel) {
    std::ostringstream log;
    cmd_decode(single("model.seed1.ckpt"), {work() / artifact::dev_src, "one", false}, log);
    cmd_decode(single("model.seed1.ckpt,model.seed1.ckpt"), {work() / artifact::dev_src, "twice", false}, log);
    EXPECT_EQ(read_file(work() / "twice.out"), read_file(work() / "one.out"));
}

TEST_F(TrainedPipeline, BeamOneMatchesGreedy) {
    auto c = *cfg_;
    c.set("decode.beam", "1");
    std::ostringstream log;
    cmd_decode(c, {work() / artifact::dev_src, "b1", false}, log);
    cmd_decode(c, {work() / artifact::dev_src, "greedy", true}, log);
    EXPECT_EQ(read_file(work() / "b1.out"), read_file(work() / "greedy.out"));
}

TEST_F(TrainedPipeline, ModelScoreOnlyWeightsKeepDecoderOrder) {
    const auto sources = read_tokenized(work() / artifact::dev_src);
    const auto feats = features_for(*cfg_, "dev", sources);
    const auto ranked = rescore(feats, initial_weights(feature_names(cfg_->feature_toggles())));
    std::string top;
    for (const auto& g : ranked) top += join(g.front().hypothesis) + "\n";
    EXPECT_EQ(top, read_file(work() / "dev.out"));
}

TEST_F(TrainedPipeline, TuningNeverLowersDevScore) {
    std::ostringstream log;
    const auto m = cmd_tune(*cfg_, log);
    cmd_rescore(*cfg_, "dev", work() / artifact::dev_src, log);
    const auto beam = cmd_evaluate(work() / "dev.out", work() / artifact::dev_m2);
    const auto tuned = cmd_evaluate(work() / "dev.rescored.out", work() / artifact::dev_m2);
    EXPECT_GE(tuned.m2.f05, beam.m2.f05);
    EXPECT_NEAR(parse_double(m.info.at("initial_dev_f05"), "x"), beam.m2.f05, 1e-9);
    EXPECT_NEAR(parse_double(m.info.at("dev_f05"), "x"), tuned.m2.f05, 1e-9);

    auto eo_only = *cfg_;
    eo_only.set("rescore.features", "eo");
    EXPECT_EQ(category_of([&] { cmd_rescore(eo_only, "dev", work() / artifact::dev_src, log); }), ErrorCategory::contract);
}

TEST_F(TrainedPipeline, EvaluateReportsCountsAndGleu) {
    const auto r = cmd_evaluate(work() / "dev.out", work() / artifact::dev_m2, {work() / artifact::dev_src});
    ASSERT_TRUE(r.gleu.has_value());
    const auto line = r.machine();
    EXPECT_EQ(line.rfind("tp=" + std::to_string(r.m2.counts.tp) + " fp=", 0), 0u);
    EXPECT_NE(line.find(" f05="), std::string::npos);
    EXPECT_NE(line.find(" gleu="), std::string::npos);
    EXPECT_NE(r.human().find("F0.5"), std::string::npos);
}

TEST_F(TrainedPipeline, LanguageModelArtifactNormalizes) {
    const auto lm = NGramModel::load(work() / artifact::lm);
    EXPECT_EQ(lm.order(), 3u);
    const auto vocab = lm.vocabulary();
    for (const Tokens& h : {Tokens{"<s>", "<s>"}, Tokens{"<s>", "he"}, Tokens{"the", "zzz"}}) {
        double total = 0;
        for (const auto& w : vocab) total += lm.prob(h, w);
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
}
