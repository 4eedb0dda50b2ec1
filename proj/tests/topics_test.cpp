#include <gtest/gtest.h>

#include <random>

#include "gptgeo/digest.hpp"
#include "gptgeo/topics.hpp"

using namespace gptgeo;
using namespace gptgeo::topics;

namespace {

TokenDocument doc(std::set<std::string> tokens, std::string id = "d") {
    return TokenDocument{std::move(id), tokens, tokens.size()};
}

TopicModel example_model() {
    return TopicModel{{Topic::make("t0", {{"convolutional", 0.2}, {"neural_network", 0.5}, {"deep_learning", 0.3}})}};
}

} // namespace

TEST(Preprocess, ShortAbstractIsDropped) {
    EXPECT_FALSE(preprocess_abstract("Graph kernels for molecule search tasks", PreprocessConfig{}));
}

TEST(Preprocess, AllStopWordsDropped) {
    std::string raw;
    for (int i = 0; i < 40; ++i) raw += "the of and which would ";
    EXPECT_FALSE(preprocess_abstract(raw, PreprocessConfig{}));
}

TEST(Preprocess, FrequentBigramsAreAppended) {
    std::string raw;
    for (int i = 0; i < 30; ++i) raw += "neural network ";
    const auto d = preprocess_abstract(raw, PreprocessConfig{}, "p1");
    ASSERT_TRUE(d);
    EXPECT_TRUE(d->tokens.count("neural_network"));
    EXPECT_TRUE(d->tokens.count("neural"));
    EXPECT_EQ(d->token_count, 60u);
    EXPECT_EQ(d->paper_id, "p1");
}

TEST(Preprocess, RareFloorAndNgramCountComeFromCorpus) {
    std::vector<std::string> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back("Deep networks learn representations; deep networks generalize. " + std::string(i == 0 ? "zebra" : ""));
    PreprocessConfig cfg;
    cfg.min_tokens = 1;
    cfg.ngram_min_count = 6;
    const Preprocessor pre(corpus, cfg);
    EXPECT_FALSE(pre.unigram_vocabulary().count("zebra"));
    EXPECT_TRUE(pre.unigram_vocabulary().count("network")); // plural stripped
    EXPECT_TRUE(pre.ngram_vocabulary().count("deep_network"));
    const auto d = pre.transform("x", corpus[0]);
    ASSERT_TRUE(d);
    EXPECT_FALSE(d->tokens.count("zebra"));
    EXPECT_TRUE(d->tokens.count("deep_network"));
    const Preprocessor again(corpus, cfg);
    EXPECT_EQ(*again.transform("x", corpus[0]), *d);
}

TEST(Preprocess, StemmerOptions) {
    EXPECT_EQ(stem("networks", Stemmer::identity), "networks");
    EXPECT_EQ(stem("networks", Stemmer::plural), "network");
    EXPECT_EQ(stem("studies", Stemmer::plural), "study");
    EXPECT_EQ(stem("class", Stemmer::plural), "class");
    EXPECT_EQ(stem("learning", Stemmer::suffix), "learn");
    EXPECT_THROW(stemmer_from_string("porter"), Error);
}

TEST(TopicScore, Examples) {
    const auto model = example_model();
    const auto& t = model.topics[0];
    EXPECT_EQ(t.max_weight, 0.5);
    EXPECT_EQ(t.terms[0].word, "neural_network");
    EXPECT_DOUBLE_EQ(topic_score(doc({"neural_network", "deep_learning", "convolutional", "x"}), t), 1.0);
    EXPECT_EQ(topic_score(doc({"graph"}), t), 0.0);
    EXPECT_DOUBLE_EQ(topic_score(doc({"deep_learning", "graph"}), t), 0.3);
}

TEST(TopicScore, Additivity) {
    std::mt19937 rng(2);
    std::vector<TopicTerm> terms;
    for (int i = 0; i < 8; ++i) terms.push_back({"w" + std::to_string(i), 0.05 + (rng() % 100) / 100.0});
    const auto t = Topic::make("t", terms);
    for (int trial = 0; trial < 300; ++trial) {
        std::set<std::string> toks;
        for (int i = 0; i < 8; ++i)
            if (rng() % 2) toks.insert("w" + std::to_string(i));
        const double base = topic_score(doc(toks), t);
        auto with_other = toks;
        with_other.insert("other" + std::to_string(rng() % 5));
        EXPECT_EQ(topic_score(doc(with_other), t), base);
        const int k = static_cast<int>(rng() % 8);
        auto with_term = toks;
        if (with_term.insert("w" + std::to_string(k)).second) {
            double w = 0;
            for (const auto& term : terms)
                if (term.word == "w" + std::to_string(k)) w = term.weight;
            EXPECT_NEAR(topic_score(doc(with_term), t), base + w, 1e-12);
        }
    }
}

TEST(AssignTopics, GammaThreshold) {
    const auto model = example_model();
    TopicAssignmentConfig cfg;
    cfg.gamma = 0.5;
    EXPECT_EQ(assign_topics(doc({"deep_learning"}), model, cfg), std::vector<std::string>{"t0"});
    cfg.gamma = 1.0;
    EXPECT_TRUE(assign_topics(doc({"deep_learning"}), model, cfg).empty());
    cfg.gamma = 0.0;
    EXPECT_TRUE(assign_topics(doc({"graph"}), model, cfg).empty());
    cfg.require_positive_score = false;
    EXPECT_EQ(assign_topics(doc({"graph"}), model, cfg).size(), 1u);
}

TEST(AssignTopics, MonotoneInGamma) {
    std::mt19937 rng(9);
    TopicModel model;
    for (int t = 0; t < 5; ++t) {
        std::vector<TopicTerm> terms;
        for (int i = 0; i < 6; ++i) terms.push_back({"w" + std::to_string(t * 3 + i), 0.01 + (rng() % 97) / 97.0});
        model.topics.push_back(Topic::make("t" + std::to_string(t), terms));
    }
    for (int trial = 0; trial < 500; ++trial) {
        std::set<std::string> toks;
        for (int i = 0; i < 20; ++i)
            if (rng() % 3 == 0) toks.insert("w" + std::to_string(i));
        std::vector<std::string> prev;
        bool first = true;
        for (double g : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 2.0}) {
            TopicAssignmentConfig cfg;
            cfg.gamma = g;
            const auto cur = assign_topics(doc(toks), model, cfg);
            if (!first) {
                EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            }
            prev = cur;
            first = false;
        }
    }
}

TEST(LabelDl, CountsAndShare) {
    TopicModel model = example_model();
    model.topics.push_back(Topic::make("t1", {{"graph", 1.0}}));
    std::vector<TokenDocument> docs;
    for (int i = 0; i < 10; ++i)
        docs.push_back(doc(i < 3 ? std::set<std::string>{"neural_network"} : std::set<std::string>{"convolutional", "graph"},
                           "p" + std::to_string(i)));
    TopicAssignmentConfig cfg;
    cfg.dl_topic_ids = {"t0"};
    const auto r = label_dl(docs, model, cfg);
    EXPECT_EQ(r.summary.dl_count, 3u);
    EXPECT_DOUBLE_EQ(*r.summary.dl_share, 0.3);
    EXPECT_TRUE(r.rows[0].dl_flag);
    EXPECT_FALSE(r.rows[5].dl_flag);

    const auto empty = label_dl(std::span<const TokenDocument>{}, model, cfg);
    EXPECT_FALSE(empty.summary.dl_share);

    cfg.dl_topic_ids = {"t0", "t1"};
    cfg.rule = DlRule::all;
    std::vector<TokenDocument> both = {doc({"neural_network", "graph"}), doc({"neural_network"})};
    const auto strict = label_dl(both, model, cfg);
    EXPECT_TRUE(strict.rows[0].dl_flag);
    EXPECT_FALSE(strict.rows[1].dl_flag);
    EXPECT_EQ(label_csv(strict.rows), "paper_id,dl_flag,assigned_topics\nd,1,t0;t1\nd,0,t0\n");
}

TEST(TopicModelCsv, ParsesAndValidates) {
    const auto m = parse_topic_model_csv("topic_id,word,weight\na,x,0.2\na,y,0.7\nb,z,1\n");
    ASSERT_EQ(m.topics.size(), 2u);
    EXPECT_EQ(m.topics[0].terms[0].word, "y");
    EXPECT_THROW(parse_topic_model_csv("topic_id,word,weight\na,x,0\n"), Error);
    EXPECT_THROW(parse_topic_model_csv("id,w\n"), Error);
}

TEST(TopicModelCsv, BundledReferenceModelHas28Topics) {
    const auto m = parse_topic_model_csv(read_file(std::string(GPTGEO_DATA_DIR) + "/topic_model_28.csv"));
    EXPECT_EQ(m.topics.size(), 28u);
    EXPECT_TRUE(m.find("dl_0"));
    EXPECT_TRUE(m.find("dl_1"));
}
