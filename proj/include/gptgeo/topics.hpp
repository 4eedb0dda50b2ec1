#pragma once

// Abstract preprocessing and threshold-based topic labeling against a
// supplied topic-word weight table.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gptgeo/csv.hpp"
#include "gptgeo/error.hpp"
#include "gptgeo/text.hpp"

namespace gptgeo::topics {

inline const std::vector<std::string>& default_stopwords() {
    static const std::vector<std::string> words = {
        "a",       "about",   "above",  "after",   "again",   "against", "all",     "also",    "am",      "an",
        "and",     "any",     "are",    "as",      "at",      "be",      "because", "been",    "before",  "being",
        "below",   "between", "both",   "but",     "by",      "can",     "could",   "did",     "do",      "does",
        "doing",   "down",    "during", "each",    "few",     "for",     "from",    "further", "had",     "has",
        "have",    "having",  "he",     "her",     "here",    "hers",    "herself", "him",     "himself", "his",
        "how",     "however", "i",      "if",      "in",      "into",    "is",      "it",      "its",     "itself",
        "just",    "may",     "me",     "might",   "more",    "most",    "must",    "my",      "myself",  "no",
        "nor",     "not",     "now",    "of",      "off",     "on",      "once",    "only",    "or",      "other",
        "our",     "ours",    "out",    "over",    "own",     "same",    "she",     "should",  "so",      "some",
        "such",    "than",    "that",   "the",     "their",   "theirs",  "them",    "then",    "there",   "these",
        "they",    "this",    "those",  "through", "thus",    "to",      "too",     "under",   "until",   "up",
        "upon",    "us",      "very",   "was",     "we",      "were",    "what",    "when",    "where",   "which",
        "while",   "who",     "whom",   "why",     "will",    "with",    "within",  "without", "would",   "you",
        "your",    "yours",   "yourself", "via",   "using",   "paper",   "propose", "proposed", "show",   "based",
        "results", "approach", "method", "methods", "new",    "use",     "used",    "well",    "one",     "two"};
    return words;
}

enum class Stemmer { identity, plural, suffix };

inline Stemmer stemmer_from_string(std::string_view s) {
    if (s == "identity") return Stemmer::identity;
    if (s == "plural") return Stemmer::plural;
    if (s == "suffix") return Stemmer::suffix;
    throw Error("invalid_config", "unknown stemmer '" + std::string(s) + "'");
}

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline std::string strip_plural(std::string w) {
    if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is"))
        return w.substr(0, w.size() - 1);
    return w;
}

} // namespace detail

inline std::string stem(std::string word, Stemmer s) {
    if (s == Stemmer::identity) return word;
    word = detail::strip_plural(std::move(word));
    if (s == Stemmer::plural) return word;
    for (std::string_view suf : {"ing", "ed", "ly"}) {
        if (word.size() > suf.size() + 3 && detail::ends_with(word, suf)) return word.substr(0, word.size() - suf.size());
    }
    return word;
}

struct PreprocessConfig {
    std::vector<std::string> stopwords = default_stopwords();
    std::size_t rare_floor = 5;       // tokens with corpus frequency below this are removed
    std::size_t ngram_min_count = 10; // bi-/tri-grams kept at or above this corpus count
    std::size_t max_ngram = 3;
    std::size_t min_tokens = 20; // documents with fewer tokens are dropped
    std::size_t min_token_length = 2;
    Stemmer stemmer = Stemmer::plural;
};

struct TokenDocument {
    std::string paper_id;
    std::set<std::string> tokens; // unigrams plus joined n-grams ("neural_network")
    std::size_t token_count = 0;  // unigram tokens after filtering

    friend bool operator==(const TokenDocument&, const TokenDocument&) = default;
};

/// Lowercase, punctuation to spaces, stop-word removal, stemming.
inline std::vector<std::string> tokenize(std::string_view raw, const std::unordered_set<std::string>& stopwords,
                                         const PreprocessConfig& cfg) {
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (char32_t cp : text::decode_utf8(raw)) {
        if (cp == 0xFFFD || text::is_symbolic(cp)) cleaned.push_back(' ');
        else text::append_utf8(cleaned, text::to_lower(cp));
    }
    std::vector<std::string> out;
    for (auto& tok : text::split_spaces(cleaned)) {
        if (text::decode_utf8(tok).size() < cfg.min_token_length || stopwords.count(tok)) continue;
        auto s = stem(std::move(tok), cfg.stemmer);
        if (!stopwords.count(s)) out.push_back(std::move(s));
    }
    return out;
}

/// Corpus-fitted preprocessor. Frequency floors and n-gram counts come from
/// one sequential pass over the fitting corpus; `transform` is then pure.
class Preprocessor {
public:
    Preprocessor() = default;

    Preprocessor(std::span<const std::string> corpus, PreprocessConfig cfg) : cfg_(std::move(cfg)) {
        stopwords_.insert(cfg_.stopwords.begin(), cfg_.stopwords.end());
        std::vector<std::vector<std::string>> docs;
        docs.reserve(corpus.size());
        std::unordered_map<std::string, std::size_t> freq;
        for (const auto& raw : corpus) {
            docs.push_back(tokenize(raw, stopwords_, cfg_));
            for (const auto& t : docs.back()) ++freq[t];
        }
        for (const auto& [tok, n] : freq)
            if (n >= cfg_.rare_floor) vocabulary_.insert(tok);
        std::unordered_map<std::string, std::size_t> ngram_counts;
        for (auto& d : docs) {
            filter(d);
            for_each_ngram(d, [&](const std::string& g) { ++ngram_counts[g]; });
        }
        for (const auto& [g, n] : ngram_counts)
            if (n >= cfg_.ngram_min_count) ngrams_.insert(g);
    }

    /// Returns nullopt when the document falls below `min_tokens`.
    std::optional<TokenDocument> transform(std::string_view id, std::string_view raw) const {
        auto seq = tokenize(raw, stopwords_, cfg_);
        filter(seq);
        if (seq.size() < cfg_.min_tokens || seq.empty()) return std::nullopt;
        TokenDocument doc{std::string(id), {seq.begin(), seq.end()}, seq.size()};
        for_each_ngram(seq, [&](const std::string& g) {
            if (ngrams_.count(g)) doc.tokens.insert(g);
        });
        return doc;
    }

    const std::set<std::string>& unigram_vocabulary() const noexcept { return vocabulary_; }
    const std::set<std::string>& ngram_vocabulary() const noexcept { return ngrams_; }
    const PreprocessConfig& config() const noexcept { return cfg_; }

private:
    void filter(std::vector<std::string>& seq) const {
        std::erase_if(seq, [&](const std::string& t) { return !vocabulary_.count(t); });
    }

    template <class Fn>
    void for_each_ngram(const std::vector<std::string>& seq, Fn fn) const {
        for (std::size_t n = 2; n <= cfg_.max_ngram; ++n)
            for (std::size_t i = 0; i + n <= seq.size(); ++i) {
                std::string g = seq[i];
                for (std::size_t k = 1; k < n; ++k) g += "_" + seq[i + k];
                fn(g);
            }
    }

    PreprocessConfig cfg_;
    std::unordered_set<std::string> stopwords_;
    std::set<std::string> vocabulary_;
    std::set<std::string> ngrams_;
};

/// Fits on a single document and transforms it.
inline std::optional<TokenDocument> preprocess_abstract(std::string_view raw, const PreprocessConfig& cfg,
                                                        std::string_view id = "") {
    const std::string doc(raw);
    return Preprocessor(std::span<const std::string>(&doc, 1), cfg).transform(id, raw);
}

struct TopicTerm {
    std::string word;
    double weight = 0.0;

    friend bool operator==(const TopicTerm&, const TopicTerm&) = default;
};

struct Topic {
    std::string topic_id;
    std::vector<TopicTerm> terms; // descending weight
    double max_weight = 0.0;

    /// Sorts terms and checks weights. Throws on empty topics, non-positive
    /// weights or duplicate words.
    static Topic make(std::string id, std::vector<TopicTerm> terms) {
        if (terms.empty()) throw Error("invalid_topic", "topic " + id + " has no terms");
        std::stable_sort(terms.begin(), terms.end(), [](const TopicTerm& a, const TopicTerm& b) {
            return a.weight != b.weight ? a.weight > b.weight : a.word < b.word;
        });
        std::set<std::string> seen;
        for (const auto& t : terms) {
            if (!(t.weight > 0.0)) throw Error("invalid_topic", "topic " + id + ": weight of '" + t.word + "' is not > 0");
            if (!seen.insert(t.word).second) throw Error("invalid_topic", "topic " + id + ": duplicate word " + t.word);
        }
        const double mx = terms.front().weight;
        return Topic{std::move(id), std::move(terms), mx};
    }

    friend bool operator==(const Topic&, const Topic&) = default;
};

struct TopicModel {
    std::vector<Topic> topics; // in first-appearance order of the source table

    const Topic* find(std::string_view id) const {
        for (const auto& t : topics)
            if (t.topic_id == id) return &t;
        return nullptr;
    }
};

/// Parses a (topic_id, word, weight) CSV with header.
inline TopicModel parse_topic_model_csv(std::string_view doc) {
    const auto rows = csv::parse(doc);
    if (rows.empty() || rows.front() != csv::Row{"topic_id", "word", "weight"})
        throw Error("schema_mismatch", "topic model CSV must start with header topic_id,word,weight");
    std::vector<std::string> order;
    std::map<std::string, std::vector<TopicTerm>> terms;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 3) throw Error("schema_mismatch", "topic model row " + std::to_string(i + 1) + " needs 3 fields");
        if (!terms.count(r[0])) order.push_back(r[0]);
        terms[r[0]].push_back({r[1], csv::parse_number(r[2])});
    }
    TopicModel model;
    for (const auto& id : order) model.topics.push_back(Topic::make(id, std::move(terms[id])));
    return model;
}

/// Sum of the weights of topic terms present in the document.
inline double topic_score(const TokenDocument& doc, const Topic& topic) {
    double s = 0.0;
    for (const auto& t : topic.terms)
        if (doc.tokens.count(t.word)) s += t.weight;
    return s;
}

enum class DlRule {
    any, // at least one DL topic assigned
    all, // every DL topic assigned (the restrictive preset)
};

struct TopicAssignmentConfig {
    double gamma = 0.5;
    std::set<std::string> dl_topic_ids;
    bool require_positive_score = true;
    DlRule rule = DlRule::any;

    void validate() const {
        if (!(gamma >= 0.0)) throw Error("invalid_config", "gamma must be >= 0");
    }
};

/// Topics with score >= gamma * max_weight (and > 0 under the guard).
inline std::vector<std::string> assign_topics(const TokenDocument& doc, const TopicModel& model,
                                              const TopicAssignmentConfig& cfg) {
    cfg.validate();
    std::vector<std::string> out;
    for (const auto& topic : model.topics) {
        const double s = topic_score(doc, topic);
        if (s >= cfg.gamma * topic.max_weight && (!cfg.require_positive_score || s > 0.0)) out.push_back(topic.topic_id);
    }
    return out;
}

struct LabelRow {
    std::string paper_id;
    bool dl_flag = false;
    std::vector<std::string> assigned_topics;

    friend bool operator==(const LabelRow&, const LabelRow&) = default;
};

struct LabelSummary {
    std::size_t documents = 0;
    std::size_t dl_count = 0;
    std::optional<double> dl_share;
};

struct LabelResult {
    std::vector<LabelRow> rows;
    LabelSummary summary;
};

inline LabelResult label_dl(std::span<const TokenDocument> docs, const TopicModel& model,
                            const TopicAssignmentConfig& cfg) {
    if (cfg.dl_topic_ids.empty()) throw Error("invalid_config", "dl_topic_ids must not be empty");
    for (const auto& id : cfg.dl_topic_ids)
        if (!model.find(id)) throw Error("invalid_config", "DL topic '" + id + "' is not in the topic model");
    LabelResult result;
    for (const auto& doc : docs) {
        LabelRow row{doc.paper_id, false, assign_topics(doc, model, cfg)};
        std::size_t hits = 0;
        for (const auto& t : row.assigned_topics) hits += cfg.dl_topic_ids.count(t);
        row.dl_flag = cfg.rule == DlRule::any ? hits > 0 : hits == cfg.dl_topic_ids.size();
        result.summary.dl_count += row.dl_flag ? 1 : 0;
        result.rows.push_back(std::move(row));
    }
    result.summary.documents = docs.size();
    if (!docs.empty())
        result.summary.dl_share = static_cast<double>(result.summary.dl_count) / static_cast<double>(docs.size());
    return result;
}

/// Label CSV: paper_id, dl_flag (0/1), assigned_topics (';'-joined).
inline std::string label_csv(const std::vector<LabelRow>& rows) {
    csv::Writer w({"paper_id", "dl_flag", "assigned_topics"});
    for (const auto& r : rows) w.row({r.paper_id, r.dl_flag ? "1" : "0", text::join(r.assigned_topics, ";")});
    return w.str();
}

} // namespace gptgeo::topics
