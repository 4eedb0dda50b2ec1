#pragma once

// Subject co-occurrence relatedness and research-industry relatedness via a
// one-vs-rest L1-regularized logistic classifier trained on company text.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptgeo/corpus.hpp"
#include "gptgeo/csv.hpp"
#include "gptgeo/digest.hpp"
#include "gptgeo/error.hpp"
#include "gptgeo/topics.hpp"

namespace gptgeo::relatedness {

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw Error("dimension_mismatch", "cosine of vectors with different dimensions");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw Error("undefined_similarity", "cosine similarity with a zero vector");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), 0.0, 1.0);
}

/// Dense labeled matrix; used for subject-subject and subject-sector tables.
struct LabeledMatrix {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<double> values; // row-major

    double at(std::size_t r, std::size_t c) const { return values[r * cols.size() + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols.size() + c]; }

    std::optional<std::size_t> row_index(std::string_view id) const {
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i] == id) return i;
        return std::nullopt;
    }
    std::optional<std::size_t> col_index(std::string_view id) const {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == id) return i;
        return std::nullopt;
    }

    friend bool operator==(const LabeledMatrix&, const LabeledMatrix&) = default;
};

inline void to_json(nlohmann::json& j, const LabeledMatrix& m) {
    j = nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"values", m.values}};
}
inline void from_json(const nlohmann::json& j, LabeledMatrix& m) {
    m.rows = j.at("rows").get<std::vector<std::string>>();
    m.cols = j.at("cols").get<std::vector<std::string>>();
    m.values = j.at("values").get<std::vector<double>>();
    if (m.values.size() != m.rows.size() * m.cols.size()) throw Error("schema_mismatch", "matrix size mismatch");
}

/// Long CSV (row_id, col_id, value).
inline std::string to_long_csv(const LabeledMatrix& m) {
    csv::Writer w({"row_id", "col_id", "value"});
    for (std::size_t r = 0; r < m.rows.size(); ++r)
        for (std::size_t c = 0; c < m.cols.size(); ++c) w.row({m.rows[r], m.cols[c], csv::format_number(m.at(r, c))});
    return w.str();
}

inline constexpr std::string_view kDlLabel = "DL";

struct SubjectRelatedness {
    LabeledMatrix matrix; // symmetric, unit diagonal
    std::vector<std::string> excluded;
};

/// Cosine similarity of binary paper-incidence vectors. When `dl_flags` is
/// given, DL joins as one more category. Subjects in `universe` without any
/// paper are excluded and reported.
inline SubjectRelatedness subject_relatedness(std::span<const PaperRecord> papers,
                                              const std::map<std::string, bool>* dl_flags = nullptr,
                                              const std::set<std::string>& universe = {}) {
    std::map<std::string, std::vector<double>> incidence;
    for (const auto& s : universe) incidence[s];
    if (dl_flags) incidence[std::string(kDlLabel)];
    for (auto& [_, v] : incidence) v.assign(papers.size(), 0.0);
    for (std::size_t i = 0; i < papers.size(); ++i) {
        for (const auto& s : papers[i].subjects) {
            auto& v = incidence[s];
            if (v.size() != papers.size()) v.assign(papers.size(), 0.0);
            v[i] = 1.0;
        }
        if (dl_flags) {
            const auto it = dl_flags->find(papers[i].id);
            if (it != dl_flags->end() && it->second) incidence[std::string(kDlLabel)][i] = 1.0;
        }
    }
    SubjectRelatedness out;
    std::vector<const std::vector<double>*> vecs;
    for (const auto& [s, v] : incidence) {
        if (std::none_of(v.begin(), v.end(), [](double x) { return x != 0.0; })) {
            out.excluded.push_back(s);
            continue;
        }
        out.matrix.rows.push_back(s);
        vecs.push_back(&v);
    }
    out.matrix.cols = out.matrix.rows;
    const auto k = out.matrix.rows.size();
    out.matrix.values.assign(k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
        out.matrix.at(a, a) = 1.0;
        for (std::size_t b = a + 1; b < k; ++b) {
            const double s = cosine_similarity(*vecs[a], *vecs[b]);
            out.matrix.at(a, b) = s;
            out.matrix.at(b, a) = s;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// L1-regularized logistic regression

/// Column-compressed feature matrix.
class FeatureMatrix {
public:
    FeatureMatrix() = default;

    /// Builds from per-row sparse entries (feature index, value).
    FeatureMatrix(std::size_t n_features, const std::vector<std::vector<std::pair<std::size_t, double>>>& rows)
        : n_rows_(rows.size()), n_cols_(n_features) {
        std::vector<std::vector<std::pair<std::size_t, double>>> cols(n_features);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (const auto& [j, v] : rows[i]) {
                if (j >= n_features) throw Error("dimension_mismatch", "feature index out of range");
                if (v != 0.0) cols[j].push_back({i, v});
            }
        col_ptr_.push_back(0);
        for (auto& c : cols) {
            std::sort(c.begin(), c.end());
            for (const auto& [i, v] : c) {
                row_idx_.push_back(i);
                values_.push_back(v);
            }
            col_ptr_.push_back(row_idx_.size());
        }
    }

    static FeatureMatrix dense(const std::vector<std::vector<double>>& x) {
        const std::size_t p = x.empty() ? 0 : x.front().size();
        std::vector<std::vector<std::pair<std::size_t, double>>> rows;
        for (const auto& r : x) {
            if (r.size() != p) throw Error("dimension_mismatch", "ragged dense feature matrix");
            std::vector<std::pair<std::size_t, double>> e;
            for (std::size_t j = 0; j < p; ++j)
                if (r[j] != 0.0) e.push_back({j, r[j]});
            rows.push_back(std::move(e));
        }
        return FeatureMatrix(p, rows);
    }

    std::size_t rows() const noexcept { return n_rows_; }
    std::size_t cols() const noexcept { return n_cols_; }

    template <class Fn>
    void for_each_in_col(std::size_t j, Fn fn) const {
        for (std::size_t k = col_ptr_[j]; k < col_ptr_[j + 1]; ++k) fn(row_idx_[k], values_[k]);
    }

private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<std::size_t> col_ptr_{};
    std::vector<std::size_t> row_idx_;
    std::vector<double> values_;
};

struct L1LogisticOptions {
    double tolerance = 1e-7; // max subgradient-optimality violation at exit
    std::size_t max_iter = 2000;
};

struct L1LogisticFit {
    std::vector<double> weights;
    double intercept = 0.0;
    double objective = 0.0;
    std::size_t iterations = 0;
    std::vector<double> objective_trace; // after each sweep
};

/// Carries the remaining optimality gap when the solver gives up.
class NonConvergence : public Error {
public:
    NonConvergence(double gap, std::size_t iterations)
        : Error("non_convergence", "L1 logistic regression did not converge in " + std::to_string(iterations) +
                                       " sweeps (optimality gap " + csv::format_number(gap) + ")"),
          gap_(gap) {}
    double gap() const noexcept { return gap_; }

private:
    double gap_;
};

namespace detail {

/// log(1 + exp(-m)) without overflow.
inline double logistic_loss(double margin) {
    return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace detail

inline double sigmoid(double z) { return detail::sigmoid(z); }

/// Mean logistic loss + lambda * |w|_1 with labels in {0, 1}.
inline double l1_logistic_objective(const FeatureMatrix& x, std::span<const int> y, std::span<const double> w, double b,
                                    double lambda) {
    std::vector<double> z(x.rows(), b);
    for (std::size_t j = 0; j < x.cols(); ++j)
        if (w[j] != 0.0) x.for_each_in_col(j, [&](std::size_t i, double v) { z[i] += w[j] * v; });
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) loss += detail::logistic_loss(y[i] ? z[i] : -z[i]);
    double l1 = 0.0;
    for (double wj : w) l1 += std::abs(wj);
    return loss / static_cast<double>(x.rows()) + lambda * l1;
}

/// Smallest lambda at which the all-zero weight vector is optimal:
/// max_j |mean_i x_ij (y_i - base_rate)|.
inline double l1_saturation_lambda(const FeatureMatrix& x, std::span<const int> y) {
    double pos = 0;
    for (int v : y) pos += v ? 1 : 0;
    const double rate = pos / static_cast<double>(y.size());
    double mx = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double g = 0.0;
        x.for_each_in_col(j, [&](std::size_t i, double v) { g += v * ((y[i] ? 1.0 : 0.0) - rate); });
        mx = std::max(mx, std::abs(g) / static_cast<double>(y.size()));
    }
    return mx;
}

/// Cyclic coordinate descent with one-dimensional Newton steps and an
/// Armijo line search on the exact objective; the intercept is an
/// unpenalized coordinate. Every accepted step lowers the objective.
inline L1LogisticFit fit_l1_logistic(const FeatureMatrix& x, std::span<const int> y, double lambda,
                                     const L1LogisticOptions& opts = {}) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (y.size() != n) throw Error("dimension_mismatch", "labels and feature rows differ in length");
    if (!(lambda > 0.0)) throw Error("invalid_argument", "lambda must be > 0");
    std::size_t pos = 0;
    for (int v : y) pos += v ? 1 : 0;
    if (pos == 0 || pos == n) throw Error("invalid_argument", "need at least one positive and one negative label");

    const double inv_n = 1.0 / static_cast<double>(n);
    const double rate = static_cast<double>(pos) * inv_n;
    L1LogisticFit fit;
    fit.weights.assign(p, 0.0);
    fit.intercept = std::log(rate / (1.0 - rate));
    std::vector<double> sign(n), z(n, fit.intercept);
    for (std::size_t i = 0; i < n; ++i) sign[i] = y[i] ? 1.0 : -1.0;

    constexpr double kArmijo = 0.01;
    constexpr int kMaxBacktrack = 40;

    // Coordinate derivatives of the smooth part. `col` visits (row, value).
    auto derivatives = [&](auto&& col) {
        double g = 0.0, h = 0.0;
        col([&](std::size_t i, double v) {
            const double tau = detail::sigmoid(-sign[i] * z[i]);
            g -= sign[i] * tau * v;
            h += v * v * tau * (1.0 - tau);
        });
        return std::pair{g * inv_n, std::max(h * inv_n, 1e-12)};
    };
    auto intercept_col = [&](auto&& fn) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 1.0);
    };
    auto feature_col = [&](std::size_t j) {
        return [&x, j](auto&& fn) { x.for_each_in_col(j, fn); };
    };
    auto violation = [&](double g, double wj) {
        if (wj > 0) return std::abs(g + lambda);
        if (wj < 0) return std::abs(g - lambda);
        return std::max(0.0, std::abs(g) - lambda);
    };
    // Moves one coordinate by at most `d`, backtracking until sufficient decrease.
    auto line_search = [&](auto&& col, double& coord, double d, double g, bool penalized) {
        if (d == 0.0) return;
        const double pen_old = penalized ? lambda * std::abs(coord) : 0.0;
        const double pen_full = penalized ? lambda * std::abs(coord + d) : 0.0;
        const double delta = g * d + pen_full - pen_old;
        double t = 1.0;
        for (int k = 0; k < kMaxBacktrack; ++k, t *= 0.5) {
            double change = 0.0;
            col([&](std::size_t i, double v) {
                change += detail::logistic_loss(sign[i] * (z[i] + t * d * v)) - detail::logistic_loss(sign[i] * z[i]);
            });
            change *= inv_n;
            if (penalized) change += lambda * std::abs(coord + t * d) - pen_old;
            if (change <= kArmijo * t * delta) {
                col([&](std::size_t i, double v) { z[i] += t * d * v; });
                coord += t * d;
                return;
            }
        }
    };

    double gap = 0.0;
    for (fit.iterations = 1; fit.iterations <= opts.max_iter; ++fit.iterations) {
        {
            auto [g, h] = derivatives(intercept_col);
            line_search(intercept_col, fit.intercept, -g / h, g, false);
        }
        for (std::size_t j = 0; j < p; ++j) {
            auto col = feature_col(j);
            auto [g, h] = derivatives(col);
            double& wj = fit.weights[j];
            double d;
            if (g + lambda <= h * wj) d = -(g + lambda) / h;
            else if (g - lambda >= h * wj) d = -(g - lambda) / h;
            else d = -wj;
            line_search(col, wj, d, g, true);
        }
        fit.objective = l1_logistic_objective(x, y, fit.weights, fit.intercept, lambda);
        fit.objective_trace.push_back(fit.objective);

        gap = std::abs(derivatives(intercept_col).first);
        for (std::size_t j = 0; j < p; ++j) gap = std::max(gap, violation(derivatives(feature_col(j)).first, fit.weights[j]));
        if (gap <= opts.tolerance) return fit;
    }
    throw NonConvergence(gap, opts.max_iter);
}

// ---------------------------------------------------------------------------
// Sector classifier

/// Binary bag-of-words featurization over a fixed vocabulary of unigrams and
/// joined n-grams, using the same tokenization as abstract preprocessing.
class Featurizer {
public:
    Featurizer() = default;

    Featurizer(std::vector<std::string> vocabulary, topics::PreprocessConfig cfg)
        : vocabulary_(std::move(vocabulary)), cfg_(std::move(cfg)) {
        std::sort(vocabulary_.begin(), vocabulary_.end());
        vocabulary_.erase(std::unique(vocabulary_.begin(), vocabulary_.end()), vocabulary_.end());
        stopwords_.insert(cfg_.stopwords.begin(), cfg_.stopwords.end());
        for (std::size_t i = 0; i < vocabulary_.size(); ++i) index_.emplace(vocabulary_[i], i);
    }

    static Featurizer fit(std::span<const std::string> texts, const topics::PreprocessConfig& cfg) {
        const topics::Preprocessor pre(texts, cfg);
        std::vector<std::string> vocab(pre.unigram_vocabulary().begin(), pre.unigram_vocabulary().end());
        vocab.insert(vocab.end(), pre.ngram_vocabulary().begin(), pre.ngram_vocabulary().end());
        return Featurizer(std::move(vocab), cfg);
    }

    /// Sorted unique feature indices present in the text.
    std::vector<std::size_t> features(std::string_view raw) const {
        auto seq = topics::tokenize(raw, stopwords_, cfg_);
        std::erase_if(seq, [&](const std::string& t) { return !index_.count(t); });
        std::set<std::size_t> out;
        for (const auto& t : seq) out.insert(index_.at(t));
        for (std::size_t n = 2; n <= cfg_.max_ngram; ++n)
            for (std::size_t i = 0; i + n <= seq.size(); ++i) {
                std::string g = seq[i];
                for (std::size_t k = 1; k < n; ++k) g += "_" + seq[i + k];
                if (const auto it = index_.find(g); it != index_.end()) out.insert(it->second);
            }
        return {out.begin(), out.end()};
    }

    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
    const topics::PreprocessConfig& config() const noexcept { return cfg_; }

private:
    std::vector<std::string> vocabulary_;
    topics::PreprocessConfig cfg_;
    std::unordered_set<std::string> stopwords_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SectorModel {
    std::string sector;
    std::map<std::size_t, double> weights; // sparse, non-zero only
    double intercept = 0.0;
    double lambda = 0.0;
    double validation_accuracy = 0.0;
    std::map<std::string, double> accuracy_by_lambda; // formatted lambda -> accuracy
    std::size_t positives = 0;

    double probability(std::span<const std::size_t> features) const {
        double z = intercept;
        for (auto f : features)
            if (const auto it = weights.find(f); it != weights.end()) z += it->second;
        return sigmoid(z);
    }
};

struct SkippedSector {
    std::string sector;
    std::string reason;
    std::size_t positives = 0;
};

/// One-vs-rest classifier: one sigmoid model per sector.
struct LinearClassifier {
    Featurizer featurizer;
    std::vector<SectorModel> sectors;
    std::vector<SkippedSector> skipped;
    std::uint64_t split_seed = 0;
    double validation_fraction = 0.0;
};

struct ClassifierTrainingOptions {
    std::vector<double> lambda_grid{0.0001, 0.001, 0.01, 0.1, 1.0};
    double validation_fraction = 0.2;
    std::uint64_t split_seed = 2012;
    std::size_t min_examples = 50;
    topics::PreprocessConfig preprocess{};
    L1LogisticOptions fit{};
};

/// Deterministic train/validation split keyed on hashed ids: independent of
/// input order and identical across platforms.
inline std::vector<bool> validation_mask(std::span<const std::string> ids, double fraction, std::uint64_t seed) {
    std::vector<std::pair<std::string, std::size_t>> keyed;
    keyed.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        keyed.push_back({sha256_hex(std::to_string(seed) + ":" + ids[i]), i});
    std::sort(keyed.begin(), keyed.end());
    const auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size())));
    std::vector<bool> mask(ids.size(), false);
    for (std::size_t k = 0; k < n_val && k < keyed.size(); ++k) mask[keyed[k].second] = true;
    return mask;
}

inline LinearClassifier train_category_classifier(std::span<const CompanyRecord> companies,
                                                  const ClassifierTrainingOptions& opts = {}) {
    if (opts.lambda_grid.empty()) throw Error("invalid_config", "lambda grid is empty");
    for (double l : opts.lambda_grid)
        if (!(l > 0.0)) throw Error("invalid_config", "lambda grid values must be > 0");

    std::vector<const CompanyRecord*> rows;
    for (const auto& c : companies)
        if (!c.description.empty() && !c.categories.empty()) rows.push_back(&c);

    std::vector<std::string> texts, ids;
    for (const auto* c : rows) {
        texts.push_back(c->description);
        ids.push_back(c->id);
    }
    LinearClassifier clf;
    clf.split_seed = opts.split_seed;
    clf.validation_fraction = opts.validation_fraction;
    auto pre_cfg = opts.preprocess;
    pre_cfg.min_tokens = 0;
    clf.featurizer = Featurizer::fit(texts, pre_cfg);

    std::vector<std::vector<std::pair<std::size_t, double>>> feats(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (auto f : clf.featurizer.features(texts[i])) feats[i].push_back({f, 1.0});
    const auto vmask = validation_mask(ids, opts.validation_fraction, opts.split_seed);

    std::vector<std::vector<std::pair<std::size_t, double>>> train_rows, val_rows;
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        (vmask[i] ? val_rows : train_rows).push_back(feats[i]);
        (vmask[i] ? val_idx : train_idx).push_back(i);
    }
    const auto p = clf.featurizer.vocabulary().size();
    const FeatureMatrix x_all(p, feats), x_train(p, train_rows);

    std::set<std::string> sectors;
    for (const auto* c : rows) sectors.insert(c->categories.begin(), c->categories.end());

    for (const auto& sector : sectors) {
        std::vector<int> y_all(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) y_all[i] = rows[i]->categories.count(sector) ? 1 : 0;
        const auto positives = static_cast<std::size_t>(std::count(y_all.begin(), y_all.end(), 1));
        if (positives < opts.min_examples) {
            clf.skipped.push_back({sector, "below_min_examples", positives});
            continue;
        }
        if (positives == rows.size()) {
            clf.skipped.push_back({sector, "no_negative_examples", positives});
            continue;
        }
        std::vector<int> y_train, y_val;
        for (auto i : train_idx) y_train.push_back(y_all[i]);
        for (auto i : val_idx) y_val.push_back(y_all[i]);
        const auto train_pos = std::count(y_train.begin(), y_train.end(), 1);
        if (train_pos == 0 || train_pos == static_cast<long>(y_train.size())) {
            clf.skipped.push_back({sector, "degenerate_training_split", positives});
            continue;
        }

        SectorModel model;
        model.sector = sector;
        model.positives = positives;
        std::optional<double> best_lambda;
        double best_acc = -1.0;
        for (double lambda : opts.lambda_grid) {
            L1LogisticFit fit;
            try {
                fit = fit_l1_logistic(x_train, y_train, lambda, opts.fit);
            } catch (const NonConvergence&) {
                continue;
            }
            std::size_t correct = 0;
            for (std::size_t k = 0; k < val_rows.size(); ++k) {
                double z = fit.intercept;
                for (const auto& [f, v] : val_rows[k]) z += fit.weights[f] * v;
                correct += ((sigmoid(z) >= 0.5) == (y_val[k] == 1)) ? 1 : 0;
            }
            const double acc = val_rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(val_rows.size());
            model.accuracy_by_lambda[csv::format_number(lambda)] = acc;
            // Ties go to the larger (sparser) lambda.
            if (acc > best_acc || (acc == best_acc && best_lambda && lambda > *best_lambda)) {
                best_acc = acc;
                best_lambda = lambda;
            }
        }
        if (!best_lambda) {
            clf.skipped.push_back({sector, "no_lambda_converged", positives});
            continue;
        }
        L1LogisticFit final_fit;
        try {
            final_fit = fit_l1_logistic(x_all, y_all, *best_lambda, opts.fit);
        } catch (const NonConvergence&) {
            clf.skipped.push_back({sector, "final_fit_not_converged", positives});
            continue;
        }
        model.lambda = *best_lambda;
        model.validation_accuracy = best_acc;
        model.intercept = final_fit.intercept;
        for (std::size_t j = 0; j < final_fit.weights.size(); ++j)
            if (final_fit.weights[j] != 0.0) model.weights[j] = final_fit.weights[j];
        clf.sectors.push_back(std::move(model));
    }
    return clf;
}

struct SectorPrediction {
    std::string sector;
    double probability = 0.0;

    friend bool operator==(const SectorPrediction&, const SectorPrediction&) = default;
};

/// Sectors whose one-vs-rest probability reaches the threshold (inclusive).
inline std::vector<SectorPrediction> predict_categories(std::span<const std::size_t> features,
                                                        const LinearClassifier& clf, double threshold = 0.99) {
    std::vector<SectorPrediction> out;
    for (const auto& m : clf.sectors) {
        const double prob = m.probability(features);
        if (prob >= threshold) out.push_back({m.sector, prob});
    }
    return out;
}

inline std::vector<SectorPrediction> predict_categories(std::string_view text, const LinearClassifier& clf,
                                                        double threshold = 0.99) {
    const auto f = clf.featurizer.features(text);
    return predict_categories(std::span<const std::size_t>(f), clf, threshold);
}

inline nlohmann::json classifier_to_json(const LinearClassifier& clf) {
    nlohmann::json j;
    j["vocabulary"] = clf.featurizer.vocabulary();
    const auto& pc = clf.featurizer.config();
    j["preprocess"] = {{"stopwords", pc.stopwords},
                       {"max_ngram", pc.max_ngram},
                       {"min_token_length", pc.min_token_length},
                       {"stemmer", pc.stemmer == topics::Stemmer::identity  ? "identity"
                                   : pc.stemmer == topics::Stemmer::plural ? "plural"
                                                                           : "suffix"}};
    nlohmann::json sectors = nlohmann::json::array();
    for (const auto& m : clf.sectors) {
        nlohmann::json w = nlohmann::json::object();
        for (const auto& [idx, v] : m.weights) w[std::to_string(idx)] = v;
        sectors.push_back({{"sector", m.sector},
                           {"weights", w},
                           {"intercept", m.intercept},
                           {"lambda", m.lambda},
                           {"validation_accuracy", m.validation_accuracy},
                           {"accuracy_by_lambda", m.accuracy_by_lambda},
                           {"positives", m.positives}});
    }
    j["sectors"] = sectors;
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& s : clf.skipped)
        skipped.push_back({{"sector", s.sector}, {"reason", s.reason}, {"positives", s.positives}});
    j["validation_report"] = {{"split_seed", clf.split_seed},
                              {"validation_fraction", clf.validation_fraction},
                              {"skipped", skipped}};
    return j;
}

inline LinearClassifier classifier_from_json(const nlohmann::json& j) {
    LinearClassifier clf;
    topics::PreprocessConfig pc;
    const auto& p = j.at("preprocess");
    pc.stopwords = p.at("stopwords").get<std::vector<std::string>>();
    pc.max_ngram = p.at("max_ngram").get<std::size_t>();
    pc.min_token_length = p.at("min_token_length").get<std::size_t>();
    pc.stemmer = topics::stemmer_from_string(p.at("stemmer").get<std::string>());
    pc.min_tokens = 0;
    clf.featurizer = Featurizer(j.at("vocabulary").get<std::vector<std::string>>(), pc);
    for (const auto& s : j.at("sectors")) {
        SectorModel m;
        m.sector = s.at("sector").get<std::string>();
        for (const auto& [k, v] : s.at("weights").items()) m.weights[std::stoul(k)] = v.get<double>();
        m.intercept = s.at("intercept").get<double>();
        m.lambda = s.at("lambda").get<double>();
        m.validation_accuracy = s.at("validation_accuracy").get<double>();
        m.accuracy_by_lambda = s.at("accuracy_by_lambda").get<std::map<std::string, double>>();
        m.positives = s.at("positives").get<std::size_t>();
        clf.sectors.push_back(std::move(m));
    }
    const auto& rep = j.at("validation_report");
    clf.split_seed = rep.at("split_seed").get<std::uint64_t>();
    clf.validation_fraction = rep.at("validation_fraction").get<double>();
    for (const auto& s : rep.at("skipped"))
        clf.skipped.push_back({s.at("sector").get<std::string>(), s.at("reason").get<std::string>(),
                               s.at("positives").get<std::size_t>()});
    return clf;
}

/// A paper as seen by the research-industry transfer: subjects, DL flag, text.
struct ResearchDocument {
    std::string id;
    std::set<std::string> subjects;
    bool dl = false;
    std::string text;
};

struct IndustryRelatedness {
    LabeledMatrix matrix; // rows: subjects (+ DL), cols: sectors
    std::vector<std::string> excluded;
};

/// Cell (s, c) = share of papers in subject s predicted to be in sector c.
inline IndustryRelatedness research_industry_relatedness(std::span<const ResearchDocument> docs,
                                                         const LinearClassifier& clf, double threshold = 0.99,
                                                         const std::set<std::string>& universe = {}) {
    std::map<std::string, std::size_t> papers_in;
    std::map<std::string, std::map<std::string, std::size_t>> predicted;
    for (const auto& s : universe) papers_in[s];
    for (const auto& d : docs) {
        std::vector<std::string> rows(d.subjects.begin(), d.subjects.end());
        if (d.dl) rows.emplace_back(kDlLabel);
        const auto preds = predict_categories(d.text, clf, threshold);
        for (const auto& r : rows) {
            ++papers_in[r];
            for (const auto& pr : preds) ++predicted[r][pr.sector];
        }
    }
    IndustryRelatedness out;
    for (const auto& m : clf.sectors) out.matrix.cols.push_back(m.sector);
    std::sort(out.matrix.cols.begin(), out.matrix.cols.end());
    for (const auto& [s, n] : papers_in) {
        if (n == 0) {
            out.excluded.push_back(s);
            continue;
        }
        out.matrix.rows.push_back(s);
        for (const auto& c : out.matrix.cols) {
            const auto& pm = predicted[s];
            const auto it = pm.find(c);
            out.matrix.values.push_back(it == pm.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n));
        }
    }
    return out;
}

} // namespace gptgeo::relatedness
