#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "resmatch/augment.hpp"
#include "resmatch/embedder.hpp"

namespace resmatch {

namespace detail {

// Splits "a,b,c" on commas, dropping empty pieces.
inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string piece;
    std::istringstream in(s);
    while (std::getline(in, piece, ','))
        if (!piece.empty()) out.push_back(piece);
    return out;
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

// Words whose meaning is tied to the horizontal axis, swapped when the
// paired image is mirrored. Stored bidirectionally so one lookup table
// serves both directions and mirroring is an involution by construction.
struct PositionLexicon {
    std::unordered_map<std::string, std::string> mirror;

    void add_pair(const std::string& a, const std::string& b) {
        mirror[a] = b;
        mirror[b] = a;
    }

    const std::string* mirror_of(const std::string& word) const {
        auto it = mirror.find(word);
        return it == mirror.end() ? nullptr : &it->second;
    }

    static PositionLexicon defaults() {
        PositionLexicon lex;
        lex.add_pair("left", "right");
        lex.add_pair("leftmost", "rightmost");
        lex.add_pair("lefthand", "righthand");
        return lex;
    }

    // File format: one `wordA<TAB>wordB` pair per line; '#' starts a comment.
    static PositionLexicon load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open mirror lexicon: " + path);
        PositionLexicon lex;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw DataError("mirror lexicon line missing tab in " + path +
                                ": " + line);
            std::string a = detail::lower(line.substr(0, tab));
            std::string b = detail::lower(line.substr(tab + 1));
            if (a.empty() || b.empty())
                throw DataError("mirror lexicon line with empty word in " + path);
            lex.add_pair(a, b);
        }
        return lex;
    }
};

// Flat synonym table for the replacement/insertion ops. Bundled defaults
// cover the synthetic vocabulary plus common referring-expression nouns.
struct SynonymLexicon {
    std::unordered_map<std::string, std::vector<std::string>> synonyms;

    const std::vector<std::string>* lookup(const std::string& word) const {
        auto it = synonyms.find(word);
        return it == synonyms.end() || it->second.empty() ? nullptr : &it->second;
    }

    static SynonymLexicon defaults() {
        SynonymLexicon lex;
        auto& s = lex.synonyms;
        s["guy"] = {"man", "dude"};
        s["man"] = {"guy", "person"};
        s["woman"] = {"lady", "person"};
        s["kid"] = {"child"};
        s["picture"] = {"photo", "image"};
        s["photo"] = {"picture", "image"};
        s["big"] = {"large", "huge"};
        s["large"] = {"big"};
        s["small"] = {"little", "tiny"};
        s["little"] = {"small"};
        s["shirt"] = {"top"};
        s["jacket"] = {"coat"};
        s["coat"] = {"jacket"};
        s["car"] = {"vehicle", "auto"};
        s["bike"] = {"bicycle"};
        s["sofa"] = {"couch"};
        s["couch"] = {"sofa"};
        s["cup"] = {"mug"};
        s["middle"] = {"center"};
        s["center"] = {"middle"};
        s["near"] = {"beside"};
        s["circle"] = {"disc", "round"};
        s["square"] = {"box", "block"};
        s["triangle"] = {"wedge"};
        s["red"] = {"crimson", "scarlet"};
        s["green"] = {"emerald"};
        s["blue"] = {"azure", "navy"};
        s["yellow"] = {"gold", "amber"};
        s["shape"] = {"figure", "form"};
        return lex;
    }

    // File format: one `word<TAB>syn1,syn2,...` record per line, lowercase;
    // '#' starts a comment.
    static SynonymLexicon load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open synonym lexicon: " + path);
        SynonymLexicon lex;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw DataError("synonym lexicon line missing tab in " + path +
                                ": " + line);
            std::string word = detail::lower(line.substr(0, tab));
            auto syns = detail::split_csv(detail::lower(line.substr(tab + 1)));
            if (word.empty() || syns.empty())
                throw DataError("synonym lexicon line with empty field in " + path);
            lex.synonyms[word] = std::move(syns);
        }
        return lex;
    }
};

using StopwordSet = std::unordered_set<std::string>;

// Function words only. Direction and position words (left, right, top, ...)
// are deliberately absent: they carry the grounding semantics.
inline const StopwordSet& default_stopwords() {
    static const StopwordSet words = {
        "a",    "an",   "the",  "and",  "or",   "but",  "if",   "then",
        "this", "that", "these", "those", "of",  "at",   "in",   "on",
        "to",   "from", "with", "by",   "for",  "as",   "is",   "are",
        "was",  "were", "be",   "been", "being", "it",  "its",  "he",
        "she",  "they", "them", "his",  "her",  "their", "we",  "you",
        "i",    "me",   "my",   "your", "our",  "us",   "do",   "does",
        "did",  "not",  "no",   "so",   "too",  "very", "can",  "will",
        "just", "there", "here", "what", "which", "who", "whom", "some",
    };
    return words;
}

struct TextAugmentParams {
    int n_sr = 1;       // non-stopwords replaced by synonyms per SR pass
    int n_ri = 1;       // synonyms inserted per RI pass
    double p_rd = 0.1;  // independent per-token deletion probability
};

// Mirrors horizontal position words when the paired image was flipped.
// One simultaneous pass over the tokens, so each token is swapped at most
// once and "left of right bag" becomes "right of left bag".
inline Expression weak_text_adapt(const Expression& expression,
                                  const AugmentationRecord& record,
                                  const PositionLexicon& lexicon) {
    if (!record.horizontal_flipped) return expression;
    std::vector<std::string> tokens = expression.tokens;
    for (std::string& t : tokens)
        if (const std::string* m = lexicon.mirror_of(t)) t = *m;
    return Expression::from_tokens(tokens);
}

namespace detail {

// Synonym replacement: substitute all occurrences of up to n distinct
// non-stopwords that have lexicon entries, scanning candidates in a
// shuffled order.
inline std::vector<std::string> op_synonym_replace(
    std::vector<std::string> tokens, int n, Rng& rng,
    const SynonymLexicon& synonyms, const StopwordSet& stopwords) {
    std::vector<std::string> uniq;
    for (const std::string& t : tokens)
        if (!stopwords.count(t) &&
            std::find(uniq.begin(), uniq.end(), t) == uniq.end())
            uniq.push_back(t);
    // Fisher-Yates so the scan order is seed-controlled on every platform.
    for (std::size_t i = uniq.size(); i > 1; --i)
        std::swap(uniq[i - 1], uniq[static_cast<std::size_t>(
                                   uniform_int(rng, 0, static_cast<int>(i) - 1))]);
    int replaced = 0;
    for (const std::string& word : uniq) {
        if (replaced >= n) break;
        const std::vector<std::string>* syns = synonyms.lookup(word);
        if (!syns) continue;
        const std::string& pick =
            (*syns)[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(syns->size()) - 1))];
        for (std::string& t : tokens)
            if (t == word) t = pick;
        ++replaced;
    }
    return tokens;
}

// Random insertion: pick a non-stopword with synonyms, insert one of its
// synonyms at a uniformly random position; repeat n times.
inline std::vector<std::string> op_random_insert(
    std::vector<std::string> tokens, int n, Rng& rng,
    const SynonymLexicon& synonyms, const StopwordSet& stopwords) {
    std::vector<std::string> sources;
    for (const std::string& t : tokens)
        if (!stopwords.count(t) && synonyms.lookup(t)) sources.push_back(t);
    if (sources.empty()) return tokens;
    for (int k = 0; k < n; ++k) {
        const std::string& word =
            sources[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(sources.size()) - 1))];
        const std::vector<std::string>& syns = *synonyms.lookup(word);
        const std::string& pick =
            syns[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(syns.size()) - 1))];
        int pos = uniform_int(rng, 0, static_cast<int>(tokens.size()));
        tokens.insert(tokens.begin() + pos, pick);
    }
    return tokens;
}

// Random swap of two distinct positions; a single-token sentence has no
// distinct pair and passes through unchanged.
inline std::vector<std::string> op_random_swap(std::vector<std::string> tokens,
                                               Rng& rng) {
    int n = static_cast<int>(tokens.size());
    if (n < 2) return tokens;
    int i = uniform_int(rng, 0, n - 1);
    int j = uniform_int(rng, 0, n - 2);
    if (j >= i) ++j;
    std::swap(tokens[static_cast<std::size_t>(i)], tokens[static_cast<std::size_t>(j)]);
    return tokens;
}

// Random deletion: each token kept when its draw is >= p, so p = 0 keeps
// everything and p = 1 deletes everything; a fully-deleted sentence keeps
// one uniformly random token instead of going empty.
inline std::vector<std::string> op_random_delete(
    const std::vector<std::string>& tokens, double p, Rng& rng) {
    std::vector<std::string> kept;
    for (const std::string& t : tokens)
        if (uniform_real(rng, 0.0, 1.0) >= p) kept.push_back(t);
    if (kept.empty()) {
        int idx = uniform_int(rng, 0, static_cast<int>(tokens.size()) - 1);
        kept.push_back(tokens[static_cast<std::size_t>(idx)]);
    }
    return kept;
}

}  // namespace detail

// Applies exactly one of {synonym replacement, random insertion, random
// swap, random deletion}, chosen uniformly. Never returns an empty sentence.
inline Expression strong_text_augment(const Expression& expression, Rng& rng,
                                      const TextAugmentParams& params,
                                      const SynonymLexicon& synonyms,
                                      const StopwordSet& stopwords) {
    int op = uniform_int(rng, 0, 3);
    std::vector<std::string> tokens;
    switch (op) {
        case 0:
            tokens = detail::op_synonym_replace(expression.tokens, params.n_sr,
                                                rng, synonyms, stopwords);
            break;
        case 1:
            tokens = detail::op_random_insert(expression.tokens, params.n_ri,
                                              rng, synonyms, stopwords);
            break;
        case 2:
            tokens = detail::op_random_swap(expression.tokens, rng);
            break;
        default:
            tokens = detail::op_random_delete(expression.tokens, params.p_rd, rng);
            break;
    }
    return Expression::from_tokens(tokens);
}

// Generates `count` independent strong candidates, each under its own
// derived sub-seed so candidate j is stable regardless of how many others
// are requested.
inline std::vector<Expression> generate_candidates(
    const Expression& expression, int count, std::uint64_t seed,
    const TextAugmentParams& params, const SynonymLexicon& synonyms,
    const StopwordSet& stopwords) {
    if (count < 1) throw ConfigError("candidate count must be >= 1");
    std::vector<Expression> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        Rng rng(derive_subseed(seed, static_cast<std::uint64_t>(j)));
        out.push_back(
            strong_text_augment(expression, rng, params, synonyms, stopwords));
    }
    return out;
}

struct ScoredCandidate {
    Expression text;
    double theta;  // cosine similarity to the weak text, in [-1, 1]
};

struct TextCandidateSet {
    Expression weak_text;
    std::vector<ScoredCandidate> candidates;
    std::vector<Expression> retained;  // candidates with theta >= lambda_t, in order
};

// Scores every candidate against the weak text by embedding cosine and
// keeps those at or above lambda_t. Order-preserving: no ranking, no
// greedy most-similar selection — dissimilar candidates are removed, the
// rest stay as generated.
template <typename EmbedFn>
TextCandidateSet semantic_filter(const Expression& weak_text,
                                 const std::vector<Expression>& candidates,
                                 EmbedFn&& embed, double lambda_t) {
    EmbeddingVector fw = embed(weak_text);
    if (l2_norm(fw) == 0.0)
        throw ComputeError("zero-norm embedding for text '" + weak_text.raw + "'");
    TextCandidateSet set;
    set.weak_text = weak_text;
    for (const Expression& cand : candidates) {
        EmbeddingVector fs = embed(cand);
        if (l2_norm(fs) == 0.0)
            throw ComputeError("zero-norm embedding for text '" + cand.raw + "'");
        double theta = cosine(fs, fw);
        set.candidates.push_back({cand, theta});
        if (theta >= lambda_t) set.retained.push_back(cand);
    }
    return set;
}

// Uniform choice among the retained candidates; an empty retained set falls
// back to the weak text so the strong branch always has an input.
inline Expression pick_training_text(const TextCandidateSet& set, Rng& rng) {
    if (set.retained.empty()) return set.weak_text;
    int idx = uniform_int(rng, 0, static_cast<int>(set.retained.size()) - 1);
    return set.retained[static_cast<std::size_t>(idx)];
}

}  // namespace resmatch
