#include "lmerepro/text_props.hpp"

#include "lmerepro/error.hpp"

#include <cmath>

namespace lmerepro {

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

bool is_vowel(char c) {
    switch (c) {
        case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
        default: return false;
    }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

double CorpusStats::probability(const std::string& token) const {
    const auto it = token_counts.find(token);
    const double total = static_cast<double>(total_tokens);
    if (it == token_counts.end()) return 1.0 / (total + static_cast<double>(token_counts.size()) + 1.0);
    return static_cast<double>(it->second) / total;
}

CorpusStats build_corpus_stats(const std::vector<std::string>& texts) {
    if (texts.empty()) throw EmptyDataError("corpus has no texts");
    CorpusStats stats;
    for (const auto& t : texts) {
        for (auto& tok : tokenize(t)) {
            ++stats.token_counts[std::move(tok)];
            ++stats.total_tokens;
        }
    }
    if (stats.total_tokens == 0) throw EmptyDataError("corpus is empty after tokenization");
    return stats;
}

double word_rarity(std::string_view text, const CorpusStats& stats) {
    if (stats.total_tokens == 0) throw EmptyDataError("corpus statistics are empty");
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw DataError("rarity is undefined for a text with no tokens");
    double sum = 0.0;
    for (const auto& t : tokens) sum -= std::log(stats.probability(t));
    return sum / static_cast<double>(tokens.size());
}

int count_syllables(std::string_view word) {
    std::string w;
    for (char c : word) w += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    int groups = 0;
    bool in_group = false;
    for (char c : w) {
        const bool v = is_vowel(c);
        if (v && !in_group) ++groups;
        in_group = v;
    }
    const std::size_t n = w.size();
    if (n >= 1 && w[n - 1] == 'e') {
        const bool consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if (!consonant_le) --groups;
    }
    return groups < 1 ? 1 : groups;
}

int count_sentences(std::string_view text) {
    int count = 0;
    bool in_run = false;
    for (char c : text) {
        const bool terminal = c == '.' || c == '!' || c == '?';
        if (terminal && !in_run) ++count;
        in_run = terminal;
    }
    return count < 1 ? 1 : count;
}

double readability(std::string_view text) {
    const auto words = tokenize(text);
    if (words.empty()) throw DataError("readability is undefined for a text with no words");
    long syllables = 0;
    for (const auto& w : words) syllables += count_syllables(w);
    const double n_words = static_cast<double>(words.size());
    const double n_sentences = static_cast<double>(count_sentences(text));
    return 206.835 - 1.015 * (n_words / n_sentences) - 84.6 * (static_cast<double>(syllables) / n_words);
}

TextProperties text_properties(std::string_view text, const CorpusStats& stats) {
    return {word_rarity(text, stats), readability(text)};
}

EvalDataset annotate_dataset(const EvalDataset& ds, const std::map<std::string, std::string>& texts,
                             const CorpusStats& stats) {
    const auto& object = ds.factor(ds.object_of_interest());
    std::vector<TextProperties> per_level;
    per_level.reserve(object.levels.size());
    for (const auto& level : object.levels) {
        const auto it = texts.find(level);
        if (it == texts.end()) throw DataError("no text for " + object.name + " '" + level + "'");
        per_level.push_back(text_properties(it->second, stats));
    }
    Covariate rarity{"rarity", {}};
    Covariate read{"readability", {}};
    rarity.values.reserve(ds.size());
    read.values.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& p = per_level[static_cast<std::size_t>(object.codes[i])];
        rarity.values.push_back(p.rarity);
        read.values.push_back(p.readability);
    }
    return ds.with_covariate(std::move(rarity)).with_covariate(std::move(read));
}

}  // namespace lmerepro
