#pragma once

#include "lmerepro/dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lmerepro {

/// Lowercases ASCII letters and splits on whitespace and ASCII punctuation,
/// which is discarded. Bytes >= 0x80 are kept as word characters so UTF-8
/// words survive intact.
std::vector<std::string> tokenize(std::string_view text);

struct CorpusStats {
    std::map<std::string, std::uint64_t> token_counts;
    std::uint64_t total_tokens = 0;

    std::size_t vocabulary_size() const noexcept { return token_counts.size(); }
    /// Empirical probability, or 1 / (total + V + 1) for an unseen token.
    double probability(const std::string& token) const;
};

/// Throws DataError when the list is empty or holds no tokens at all.
CorpusStats build_corpus_stats(const std::vector<std::string>& texts);

struct TextProperties {
    double rarity = 0.0;
    double readability = 0.0;
};

/// Mean of -ln p(w) over the tokens of `text`, in nats per token.
double word_rarity(std::string_view text, const CorpusStats& stats);

/// Vowel groups (aeiouy), one less for a silent final 'e' unless the word
/// ends in consonant + "le", never below 1.
int count_syllables(std::string_view word);

/// Runs of '.', '!' or '?' each close one sentence; at least 1.
int count_sentences(std::string_view text);

/// Flesch reading ease: 206.835 - 1.015 words/sentence - 84.6 syllables/word.
double readability(std::string_view text);

TextProperties text_properties(std::string_view text, const CorpusStats& stats);

/// Adds covariates "rarity" and "readability" keyed by the object-of-interest
/// level of each row. Throws DataError naming the first level with no text.
EvalDataset annotate_dataset(const EvalDataset& ds, const std::map<std::string, std::string>& texts,
                             const CorpusStats& stats);

}  // namespace lmerepro
