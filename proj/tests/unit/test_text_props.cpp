#include <doctest.h>

#include "lmerepro/error.hpp"
#include "lmerepro/text_props.hpp"
#include "oracles.hpp"

using namespace lmerepro;

TEST_SUITE("text_props") {
    TEST_CASE("tokenization") {
        CHECK(tokenize("A, a!") == std::vector<std::string>{"a", "a"});
        CHECK(tokenize("  The cat's\tMAT.\n") == std::vector<std::string>{"the", "cat", "s", "mat"});
        CHECK(tokenize("caf\xC3\xA9 ol\xC3\xA9") == std::vector<std::string>{"caf\xC3\xA9", "ol\xC3\xA9"});
        CHECK(tokenize("...!?").empty());
    }

    TEST_CASE("corpus counts") {
        const auto s = build_corpus_stats({"a a b"});
        CHECK(s.token_counts == std::map<std::string, std::uint64_t>{{"a", 2}, {"b", 1}});
        CHECK(s.total_tokens == 3);
        const auto t = build_corpus_stats({"A, a!"});
        CHECK(t.token_counts == std::map<std::string, std::uint64_t>{{"a", 2}});
        CHECK(t.total_tokens == 2);
        CHECK_THROWS_AS(build_corpus_stats({}), EmptyDataError);
        CHECK_THROWS_AS(build_corpus_stats({"", " ,. "}), EmptyDataError);
    }

    TEST_CASE("Zipf corpus totals") {
        std::mt19937_64 rng(5);
        std::vector<double> weights;
        for (int r = 1; r <= 200; ++r) weights.push_back(1.0 / r);
        std::discrete_distribution<int> zipf(weights.begin(), weights.end());
        std::uniform_int_distribution<int> len(1, 40);
        std::vector<std::string> docs;
        std::uint64_t generated = 0;
        for (int d = 0; d < 1000; ++d) {
            std::string doc;
            const int n = len(rng);
            for (int k = 0; k < n; ++k) doc += "w" + std::to_string(zipf(rng)) + (k % 7 == 6 ? ". " : " ");
            generated += static_cast<std::uint64_t>(n);
            docs.push_back(doc);
        }
        const auto s = build_corpus_stats(docs);
        CHECK(s.total_tokens == generated);
        std::uint64_t sum = 0;
        for (const auto& [t, c] : s.token_counts) {
            CHECK(c >= 1);
            sum += c;
        }
        CHECK(sum == s.total_tokens);
    }

    TEST_CASE("rarity arithmetic") {
        CHECK(word_rarity("a", build_corpus_stats({"a a a a"})) == 0.0);
        CHECK(std::abs(word_rarity("a b", build_corpus_stats({"a b"})) - std::log(2.0)) < 1e-12);
        const auto s = build_corpus_stats({"a a a a a b b b"});
        CHECK(s.total_tokens == 8);
        CHECK(s.vocabulary_size() == 2);
        CHECK(std::abs(word_rarity("zzz", s) - std::log(11.0)) < 1e-12);
        CHECK_THROWS_AS(word_rarity("...", s), DataError);
    }

    TEST_CASE("rarity properties") {
        // more corpus mass on a token never makes it rarer
        double prev = 1e9;
        for (int k = 1; k <= 6; ++k) {
            std::string corpus = "b";
            for (int i = 0; i < k; ++i) corpus += " a";
            const double r = word_rarity("a", build_corpus_stats({corpus}));
            CHECK(r <= prev);
            prev = r;
        }
        const std::vector<std::string> corpus{"the cat sat", "a dog ran on the mat", "the end"};
        auto doubled = corpus;
        doubled.insert(doubled.end(), corpus.begin(), corpus.end());
        const auto s1 = build_corpus_stats(corpus);
        const auto s2 = build_corpus_stats(doubled);
        for (const auto& t : corpus) CHECK(word_rarity(t, s1) == doctest::Approx(word_rarity(t, s2)).epsilon(1e-15));
        CHECK(word_rarity("the cat", s1) >= 0.0);
    }

    TEST_CASE("syllables and sentences") {
        CHECK(count_syllables("the") == 1);
        CHECK(count_syllables("cat") == 1);
        CHECK(count_syllables("table") == 2);
        CHECK(count_syllables("make") == 1);
        CHECK(count_syllables("readability") == 5);
        CHECK(count_syllables("rhythm") == 1);
        CHECK(count_syllables("queue") == 1);
        CHECK(count_syllables("42") == 1);
        CHECK(count_sentences("No terminal punctuation") == 1);
        CHECK(count_sentences("One. Two! Three?") == 3);
        CHECK(count_sentences("Wait... what?!") == 2);
    }

    TEST_CASE("Flesch reading ease") {
        CHECK(std::abs(readability("The cat sat on the mat.") - 116.145) < 1e-9);
        CHECK_THROWS_AS(readability(""), DataError);
        CHECK_THROWS_AS(readability("?!"), DataError);
        std::string dense;
        for (int i = 0; i < 120; ++i) dense += "incomprehensibilities institutionalization ";
        CHECK(readability(dense) < -300.0);
        const std::string t = "Readability is a pure function. Calls agree!";
        CHECK(readability(t) == readability(t));
    }

    TEST_CASE("annotation joins properties per object") {
        const auto ds = oracle::make_dataset({1, 2, 3, 4}, {{"sentence", {"x", "y", "x", "y"}}, {"system", {"a", "a", "b", "b"}}});
        const std::map<std::string, std::string> texts{{"x", "The cat sat on the mat."}, {"y", "Dogs run quickly."}};
        const auto stats = build_corpus_stats({texts.at("x"), texts.at("y")});
        const auto out = annotate_dataset(ds, texts, stats);
        CHECK(out.covariate_names() == std::vector<std::string>{"rarity", "readability"});
        CHECK(out.response() == ds.response());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto& text = texts.at(out.factor("sentence").label(i));
            CHECK(out.covariate("rarity").values[i] == word_rarity(text, stats));
            CHECK(out.covariate("readability").values[i] == readability(text));
        }
        CHECK(out.covariate("rarity").values[0] == out.covariate("rarity").values[2]);

        try {
            annotate_dataset(ds, {{"x", "text"}}, stats);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("'y'") != std::string::npos);
        }
    }
}
