#include <gtest/gtest.h>

#include <random>

#include "mtaudit/corpus.hpp"
#include "support.hpp"

using namespace mtaudit;
using testsupport::ScratchDir;

namespace {

std::vector<std::string> texts(const TokenizedTrace& tok) {
    std::vector<std::string> out;
    for (const auto& s : tok.sentences) out.push_back(s.text);
    return out;
}

void expect_reconstructs(const std::string& trace, const TokenizedTrace& tok) {
    std::string rebuilt;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tok.sentences.size(); ++i) {
        const auto& s = tok.sentences[i];
        ASSERT_EQ(s.index, i);
        ASSERT_LE(pos, s.span.start);
        ASSERT_LT(s.span.start, s.span.end);
        std::string gap = trace.substr(pos, s.span.start - pos);
        for (char c : gap) ASSERT_TRUE(is_space(static_cast<unsigned char>(c))) << "non-space gap in: " << trace;
        rebuilt += gap;
        ASSERT_EQ(trace.substr(s.span.start, s.span.size()), s.text);
        rebuilt += s.text;
        pos = s.span.end;
    }
    for (std::size_t k = pos; k < trace.size(); ++k) ASSERT_TRUE(is_space(static_cast<unsigned char>(trace[k])));
    rebuilt += trace.substr(pos);
    ASSERT_EQ(rebuilt, trace);
}

}  // namespace

TEST(LanguagePair, NamesAndLabel) {
    LanguagePair p{"en", "yue"};
    EXPECT_EQ(p.source_name().value(), "English");
    EXPECT_EQ(p.target_name().value(), "Cantonese");
    EXPECT_EQ(p.label(), "en-yue");
    EXPECT_FALSE((LanguagePair{"xx", "es"}).source_name().has_value());
    for (auto code : {"es", "ja", "fr", "de", "yue", "ur", "zh"}) EXPECT_TRUE(language_name(code).has_value()) << code;
}

TEST(LoadSamples, ThreeLinesInOrder) {
    ScratchDir dir("corpus");
    write_file(dir / "c.jsonl",
               R"({"id":"a","src_lang":"en","tgt_lang":"es","source":"x1","trace":"t1","output":"y1"})"
               "\n"
               R"({"id":"b","src_lang":"en","tgt_lang":"es","source":"x2","trace":"t2","output":"y2","reference":"r2"})"
               "\n"
               R"({"id":"c","src_lang":"en","tgt_lang":"ur","source":"x3","trace":"","output":"y3","model_tag":"m"})"
               "\n");
    auto s = load_samples(dir / "c.jsonl");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].id, "a");
    EXPECT_EQ(s[1].reference.value(), "r2");
    EXPECT_EQ(s[2].trace, "");
    EXPECT_EQ(s[2].model_tag, "m");
    EXPECT_EQ(s[2].pair.target_code, "ur");
}

TEST(LoadSamples, MissingSourceNamesLine) {
    ScratchDir dir("corpus");
    write_file(dir / "c.jsonl",
               R"({"id":"a","src_lang":"en","tgt_lang":"es","source":"x","trace":"t","output":"y"})"
               "\n"
               R"({"id":"b","src_lang":"en","tgt_lang":"es","trace":"t","output":"y"})"
               "\n");
    try {
        load_samples(dir / "c.jsonl");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_STREQ(e.what(), "line 2: missing field source");
    }
}

TEST(LoadSamples, DuplicateIdAndMalformedLine) {
    ScratchDir dir("corpus");
    write_file(dir / "d.jsonl",
               R"({"id":"a","src_lang":"en","tgt_lang":"es","source":"x","output":"y"})"
               "\n"
               R"({"id":"a","src_lang":"en","tgt_lang":"es","source":"x","output":"y"})"
               "\n");
    EXPECT_THROW(
        {
            try {
                load_samples(dir / "d.jsonl");
            } catch (const InputError& e) {
                EXPECT_NE(std::string(e.what()).find("duplicate sample id a"), std::string::npos);
                throw;
            }
        },
        InputError);
    write_file(dir / "m.jsonl", "{not json}\n");
    try {
        load_samples(dir / "m.jsonl");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("line 1:", 0), 0u);
    }
}

TEST(LoadSamples, ParallelFormatLeavesTraceAndOutputEmpty) {
    ScratchDir dir("corpus");
    write_file(dir / "p.jsonl", R"({"id":"a","src_lang":"en","tgt_lang":"de","source":"x","reference":"r"})" "\n");
    auto s = load_samples(dir / "p.jsonl", CorpusFormat::Parallel);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_TRUE(s[0].trace.empty());
    EXPECT_TRUE(s[0].output.empty());
    EXPECT_EQ(s[0].reference.value(), "r");
    EXPECT_THROW(load_samples(dir / "p.jsonl", CorpusFormat::Triplets), InputError);
}

TEST(LoadSamples, HundredLineDirection) {
    ScratchDir dir("corpus");
    std::vector<Sample> v;
    for (int i = 0; i < 100; ++i) v.push_back(testsupport::make_sample("es" + std::to_string(i), "en", "es", "m"));
    save_samples(dir / "h.jsonl", v);
    auto back = load_samples(dir / "h.jsonl");
    ASSERT_EQ(back.size(), 100u);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(back[i].id, "es" + std::to_string(i));
}

TEST(LoadSamples, RoundTripIsFieldOrderInsensitive) {
    ScratchDir dir("corpus");
    write_file(dir / "in.jsonl",
               R"({"output":"y","trace":"t. u.","tgt_lang":"ja","source":"x","src_lang":"en","id":"q","reference":"r"})"
               "\n");
    auto s = load_samples(dir / "in.jsonl");
    save_samples(dir / "out.jsonl", s);
    auto a = read_jsonl(dir / "in.jsonl");
    auto b = read_jsonl(dir / "out.jsonl");
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a[0], b[0]);
}

TEST(LoadSamples, RejectsBadLanguageTag) {
    ScratchDir dir("corpus");
    write_file(dir / "u.jsonl", R"({"id":"a","src_lang":"EN","tgt_lang":"es","source":"x","output":"y"})" "\n");
    EXPECT_THROW(load_samples(dir / "u.jsonl"), InputError);
}

TEST(Tokenize, TwoSentences) {
    auto tok = tokenize_trace("It means X. Next I check Y.");
    ASSERT_EQ(tok.size(), 2u);
    EXPECT_EQ(tok.sentences[0].index, 0u);
    EXPECT_EQ(tok.sentences[1].index, 1u);
    EXPECT_EQ(tok.sentences[0].text, "It means X.");
    EXPECT_EQ(tok.sentences[1].text, "Next I check Y.");
}

TEST(Tokenize, EmptyAndWhitespace) {
    EXPECT_TRUE(tokenize_trace("").empty());
    EXPECT_TRUE(tokenize_trace(" \n\n \t").empty());
}

TEST(Tokenize, MatchesHandSegmentedOracle) {
    auto oracle = json::parse(testsupport::slurp(testsupport::fixtures() / "tokenizer_oracle.json"));
    ASSERT_EQ(oracle["cases"].size(), 10u);
    for (const auto& c : oracle["cases"]) {
        std::string trace = c["trace"];
        auto tok = tokenize_trace(trace);
        EXPECT_EQ(texts(tok), c["sentences"].get<std::vector<std::string>>()) << c["name"];
        expect_reconstructs(trace, tok);
    }
}

TEST(Tokenize, SentenceAt) {
    auto tok = tokenize_trace("It means X. Next I check Y.");
    EXPECT_EQ(sentence_at(tok, 1).text, "Next I check Y.");
    EXPECT_THROW(sentence_at(tok, 5), std::out_of_range);
}

TEST(Tokenize, ReconstructionAndRoundTripProperty) {
    std::mt19937_64 rng(20240601);
    for (int n = 0; n < 300; ++n) {
        auto trace = testsupport::random_trace(rng, 0, 12);
        auto tok = tokenize_trace(trace);
        expect_reconstructs(trace, tok);
        for (std::size_t i = 0; i < tok.size(); ++i) {
            const auto& s = sentence_at(tok, i);
            EXPECT_EQ(trace.substr(s.span.start, s.span.size()), s.text);
        }
        auto again = tokenize_trace(trace);
        EXPECT_EQ(again.sentences, tok.sentences);
    }
}
