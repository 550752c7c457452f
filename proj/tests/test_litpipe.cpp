#include <algorithm>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "lift/error.hpp"
#include "lift/litpipe.hpp"
#include "support.hpp"

using namespace lift;
namespace fx = lift::fixture;

namespace {

MockChatClient literature_mock(nlohmann::json rules = fx::literature_rules()) {
    return MockChatClient(MockScript::from_json({{"rules", rules}}), 4);
}

MockChatClient single_answer(const std::string& text) {
    return MockChatClient(MockScript::from_json({{"rules", nlohmann::json::array()}, {"default_response", text}}), 1);
}

}  // namespace

TEST(Ingest, TokenEstimateCountsCodePoints) {
    EXPECT_EQ(estimate_tokens(""), 0u);
    EXPECT_EQ(estimate_tokens("abcd"), 1u);
    EXPECT_EQ(estimate_tokens("abcde"), 2u);
    EXPECT_EQ(estimate_tokens("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9"), 1u);  // four two-byte code points
}

TEST(Ingest, EmptyAndMissingDirectories) {
    fx::TempDir dir("corpus");
    EXPECT_TRUE(ingest_markdown(dir.path()).docs.empty());
    try {
        ingest_markdown(dir / "absent");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}

TEST(Ingest, OnlyMarkdownSortedByName) {
    fx::TempDir dir("corpus");
    fx::write_file(dir / "b.md", "# B\nbody");
    fx::write_file(dir / "a.md", "# A\nbody");
    fx::write_file(dir / "c.md", "# C\nbody");
    fx::write_file(dir / "notes.txt", "ignored");
    fx::write_file(dir / "empty.md", "");
    const auto result = ingest_markdown(dir.path());
    ASSERT_EQ(result.docs.size(), 3u);
    EXPECT_EQ(result.docs[0].doc_id, "a");
    EXPECT_EQ(result.docs[1].doc_id, "b");
    EXPECT_EQ(result.docs[2].doc_id, "c");
    EXPECT_EQ(result.docs[0].markdown, "# A\nbody");
    ASSERT_EQ(result.errors.size(), 1u);
    EXPECT_EQ(result.errors[0].path.filename(), "empty.md");
}

TEST(Screening, RelevantAndIrrelevant) {
    fx::TempDir dir("corpus");
    fx::write_corpus(dir.path(), 2, 1);
    const auto docs = ingest_markdown(dir.path()).docs;
    auto llm = literature_mock();
    const auto yes = screen_paper(docs[0], llm);
    EXPECT_TRUE(yes.relevant);
    EXPECT_FALSE(yes.parse_failed);
    EXPECT_EQ(yes.doc_id, "paper-001");
    EXPECT_EQ(yes.factors, (std::vector<std::string>{"speed variance", "traffic speed"}));
    const auto no = screen_paper(docs[1], llm);
    EXPECT_FALSE(no.relevant);
    EXPECT_FALSE(no.parse_failed);
}

TEST(Screening, FullCorpusCountsRelevant) {
    fx::TempDir dir("corpus");
    fx::write_corpus(dir.path(), 299, 137);
    const auto docs = ingest_markdown(dir.path()).docs;
    ASSERT_EQ(docs.size(), 299u);
    auto llm = literature_mock();
    const auto summaries = screen_corpus(docs, llm);
    ASSERT_EQ(summaries.size(), 299u);
    EXPECT_EQ(std::count_if(summaries.begin(), summaries.end(), [](const auto& s) { return s.relevant; }), 137);
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        EXPECT_EQ(summaries[i].doc_id, docs[i].doc_id);
        EXPECT_EQ(summaries[i].relevant, i < 137);
    }
    EXPECT_EQ(llm.calls(), 299u);
}

TEST(Screening, MalformedAnswersRetriedThenMarked) {
    fx::TempDir dir("corpus");
    fx::write_corpus(dir.path(), 1, 1);
    const auto docs = ingest_markdown(dir.path()).docs;
    auto llm = single_answer("I think it is relevant!");
    ScreeningOptions opts;
    opts.max_retries = 2;
    const auto s = screen_paper(docs[0], llm, opts);
    EXPECT_TRUE(s.parse_failed);
    EXPECT_FALSE(s.relevant);
    EXPECT_EQ(llm.calls(), 3u);

    // relevant without any factor counts as malformed too
    auto empty_factors = single_answer(R"({"relevant": true, "factors": []})");
    EXPECT_TRUE(screen_paper(docs[0], empty_factors, opts).parse_failed);
}

TEST(Screening, TransportErrorsPropagate) {
    fx::TempDir dir("corpus");
    fx::write_corpus(dir.path(), 1, 1);
    const auto docs = ingest_markdown(dir.path()).docs;
    MockChatClient llm(MockScript::from_json(nlohmann::json::parse(R"({"rules":[{"contains":"Paper","fail":"transport"}]})")));
    try {
        screen_paper(docs[0], llm);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
    }
}

TEST(Screening, LongDocumentTruncatedToBudget) {
    PaperDoc doc;
    doc.doc_id = "long";
    doc.markdown = std::string(4000, 'x') + "TAIL-MARKER";
    doc.token_estimate = estimate_tokens(doc.markdown);
    ScreeningOptions opts;
    opts.context_budget_tokens = 500;
    bool truncated = false;
    const auto req = screening_request(doc, opts, &truncated);
    EXPECT_TRUE(truncated);
    EXPECT_EQ(req.user.find("TAIL-MARKER"), std::string::npos);
    EXPECT_NE(req.user.find(std::string(2000, 'x')), std::string::npos);
    EXPECT_EQ(req.user.find(std::string(2001, 'x')), std::string::npos);

    opts.context_budget_tokens = 100'000;
    screening_request(doc, opts, &truncated);
    EXPECT_FALSE(truncated);

    auto llm = single_answer(fx::screening_answer(true));
    opts.context_budget_tokens = 500;
    EXPECT_TRUE(screen_paper(doc, llm, opts).truncated);
}

TEST(Aggregation, ProducesReferenceKb) {
    std::vector<PaperSummary> summaries(3);
    for (std::size_t i = 0; i < 3; ++i) {
        summaries[i].doc_id = "p" + std::to_string(i);
        summaries[i].relevant = i != 1;
        summaries[i].factors = {"speed variance"};
    }
    auto llm = literature_mock();
    EXPECT_EQ(aggregate_kb(summaries, llm), reference_kb());
    const auto req = aggregation_request(summaries, {});
    EXPECT_NE(req.user.find("\"p0\""), std::string::npos);
    EXPECT_EQ(req.user.find("\"p1\""), std::string::npos);
    EXPECT_NE(req.user.find("\"p2\""), std::string::npos);
}

TEST(Aggregation, MissingVariableIsNamed) {
    auto doc = to_json(reference_kb());
    doc["variables"].erase("lk_std_s");
    auto llm = single_answer(doc.dump());
    std::vector<PaperSummary> summaries(1);
    summaries[0].doc_id = "p";
    summaries[0].relevant = true;
    try {
        aggregate_kb(summaries, llm);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::validation);
        EXPECT_NE(std::string(e.what()).find("aggregation error"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("lk_std_s"), std::string::npos);
    }
    EXPECT_EQ(llm.calls(), 3u);
}

TEST(Aggregation, NeedsRelevantSummaries) {
    auto llm = literature_mock();
    std::vector<PaperSummary> summaries(2);
    try {
        aggregate_kb(summaries, llm);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::precondition);
    }
    EXPECT_EQ(llm.calls(), 0u);
}
