#include <gtest/gtest.h>

#include "lift/error.hpp"
#include "lift/knowledge_base.hpp"
#include "support.hpp"

using namespace lift;
namespace fx = lift::fixture;

TEST(KnowledgeBase, ReferencePassesWithAllCells) {
    const auto report = validate_kb(reference_kb());
    EXPECT_TRUE(report.passed) << report.summary();
    EXPECT_EQ(report.filled_cells, 30u);
    EXPECT_EQ(report.expected_cells, 30u);
    EXPECT_NE(reference_kb().variables.at("s_f_col").impact.find("higher frequency of forward collision warnings"),
              std::string::npos);
}

TEST(KnowledgeBase, EmptyCellIsNamed) {
    auto kb = reference_kb();
    kb.variables["l_fam"].combination_impact = "  ";
    const auto report = validate_kb(kb);
    EXPECT_FALSE(report.passed);
    EXPECT_EQ(report.filled_cells, 29u);
    ASSERT_EQ(report.issues.size(), 1u);
    EXPECT_EQ(report.issues[0].variable, "l_fam");
    EXPECT_EQ(report.issues[0].field, "combination_impact");
}

TEST(KnowledgeBase, SurplusAndMissingKeysAreNamed) {
    auto kb = reference_kb();
    kb.variables["weather"] = {"rain", "wet roads", "with speed"};
    auto report = validate_kb(kb);
    EXPECT_FALSE(report.passed);
    EXPECT_NE(report.summary().find("weather"), std::string::npos);

    kb = reference_kb();
    kb.variables.erase("lk_max_s");
    report = validate_kb(kb);
    EXPECT_FALSE(report.passed);
    EXPECT_NE(report.summary().find("lk_max_s"), std::string::npos);
    EXPECT_THROW(require_valid(kb), Error);
}

TEST(KnowledgeBase, JsonRoundTripKeepsCatalogOrder) {
    fx::TempDir dir("kb");
    save_kb(reference_kb(), dir / "kb.json");
    EXPECT_EQ(load_kb(dir / "kb.json"), reference_kb());

    const auto j = to_json(reference_kb());
    ASSERT_TRUE(j.contains("variables"));
    EXPECT_EQ(j["variables"].begin().key(), "l_f_col");
    for (const auto& [name, entry] : j["variables"].items()) {
        EXPECT_EQ(entry.size(), 3u) << name;
        EXPECT_TRUE(entry.contains("definition") && entry.contains("impact") && entry.contains("combination_impact"));
    }
}

TEST(KnowledgeBase, MalformedFilesRejected) {
    fx::TempDir dir("kb");
    fx::write_file(dir / "a.json", "{\"variables\": []}");
    EXPECT_THROW(load_kb(dir / "a.json"), Error);
    fx::write_file(dir / "b.json", "not json");
    EXPECT_THROW(load_kb(dir / "b.json"), Error);
    try {
        load_kb(dir / "none.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}
