#include <gtest/gtest.h>

#include <set>

#include "cohorts.hpp"

using namespace diagbed;

TEST(FormatReal, ShortestRoundTrip) {
    EXPECT_EQ(format_real(380.0), "380.0");
    EXPECT_EQ(format_real(1.01), "1.01");
    EXPECT_EQ(format_real(2.7), "2.7");
    EXPECT_EQ(format_real(0.1 + 0.2), "0.30000000000000004");
    EXPECT_EQ(format_real(-4.0), "-4.0");
    EXPECT_EQ(format_integer(63.0), "63");
    EXPECT_EQ(format_integer(63.5), "63.5");
}

TEST(ParseReal, AcceptsOnlyCompleteTokens) {
    double v = 0.0;
    EXPECT_TRUE(parse_real(" 12.5 ", v));
    EXPECT_EQ(v, 12.5);
    EXPECT_TRUE(parse_real("+3", v));
    EXPECT_EQ(v, 3.0);
    EXPECT_TRUE(parse_real("1e-3", v));
    EXPECT_FALSE(parse_real("", v));
    EXPECT_FALSE(parse_real("12abc", v));
    EXPECT_FALSE(parse_real("+-1", v));
    EXPECT_FALSE(parse_real("inf", v));
    EXPECT_FALSE(parse_real("nan", v));
}

TEST(EvidenceHash, OrderIndependentAndValueSensitive) {
    Evidence a{{"x", 1.0}, {"y", std::string("pos")}};
    Evidence b;
    b["y"] = std::string("pos");
    b["x"] = 1.0;
    EXPECT_EQ(evidence_hash(a), evidence_hash(b));
    EXPECT_EQ(canonical_evidence(a), "x=1.0;y=pos");
    b["x"] = 2.0;
    EXPECT_NE(evidence_hash(a), evidence_hash(b));
    EXPECT_EQ(evidence_hash(a).size(), 16u);
}

TEST(MixSeed, SpreadsNearbyInputs) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 50; ++a) {
        for (std::uint64_t b = 0; b < 50; ++b) seen.insert(mix_seed(a, b));
    }
    EXPECT_EQ(seen.size(), 2500u);
    EXPECT_EQ(mix_seed(3, "prior"), mix_seed(3, "prior"));
    EXPECT_NE(mix_seed(3, "prior"), mix_seed(4, "prior"));
}

TEST(Csv, QuotedFieldsAndLineEndings) {
    const auto rows = csv::parse("a,b,c\r\n1,\"x, y\",\"he said \"\"hi\"\"\"\n2,\"multi\nline\",\n");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][1], "x, y");
    EXPECT_EQ(rows[1][2], "he said \"hi\"");
    EXPECT_EQ(rows[2][1], "multi\nline");
    EXPECT_EQ(rows[2][2], "");
}

TEST(Csv, SkipsBlankLinesAndBom) {
    const auto rows = csv::parse("\xEF\xBB\xBFh1,h2\n\n1,2");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][0], "h1");
    EXPECT_EQ(rows[1][1], "2");
}

TEST(Csv, UnterminatedQuoteIsParseError) {
    try {
        csv::parse("a,\"b\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
    }
}

TEST(Csv, FormatRoundTrips) {
    const csv::Row row{"plain", "has,comma", "has \"quote\"", " padded", ""};
    const auto rows = csv::parse(csv::format_row(row));
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0], row);
}

TEST(StrictFloat, Examples) {
    EXPECT_DOUBLE_EQ(parse_strict_float(" 0.512\n"), 0.512);
    EXPECT_DOUBLE_EQ(parse_strict_float("-3"), -3.0);
    EXPECT_DOUBLE_EQ(parse_strict_float("2.3\n"), 2.3);
    EXPECT_THROW(parse_strict_float("0.9 (high risk)"), Error);
    EXPECT_THROW(parse_strict_float("about 0.4"), Error);
    EXPECT_THROW(parse_strict_float("   "), Error);
    try {
        parse_strict_float("0.9 (high risk)");
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_EQ(e.raw(), "0.9 (high risk)");
    }
}

TEST(MatchFeature, CaseAndDecorationInsensitive) {
    const std::vector<std::string> c{"ALT", "AST", "GGT"};
    EXPECT_EQ(match_feature("AST", c), "AST");
    EXPECT_EQ(match_feature(" 'ast'.\n", c), "AST");
    EXPECT_EQ(match_feature("`GGT`", c), "GGT");
    EXPECT_THROW(match_feature("AST or ALT", c), Error);
    EXPECT_THROW(match_feature("bilirubin", c), Error);
}

TEST(FeatureList, PythonStyle) {
    const std::vector<std::string> all{"Glucose", "BMI", "Insulin", "Age"};
    EXPECT_EQ(parse_feature_list("['Glucose','BMI','Insulin']", all, 3),
              (std::vector<std::string>{"Glucose", "BMI", "Insulin"}));
    EXPECT_EQ(parse_feature_list("age, bmi", all, 2), (std::vector<std::string>{"Age", "BMI"}));
    EXPECT_THROW(parse_feature_list("['Glucose','BMI']", all, 3), Error);
    EXPECT_THROW(parse_feature_list("['Glucose','Glucose','BMI']", all, 3), Error);
    EXPECT_THROW(parse_feature_list("['Glucose','BMI','Height']", all, 3), Error);
    EXPECT_THROW(parse_feature_list("['Glucose','BMI'", all, 2), Error);
}

TEST(Prompts, SubstituteLeavesUnknownPlaceholders) {
    EXPECT_EQ(substitute("a $x b $y_z $missing.", {{"x", "1"}, {"y_z", "2"}}), "a 1 b 2 $missing.");
    EXPECT_EQ(substitute("$$x", {{"x", "1"}}), "$1");
    EXPECT_EQ(python_list({"A", "B"}), "['A', 'B']");
}

TEST(Prompts, RenderedFromContext) {
    const auto schema = cohorts::make_schema(
        "p", {cohorts::numeric("age", true), cohorts::numeric("Serum creatinine"), cohorts::binary("Cough")});
    const auto ctx = SurrogateContext::make(schema, "7", {{"age", 63.0}});
    EXPECT_EQ(ctx.vignette, "age was measured at 63.0.");
    const auto risk = risk_prompt(ctx);
    EXPECT_NE(risk.find("age was measured at 63.0."), std::string::npos);
    EXPECT_NE(risk.find("the condition"), std::string::npos);
    EXPECT_EQ(risk.find('$'), std::string::npos);

    const auto sample = sampling_prompt(ctx, schema.at("Cough"));
    EXPECT_NE(sample.find("Cough"), std::string::npos);
    EXPECT_NE(sample.find("['pos', 'neg']"), std::string::npos);

    const auto implicit = implicit_prompt(ctx, {"Serum creatinine", "Cough"});
    EXPECT_NE(implicit.find("['Serum creatinine', 'Cough']"), std::string::npos);

    const auto global = global_prompt(schema, schema.feature_names(), 2);
    EXPECT_NE(global.find("['age', 'Serum creatinine', 'Cough']"), std::string::npos);
    EXPECT_NE(global.find('2'), std::string::npos);
}

TEST(Prompts, DiseaseOverridePerSession) {
    const auto schema = cohorts::make_schema("p", {cohorts::numeric("age", true), cohorts::numeric("x")});
    const auto ctx = SurrogateContext::make(schema, "1", {{"age", 40.0}}, "influenza");
    EXPECT_NE(risk_prompt(ctx).find("influenza"), std::string::npos);
    EXPECT_EQ(risk_prompt(ctx).find("the condition"), std::string::npos);
}
