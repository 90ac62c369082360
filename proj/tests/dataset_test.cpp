#include <gtest/gtest.h>

#include "cohorts.hpp"

using namespace diagbed;

namespace {

std::filesystem::path golden_path() {
    return std::filesystem::path(DIAGBED_SOURCE_DIR) / "tests/golden/ckd_vignette_1.txt";
}

DatasetSchema ckd() { return load_manifest(cohorts::data_dir() / "ckd.json"); }

std::set<std::string> all_names(const DatasetSchema& s) {
    const auto names = s.feature_names();
    return {names.begin(), names.end()};
}

}  // namespace

TEST(Vignette, CkdGoldenRecord) {
    const auto schema = ckd();
    const auto data = load_dataset(schema);
    ASSERT_FALSE(data.records.empty());
    const auto& first = data.records.front();
    EXPECT_EQ(first.id, "1");
    EXPECT_EQ(render_vignette(first, all_names(schema), schema), read_file(golden_path()));
}

TEST(Vignette, SchemaOrderNotInsertionOrder) {
    const auto schema = ckd();
    Evidence e{{"sc", 2.7}, {"age", 63.0}};
    EXPECT_EQ(render_vignette(e, schema), "The patient is 63 years old. Serum creatinine was measured at 2.7 mg/dL.");
    EXPECT_EQ(render_vignette(Evidence{}, schema), "");
}

TEST(Vignette, UnknownFeatureRejected) {
    const auto schema = ckd();
    EXPECT_THROW(render_vignette(Evidence{{"nope", 1.0}}, schema), Error);
}

TEST(Vignette, CategoricalWithoutPhraseRendersVerbatim) {
    const auto schema = cohorts::make_schema("s", {cohorts::binary("Cough", true), cohorts::numeric("x")});
    EXPECT_EQ(render_vignette(Evidence{{"Cough", std::string("pos")}}, schema), "The Cough result is pos.");
}

TEST(Manifest, CkdPartition) {
    const auto schema = ckd();
    const auto p = partition(schema);
    EXPECT_EQ(p.known.size(), 8u);
    EXPECT_EQ(p.unknown.size(), 10u);
    EXPECT_EQ(p.known.front(), "age");
    EXPECT_EQ(p.unknown.front(), "sg");
}

TEST(Manifest, AllBundledManifestsLoad) {
    for (const char* name : {"ckd.json", "hepatitis.json", "diabetes.json", "osce.json", "synthetic/manifest.json"}) {
        SCOPED_TRACE(name);
        const auto schema = load_manifest(cohorts::data_dir() / name);
        const auto data = load_dataset(schema);
        EXPECT_FALSE(data.records.empty());
        for (const auto& rec : data.records) {
            EXPECT_EQ(rec.values.size(), schema.features.size());
            EXPECT_TRUE(rec.label == 0 || rec.label == 1);
        }
    }
}

TEST(Manifest, CaseDatasetCarriesDiagnosis) {
    const auto schema = load_manifest(cohorts::data_dir() / "osce.json");
    const auto data = load_dataset(schema);
    for (const auto& rec : data.records) EXPECT_FALSE(rec.disease.empty());
}

TEST(Manifest, RejectsBadDocuments) {
    auto base = nlohmann::json::parse(R"({
        "disease_name": "d", "label_column": "y",
        "features": [{"name": "a", "template": "A is {value}.", "known_at_start": true},
                     {"name": "b", "template": "B is {value}."}]})");
    EXPECT_NO_THROW(parse_manifest(base));

    auto no_placeholder = base;
    no_placeholder["features"][1]["template"] = "B is unknown.";
    EXPECT_THROW(parse_manifest(no_placeholder), Error);

    auto duplicate = base;
    duplicate["features"][1]["name"] = "a";
    EXPECT_THROW(parse_manifest(duplicate), Error);

    auto all_known = base;
    all_known["features"][1]["known_at_start"] = true;
    EXPECT_THROW(parse_manifest(all_known), Error);

    auto bad_kind = base;
    bad_kind["features"][0]["kind"] = "ordinal";
    EXPECT_THROW(parse_manifest(bad_kind), Error);

    auto label_clash = base;
    label_clash["label_column"] = "a";
    EXPECT_THROW(parse_manifest(label_clash), Error);

    auto cheap = base;
    cheap["cost_mode"] = "per-feature";
    cheap["features"][0]["cost"] = 1.0;
    cheap["features"][1]["cost"] = 5.0;
    EXPECT_THROW(parse_manifest(cheap), Error);

    auto missing = base;
    missing.erase("disease_name");
    try {
        parse_manifest(missing);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Schema);
    }
}

TEST(Dataset, DropsIncompleteRowsWithReasons) {
    const auto schema = cohorts::make_schema("s", {cohorts::numeric("a", true), cohorts::binary("b")});
    const auto data = load_dataset("a,b,label\n1,pos,1\n?,neg,0\n2,maybe,1\n3,neg,x\n4.5,neg,0\n", schema);
    ASSERT_EQ(data.records.size(), 2u);
    ASSERT_EQ(data.dropped.size(), 3u);
    EXPECT_EQ(data.dropped[0].row, 2u);
    EXPECT_EQ(data.dropped[0].column, "a");
    EXPECT_EQ(data.dropped[1].column, "b");
    EXPECT_EQ(data.dropped[2].column, "label");
    EXPECT_EQ(std::get<double>(data.records[1].value("a")), 4.5);
}

TEST(Dataset, MissingColumnAndEmptyResultAreFatal) {
    const auto schema = cohorts::make_schema("s", {cohorts::numeric("a", true), cohorts::numeric("b")});
    EXPECT_THROW(load_dataset("a,label\n1,1\n", schema), Error);
    EXPECT_THROW(load_dataset("a,b,label\n?,1,1\n", schema), Error);
}

TEST(Dataset, CkdDemoDropsRowWithMissingSodium) {
    const auto schema = ckd();
    const auto data = load_dataset(schema);
    ASSERT_EQ(data.dropped.size(), 1u);
    EXPECT_EQ(data.dropped[0].column, "sod");
    EXPECT_EQ(data.dropped[0].row, 8u);
}

TEST(Dataset, SerializeReloadRoundTrip) {
    for (const char* name : {"ckd.json", "hepatitis.json", "diabetes.json", "osce.json"}) {
        SCOPED_TRACE(name);
        const auto schema = load_manifest(cohorts::data_dir() / name);
        const auto first = load_dataset(schema).records;
        const auto second = load_dataset(serialize_dataset(first, schema), schema).records;
        ASSERT_EQ(first.size(), second.size());
        for (std::size_t i = 0; i < first.size(); ++i) {
            EXPECT_EQ(first[i].values, second[i].values);
            EXPECT_EQ(first[i].label, second[i].label);
            EXPECT_EQ(first[i].disease, second[i].disease);
        }
    }
}

TEST(Dataset, ValidateValue) {
    const auto num = cohorts::numeric("x");
    const auto cat = cohorts::binary("c");
    EXPECT_EQ(validate_value(num, FeatureValue{std::string(" 2.5 ")}), FeatureValue{2.5});
    EXPECT_THROW(validate_value(num, FeatureValue{std::string("high")}), Error);
    EXPECT_EQ(validate_value(cat, FeatureValue{std::string("neg")}), FeatureValue{std::string("neg")});
    EXPECT_THROW(validate_value(cat, FeatureValue{std::string("maybe")}), Error);
    try {
        validate_value(cat, FeatureValue{std::string("maybe")});
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
        EXPECT_EQ(e.field(), "c");
    }
}
