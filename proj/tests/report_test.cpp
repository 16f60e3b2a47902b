#include <gtest/gtest.h>

#include "cropvqa/errors.hpp"
#include "cropvqa/report.hpp"
#include "test_support.hpp"

using namespace cropvqa;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

QuestionRecord make(const std::string& id, const std::string& method, QuestionType type,
                    std::optional<SizeGroup> group, std::optional<double> accuracy, double crop_seconds = 0.0) {
    QuestionRecord q;
    q.question_id = id;
    q.dataset = "ds";
    q.model = "m";
    q.method = method;
    q.question_type = type;
    q.size_group = group;
    q.accuracy = accuracy;
    q.answer = accuracy ? "yes" : "";
    if (!accuracy) q.error = "backend unavailable";
    if (method != "none") {
        q.crop = Rect{1, 2, 3, 4};
        q.crop_score = 0.5;
    }
    q.crop_seconds = crop_seconds;
    q.answer_seconds = 0.01;
    return q;
}

// Two methods over four questions; q4 errors under iterative.
std::vector<QuestionRecord> fixture() {
    using QT = QuestionType;
    using SG = SizeGroup;
    return {
        make("q1", "none", QT::counting, SG::g1, 0.0),
        make("q2", "none", QT::counting, SG::g2, 0.6),
        make("q3", "none", QT::reading, SG::g3, 1.0),
        make("q4", "none", QT::other, std::nullopt, 0.3),
        make("q1", "iterative", QT::counting, SG::g1, 1.0, 0.5),
        make("q2", "iterative", QT::counting, SG::g2, 0.3, 0.5),
        make("q3", "iterative", QT::reading, SG::g3, 1.0, 0.5),
        make("q4", "iterative", QT::other, std::nullopt, std::nullopt, 0.5),
    };
}

}  // namespace

TEST(QuestionJson, RoundTripWithoutTimings) {
    for (const auto& q : fixture()) {
        const json j = to_json(q);
        EXPECT_FALSE(j.contains("crop_seconds"));
        EXPECT_FALSE(j.contains("answer_seconds"));
        const QuestionRecord back = question_from_json(j);
        EXPECT_EQ(to_json(back), j);
        EXPECT_EQ(back.errored(), q.errored());
    }
    EXPECT_THROW(question_from_json(json{{"question_id", "x"}}), Error);
}

TEST(Aggregate, HandComputedTables) {
    const AggregateTables t = aggregate(fixture());
    using Row = AggregateTables::RowKey;
    const Row none{"m", "none"}, iter{"m", "iterative"};

    EXPECT_NEAR(t.overall.at(none).at("ds"), (0.0 + 0.6 + 1.0 + 0.3) / 4, 1e-12);
    EXPECT_NEAR(t.overall.at(iter).at("ds"), (1.0 + 0.3 + 1.0) / 3, 1e-12);
    EXPECT_EQ(t.evaluated.at({iter, "ds"}), 3u);
    EXPECT_EQ(t.errored.at({iter, "ds"}), 1u);
    EXPECT_FALSE(t.errored.count({none, "ds"}));

    const auto& sized = t.by_size.at({none, "ds"});
    EXPECT_EQ(sized[0], 0.0);
    EXPECT_EQ(sized[1], 0.6);
    EXPECT_EQ(sized[2], 1.0);

    // Gains pair q1..q3 only; q4 errored in the treated run.
    ASSERT_EQ(t.gain_by_type.size(), 1u);
    const auto& gain = t.gain_by_type.at({iter, "ds"});
    EXPECT_NEAR(gain.at(QuestionType::counting), ((1.0 + 0.3) - (0.0 + 0.6)) / 2, 1e-12);
    EXPECT_NEAR(gain.at(QuestionType::reading), 0.0, 1e-12);
    EXPECT_FALSE(gain.count(QuestionType::other));

    EXPECT_NEAR(t.crop_latency.at(iter), 0.5, 1e-12);
}

TEST(Aggregate, CsvRenderings) {
    const AggregateTables t = aggregate(fixture());
    EXPECT_EQ(overall_csv(t), "model,method,ds\nm,iterative,76.67\nm,none,47.50\n");
    EXPECT_EQ(by_size_csv(t),
              "model,method,dataset,G1,G2,G3\n"
              "m,iterative,ds,100.00,30.00,100.00\n"
              "m,none,ds,0.00,60.00,100.00\n");
    EXPECT_EQ(gain_by_type_csv(t),
              "model,method,dataset,Reading,ObjectAttributes,Existence,Categorization,Localization,Counting,Other\n"
              "m,iterative,ds,0.00,,,,,35.00,\n");
    EXPECT_EQ(latency_csv(t), "model,method,mean_crop_seconds\nm,iterative,0.500\nm,none,0.000\n");
}

TEST(Aggregate, CsvQuotesAwkwardNames) {
    auto qs = fixture();
    for (auto& q : qs) q.model = "vqa \"big\", v2";
    EXPECT_NE(overall_csv(aggregate(qs)).find("\"vqa \"\"big\"\", v2\",iterative"), std::string::npos);
}

TEST(Markdown, MethodsAreRowsDatasetsAreColumns) {
    auto qs = fixture();
    auto other = fixture();
    for (auto& q : other) q.dataset = "textvqa";
    qs.insert(qs.end(), other.begin(), other.end());
    const std::string md = markdown_report(aggregate(qs), json{{"seed", 7}});
    EXPECT_NE(md.find("| Model | Method | ds | textvqa |"), std::string::npos) << md;
    EXPECT_NE(md.find("| m | iterative | 76.67 | 76.67 |"), std::string::npos) << md;
    EXPECT_NE(md.find("| m | none | 47.50 | 47.50 |"), std::string::npos) << md;
    EXPECT_NE(md.find("\"seed\": 7"), std::string::npos);
    EXPECT_NE(md.find("| m | iterative | ds | 3 | 1 |"), std::string::npos) << md;
}

TEST(EmitReport, EmptyInputIsAnError) {
    testsupport::TempDir dir;
    EXPECT_THROW(emit_report({}, dir.path()), Error);
    EXPECT_THROW(emit_aggregates({}, dir.path()), Error);
}

TEST(EmitReport, FilesAndTimingsSidecar) {
    testsupport::TempDir dir;
    const auto qs = fixture();
    const ReportFiles files = emit_report(qs, dir.path());
    EXPECT_EQ(files.csv.size(), 4u);
    for (const auto& f : files.csv) EXPECT_TRUE(fs::exists(f)) << f;
    EXPECT_TRUE(fs::exists(files.markdown));

    const std::string qtext = testsupport::read_file(files.questions);
    EXPECT_EQ(qtext.find("crop_seconds"), std::string::npos);
    EXPECT_EQ(std::count(qtext.begin(), qtext.end(), '\n'), 8);

    // Questions come back in file order with timings merged from the sidecar.
    const auto back = read_questions(files.questions);
    ASSERT_EQ(back.size(), qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        EXPECT_EQ(to_json(back[i]), to_json(qs[i]));
        EXPECT_EQ(back[i].answer_seconds, 0.01);
        EXPECT_EQ(back[i].crop_seconds, qs[i].crop_seconds) << i;
    }
}

TEST(EmitReport, ReaggregatingEmittedQuestionsReproducesCsvs) {
    testsupport::TempDir a, b;
    std::vector<QuestionRecord> qs;
    for (auto& q : fixture()) {
        if (q.method == "iterative") qs.push_back(q);
    }
    const ReportFiles first = emit_report(qs, a.path());
    const ReportFiles second = emit_aggregates(read_questions(first.questions), b.path());
    ASSERT_EQ(first.csv.size(), second.csv.size());
    for (std::size_t i = 0; i < first.csv.size(); ++i) {
        EXPECT_EQ(testsupport::read_file(first.csv[i]), testsupport::read_file(second.csv[i])) << first.csv[i];
    }
    EXPECT_EQ(testsupport::read_file(first.markdown), testsupport::read_file(second.markdown));
}

TEST(ReadQuestions, MalformedLineNamesTheLine) {
    testsupport::TempDir dir;
    const auto file = dir / "questions.jsonl";
    testsupport::write_file(file, to_json(fixture()[0]).dump() + "\n{not json\n");
    try {
        read_questions(file);
        FAIL() << "expected Error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(read_questions(dir / "missing.jsonl"), Error);
}
