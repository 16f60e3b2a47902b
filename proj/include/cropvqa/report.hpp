#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropvqa/datasets.hpp"
#include "cropvqa/geometry.hpp"

namespace cropvqa {

/// Outcome of one question in one run.
struct QuestionRecord {
    std::string question_id;
    std::string dataset;
    std::string model;   // VQA backend identity
    std::string method;  // strategy label
    QuestionType question_type = QuestionType::other;
    std::optional<SizeGroup> size_group;
    std::optional<Rect> crop;
    std::optional<double> crop_score;
    bool crop_fallback = false;
    std::string answer;
    std::optional<double> accuracy;  // absent when errored
    std::optional<std::string> error;
    double crop_seconds = 0.0;
    double answer_seconds = 0.0;

    bool errored() const { return error.has_value(); }
};

/// Per-question JSON without wall times, so identical runs serialise identically.
nlohmann::json to_json(const QuestionRecord& q);
QuestionRecord question_from_json(const nlohmann::json& j);

struct TimingLine {
    std::string question_id;
    double crop_seconds = 0.0;
    double answer_seconds = 0.0;
};

/// Rows are (model, method); datasets are columns where relevant.
struct AggregateTables {
    struct RowKey {
        std::string model;
        std::string method;
        auto operator<=>(const RowKey&) const = default;
    };

    // overall accuracy: row -> dataset -> mean
    std::map<RowKey, std::map<std::string, double>> overall;
    // accuracy by answer-box size: (row, dataset) -> per group mean (absent when the group is empty)
    std::map<std::pair<RowKey, std::string>, std::array<std::optional<double>, 3>> by_size;
    // mean accuracy gain over the "none" method of the same model and dataset
    std::map<std::pair<RowKey, std::string>, std::map<QuestionType, double>> gain_by_type;
    // mean crop-stage seconds over evaluated questions, per row
    std::map<RowKey, double> crop_latency;
    std::map<std::pair<RowKey, std::string>, std::size_t> evaluated;
    std::map<std::pair<RowKey, std::string>, std::size_t> errored;
};

AggregateTables aggregate(const std::vector<QuestionRecord>& questions);

/// CSV renderings, one per table.
std::string overall_csv(const AggregateTables& t);
std::string by_size_csv(const AggregateTables& t);
std::string gain_by_type_csv(const AggregateTables& t);
std::string latency_csv(const AggregateTables& t);

/// Markdown with all tables; accuracies as percentages with two decimals.
std::string markdown_report(const AggregateTables& t, const nlohmann::json& header = nullptr);

struct ReportFiles {
    std::filesystem::path questions;
    std::filesystem::path timings;
    std::filesystem::path markdown;
    std::vector<std::filesystem::path> csv;
};

/**
 * Writes questions.jsonl, timings.jsonl, the aggregate CSVs and report.md to
 * dir. Questions are written in the given order. Throws Error on an empty
 * question list or I/O failure.
 */
ReportFiles emit_report(const std::vector<QuestionRecord>& questions, const std::filesystem::path& dir,
                        const nlohmann::json& header = nullptr);

/// Writes only the aggregate CSVs and report.md (used by the report command).
ReportFiles emit_aggregates(const std::vector<QuestionRecord>& questions, const std::filesystem::path& dir,
                            const nlohmann::json& header = nullptr);

/// Reads a questions.jsonl and, when present next to it, timings.jsonl.
std::vector<QuestionRecord> read_questions(const std::filesystem::path& questions_file);

}  // namespace cropvqa
