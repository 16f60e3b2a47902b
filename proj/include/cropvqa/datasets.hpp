#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cropvqa/geometry.hpp"

namespace cropvqa {

struct OcrToken {
    std::string text;
    Rect box;

    friend bool operator==(const OcrToken&, const OcrToken&) = default;
};

struct ImageSize {
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// One question about one image, with its human answers.
struct VqaRecord {
    std::string question_id;
    std::string image_ref;  // path to the image file
    std::string question;
    std::vector<std::string> answers;  // up to 10 annotator answers, in annotator order
    std::optional<Rect> gt_box;
    std::optional<std::vector<OcrToken>> ocr_tokens;
    std::optional<ImageSize> image_size;

    friend bool operator==(const VqaRecord&, const VqaRecord&) = default;
};

struct IngestResult {
    std::vector<VqaRecord> records;
    std::size_t skipped_missing_image = 0;
};

/**
 * Official VQAv2 question and annotation files. Image files are looked up as
 * COCO_<data_subtype>_<12-digit id>.jpg under image_dir; an empty image_dir
 * skips the existence check. Throws IngestError naming any question id
 * without an annotation.
 */
IngestResult ingest_vqav2(const std::filesystem::path& questions_file, const std::filesystem::path& annotations_file,
                          const std::filesystem::path& image_dir = {});

/**
 * TextVQA question file plus Rosetta-style OCR file. OCR boxes arrive
 * normalised to [0,1] and are converted to pixels with the image size from
 * the question entry (or the image file when the entry lacks it).
 */
IngestResult ingest_textvqa(const std::filesystem::path& questions_file, const std::filesystem::path& ocr_file,
                            const std::filesystem::path& image_dir = {});

// --- answer boxes from OCR -------------------------------------------------

/// 1 - levenshtein / max length, on lower-cased trimmed strings. Both empty -> 1.
double string_similarity(std::string_view a, std::string_view b);

/// Jaccard overlap of lower-cased whitespace tokens. Both empty -> 1.
double token_set_similarity(std::string_view a, std::string_view b);

using SimilarityFn = double (*)(std::string_view, std::string_view);

/// "levenshtein" or "token_set"; throws ConfigError otherwise.
SimilarityFn similarity_by_name(std::string_view name);

/// Most frequent answer (case-insensitive, trimmed); ties go to the earliest annotator.
std::optional<std::string> most_frequent_answer(const std::vector<std::string>& answers);

struct AnswerBoxMatch {
    Rect box;
    double similarity = 0.0;
    std::size_t token_index = 0;
};

/**
 * OCR box whose text is most similar to the most frequent answer.
 *
 * Similarity ties go to the larger box, then to reading order (top to
 * bottom, then left to right). Returns nullopt without OCR tokens or answers.
 */
std::optional<AnswerBoxMatch> derive_answer_bbox(const VqaRecord& record,
                                                 SimilarityFn similarity = &string_similarity);

/// Sets gt_box on records lacking one whose best OCR match is strictly above
/// min_similarity. Returns how many boxes were attached.
std::size_t attach_answer_boxes(std::vector<VqaRecord>& records, double min_similarity = 0.5,
                                SimilarityFn similarity = &string_similarity);

// --- size groups -------------------------------------------------------------

enum class SizeGroup { g1, g2, g3 };

inline constexpr std::array<SizeGroup, 3> kAllSizeGroups{SizeGroup::g1, SizeGroup::g2, SizeGroup::g3};

/// G1: S < 0.005, G2: 0.005 <= S < 0.05, G3: S >= 0.05.
SizeGroup size_group(double relative_size);
std::string to_string(SizeGroup g);
SizeGroup parse_size_group(std::string_view s);

struct SizePartition {
    std::array<std::vector<std::size_t>, 3> groups;  // record indices per group
    std::size_t excluded_no_box = 0;
    std::size_t excluded_no_size = 0;

    const std::vector<std::size_t>& operator[](SizeGroup g) const { return groups[static_cast<std::size_t>(g)]; }
};

/// Records without a box or a known image size are counted and left out.
SizePartition partition_by_size(const std::vector<VqaRecord>& records);

/// Size group of one record, or nullopt when box or image size is unknown.
std::optional<SizeGroup> record_size_group(const VqaRecord& record);

// --- question types ------------------------------------------------------------

enum class QuestionType { reading, object_attributes, existence, categorization, localization, counting, other };

inline constexpr std::array<QuestionType, 7> kAllQuestionTypes{
    QuestionType::reading,      QuestionType::object_attributes, QuestionType::existence,
    QuestionType::categorization, QuestionType::localization,    QuestionType::counting,
    QuestionType::other};

std::string to_string(QuestionType t);
QuestionType parse_question_type(std::string_view s);

struct QuestionPrefix {
    std::string_view prefix;
    QuestionType type;
};

/// The fixed two-word prefix table.
std::span<const QuestionPrefix> question_prefix_table();

/// Looks up the first two whitespace-separated lower-cased words, with
/// trailing punctuation removed from each.
QuestionType classify_question_type(std::string_view question);

// --- normalised record files -------------------------------------------------------

inline constexpr int kRecordSchemaVersion = 1;

nlohmann::json record_to_json(const VqaRecord& r);
VqaRecord record_from_json(const nlohmann::json& j);

/// Line-delimited JSON: a schema header line followed by one record per line.
void write_records(const std::filesystem::path& path, const std::vector<VqaRecord>& records);
/// Accepts files with or without the header; relative image refs resolve
/// against the file's directory. Throws IngestError on a schema mismatch.
std::vector<VqaRecord> read_records(const std::filesystem::path& path);

/// Uniform sample of n records, kept in dataset order. Deterministic in seed.
std::vector<VqaRecord> random_subset(const std::vector<VqaRecord>& records, std::size_t n, std::uint64_t seed);

}  // namespace cropvqa
