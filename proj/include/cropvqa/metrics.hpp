#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cropvqa/datasets.hpp"

namespace cropvqa {

/// Lower-case, trim, strip punctuation (periods and commas between digits
/// survive), drop the articles a/an/the, collapse whitespace. Idempotent.
std::string normalize_answer(std::string_view s);

enum class MetricVariant {
    paper,             // min(0.3 * n, 1) over all annotations
    official_subsets,  // mean over leave-one-annotator-out subsets of min(n / 3, 1)
};

std::string to_string(MetricVariant v);
MetricVariant parse_metric_variant(std::string_view s);

/// min(0.3 * n, 1) where n counts annotations equal to the answer after
/// normalisation. Returns exactly one of {0, 0.3, 0.6, 0.9, 1}.
/// Throws MetricError on an empty annotation list.
double vqa_accuracy(std::string_view model_answer, const std::vector<std::string>& annotations);

double vqa_accuracy_official(std::string_view model_answer, const std::vector<std::string>& annotations);

double vqa_accuracy(std::string_view model_answer, const std::vector<std::string>& annotations,
                    MetricVariant variant);

struct AccuracyResult {
    std::map<std::string, double> per_question;
    double mean = 0.0;
    std::size_t n_evaluated = 0;
    std::size_t n_errored = 0;

    /// Recomputes mean and n_evaluated from per_question.
    void finalize();
};

/// (acc_large - acc_small) / acc_large. Throws MetricError when acc_large <= 0.
double relative_decline(double acc_large, double acc_small);

/**
 * Per question type, mean(treated) - mean(baseline). Only types that occur
 * appear in the result. Throws MetricError unless both results cover the
 * same question ids and every id has a type.
 */
std::map<QuestionType, double> accuracy_gain_by_type(const AccuracyResult& baseline, const AccuracyResult& treated,
                                                     const std::map<std::string, QuestionType>& typing);

}  // namespace cropvqa
