#include "cropvqa/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "cropvqa/errors.hpp"
#include "text_util.hpp"

namespace cropvqa {

namespace {

bool is_digit(char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
}

bool is_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
    const std::string lower = detail::to_lower(detail::trim(s));
    std::string stripped;
    stripped.reserve(lower.size());
    for (std::size_t i = 0; i < lower.size(); ++i) {
        const char c = lower[i];
        if (!is_punct(c)) {
            stripped.push_back(c);
        } else if ((c == '.' || c == ',') && i > 0 && i + 1 < lower.size() && is_digit(lower[i - 1]) &&
                   is_digit(lower[i + 1])) {
            stripped.push_back(c);
        } else if (c == '\'') {
            // "man's" -> "mans"
        } else {
            stripped.push_back(' ');
        }
    }
    std::string out;
    for (const auto& word : detail::split_ws(stripped)) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

std::string to_string(MetricVariant v) {
    return v == MetricVariant::paper ? "paper" : "official-subsets";
}

MetricVariant parse_metric_variant(std::string_view s) {
    if (s == "paper") return MetricVariant::paper;
    if (s == "official-subsets" || s == "official_subsets") return MetricVariant::official_subsets;
    throw ConfigError("unknown metric variant '" + std::string(s) + "'");
}

double vqa_accuracy(std::string_view model_answer, const std::vector<std::string>& annotations) {
    if (annotations.empty()) {
        throw MetricError("accuracy needs at least one annotation");
    }
    const std::string answer = normalize_answer(model_answer);
    const auto n = std::count_if(annotations.begin(), annotations.end(),
                                 [&](const std::string& a) { return normalize_answer(a) == answer; });
    // min(0.3 n, 1) from literals, so n = 3 gives exactly 0.9 rather than 0.8999...
    static constexpr double kByCount[] = {0.0, 0.3, 0.6, 0.9, 1.0};
    return kByCount[std::min<std::ptrdiff_t>(n, 4)];
}

double vqa_accuracy_official(std::string_view model_answer, const std::vector<std::string>& annotations) {
    if (annotations.empty()) {
        throw MetricError("accuracy needs at least one annotation");
    }
    const std::string answer = normalize_answer(model_answer);
    std::vector<bool> match(annotations.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        match[i] = normalize_answer(annotations[i]) == answer;
        total += match[i] ? 1 : 0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const std::size_t others = total - (match[i] ? 1 : 0);
        sum += std::min(1.0, static_cast<double>(others) / 3.0);
    }
    return sum / static_cast<double>(annotations.size());
}

double vqa_accuracy(std::string_view model_answer, const std::vector<std::string>& annotations,
                    MetricVariant variant) {
    return variant == MetricVariant::paper ? vqa_accuracy(model_answer, annotations)
                                           : vqa_accuracy_official(model_answer, annotations);
}

void AccuracyResult::finalize() {
    n_evaluated = per_question.size();
    double sum = 0.0;
    for (const auto& [id, acc] : per_question) sum += acc;
    mean = n_evaluated == 0 ? 0.0 : sum / static_cast<double>(n_evaluated);
}

double relative_decline(double acc_large, double acc_small) {
    if (!(acc_large > 0.0)) {
        throw MetricError("relative decline needs a positive reference accuracy");
    }
    return (acc_large - acc_small) / acc_large;
}

std::map<QuestionType, double> accuracy_gain_by_type(const AccuracyResult& baseline, const AccuracyResult& treated,
                                                     const std::map<std::string, QuestionType>& typing) {
    if (baseline.per_question.size() != treated.per_question.size()) {
        throw MetricError("baseline and treated results cover different question sets");
    }
    struct Sums {
        double base = 0.0;
        double treat = 0.0;
        std::size_t n = 0;
    };
    std::map<QuestionType, Sums> sums;
    for (const auto& [id, base_acc] : baseline.per_question) {
        auto t = treated.per_question.find(id);
        if (t == treated.per_question.end()) {
            throw MetricError("question " + id + " missing from treated result");
        }
        auto ty = typing.find(id);
        if (ty == typing.end()) {
            throw MetricError("question " + id + " has no type");
        }
        auto& s = sums[ty->second];
        s.base += base_acc;
        s.treat += t->second;
        ++s.n;
    }
    std::map<QuestionType, double> out;
    for (const auto& [type, s] : sums) {
        out[type] = (s.treat - s.base) / static_cast<double>(s.n);
    }
    return out;
}

}  // namespace cropvqa
