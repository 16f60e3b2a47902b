#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropvqa/backends.hpp"
#include "cropvqa/datasets.hpp"
#include "cropvqa/metrics.hpp"
#include "cropvqa/report.hpp"
#include "cropvqa/strategies.hpp"

namespace cropvqa {

/// "<format>:<path>[,<path>...]" with format jsonl, vqav2 (questions,
/// annotations[,image_dir]) or textvqa (questions,ocr[,image_dir]).
struct DatasetSpec {
    std::string format;
    std::vector<std::string> paths;
    std::string name;                    // label used in reports; defaults to the format
    std::optional<std::size_t> subset;   // random subset size
    std::uint64_t seed = 0;
    double answer_box_min_similarity = 0.5;  // textvqa OCR matching threshold

    static DatasetSpec parse(const std::string& spec);
    nlohmann::json to_json() const;
};

struct EndpointConfig {
    std::optional<std::string> scorer;
    std::optional<std::string> detector;
    std::optional<std::string> segmenter;
    std::optional<std::string> vqa;
    std::optional<std::string> saliency;
    int timeout_ms = 60'000;

    /// Fills unset URLs from CROPVQA_{SCORER,DETECTOR,SEGMENTER,VQA,SALIENCY}_URL.
    void apply_environment();
};

struct RunConfig {
    DatasetSpec dataset;
    StrategyConfig strategy;
    std::string method_label;  // defaults to the strategy kind
    EndpointConfig endpoints;
    MetricVariant metric = MetricVariant::paper;
    int jobs = 1;
    std::filesystem::path cache_dir;  // empty: no persistent cache
    std::filesystem::path out_dir;    // empty: nothing written

    void validate() const;
    std::string method() const;
    /// Everything that determines results (excludes jobs, cache and output paths).
    nlohmann::json to_json() const;
};

/// Loads, subsets and, for TextVQA, attaches OCR-derived answer boxes.
std::vector<VqaRecord> load_dataset(const DatasetSpec& spec);

/// Remote clients for the configured endpoint URLs.
BackendSet make_remote_backends(const EndpointConfig& endpoints);

struct RunControl {
    /// Stop (as if killed) after this many newly processed questions; 0 = run to completion.
    std::size_t stop_after = 0;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

struct RunReport {
    nlohmann::json config;
    std::vector<QuestionRecord> questions;  // dataset order
    std::size_t n_errored = 0;
    std::size_t n_resumed = 0;              // taken from an earlier partial run
    bool complete = true;

    AggregateTables tables() const { return aggregate(questions); }
};

/**
 * Runs every record through crop -> VQA -> accuracy.
 *
 * With an out_dir, finished questions stream to questions.partial.jsonl and
 * a rerun with the same configuration resumes from it; on completion the
 * report files are written and the partial file removed. Backend failures
 * mark the question as errored; configuration problems throw ConfigError
 * before any question is processed.
 */
RunReport run_experiment(const RunConfig& cfg, const BackendSet& backends, const RunControl& control = {});
RunReport run_experiment(const RunConfig& cfg, const std::vector<VqaRecord>& records, const BackendSet& backends,
                         const RunControl& control = {});

struct TimingResult {
    std::string method;
    double mean_seconds = 0.0;
    std::size_t measured = 0;
};

/// Mean wall time of the crop stage alone, per strategy. Run i uses
/// inputs[i % inputs.size()]; warmup runs are discarded.
std::vector<TimingResult> measure_timing(const std::vector<StrategyConfig>& strategies,
                                         const std::vector<std::pair<Image, std::string>>& inputs,
                                         const BackendSet& backends, int n_warmup, int n_measure);

}  // namespace cropvqa
