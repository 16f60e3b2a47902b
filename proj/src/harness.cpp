#include "cropvqa/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "cropvqa/cache.hpp"
#include "cropvqa/errors.hpp"
#include "cropvqa/image_io.hpp"
#include "cropvqa/remote.hpp"

namespace cropvqa {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

DatasetSpec DatasetSpec::parse(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw ConfigError("dataset spec must look like <format>:<path>[,<path>...], got '" + spec + "'");
    }
    DatasetSpec out;
    out.format = spec.substr(0, colon);
    std::string rest = spec.substr(colon + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
        const auto comma = rest.find(',', start);
        const auto piece = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!piece.empty()) out.paths.push_back(piece);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    out.name = out.format;
    const std::size_t min_paths = out.format == "jsonl" ? 1 : 2;
    if (out.format != "jsonl" && out.format != "vqav2" && out.format != "textvqa") {
        throw ConfigError("unknown dataset format '" + out.format + "'");
    }
    if (out.paths.size() < min_paths || out.paths.size() > min_paths + 1) {
        throw ConfigError("dataset '" + out.format + "' expects " + std::to_string(min_paths) +
                          " path(s) plus an optional image directory");
    }
    return out;
}

json DatasetSpec::to_json() const {
    json j{{"format", format}, {"paths", paths}, {"name", name}, {"seed", seed},
           {"answer_box_min_similarity", answer_box_min_similarity}};
    j["subset"] = subset ? json(*subset) : json(nullptr);
    return j;
}

void EndpointConfig::apply_environment() {
    const std::pair<std::optional<std::string>*, const char*> vars[] = {
        {&scorer, "CROPVQA_SCORER_URL"},       {&detector, "CROPVQA_DETECTOR_URL"},
        {&segmenter, "CROPVQA_SEGMENTER_URL"}, {&vqa, "CROPVQA_VQA_URL"},
        {&saliency, "CROPVQA_SALIENCY_URL"},
    };
    for (const auto& [slot, name] : vars) {
        if (!*slot) {
            if (const char* v = std::getenv(name); v && *v) *slot = v;
        }
    }
}

void RunConfig::validate() const {
    strategy.validate();
    if (jobs < 1) {
        throw ConfigError("jobs must be >= 1");
    }
    if (dataset.subset && *dataset.subset == 0) {
        throw ConfigError("subset size must be positive");
    }
}

std::string RunConfig::method() const {
    return method_label.empty() ? to_string(strategy.kind) : method_label;
}

namespace {

json strategy_json(const StrategyConfig& s) {
    return {{"kind", to_string(s.kind)},
            {"ratio", s.ratio},
            {"iterations", s.iterations},
            {"detector_conf", s.detector_conf},
            {"window_fractions", s.window_fractions},
            {"window_stride_fraction", s.window_stride_fraction},
            {"patch_threshold", s.patch_threshold},
            {"include_full_image_candidate", s.include_full_image_candidate},
            {"feed_mode", to_string(s.feed_mode)}};
}

}  // namespace

json RunConfig::to_json() const {
    return {{"dataset", dataset.to_json()},
            {"strategy", strategy_json(strategy)},
            {"method", method()},
            {"metric", to_string(metric)}};
}

std::vector<VqaRecord> load_dataset(const DatasetSpec& spec) {
    std::vector<VqaRecord> records;
    const fs::path image_dir = spec.paths.size() > (spec.format == "jsonl" ? 1u : 2u) ? fs::path(spec.paths.back())
                                                                                     : fs::path();
    if (spec.format == "jsonl") {
        records = read_records(spec.paths.at(0));
    } else if (spec.format == "vqav2") {
        records = ingest_vqav2(spec.paths.at(0), spec.paths.at(1), image_dir).records;
    } else if (spec.format == "textvqa") {
        records = ingest_textvqa(spec.paths.at(0), spec.paths.at(1), image_dir).records;
        attach_answer_boxes(records, spec.answer_box_min_similarity);
    } else {
        throw ConfigError("unknown dataset format '" + spec.format + "'");
    }
    if (spec.subset) {
        records = random_subset(records, *spec.subset, spec.seed);
    }
    return records;
}

BackendSet make_remote_backends(const EndpointConfig& endpoints) {
    auto ep = [&](const std::string& url) {
        return Endpoint{url, std::chrono::milliseconds(endpoints.timeout_ms), 1};
    };
    BackendSet set;
    if (endpoints.scorer) set.scorer = std::make_shared<RemoteScorer>(ep(*endpoints.scorer));
    if (endpoints.detector) set.detector = std::make_shared<RemoteDetector>(ep(*endpoints.detector));
    if (endpoints.segmenter) set.segmenter = std::make_shared<RemoteSegmenter>(ep(*endpoints.segmenter));
    if (endpoints.vqa) set.vqa = std::make_shared<RemoteVqaModel>(ep(*endpoints.vqa));
    if (endpoints.saliency) set.saliency = std::make_shared<RemoteSaliency>(ep(*endpoints.saliency));
    return set;
}

namespace {

void require_backends(const StrategyConfig& s, const BackendSet& b) {
    if (!b.vqa) throw ConfigError("a VQA backend is required");
    switch (s.kind) {
        case StrategyKind::none:
        case StrategyKind::human:
            return;
        case StrategyKind::iterative:
        case StrategyKind::sliding_window:
            if (!b.scorer) throw ConfigError("strategy " + to_string(s.kind) + " needs a scorer");
            return;
        case StrategyKind::detector:
            if (!b.scorer || !b.detector) throw ConfigError("strategy detector needs a scorer and a detector");
            return;
        case StrategyKind::segmenter:
            if (!b.scorer || !b.segmenter) throw ConfigError("strategy segmenter needs a scorer and a segmenter");
            return;
        case StrategyKind::patchmap:
            if (!b.saliency) throw ConfigError("strategy patchmap needs a saliency source");
            return;
    }
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

QuestionRecord process(const RunConfig& cfg, const VqaRecord& rec, const BackendSet& backends,
                       const std::string& model) {
    QuestionRecord q;
    q.question_id = rec.question_id;
    q.dataset = cfg.dataset.name;
    q.model = model;
    q.method = cfg.method();
    q.question_type = classify_question_type(rec.question);
    try {
        const Image img = load_image(rec.image_ref);
        VqaRecord sized = rec;
        if (!sized.image_size) sized.image_size = ImageSize{img.width(), img.height()};
        q.size_group = record_size_group(sized);

        const auto crop_start = Clock::now();
        const CropResult crop = run_strategy(cfg.strategy, img, rec.question, backends, rec.gt_box);
        q.crop_seconds = seconds_since(crop_start);
        q.crop = crop.rect;
        q.crop_score = crop.score;
        q.crop_fallback = crop.fallback;

        std::vector<ImageRegion> inputs;
        const ImageRegion cropped{&img, crop.rect};
        if (cfg.strategy.kind == StrategyKind::none) {
            inputs.push_back(ImageRegion::whole(img));
        } else if (cfg.strategy.feed_mode == FeedMode::concat_with_original) {
            inputs = {ImageRegion::whole(img), cropped};
        } else {
            inputs = {cropped};
        }

        const auto answer_start = Clock::now();
        const VqaAnswer a = backends.vqa->answer(inputs, rec.question);
        q.answer_seconds = seconds_since(answer_start);
        q.answer = a.text;
        q.accuracy = vqa_accuracy(a.text, rec.answers, cfg.metric);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        q.error = e.what();
        q.accuracy.reset();
    }
    return q;
}

json partial_line(const QuestionRecord& q) {
    json j = to_json(q);
    j["crop_seconds"] = q.crop_seconds;
    j["answer_seconds"] = q.answer_seconds;
    return j;
}

// Completed, non-errored questions of an earlier interrupted run.
std::unordered_map<std::string, QuestionRecord> load_partial(const fs::path& file) {
    std::unordered_map<std::string, QuestionRecord> out;
    std::ifstream is(file);
    std::string line;
    while (std::getline(is, line)) {
        try {
            QuestionRecord q = question_from_json(json::parse(line));
            if (!q.errored()) out[q.question_id] = std::move(q);
        } catch (const std::exception&) {
            // torn line from the interruption
        }
    }
    return out;
}

}  // namespace

RunReport run_experiment(const RunConfig& cfg, const BackendSet& backends, const RunControl& control) {
    cfg.validate();
    return run_experiment(cfg, load_dataset(cfg.dataset), backends, control);
}

RunReport run_experiment(const RunConfig& cfg, const std::vector<VqaRecord>& records, const BackendSet& raw_backends,
                         const RunControl& control) {
    cfg.validate();
    require_backends(cfg.strategy, raw_backends);

    BackendSet backends = raw_backends;
    if (!cfg.cache_dir.empty()) {
        backends = with_cache(raw_backends, std::make_shared<ScoreCache>(cfg.cache_dir));
    }
    std::string model;
    try {
        model = backends.vqa->identity();
    } catch (const BackendError& e) {
        throw ConfigError(std::string("VQA backend unavailable: ") + e.what());
    }

    RunReport report;
    report.config = cfg.to_json();
    report.config["backends"] = {{"vqa", model}};
    if (backends.scorer) report.config["backends"]["scorer"] = backends.scorer->identity();
    if (backends.detector) report.config["backends"]["detector"] = backends.detector->identity();
    if (backends.segmenter) report.config["backends"]["segmenter"] = backends.segmenter->identity();
    if (backends.saliency) report.config["backends"]["saliency"] = backends.saliency->identity();
    report.config["n_records"] = records.size();

    std::vector<std::optional<QuestionRecord>> results(records.size());
    std::ofstream partial;
    const fs::path partial_file = cfg.out_dir.empty() ? fs::path() : cfg.out_dir / "questions.partial.jsonl";
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        const fs::path config_file = cfg.out_dir / "config.json";
        if (fs::exists(partial_file)) {
            std::ifstream cs(config_file);
            json previous;
            try {
                previous = json::parse(cs);
            } catch (const json::exception&) {
            }
            if (previous != report.config) {
                throw ConfigError("output directory " + cfg.out_dir.string() +
                                  " holds an interrupted run with a different configuration");
            }
            auto done = load_partial(partial_file);
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (auto it = done.find(records[i].question_id); it != done.end()) {
                    results[i] = std::move(it->second);
                    ++report.n_resumed;
                }
            }
        }
        std::ofstream(config_file) << report.config.dump(2) << '\n';
        // Rewrite the partial file with only the records being kept.
        partial.open(partial_file, std::ios::trunc);
        for (const auto& r : results) {
            if (r) partial << partial_line(*r).dump() << '\n';
        }
        partial.flush();
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!results[i]) todo.push_back(i);
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> processed{0};
    std::atomic<bool> stopped{false};
    std::mutex out_mu;
    std::exception_ptr fatal;

    auto worker = [&] {
        while (!stopped) {
            const std::size_t k = next.fetch_add(1);
            if (k >= todo.size()) return;
            if (control.stop_after > 0 && k >= control.stop_after) {
                stopped = true;
                return;
            }
            const std::size_t i = todo[k];
            try {
                QuestionRecord q = process(cfg, records[i], backends, model);
                std::lock_guard lock(out_mu);
                if (partial.is_open()) {
                    partial << partial_line(q).dump() << '\n';
                    partial.flush();
                }
                results[i] = std::move(q);
                const std::size_t done = ++processed;
                if (control.progress) control.progress(done + report.n_resumed, records.size());
            } catch (...) {
                std::lock_guard lock(out_mu);
                if (!fatal) fatal = std::current_exception();
                stopped = true;
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(todo.size(), 1))));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (fatal) {
        std::rethrow_exception(fatal);
    }

    for (auto& r : results) {
        if (!r) {
            report.complete = false;
            continue;
        }
        if (r->errored()) ++report.n_errored;
        report.questions.push_back(std::move(*r));
    }
    report.config["n_errored"] = report.n_errored;

    if (report.complete && !cfg.out_dir.empty()) {
        partial.close();
        if (!report.questions.empty()) {
            emit_report(report.questions, cfg.out_dir, report.config);
        }
        fs::remove(partial_file);
    }
    return report;
}

std::vector<TimingResult> measure_timing(const std::vector<StrategyConfig>& strategies,
                                         const std::vector<std::pair<Image, std::string>>& inputs,
                                         const BackendSet& backends, int n_warmup, int n_measure) {
    if (n_measure < 1) {
        throw ConfigError("timing needs at least one measured run");
    }
    if (n_warmup < 0) {
        throw ConfigError("warmup count must be non-negative");
    }
    if (inputs.empty()) {
        throw ConfigError("timing needs at least one input image");
    }
    std::vector<TimingResult> out;
    for (const auto& s : strategies) {
        s.validate();
        auto run_once = [&](std::size_t i) {
            const auto& [img, question] = inputs[i % inputs.size()];
            const auto start = Clock::now();
            // Ground truth is the full image so human crops stay applicable.
            run_strategy(s, img, question, backends, img.bounds());
            return seconds_since(start);
        };
        std::size_t i = 0;
        for (int w = 0; w < n_warmup; ++w) run_once(i++);
        double total = 0.0;
        for (int m = 0; m < n_measure; ++m) total += run_once(i++);
        out.push_back({to_string(s.kind), total / n_measure, static_cast<std::size_t>(n_measure)});
    }
    return out;
}

}  // namespace cropvqa
