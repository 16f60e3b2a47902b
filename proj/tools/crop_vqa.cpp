// crop-vqa: run cropping experiments, time strategies, rebuild reports,
// ingest datasets and serve or probe the model-server protocol.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <random>
#include <thread>

#include "cropvqa/conformance.hpp"
#include "cropvqa/errors.hpp"
#include "cropvqa/harness.hpp"
#include "cropvqa/image_io.hpp"
#include "cropvqa/stub_server.hpp"
#include "cropvqa/synthetic.hpp"

namespace {

using namespace cropvqa;
namespace fs = std::filesystem;

struct StrategyFlags {
    std::string kind = "none";
    double ratio = 0.9;
    int iterations = 20;
    double conf = 0.25;
    std::string feed = "concat";
    double patch_threshold = 0.5;
    bool no_full_image = false;

    void add(CLI::App* app) {
        app->add_option("--ratio", ratio, "Shrink ratio per side")->capture_default_str();
        app->add_option("--iterations", iterations, "Refinement iterations")->capture_default_str();
        app->add_option("--conf", conf, "Detector confidence threshold")->capture_default_str();
        app->add_option("--feed", feed, "concat | crop-only")->capture_default_str();
        app->add_option("--patch-threshold", patch_threshold, "Patch-map cell threshold (fraction of max)")
            ->capture_default_str();
        app->add_flag("--no-full-image", no_full_image, "Do not score the full image as a candidate");
    }

    StrategyConfig build(const std::string& k) const {
        StrategyConfig s;
        s.kind = parse_strategy_kind(k);
        s.ratio = ratio;
        s.iterations = iterations;
        s.detector_conf = conf;
        s.feed_mode = parse_feed_mode(feed);
        s.patch_threshold = patch_threshold;
        s.include_full_image_candidate = !no_full_image;
        s.validate();
        return s;
    }
};

struct EndpointFlags {
    EndpointConfig ep;
    bool synthetic = false;

    void add(CLI::App* app) {
        app->add_option("--scorer-url", ep.scorer, "Relevance scorer server");
        app->add_option("--detector-url", ep.detector, "Detector server");
        app->add_option("--segmenter-url", ep.segmenter, "Segmenter server");
        app->add_option("--vqa-url", ep.vqa, "VQA model server");
        app->add_option("--saliency-url", ep.saliency, "Saliency server");
        app->add_option("--timeout-ms", ep.timeout_ms, "Per-request timeout")->capture_default_str();
        app->add_flag("--synthetic", synthetic, "In-process marker backends (for synth datasets) instead of servers");
    }

    BackendSet build() {
        if (synthetic) return marker_backends();
        ep.apply_environment();
        return make_remote_backends(ep);
    }
};

// Synthetic VQA stand-in: knows each record's majority answer but only gives
// it when the last image region overlaps the marker with IoU >= 0.5.
std::shared_ptr<const VqaModel> grounded_oracle(const std::vector<VqaRecord>& records) {
    std::map<std::string, std::string> answers;
    for (const auto& r : records) {
        if (auto a = most_frequent_answer(r.answers)) answers.emplace(r.question, *a);
    }
    return std::make_shared<ScriptedVqaModel>(std::move(answers), "unknown",
                                              ScriptedVqaModel::GroundingRule{find_marker_box, 0.5});
}

int cmd_run(const RunConfig& base, const StrategyFlags& sf, EndpointFlags& ef) {
    RunConfig cfg = base;
    cfg.strategy = sf.build(sf.kind);
    cfg.validate();
    const auto records = load_dataset(cfg.dataset);
    BackendSet backends = ef.build();
    if (ef.synthetic) backends.vqa = grounded_oracle(records);
    RunControl control;
    control.progress = [](std::size_t done, std::size_t total) {
        if (done == total || done % 50 == 0) std::fprintf(stderr, "\r%zu/%zu", done, total);
        if (done == total) std::fputc('\n', stderr);
    };
    const RunReport report = run_experiment(cfg, records, backends, control);
    const auto tables = report.tables();
    std::cout << markdown_report(tables, report.config);
    if (report.n_resumed > 0) std::fprintf(stderr, "resumed %zu questions\n", report.n_resumed);
    if (report.n_errored > 0) {
        std::fprintf(stderr, "%zu question(s) errored and were excluded\n", report.n_errored);
        return 2;
    }
    return 0;
}

int cmd_timing(const DatasetSpec& ds, const std::vector<std::string>& kinds, const StrategyFlags& sf,
               EndpointFlags& ef, std::size_t n_inputs, int warmup, int measure) {
    auto records = load_dataset(ds);
    if (records.size() > n_inputs) records.resize(n_inputs);
    std::vector<std::pair<Image, std::string>> inputs;
    for (const auto& r : records) inputs.emplace_back(load_image(r.image_ref), r.question);
    std::vector<StrategyConfig> strategies;
    for (const auto& k : kinds) strategies.push_back(sf.build(k));
    const BackendSet backends = ef.build();
    std::printf("method,mean_seconds,measured\n");
    for (const auto& t : measure_timing(strategies, inputs, backends, warmup, measure)) {
        std::printf("%s,%.4f,%zu\n", t.method.c_str(), t.mean_seconds, t.measured);
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& from, const std::string& out) {
    std::vector<QuestionRecord> all;
    for (const auto& f : from) {
        auto qs = read_questions(f);
        all.insert(all.end(), std::make_move_iterator(qs.begin()), std::make_move_iterator(qs.end()));
    }
    const auto tables = aggregate(all);
    if (!out.empty()) {
        emit_aggregates(all, out);
    }
    std::cout << markdown_report(tables);
    return 0;
}

int cmd_ingest(const std::string& format, const std::string& questions, const std::string& second,
               const std::string& images, const std::string& out, double min_similarity) {
    IngestResult res;
    if (format == "vqav2") {
        res = ingest_vqav2(questions, second, images);
    } else if (format == "textvqa") {
        res = ingest_textvqa(questions, second, images);
        const auto n = attach_answer_boxes(res.records, min_similarity);
        std::fprintf(stderr, "answer boxes derived for %zu of %zu questions\n", n, res.records.size());
    } else {
        throw ConfigError("unknown format '" + format + "'");
    }
    write_records(out, res.records);
    std::fprintf(stderr, "wrote %zu records to %s", res.records.size(), out.c_str());
    if (res.skipped_missing_image > 0) std::fprintf(stderr, " (%zu skipped: image missing)", res.skipped_missing_image);
    std::fputc('\n', stderr);
    return 0;
}

int cmd_synth(const std::string& out, int n, std::uint64_t seed, int width, int height) {
    if (n < 1 || width < 8 || height < 8) {
        throw ConfigError("synth needs --n >= 1 and images of at least 8x8");
    }
    const fs::path dir(out);
    fs::create_directories(dir / "images");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> side(0.25, 0.4);
    std::vector<VqaRecord> records;
    for (int i = 0; i < n; ++i) {
        const int tw = static_cast<int>(side(rng) * width), th = static_cast<int>(side(rng) * height);
        const int x0 = std::uniform_int_distribution<int>(0, width - tw)(rng);
        const int y0 = std::uniform_int_distribution<int>(0, height - th)(rng);
        const Rect target{x0, y0, x0 + tw, y0 + th};
        const std::string name = "sign" + std::to_string(i) + ".png";
        save_png(make_marker_image(width, height, target, static_cast<std::uint32_t>(i)), dir / "images" / name);
        VqaRecord r;
        r.question_id = "syn" + std::to_string(i);
        r.image_ref = "images/" + name;
        r.question = "what is written on sign " + std::to_string(i) + "?";
        r.answers.assign(10, "word " + std::to_string(i));
        r.gt_box = target;
        r.image_size = ImageSize{width, height};
        records.push_back(std::move(r));
    }
    write_records(dir / "records.jsonl", records);
    std::printf("%s\n", (dir / "records.jsonl").string().c_str());
    return 0;
}

std::atomic<bool> g_stop{false};

int cmd_stub_server(const std::string& host, int port, int delay_ms) {
    StubServer server(marker_backends());
    server.set_delay(std::chrono::milliseconds(delay_ms));
    const int bound = server.start(host, port);
    std::printf("serving on http://%s:%d\n", host.c_str(), bound);
    std::fflush(stdout);
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

int cmd_conformance(const std::string& url, int timeout_ms) {
    Endpoint ep{url, std::chrono::milliseconds(timeout_ms), 1};
    bool ok = true;
    for (const auto& c : run_conformance(ep)) {
        std::printf("%-5s %s%s%s\n", to_string(c.status), c.name.c_str(), c.detail.empty() ? "" : ": ",
                    c.detail.c_str());
        if (c.status == ConformanceCheck::Status::fail) ok = false;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual cropping for zero-shot VQA"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Evaluate one strategy on a dataset");
    RunConfig cfg;
    std::string dataset, metric = "paper", cache, out;
    std::optional<std::size_t> subset;
    StrategyFlags run_sf;
    EndpointFlags run_ef;
    run->add_option("--dataset", dataset, "jsonl:<file> | vqav2:<q>,<a>[,<dir>] | textvqa:<q>,<ocr>[,<dir>]")
        ->required();
    run->add_option("--dataset-name", cfg.dataset.name, "Dataset label in reports");
    run->add_option("--strategy", run_sf.kind, "none|human|iterative|detector|segmenter|sliding_window|patchmap")
        ->required();
    run->add_option("--method", cfg.method_label, "Method label in reports (default: strategy)");
    run->add_option("--metric", metric, "paper | official-subsets")->capture_default_str();
    run->add_option("--subset", subset, "Random subset size");
    run->add_option("--seed", cfg.dataset.seed, "Subset seed")->capture_default_str();
    run->add_option("--jobs", cfg.jobs, "Worker threads")->capture_default_str();
    run->add_option("--cache", cache, "Persistent score/answer cache directory");
    run->add_option("--out", out, "Output directory (enables resume)");
    run_sf.add(run);
    run_ef.add(run);

    // timing
    auto* timing = app.add_subcommand("timing", "Mean crop-stage wall time per strategy");
    std::string timing_dataset;
    std::vector<std::string> timing_kinds;
    std::size_t timing_inputs = 10;
    int warmup = 1, measure = 5;
    StrategyFlags timing_sf;
    EndpointFlags timing_ef;
    timing->add_option("--dataset", timing_dataset, "Dataset spec supplying images and questions")->required();
    timing->add_option("--strategy", timing_kinds, "Strategies to time (repeatable)")->required();
    timing->add_option("--inputs", timing_inputs, "Number of dataset records to cycle through")->capture_default_str();
    timing->add_option("--warmup", warmup, "Discarded runs per strategy")->capture_default_str();
    timing->add_option("--measure", measure, "Measured runs per strategy")->capture_default_str();
    timing_sf.add(timing);
    timing_ef.add(timing);

    // report
    auto* report = app.add_subcommand("report", "Re-aggregate per-question files");
    std::vector<std::string> from;
    std::string report_out;
    report->add_option("--from", from, "questions.jsonl file(s)")->required()->check(CLI::ExistingFile);
    report->add_option("--out", report_out, "Write CSV and Markdown tables to this directory");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert VQAv2 or TextVQA files to a records file");
    std::string format, questions, annotations, ocr, images, ingest_out;
    double min_similarity = 0.5;
    ingest->add_option("--format", format, "vqav2 | textvqa")->required()->check(CLI::IsMember({"vqav2", "textvqa"}));
    ingest->add_option("--questions", questions, "Questions JSON")->required()->check(CLI::ExistingFile);
    ingest->add_option("--annotations", annotations, "VQAv2 annotations JSON")->check(CLI::ExistingFile);
    ingest->add_option("--ocr", ocr, "TextVQA OCR JSON")->check(CLI::ExistingFile);
    ingest->add_option("--images", images, "Image directory (records without an image are skipped)");
    ingest->add_option("--min-similarity", min_similarity, "OCR answer-box match threshold")->capture_default_str();
    ingest->add_option("--out", ingest_out, "Output records file")->required();

    // stub-server
    auto* stub = app.add_subcommand("stub-server", "Serve the synthetic marker backends over HTTP");
    std::string host = "127.0.0.1";
    int port = 8080, delay_ms = 0;
    stub->add_option("--host", host)->capture_default_str();
    stub->add_option("--port", port)->capture_default_str();
    stub->add_option("--delay-ms", delay_ms, "Added latency per request")->capture_default_str();

    // conformance
    auto* conf = app.add_subcommand("conformance", "Check a model server against the wire protocol");
    std::string conf_url;
    int conf_timeout = 10'000;
    conf->add_option("--url", conf_url, "Server base URL")->required();
    conf->add_option("--timeout-ms", conf_timeout)->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Write a planted-marker demo dataset");
    std::string synth_out;
    int synth_n = 20, synth_w = 96, synth_h = 72;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--n", synth_n, "Number of records")->capture_default_str();
    synth->add_option("--seed", synth_seed)->capture_default_str();
    synth->add_option("--width", synth_w)->capture_default_str();
    synth->add_option("--height", synth_h)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const std::string name = cfg.dataset.name;
            const auto seed = cfg.dataset.seed;
            cfg.dataset = DatasetSpec::parse(dataset);
            if (!name.empty()) cfg.dataset.name = name;
            cfg.dataset.seed = seed;
            cfg.dataset.subset = subset;
            cfg.metric = parse_metric_variant(metric);
            cfg.cache_dir = cache;
            cfg.out_dir = out;
            return cmd_run(cfg, run_sf, run_ef);
        }
        if (*timing) {
            return cmd_timing(DatasetSpec::parse(timing_dataset), timing_kinds, timing_sf, timing_ef, timing_inputs,
                              warmup, measure);
        }
        if (*report) return cmd_report(from, report_out);
        if (*ingest) {
            const std::string& second = format == "vqav2" ? annotations : ocr;
            if (second.empty()) {
                throw ConfigError(format == "vqav2" ? "--annotations is required" : "--ocr is required");
            }
            return cmd_ingest(format, questions, second, images, ingest_out, min_similarity);
        }
        if (*stub) return cmd_stub_server(host, port, delay_ms);
        if (*conf) return cmd_conformance(conf_url, conf_timeout);
        if (*synth) return cmd_synth(synth_out, synth_n, synth_seed, synth_w, synth_h);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
