#include "cropvqa/datasets.hpp"

#include <cctype>

#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include "cropvqa/errors.hpp"
#include "cropvqa/image_io.hpp"
#include "text_util.hpp"

namespace cropvqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IngestError("cannot open " + path.string());
    }
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw IngestError("cannot parse " + path.string() + ": " + e.what());
    }
}

// Question ids appear as integers in VQAv2 and TextVQA; keep them as text.
std::string id_string(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    throw IngestError("question id must be a string or integer");
}

const json& need(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) {
        throw IngestError(context + ": missing field '" + std::string(key) + "'");
    }
    return j.at(key);
}

std::string coco_file_name(const std::string& subtype, long long image_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%012lld", image_id);
    return "COCO_" + subtype + "_" + buf + ".jpg";
}

}  // namespace

IngestResult ingest_vqav2(const fs::path& questions_file, const fs::path& annotations_file,
                          const fs::path& image_dir) {
    const json questions = load_json(questions_file);
    const json annotations = load_json(annotations_file);
    const std::string subtype = questions.value("data_subtype", std::string("val2014"));

    std::unordered_map<std::string, std::vector<std::string>> answers_by_id;
    for (const auto& ann : need(annotations, "annotations", annotations_file.string())) {
        std::vector<std::string> answers;
        for (const auto& a : need(ann, "answers", "annotation")) {
            answers.push_back(need(a, "answer", "annotation answer").get<std::string>());
        }
        answers_by_id[id_string(need(ann, "question_id", "annotation"))] = std::move(answers);
    }

    IngestResult out;
    const auto& qs = need(questions, "questions", questions_file.string());
    out.records.reserve(qs.size());
    for (const auto& q : qs) {
        VqaRecord r;
        r.question_id = id_string(need(q, "question_id", "question"));
        r.question = need(q, "question", "question " + r.question_id).get<std::string>();
        const long long image_id = need(q, "image_id", "question " + r.question_id).get<long long>();
        auto it = answers_by_id.find(r.question_id);
        if (it == answers_by_id.end()) {
            throw IngestError("no annotation for question_id " + r.question_id);
        }
        r.answers = it->second;
        const fs::path image = image_dir / coco_file_name(subtype, image_id);
        r.image_ref = image.string();
        if (!image_dir.empty() && !fs::exists(image)) {
            ++out.skipped_missing_image;
            continue;
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

namespace {

// Rosetta boxes are normalised; map to half-open pixels, at least one pixel wide.
std::optional<Rect> normalized_box_to_pixels(const json& bb, const ImageSize& size) {
    const double x = bb.value("top_left_x", 0.0);
    const double y = bb.value("top_left_y", 0.0);
    const double w = bb.value("width", 0.0);
    const double h = bb.value("height", 0.0);
    int x0 = std::clamp(round_half_up(x * size.width), 0, size.width - 1);
    int y0 = std::clamp(round_half_up(y * size.height), 0, size.height - 1);
    int x1 = std::clamp(round_half_up((x + w) * size.width), x0 + 1, size.width);
    int y1 = std::clamp(round_half_up((y + h) * size.height), y0 + 1, size.height);
    if (!(w > 0.0) || !(h > 0.0)) {
        return std::nullopt;
    }
    return Rect{x0, y0, x1, y1};
}

}  // namespace

IngestResult ingest_textvqa(const fs::path& questions_file, const fs::path& ocr_file, const fs::path& image_dir) {
    const json questions = load_json(questions_file);
    const json ocr = load_json(ocr_file);

    // image_id -> raw ocr_info list
    std::unordered_map<std::string, const json*> ocr_by_image;
    for (const auto& entry : need(ocr, "data", ocr_file.string())) {
        ocr_by_image[need(entry, "image_id", "ocr entry").get<std::string>()] = &entry;
    }

    IngestResult out;
    for (const auto& q : need(questions, "data", questions_file.string())) {
        VqaRecord r;
        r.question_id = id_string(need(q, "question_id", "question"));
        const std::string ctx = "question " + r.question_id;
        r.question = need(q, "question", ctx).get<std::string>();
        const std::string image_id = need(q, "image_id", ctx).get<std::string>();
        if (q.contains("answers")) {
            r.answers = q["answers"].get<std::vector<std::string>>();
        }
        const fs::path image = image_dir / (image_id + ".jpg");
        r.image_ref = image.string();
        const bool have_image = !image_dir.empty() && fs::exists(image);
        if (!image_dir.empty() && !have_image) {
            ++out.skipped_missing_image;
            continue;
        }
        if (q.contains("image_width") && q.contains("image_height")) {
            r.image_size = ImageSize{q["image_width"].get<int>(), q["image_height"].get<int>()};
        } else if (have_image) {
            const auto [w, h] = probe_image_size(image);
            r.image_size = ImageSize{w, h};
        }

        std::vector<OcrToken> tokens;
        if (auto it = ocr_by_image.find(image_id); it != ocr_by_image.end() && r.image_size) {
            const json& entry = *it->second;
            if (entry.contains("ocr_info")) {
                for (const auto& info : entry["ocr_info"]) {
                    if (!info.contains("word") || !info.contains("bounding_box")) continue;
                    if (auto box = normalized_box_to_pixels(info["bounding_box"], *r.image_size)) {
                        tokens.push_back({info["word"].get<std::string>(), *box});
                    }
                }
            }
        }
        r.ocr_tokens = std::move(tokens);
        out.records.push_back(std::move(r));
    }
    return out;
}

double string_similarity(std::string_view a, std::string_view b) {
    const std::string x = detail::to_lower(detail::trim(a));
    const std::string y = detail::to_lower(detail::trim(b));
    if (x.empty() && y.empty()) {
        return 1.0;
    }
    std::vector<std::size_t> prev(y.size() + 1);
    std::vector<std::size_t> cur(y.size() + 1);
    for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= x.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    const double dist = static_cast<double>(prev[y.size()]);
    return 1.0 - dist / static_cast<double>(std::max(x.size(), y.size()));
}

double token_set_similarity(std::string_view a, std::string_view b) {
    const auto ta = detail::split_ws(detail::to_lower(a));
    const auto tb = detail::split_ws(detail::to_lower(b));
    const std::set<std::string> sa(ta.begin(), ta.end());
    const std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) {
        return 1.0;
    }
    std::size_t common = 0;
    for (const auto& t : sa) common += sb.count(t);
    return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

SimilarityFn similarity_by_name(std::string_view name) {
    if (name == "levenshtein") return &string_similarity;
    if (name == "token_set") return &token_set_similarity;
    throw ConfigError("unknown similarity measure '" + std::string(name) + "'");
}

std::optional<std::string> most_frequent_answer(const std::vector<std::string>& answers) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // key -> (count, first index)
    for (std::size_t i = 0; i < answers.size(); ++i) {
        auto [it, fresh] = tally.try_emplace(detail::to_lower(detail::trim(answers[i])), 0, i);
        ++it->second.first;
    }
    std::optional<std::pair<std::size_t, std::size_t>> best;
    for (const auto& [key, v] : tally) {
        if (!best || v.first > best->first || (v.first == best->first && v.second < best->second)) {
            best = v;
        }
    }
    if (!best) {
        return std::nullopt;
    }
    return answers[best->second];
}

std::optional<AnswerBoxMatch> derive_answer_bbox(const VqaRecord& record, SimilarityFn similarity) {
    if (!record.ocr_tokens || record.ocr_tokens->empty()) {
        return std::nullopt;
    }
    const auto answer = most_frequent_answer(record.answers);
    if (!answer) {
        return std::nullopt;
    }
    const auto& tokens = *record.ocr_tokens;
    auto better = [](const AnswerBoxMatch& a, const AnswerBoxMatch& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (area(a.box) != area(b.box)) return area(a.box) > area(b.box);
        if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
        if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
        return a.token_index < b.token_index;
    };
    std::optional<AnswerBoxMatch> best;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        AnswerBoxMatch m{tokens[i].box, similarity(tokens[i].text, *answer), i};
        if (!best || better(m, *best)) {
            best = m;
        }
    }
    return best;
}

std::size_t attach_answer_boxes(std::vector<VqaRecord>& records, double min_similarity, SimilarityFn similarity) {
    std::size_t attached = 0;
    for (auto& r : records) {
        if (r.gt_box) continue;
        if (auto m = derive_answer_bbox(r, similarity); m && m->similarity > min_similarity) {
            r.gt_box = m->box;
            ++attached;
        }
    }
    return attached;
}

SizeGroup size_group(double relative_size) {
    if (relative_size < 0.005) return SizeGroup::g1;
    if (relative_size < 0.05) return SizeGroup::g2;
    return SizeGroup::g3;
}

std::string to_string(SizeGroup g) {
    switch (g) {
        case SizeGroup::g1: return "G1";
        case SizeGroup::g2: return "G2";
        case SizeGroup::g3: return "G3";
    }
    return "?";
}

SizeGroup parse_size_group(std::string_view s) {
    if (s == "G1") return SizeGroup::g1;
    if (s == "G2") return SizeGroup::g2;
    if (s == "G3") return SizeGroup::g3;
    throw IngestError("unknown size group '" + std::string(s) + "'");
}

std::optional<SizeGroup> record_size_group(const VqaRecord& record) {
    if (!record.gt_box || !record.image_size) {
        return std::nullopt;
    }
    return size_group(rel_size(*record.gt_box, record.image_size->width, record.image_size->height));
}

SizePartition partition_by_size(const std::vector<VqaRecord>& records) {
    SizePartition out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.gt_box) {
            ++out.excluded_no_box;
            continue;
        }
        if (!r.image_size) {
            ++out.excluded_no_size;
            continue;
        }
        out.groups[static_cast<std::size_t>(*record_size_group(r))].push_back(i);
    }
    return out;
}

std::string to_string(QuestionType t) {
    switch (t) {
        case QuestionType::reading: return "Reading";
        case QuestionType::object_attributes: return "ObjectAttributes";
        case QuestionType::existence: return "Existence";
        case QuestionType::categorization: return "Categorization";
        case QuestionType::localization: return "Localization";
        case QuestionType::counting: return "Counting";
        case QuestionType::other: return "Other";
    }
    return "?";
}

QuestionType parse_question_type(std::string_view s) {
    for (QuestionType t : kAllQuestionTypes) {
        if (to_string(t) == s) return t;
    }
    throw IngestError("unknown question type '" + std::string(s) + "'");
}

namespace {

using QT = QuestionType;

constexpr QuestionPrefix kPrefixTable[] = {
    {"what letter", QT::reading},
    {"what brand", QT::reading},
    {"what pattern", QT::object_attributes},
    {"what color", QT::object_attributes},
    {"what breed", QT::object_attributes},
    {"what colors", QT::object_attributes},
    {"what style", QT::object_attributes},
    {"what material", QT::object_attributes},
    {"what shape", QT::object_attributes},
    {"is anyone", QT::existence},
    {"is there", QT::existence},
    {"are there", QT::existence},
    {"is that", QT::existence},
    {"are all", QT::existence},
    {"is everyone", QT::existence},
    {"is one", QT::existence},
    {"is she", QT::existence},
    {"is he", QT::existence},
    {"what street", QT::categorization},
    {"what direction", QT::categorization},
    {"what animal", QT::categorization},
    {"what fruit", QT::categorization},
    {"what vegetable", QT::categorization},
    {"what food", QT::categorization},
    {"what game", QT::categorization},
    {"what sport", QT::categorization},
    {"where is", QT::localization},
    {"where are", QT::localization},
    {"where was", QT::localization},
    {"how many", QT::counting},
    {"how much", QT::counting},
};

}  // namespace

std::span<const QuestionPrefix> question_prefix_table() {
    return kPrefixTable;
}

QuestionType classify_question_type(std::string_view question) {
    auto words = detail::split_ws(detail::to_lower(question));
    if (words.size() < 2) {
        return QuestionType::other;
    }
    // "How many?" and "Is there, ..." still count as their prefix.
    for (std::size_t i = 0; i < 2; ++i) {
        while (!words[i].empty() && std::ispunct(static_cast<unsigned char>(words[i].back()))) words[i].pop_back();
    }
    const std::string key = words[0] + " " + words[1];
    for (const auto& p : kPrefixTable) {
        if (p.prefix == key) {
            return p.type;
        }
    }
    return QuestionType::other;
}

json record_to_json(const VqaRecord& r) {
    json j{{"question_id", r.question_id}, {"image_ref", r.image_ref}, {"question", r.question},
           {"answers", r.answers}};
    if (r.gt_box) {
        j["gt_box"] = {r.gt_box->x0, r.gt_box->y0, r.gt_box->x1, r.gt_box->y1};
    }
    if (r.ocr_tokens) {
        json toks = json::array();
        for (const auto& t : *r.ocr_tokens) {
            toks.push_back({{"text", t.text}, {"box", {t.box.x0, t.box.y0, t.box.x1, t.box.y1}}});
        }
        j["ocr_tokens"] = std::move(toks);
    }
    if (r.image_size) {
        j["image_size"] = {r.image_size->width, r.image_size->height};
    }
    return j;
}

namespace {

Rect box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw IngestError("box must be [x0,y0,x1,y1]");
    }
    Rect r{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    if (!r.valid()) {
        throw IngestError("invalid box " + to_string(r));
    }
    return r;
}

}  // namespace

VqaRecord record_from_json(const json& j) {
    VqaRecord r;
    try {
        r.question_id = id_string(need(j, "question_id", "record"));
        r.image_ref = need(j, "image_ref", "record " + r.question_id).get<std::string>();
        r.question = need(j, "question", "record " + r.question_id).get<std::string>();
        r.answers = j.value("answers", std::vector<std::string>{});
        if (j.contains("gt_box") && !j["gt_box"].is_null()) {
            r.gt_box = box_from_json(j["gt_box"]);
        }
        if (j.contains("ocr_tokens") && !j["ocr_tokens"].is_null()) {
            std::vector<OcrToken> toks;
            for (const auto& t : j["ocr_tokens"]) {
                toks.push_back({need(t, "text", "ocr token").get<std::string>(), box_from_json(need(t, "box", "ocr token"))});
            }
            r.ocr_tokens = std::move(toks);
        }
        if (j.contains("image_size") && !j["image_size"].is_null()) {
            r.image_size = ImageSize{j["image_size"].at(0).get<int>(), j["image_size"].at(1).get<int>()};
        }
    } catch (const json::exception& e) {
        throw IngestError(std::string("malformed record: ") + e.what());
    }
    if (r.question.empty()) {
        throw IngestError("record " + r.question_id + " has an empty question");
    }
    return r;
}

void write_records(const fs::path& path, const std::vector<VqaRecord>& records) {
    std::ofstream os(path);
    if (!os) {
        throw IngestError("cannot write " + path.string());
    }
    os << json{{"schema", "cropvqa.records"}, {"version", kRecordSchemaVersion}}.dump() << '\n';
    for (const auto& r : records) {
        os << record_to_json(r).dump() << '\n';
    }
}

std::vector<VqaRecord> read_records(const fs::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IngestError("cannot open " + path.string());
    }
    std::vector<VqaRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("schema")) {
            if (j["schema"] != "cropvqa.records" || j.value("version", 0) != kRecordSchemaVersion) {
                throw IngestError(path.string() + ": unsupported record schema " + j.dump());
            }
            continue;
        }
        VqaRecord r = record_from_json(j);
        if (const fs::path ref(r.image_ref); ref.is_relative()) {
            r.image_ref = (path.parent_path() / ref).string();
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<VqaRecord> random_subset(const std::vector<VqaRecord>& records, std::size_t n, std::uint64_t seed) {
    if (n >= records.size()) {
        return records;
    }
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // Partial Fisher-Yates with an explicit modulo so the draw does not depend
    // on the standard library's distribution implementation.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<VqaRecord> out;
    out.reserve(n);
    for (std::size_t i : idx) out.push_back(records[i]);
    return out;
}

}  // namespace cropvqa
