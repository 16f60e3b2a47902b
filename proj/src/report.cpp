#include "cropvqa/report.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cropvqa/errors.hpp"
#include "cropvqa/metrics.hpp"

namespace cropvqa {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const QuestionRecord& q) {
    json j{{"question_id", q.question_id}, {"dataset", q.dataset},           {"model", q.model},
           {"method", q.method},           {"type", to_string(q.question_type)}, {"answer", q.answer}};
    j["size_group"] = q.size_group ? json(to_string(*q.size_group)) : json(nullptr);
    j["crop"] = q.crop ? json::array({q.crop->x0, q.crop->y0, q.crop->x1, q.crop->y1}) : json(nullptr);
    j["crop_score"] = q.crop_score ? json(*q.crop_score) : json(nullptr);
    j["crop_fallback"] = q.crop_fallback;
    j["accuracy"] = q.accuracy ? json(*q.accuracy) : json(nullptr);
    j["error"] = q.error ? json(*q.error) : json(nullptr);
    return j;
}

QuestionRecord question_from_json(const json& j) {
    QuestionRecord q;
    try {
        q.question_id = j.at("question_id").get<std::string>();
        q.dataset = j.at("dataset").get<std::string>();
        q.model = j.at("model").get<std::string>();
        q.method = j.at("method").get<std::string>();
        q.question_type = parse_question_type(j.at("type").get<std::string>());
        q.answer = j.at("answer").get<std::string>();
        if (!j.at("size_group").is_null()) q.size_group = parse_size_group(j["size_group"].get<std::string>());
        if (!j.at("crop").is_null()) {
            const auto& c = j["crop"];
            q.crop = Rect{c[0].get<int>(), c[1].get<int>(), c[2].get<int>(), c[3].get<int>()};
        }
        if (!j.at("crop_score").is_null()) q.crop_score = j["crop_score"].get<double>();
        q.crop_fallback = j.value("crop_fallback", false);
        if (!j.at("accuracy").is_null()) q.accuracy = j["accuracy"].get<double>();
        if (!j.at("error").is_null()) q.error = j["error"].get<std::string>();
        if (j.contains("crop_seconds")) q.crop_seconds = j["crop_seconds"].get<double>();
        if (j.contains("answer_seconds")) q.answer_seconds = j["answer_seconds"].get<double>();
    } catch (const json::exception& e) {
        throw Error(std::string("malformed question record: ") + e.what());
    }
    return q;
}

AggregateTables aggregate(const std::vector<QuestionRecord>& questions) {
    using RowKey = AggregateTables::RowKey;
    struct Acc {
        double sum = 0.0;
        std::size_t n = 0;
        void add(double v) { sum += v; ++n; }
        double mean() const { return sum / static_cast<double>(n); }
    };

    AggregateTables t;
    std::map<std::pair<RowKey, std::string>, Acc> overall;
    std::map<std::pair<RowKey, std::string>, std::array<Acc, 3>> sized;
    std::map<RowKey, Acc> latency;
    // (row, dataset) -> per-question accuracy, for the gain table
    std::map<std::pair<RowKey, std::string>, AccuracyResult> results;
    std::map<std::string, QuestionType> typing;

    for (const auto& q : questions) {
        const RowKey row{q.model, q.method};
        const auto cell = std::make_pair(row, q.dataset);
        if (q.errored() || !q.accuracy) {
            ++t.errored[cell];
            continue;
        }
        ++t.evaluated[cell];
        overall[cell].add(*q.accuracy);
        if (q.size_group) {
            sized[cell][static_cast<std::size_t>(*q.size_group)].add(*q.accuracy);
        }
        latency[row].add(q.crop_seconds);
        results[cell].per_question[q.question_id] = *q.accuracy;
        typing[q.dataset + "\x1f" + q.question_id] = q.question_type;
    }

    for (const auto& [cell, acc] : overall) {
        t.overall[cell.first][cell.second] = acc.mean();
    }
    for (const auto& [cell, groups] : sized) {
        auto& row = t.by_size[cell];
        for (std::size_t g = 0; g < 3; ++g) {
            if (groups[g].n > 0) row[g] = groups[g].mean();
        }
    }
    for (const auto& [row, acc] : latency) {
        t.crop_latency[row] = acc.mean();
    }

    for (const auto& [cell, treated] : results) {
        if (cell.first.method == "none") continue;
        auto base_it = results.find({RowKey{cell.first.model, "none"}, cell.second});
        if (base_it == results.end()) continue;
        // Pair only the questions evaluated in both runs.
        AccuracyResult base;
        AccuracyResult treat;
        std::map<std::string, QuestionType> types;
        for (const auto& [id, acc] : treated.per_question) {
            auto b = base_it->second.per_question.find(id);
            if (b == base_it->second.per_question.end()) continue;
            base.per_question[id] = b->second;
            treat.per_question[id] = acc;
            types[id] = typing.at(cell.second + "\x1f" + id);
        }
        if (!types.empty()) {
            t.gain_by_type[cell] = accuracy_gain_by_type(base, treat, types);
        }
    }
    return t;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

std::string secs(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::set<std::string> datasets_of(const AggregateTables& t) {
    std::set<std::string> out;
    for (const auto& [row, cols] : t.overall) {
        for (const auto& [ds, v] : cols) out.insert(ds);
    }
    return out;
}

}  // namespace

std::string overall_csv(const AggregateTables& t) {
    const auto datasets = datasets_of(t);
    std::ostringstream os;
    os << "model,method";
    for (const auto& ds : datasets) os << ',' << csv_field(ds);
    os << '\n';
    for (const auto& [row, cols] : t.overall) {
        os << csv_field(row.model) << ',' << csv_field(row.method);
        for (const auto& ds : datasets) {
            auto it = cols.find(ds);
            os << ',' << (it == cols.end() ? std::string() : pct(it->second));
        }
        os << '\n';
    }
    return os.str();
}

std::string by_size_csv(const AggregateTables& t) {
    std::ostringstream os;
    os << "model,method,dataset,G1,G2,G3\n";
    for (const auto& [cell, groups] : t.by_size) {
        os << csv_field(cell.first.model) << ',' << csv_field(cell.first.method) << ',' << csv_field(cell.second);
        for (const auto& g : groups) os << ',' << (g ? pct(*g) : std::string());
        os << '\n';
    }
    return os.str();
}

std::string gain_by_type_csv(const AggregateTables& t) {
    std::ostringstream os;
    os << "model,method,dataset";
    for (QuestionType qt : kAllQuestionTypes) os << ',' << to_string(qt);
    os << '\n';
    for (const auto& [cell, gains] : t.gain_by_type) {
        os << csv_field(cell.first.model) << ',' << csv_field(cell.first.method) << ',' << csv_field(cell.second);
        for (QuestionType qt : kAllQuestionTypes) {
            auto it = gains.find(qt);
            os << ',' << (it == gains.end() ? std::string() : pct(it->second));
        }
        os << '\n';
    }
    return os.str();
}

std::string latency_csv(const AggregateTables& t) {
    std::ostringstream os;
    os << "model,method,mean_crop_seconds\n";
    for (const auto& [row, v] : t.crop_latency) {
        os << csv_field(row.model) << ',' << csv_field(row.method) << ',' << secs(v) << '\n';
    }
    return os.str();
}

std::string markdown_report(const AggregateTables& t, const json& header) {
    std::ostringstream os;
    os << "# Visual cropping evaluation\n\n";
    if (!header.is_null()) {
        os << "## Configuration\n\n```json\n" << header.dump(2) << "\n```\n\n";
    }

    const auto datasets = datasets_of(t);
    os << "## Accuracy (%)\n\n| Model | Method |";
    for (const auto& ds : datasets) os << ' ' << ds << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < datasets.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& [row, cols] : t.overall) {
        os << "| " << row.model << " | " << row.method << " |";
        for (const auto& ds : datasets) {
            auto it = cols.find(ds);
            os << ' ' << (it == cols.end() ? std::string("-") : pct(it->second)) << " |";
        }
        os << '\n';
    }

    if (!t.by_size.empty()) {
        os << "\n## Accuracy by answer-box size (%)\n\n"
           << "| Model | Method | Dataset | S < 0.005 | [0.005, 0.05) | S >= 0.05 |\n|---|---|---|---|---|---|\n";
        for (const auto& [cell, groups] : t.by_size) {
            os << "| " << cell.first.model << " | " << cell.first.method << " | " << cell.second << " |";
            for (const auto& g : groups) os << ' ' << (g ? pct(*g) : std::string("-")) << " |";
            os << '\n';
        }
    }

    if (!t.gain_by_type.empty()) {
        os << "\n## Accuracy gain over no cropping by question type (points)\n\n| Model | Method | Dataset |";
        for (QuestionType qt : kAllQuestionTypes) os << ' ' << to_string(qt) << " |";
        os << "\n|---|---|---|";
        for (std::size_t i = 0; i < kAllQuestionTypes.size(); ++i) os << "---|";
        os << '\n';
        for (const auto& [cell, gains] : t.gain_by_type) {
            os << "| " << cell.first.model << " | " << cell.first.method << " | " << cell.second << " |";
            for (QuestionType qt : kAllQuestionTypes) {
                auto it = gains.find(qt);
                os << ' ' << (it == gains.end() ? std::string("-") : pct(it->second)) << " |";
            }
            os << '\n';
        }
    }

    os << "\n## Mean crop-stage time (s)\n\n| Model | Method | Seconds |\n|---|---|---|\n";
    for (const auto& [row, v] : t.crop_latency) {
        os << "| " << row.model << " | " << row.method << " | " << secs(v) << " |\n";
    }

    os << "\n## Counts\n\n| Model | Method | Dataset | Evaluated | Errored |\n|---|---|---|---|---|\n";
    std::set<std::pair<AggregateTables::RowKey, std::string>> cells;
    for (const auto& [c, n] : t.evaluated) cells.insert(c);
    for (const auto& [c, n] : t.errored) cells.insert(c);
    for (const auto& c : cells) {
        auto ev = t.evaluated.find(c);
        auto er = t.errored.find(c);
        os << "| " << c.first.model << " | " << c.first.method << " | " << c.second << " | "
           << (ev == t.evaluated.end() ? 0 : ev->second) << " | " << (er == t.errored.end() ? 0 : er->second)
           << " |\n";
    }
    return os.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    os << content;
    if (!os) {
        throw Error("cannot write " + path.string());
    }
}

}  // namespace

ReportFiles emit_aggregates(const std::vector<QuestionRecord>& questions, const fs::path& dir, const json& header) {
    if (questions.empty()) {
        throw Error("nothing to report: no question records");
    }
    fs::create_directories(dir);
    const AggregateTables t = aggregate(questions);
    ReportFiles files;
    const std::pair<const char*, std::string> tables[] = {
        {"accuracy.csv", overall_csv(t)},
        {"accuracy_by_size.csv", by_size_csv(t)},
        {"gain_by_type.csv", gain_by_type_csv(t)},
        {"crop_latency.csv", latency_csv(t)},
    };
    for (const auto& [name, content] : tables) {
        files.csv.push_back(dir / name);
        write_file(files.csv.back(), content);
    }
    files.markdown = dir / "report.md";
    write_file(files.markdown, markdown_report(t, header));
    return files;
}

ReportFiles emit_report(const std::vector<QuestionRecord>& questions, const fs::path& dir, const json& header) {
    if (questions.empty()) {
        throw Error("nothing to report: no question records");
    }
    fs::create_directories(dir);
    std::string qlines;
    std::string tlines;
    for (const auto& q : questions) {
        qlines += to_json(q).dump() + '\n';
        tlines += json{{"question_id", q.question_id},
                       {"dataset", q.dataset},
                       {"method", q.method},
                       {"crop_seconds", q.crop_seconds},
                       {"answer_seconds", q.answer_seconds}}
                      .dump() +
                  '\n';
    }
    ReportFiles files = emit_aggregates(questions, dir, header);
    files.questions = dir / "questions.jsonl";
    files.timings = dir / "timings.jsonl";
    write_file(files.questions, qlines);
    write_file(files.timings, tlines);
    return files;
}

std::vector<QuestionRecord> read_questions(const fs::path& questions_file) {
    std::ifstream is(questions_file);
    if (!is) {
        throw Error("cannot open " + questions_file.string());
    }
    std::vector<QuestionRecord> out;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (line.empty()) continue;
        try {
            out.push_back(question_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(questions_file.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }

    const fs::path timings = questions_file.parent_path() / "timings.jsonl";
    if (std::ifstream ts(timings); ts) {
        // Keyed by (dataset, method, question id); a file may mix runs.
        auto key = [](const std::string& ds, const std::string& m, const std::string& id) {
            return ds + '\x1f' + m + '\x1f' + id;
        };
        std::map<std::string, std::pair<double, double>> by_id;
        while (std::getline(ts, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("question_id")) continue;
            by_id[key(j.value("dataset", ""), j.value("method", ""), j.value("question_id", ""))] = {
                j.value("crop_seconds", 0.0), j.value("answer_seconds", 0.0)};
        }
        for (auto& q : out) {
            if (auto it = by_id.find(key(q.dataset, q.method, q.question_id)); it != by_id.end()) {
                q.crop_seconds = it->second.first;
                q.answer_seconds = it->second.second;
            }
        }
    }
    return out;
}

}  // namespace cropvqa
