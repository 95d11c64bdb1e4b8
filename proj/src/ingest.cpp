#include "iterex/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "iterex/prompts.hpp"
#include "json.hpp"

namespace iterex::ingest {

using nlohmann::json;

CsvColumnMap csv_column_map_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    CsvColumnMap map;
    map.id = j.at("id").get<std::string>();
    map.stem = j.at("stem").get<std::string>();
    map.answer = j.at("answer").get<std::string>();
    map.distractors = j.at("distractors").get<std::vector<std::string>>();
    map.avg_rating = j.at("avg_rating").get<std::string>();
    map.num_ratings = j.at("num_ratings").get<std::string>();
    if (j.contains("explanation")) map.explanation = j["explanation"].get<std::string>();
    if (j.contains("subject")) map.subject = j["subject"].get<std::string>();
    return map;
}

std::string mcq_to_canonical_json(const Mcq& mcq) {
    json j;
    j["id"] = mcq.id;
    j["stem"] = mcq.stem;
    j["answer"] = mcq.answer;
    j["distractors"] = mcq.distractors;
    j["explanation"] = mcq.explanation ? json(*mcq.explanation) : json(nullptr);
    if (mcq.avg_rating) j["avg_rating"] = *mcq.avg_rating;
    j["num_ratings"] = mcq.num_ratings;
    if (mcq.subject) j["subject"] = *mcq.subject;
    return j.dump();
}

namespace {

Mcq mcq_from_json_object(const json& j) {
    Mcq mcq;
    mcq.id = j.at("id").get<std::string>();
    mcq.stem = j.at("stem").get<std::string>();
    mcq.answer = j.at("answer").get<std::string>();
    mcq.distractors = j.at("distractors").get<std::vector<std::string>>();
    if (j.contains("explanation") && !j["explanation"].is_null())
        mcq.explanation = j["explanation"].get<std::string>();
    if (j.contains("avg_rating") && !j["avg_rating"].is_null())
        mcq.avg_rating = j["avg_rating"].get<double>();
    mcq.num_ratings = j.at("num_ratings").get<long>();
    if (j.contains("subject") && !j["subject"].is_null())
        mcq.subject = j["subject"].get<std::string>();
    return mcq;
}

}  // namespace

Mcq mcq_from_canonical_json(const std::string& json_line) {
    return mcq_from_json_object(json::parse(json_line));
}

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
    std::string out;
    for (const auto& e : errors) {
        if (!out.empty()) out += "; ";
        out += e;
    }
    return out;
}

// RFC-4180-style split of one CSV record (quotes, escaped quotes, CR strip).
std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

struct CsvIndices {
    size_t id, stem, answer;
    std::vector<size_t> distractors;
    std::optional<size_t> explanation;
    size_t avg_rating, num_ratings;
    std::optional<size_t> subject;
};

CsvIndices resolve_columns(const std::vector<std::string>& header,
                           const CsvColumnMap& map) {
    auto find = [&header](const std::string& name) -> size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::runtime_error("missing mapped column: " + name);
        return static_cast<size_t>(it - header.begin());
    };
    CsvIndices idx{};
    idx.id = find(map.id);
    idx.stem = find(map.stem);
    idx.answer = find(map.answer);
    for (const auto& d : map.distractors) idx.distractors.push_back(find(d));
    if (!map.explanation.empty()) idx.explanation = find(map.explanation);
    idx.avg_rating = find(map.avg_rating);
    idx.num_ratings = find(map.num_ratings);
    if (!map.subject.empty()) idx.subject = find(map.subject);
    return idx;
}

}  // namespace

ParseResult parse_dataset(std::istream& in, DatasetFormat format,
                          const std::optional<CsvColumnMap>& columns) {
    if (!in.good() && !in.eof())
        throw std::runtime_error("unreadable input stream");

    ParseResult result;
    std::unordered_set<std::string> seen_ids;

    auto admit = [&](Mcq&& mcq, size_t line_no) {
        auto errors = validate_mcq(mcq);
        if (!seen_ids.insert(mcq.id).second)
            errors.push_back("id: duplicate '" + mcq.id + "'");
        if (errors.empty())
            result.mcqs.push_back(std::move(mcq));
        else
            result.issues.push_back({line_no, join_errors(errors)});
    };

    if (format == DatasetFormat::Jsonl) {
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                result.issues.push_back({line_no, "not a json object"});
                continue;
            }
            try {
                admit(mcq_from_json_object(j), line_no);
            } catch (const json::exception& e) {
                result.issues.push_back({line_no, e.what()});
            }
        }
        return result;
    }

    if (!columns)
        throw std::runtime_error("csv format requires a column mapping");
    std::string header_line;
    if (!std::getline(in, header_line)) return result;  // empty stream
    const auto indices = resolve_columns(split_csv_row(header_line), *columns);

    std::string line;
    size_t line_no = 1;  // header consumed
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv_row(line);
        auto cell = [&](size_t i) -> const std::string& {
            if (i >= cells.size())
                throw std::out_of_range("row has " + std::to_string(cells.size()) +
                                        " cells, column " + std::to_string(i + 1) +
                                        " required");
            return cells[i];
        };
        try {
            Mcq mcq;
            mcq.id = cell(indices.id);
            mcq.stem = cell(indices.stem);
            mcq.answer = cell(indices.answer);
            for (size_t di : indices.distractors)
                if (!cell(di).empty()) mcq.distractors.push_back(cell(di));
            if (indices.explanation && !cell(*indices.explanation).empty())
                mcq.explanation = cell(*indices.explanation);
            if (!cell(indices.avg_rating).empty())
                mcq.avg_rating = std::stod(cell(indices.avg_rating));
            if (!cell(indices.num_ratings).empty())
                mcq.num_ratings = std::stol(cell(indices.num_ratings));
            if (indices.subject && !cell(*indices.subject).empty())
                mcq.subject = cell(*indices.subject);
            admit(std::move(mcq), line_no);
        } catch (const std::exception& e) {
            result.issues.push_back({line_no, e.what()});
        }
    }
    return result;
}

long word_count(const std::string& text) {
    std::istringstream in(text);
    std::string token;
    long count = 0;
    while (in >> token) ++count;
    return count;
}

bool detect_image(const std::string& stem) {
    if (stem.find("![") != std::string::npos) return true;
    std::string lowered(stem.size(), '\0');
    std::transform(stem.begin(), stem.end(), lowered.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return lowered.find("<img") != std::string::npos;
}

std::vector<Mcq> filter_for_generation(const std::vector<Mcq>& mcqs) {
    std::vector<Mcq> kept;
    for (const auto& mcq : mcqs) {
        if (!mcq.avg_rating || *mcq.avg_rating < 3.0) continue;
        if (!mcq.explanation || word_count(*mcq.explanation) <= 10) continue;
        if (detect_image(mcq.stem)) continue;
        if (mcq.num_ratings < 10) continue;
        kept.push_back(mcq);
    }
    return kept;
}

std::vector<Mcq> filter_for_evaluation(const std::vector<Mcq>& mcqs) {
    std::vector<Mcq> kept;
    for (const auto& mcq : mcqs) {
        if (!mcq.explanation) continue;
        if (mcq.num_ratings < 10) continue;
        if (detect_image(mcq.stem)) continue;
        kept.push_back(mcq);
    }
    return kept;
}

DatasetStats dataset_stats(const std::vector<Mcq>& mcqs) {
    if (mcqs.empty())
        throw std::invalid_argument("dataset_stats: empty dataset");
    DatasetStats stats;
    stats.n_mcqs = static_cast<long>(mcqs.size());
    long explained = 0;
    long explanation_words = 0;
    for (const auto& mcq : mcqs) {
        stats.total_ratings += mcq.num_ratings;
        if (mcq.explanation) {
            ++explained;
            explanation_words += word_count(*mcq.explanation);
        }
    }
    stats.ratings_per_mcq =
        static_cast<double>(stats.total_ratings) / static_cast<double>(stats.n_mcqs);
    stats.avg_explanation_words =
        explained > 0 ? static_cast<double>(explanation_words) /
                            static_cast<double>(explained)
                      : 0.0;
    return stats;
}

namespace {

void write_record(std::ostream& out, const FineTuneRecord& record) {
    json j;
    j["instruction"] = record.instruction;
    j["input"] = record.input;
    j["output"] = record.output;
    out << j.dump() << "\n";
    if (!out) throw std::runtime_error("fine-tune export: write failed");
}

}  // namespace

long export_finetune_generation(const std::vector<Mcq>& mcqs,
                                std::ostream& records_out,
                                std::ostream& metadata_out) {
    long count = 0;
    for (const auto& mcq : mcqs) {
        FineTuneRecord record;
        record.instruction = prompts::kGenerationInstruction;
        record.input = prompts::render_input_block(mcq);
        record.output = mcq.explanation.value_or("");
        write_record(records_out, record);
        ++count;
    }
    metadata_out << "epochs=5\n"
                 << "batch_size=1\n"
                 << "max_sequence_length=512\n"
                 << "learning_rate=2e-05\n"
                 << "warmup_ratio=0.03\n";
    if (!metadata_out)
        throw std::runtime_error("fine-tune export: metadata write failed");
    return count;
}

long export_finetune_evaluation(const std::vector<Mcq>& mcqs,
                                std::ostream& records_out) {
    long count = 0;
    for (const auto& mcq : mcqs) {
        FineTuneRecord record;
        record.instruction = prompts::kEvaluationInstruction;
        std::string input = prompts::render_input_block(mcq);
        input += "\nExplanation: " + mcq.explanation.value_or("");
        record.input = std::move(input);
        record.output = prompts::format_score(mcq.avg_rating.value_or(0.0));
        write_record(records_out, record);
        ++count;
    }
    return count;
}

}  // namespace iterex::ingest
