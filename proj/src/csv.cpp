#include "tsab/csv.hpp"

#include <sstream>

#include "tsab/errors.hpp"
#include "tsab/io.hpp"

namespace tsab {

namespace {

std::string quote_cell(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> parse_line(const std::string& line, const std::string& path, int lineno) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted)
        throw ParseError(path + ":" + std::to_string(lineno) + ": unterminated quote");
    cells.push_back(cur);
    return cells;
}

}  // namespace

void write_csv(const std::string& path, const Csv& csv) {
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os << ',';
            os << quote_cell(cells[i]);
        }
        os << '\n';
    };
    emit(csv.header);
    for (const auto& row : csv.rows) emit(row);
    atomic_write_text(path, os.str());
}

Csv read_csv(const std::string& path) {
    std::istringstream is(read_text_file(path));
    Csv csv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = parse_line(line, path, lineno);
        if (lineno == 1)
            csv.header = std::move(cells);
        else
            csv.rows.push_back(std::move(cells));
    }
    if (csv.header.empty()) throw ParseError(path + ": empty csv");
    return csv;
}

}  // namespace tsab
