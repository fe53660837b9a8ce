#include "wearad/csv.hpp"

#include "wearad/error.hpp"

#include <charconv>

#include <fmt/format.h>

namespace wearad {

namespace {

constexpr std::string_view kProvenancePrefix = "# provenance: ";

std::string quote(const std::string &field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

// Splits one record, reading continuation lines for quoted newlines.
bool read_record(std::istream &in, std::vector<std::string> &fields, std::size_t &line,
                 std::string_view source) {
    std::string text;
    if (!std::getline(in, text)) {
        return false;
    }
    ++line;
    fields.clear();
    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    while (true) {
        if (i == text.size()) {
            if (!quoted) {
                break;
            }
            std::string more;
            if (!std::getline(in, more)) {
                throw ParseError(line, fmt::format("{}: unterminated quoted field", source));
            }
            ++line;
            field += '\n';
            text = std::move(more);
            i = 0;
            continue;
        }
        const char c = text[i++];
        if (quoted) {
            if (c == '"') {
                if (i < text.size() && text[i] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return true;
}

} // namespace

std::string format_double(double value) { return fmt::format("{}", value); }

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(fmt::format("'{}' is not a number", text));
    }
    return value;
}

long long parse_integer(std::string_view text) {
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(fmt::format("'{}' is not an integer", text));
    }
    return value;
}

CsvWriter::CsvWriter(std::ostream &out, const Provenance &provenance, std::vector<std::string> header)
    : out_{out}, columns_{header.size()} {
    out_ << kProvenancePrefix << "config_hash=" << provenance.config_hash
         << " seed=" << provenance.seed << '\n';
    row(header);
}

void CsvWriter::row(const std::vector<std::string> &fields) {
    if (fields.size() != columns_) {
        throw Error(fmt::format("CSV row has {} fields, header has {}", fields.size(), columns_));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out_ << ',';
        }
        out_ << quote(fields[i]);
    }
    out_ << '\n';
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw Error(fmt::format("CSV has no column '{}'", name));
}

CsvTable read_csv(std::istream &in, std::string_view source) {
    CsvTable table;
    std::size_t line = 0;
    std::string first;
    if (!std::getline(in, first)) {
        throw Error(fmt::format("{}: empty file", source));
    }
    ++line;
    if (!first.starts_with(kProvenancePrefix)) {
        throw ParseError(line, fmt::format("{}: missing provenance line", source));
    }
    const auto fields = split(std::string_view(first).substr(kProvenancePrefix.size()), ' ');
    for (const auto &f : fields) {
        if (f.starts_with("config_hash=")) {
            table.provenance.config_hash = f.substr(12);
        } else if (f.starts_with("seed=")) {
            table.provenance.seed = static_cast<std::uint64_t>(std::stoull(f.substr(5)));
        }
    }
    if (!read_record(in, table.header, line, source)) {
        throw ParseError(line, fmt::format("{}: missing header", source));
    }
    std::vector<std::string> record;
    while (read_record(in, record, line, source)) {
        if (record.size() == 1 && record[0].empty()) {
            continue;
        }
        if (record.size() != table.header.size()) {
            throw ParseError(line, fmt::format("{}: {} fields, expected {}", source, record.size(),
                                               table.header.size()));
        }
        table.rows.push_back(record);
    }
    return table;
}

std::string join(const std::vector<std::string> &items, char separator) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            out += separator;
        }
        out += items[i];
    }
    return out;
}

std::vector<std::string> split(std::string_view text, char separator) {
    std::vector<std::string> out;
    if (text.empty()) {
        return out;
    }
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(separator, start);
        out.emplace_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

} // namespace wearad
