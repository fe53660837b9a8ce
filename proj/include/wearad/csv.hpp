#pragma once

#include <cstdint>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace wearad {

/// Config hash and seed carried by every pipeline output.
struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;

    bool operator==(const Provenance &) const = default;
};

/// Shortest decimal that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_integer(std::string_view text);

/// RFC 4180 CSV with one leading "# provenance: config_hash=<hex> seed=<n>"
/// comment line.
class CsvWriter {
public:
    CsvWriter(std::ostream &out, const Provenance &provenance, std::vector<std::string> header);

    void row(const std::vector<std::string> &fields);

private:
    std::ostream &out_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    Provenance provenance;

    /// Column position by name; throws Error naming the column when absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
};

/// Reads a table written by CsvWriter. `source` names the file in errors.
CsvTable read_csv(std::istream &in, std::string_view source);

std::string join(const std::vector<std::string> &items, char separator);
std::vector<std::string> split(std::string_view text, char separator);

} // namespace wearad
