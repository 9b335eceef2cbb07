#pragma once

#include <string>
#include <vector>

namespace pssl {

// Round-trip safe double formatting (%.17g); used for every CSV we emit so
// that reruns with identical inputs produce bit-identical files.
std::string fmt_double(double v);

// Parses a double, rejecting trailing junk. Throws DataError.
double parse_double(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);

// Splits one CSV line on commas. Fields in our formats never contain
// commas or quotes, so no quoting rules are needed.
std::vector<std::string> split_csv_line(const std::string& line);

// Reads all non-empty lines, split into fields. Throws DataError if the
// file cannot be opened.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Writes rows joined with commas and a trailing newline per row.
// Throws DataError on I/O failure.
void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& rows);

}  // namespace pssl
