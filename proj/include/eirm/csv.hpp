#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace eirm::csv {

// A parsed CSV file. Row numbers reported in errors are 1-based file lines,
// with the header on line 1.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a named column, or -1.
  int column(std::string_view name) const;
  // Index of a named column; throws ValidationError naming `source` if absent.
  int require_column(std::string_view name, std::string_view source) const;
};

Table parse(std::istream& in, std::string_view source = "<stream>");
Table read_file(const std::filesystem::path& path);

// Quote a field when it contains a delimiter, quote, or line break.
std::string escape(std::string_view field);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

// Shortest representation that round-trips to the same double.
std::string format_double(double value);

}  // namespace eirm::csv
