#ifndef PIID_IO_HPP
#define PIID_IO_HPP

#include <fstream>
#include <string>
#include <vector>

namespace piid::io {

// Fixed 17-significant-digit rendering so re-runs are byte-identical.
std::string g17(double x);

// RFC-4180 field quoting (quotes fields containing comma, quote or newline).
std::string csv_field(const std::string& raw);

// Row-oriented CSV writer; throws std::runtime_error on I/O failure.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace piid::io

#endif
