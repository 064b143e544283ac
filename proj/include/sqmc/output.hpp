#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace sqmc {

// Minimal CSV writer: '.' decimal point, '\n' line ends, quoting only when a
// field needs it.  Numeric fields are written with 17 significant digits so
// re-runs can be compared byte for byte.
class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path);

    void header(std::initializer_list<std::string> names);
    CsvWriter& field(double v);
    CsvWriter& field(long long v);
    CsvWriter& field(unsigned long long v);
    CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
    CsvWriter& field(std::size_t v) { return field(static_cast<unsigned long long>(v)); }
    CsvWriter& field(const std::string& v);
    void end_row();

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

  private:
    void sep();
    std::filesystem::path path_;
    std::ofstream out_;
    bool row_open_ = false;
};

std::string format_double(double v);

}  // namespace sqmc
