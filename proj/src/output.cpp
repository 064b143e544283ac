#include "sqmc/output.hpp"

#include <cstdio>
#include <stdexcept>

namespace sqmc {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open output file: " + path.string());
}

void CsvWriter::header(std::initializer_list<std::string> names) {
    bool first = true;
    for (const auto& n : names) {
        if (!first) out_ << ',';
        out_ << n;
        first = false;
    }
    out_ << '\n';
}

void CsvWriter::sep() {
    if (row_open_) out_ << ',';
    row_open_ = true;
}

CsvWriter& CsvWriter::field(double v) {
    sep();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::field(long long v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::field(unsigned long long v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::field(const std::string& v) {
    sep();
    const bool needs_quote = v.find_first_of(",\"\n") != std::string::npos;
    if (!needs_quote) {
        out_ << v;
    } else {
        out_ << '"';
        for (char ch : v) {
            if (ch == '"') out_ << '"';
            out_ << ch;
        }
        out_ << '"';
    }
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    row_open_ = false;
}

}  // namespace sqmc
