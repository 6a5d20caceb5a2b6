#pragma once

#include <charconv>
#include <ostream>
#include <string>
#include <vector>

namespace rankbsde {

/// Shortest representation that round-trips, so reruns diff byte-for-byte.
[[nodiscard]] inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Accumulates one CSV record; fields never contain separators.
class CsvRow {
public:
    CsvRow& operator<<(double v) { return push(format_number(v)); }
    CsvRow& operator<<(const std::string& s) { return push(s); }
    CsvRow& operator<<(const char* s) { return push(s); }
    template <typename Int>
        requires std::is_integral_v<Int>
    CsvRow& operator<<(Int v) {
        return push(std::to_string(v));
    }

    void write(std::ostream& out) const { out << line_ << '\n'; }

private:
    CsvRow& push(const std::string& field) {
        if (!first_) line_ += ',';
        line_ += field;
        first_ = false;
        return *this;
    }

    std::string line_;
    bool first_ = true;
};

inline void write_header(std::ostream& out, const std::vector<std::string>& columns) {
    CsvRow row;
    for (const auto& c : columns) row << c;
    row.write(out);
}

}  // namespace rankbsde
