#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spanova {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::string& path);

// write to a temporary sibling then rename, so readers never see partial files
void write_text_file_atomic(const std::string& path, const std::string& content);

std::vector<std::string> split_lines(const std::string& text);
std::vector<std::string> split_tabs(const std::string& line);

double parse_double_strict(const std::string& token, const std::string& where);
long parse_long_strict(const std::string& token, const std::string& where);

std::string format_fixed6(double v);
std::string format_full(double v);   // shortest round-trip decimal
std::string format_hex(double v);    // exact bit pattern, for checkpoints
double parse_hex_double(const std::string& token, const std::string& where);

}  // namespace spanova
