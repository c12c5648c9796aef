#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cupnet::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Shortest representation that parses back to the identical double.
std::string format(double value);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string> split_line(std::string_view line);

Table read(const std::filesystem::path& path);

/// Reads a purely numeric table (after the header) into row-major storage.
std::vector<std::vector<double>> read_numeric(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

}  // namespace cupnet::csv
