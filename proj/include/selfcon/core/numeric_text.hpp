#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace selfcon {

/// Rounds to `digits` significant decimal digits (the value that
/// round-trips through "%.{digits}g").
double quantize(double value, int digits = 9);

/// Lossless decimal text (17 significant digits).
std::string exact_decimal(double value);
double parse_decimal(std::string_view text);
/// Short "%.{digits}g" text for logs.
std::string short_decimal(double value, int digits = 6);

/// "12.34" style rendering of an internal [-1, 1] score times 100.
std::string percent_score(double value);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see partial output.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace selfcon
