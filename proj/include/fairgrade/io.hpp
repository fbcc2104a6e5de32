#pragma once

#include <string>

namespace fairgrade::io {

/// Writes content to a temp file next to `path` and renames it into place.
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// Formats a double with enough digits to round-trip (shortest form).
std::string format_double(double v);

}  // namespace fairgrade::io
