#include "mdtp/units.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "mdtp/error.hpp"

namespace mdtp {

namespace {

std::string lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

}  // namespace

ByteCount parse_byte_size(std::string_view text) {
  auto fail = [&] {
    return Error(ErrorCode::kInvalidInput, "malformed byte size: '" + std::string(text) + "'");
  };
  std::size_t i = 0;
  while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
  if (i == 0) throw fail();

  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + i, value);
  if (ec != std::errc() || ptr != text.data() + i || value < 0) throw fail();

  std::string unit = lower(text.substr(i));
  double scale = 1;
  if (unit.empty() || unit == "b") {
    scale = 1;
  } else if (unit == "k" || unit == "kib") {
    scale = static_cast<double>(kKiB);
  } else if (unit == "m" || unit == "mib") {
    scale = static_cast<double>(kMiB);
  } else if (unit == "g" || unit == "gib") {
    scale = static_cast<double>(kGiB);
  } else if (unit == "kb") {
    scale = 1e3;
  } else if (unit == "mb") {
    scale = 1e6;
  } else if (unit == "gb") {
    scale = 1e9;
  } else {
    throw fail();
  }
  double bytes = value * scale;
  if (bytes != std::floor(bytes) || bytes > 1.8e19) throw fail();
  return static_cast<ByteCount>(bytes);
}

std::string format_byte_size(ByteCount bytes) {
  if (bytes != 0) {
    if (bytes % kGiB == 0) return std::to_string(bytes / kGiB) + "GiB";
    if (bytes % kMiB == 0) return std::to_string(bytes / kMiB) + "MiB";
    if (bytes % kKiB == 0) return std::to_string(bytes / kKiB) + "KiB";
  }
  return std::to_string(bytes) + "B";
}

}  // namespace mdtp
