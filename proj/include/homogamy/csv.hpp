#pragma once

#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

namespace homogamy::csv {

// Shortest round-trip representation, '.' decimal separator, locale-free.
inline std::string format(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

inline std::string format(std::int64_t v) { return std::to_string(v); }
inline std::string format(std::uint64_t v) { return std::to_string(v); }
inline std::string format(int v) { return std::to_string(v); }
inline std::string format(std::string_view v) { return std::string(v); }
inline std::string format(const char* v) { return std::string(v); }
inline std::string format(const std::string& v) { return v; }

// Empty field for absent optional values.
template <class T>
std::string format_optional(bool present, const T& v) {
  return present ? format(v) : std::string();
}

/// Comma-separated rows with a single header and '\n' line endings.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void header(std::initializer_list<std::string_view> cols) {
    bool first = true;
    for (auto c : cols) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((emit(format_field(fields), first)), ...);
    out_ << '\n';
  }

 private:
  template <class T>
  static std::string format_field(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      return format(v);
    }
  }
  void emit(const std::string& s, bool& first) {
    if (!first) out_ << ',';
    out_ << s;
    first = false;
  }

  std::ostream& out_;
};

}  // namespace homogamy::csv
