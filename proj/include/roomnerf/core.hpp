#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace roomnerf {

namespace detail {

inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}

}  // namespace detail

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream os;
  os.precision(17);
  detail::format_into(os, parts...);
  return os.str();
}

// Precondition failures throw; callers that can recover catch std::invalid_argument.
template <typename... Parts>
void require(bool cond, const Parts&... parts) {
  if (!cond) throw std::invalid_argument(cat(parts...));
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace roomnerf
