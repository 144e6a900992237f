#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sandesc {

using Shape = std::vector<int>;

inline long numel(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

namespace detail {
inline void msg_cat(std::ostringstream&) {}
template <typename A, typename... R>
void msg_cat(std::ostringstream& os, A&& a, R&&... rest) {
    os << a;
    msg_cat(os, std::forward<R>(rest)...);
}
}  // namespace detail

template <typename... A>
[[noreturn]] inline void fail(A&&... a) {
    std::ostringstream os;
    detail::msg_cat(os, std::forward<A>(a)...);
    throw std::runtime_error(os.str());
}

// Contract check; message pieces are streamed together.
#define SD_CHECK(cond, ...)                          \
    do {                                             \
        if (!(cond)) ::sandesc::fail(__VA_ARGS__);   \
    } while (0)

}  // namespace sandesc
