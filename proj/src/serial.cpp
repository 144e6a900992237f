#include "sandesc/serial.hpp"

#include <cstdio>
#include <sstream>

namespace sandesc {

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SD_CHECK(in, "cannot open '", path, "' for hashing");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, size_t(in.gcount()), h);
    }
    return h;
}

std::vector<KvLine> parse_kv_text(const std::string& text) {
    std::vector<KvLine> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        SD_CHECK(eq != std::string::npos, "config: missing '=' on line ", line_no);
        KvLine kv;
        kv.key = trim(line.substr(0, eq));
        kv.value = trim(line.substr(eq + 1));
        kv.line_no = line_no;
        SD_CHECK(!kv.key.empty(), "config: empty key on line ", line_no);
        out.push_back(std::move(kv));
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        try {
            size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            SD_CHECK(used == tok.size() || tok.find_first_not_of(" \t", used) == std::string::npos,
                     "trailing characters");
        } catch (const std::exception&) {
            fail(what, ": cannot parse integer list entry '", tok, "'");
        }
    }
    SD_CHECK(!out.empty(), what, ": empty integer list");
    return out;
}

std::string join_int_list(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

}  // namespace sandesc
