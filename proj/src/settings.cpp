#include "ragqa/settings.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

#include "ragqa/text.hpp"

extern char** environ;

namespace ragqa {

Settings Settings::parse(std::string_view text, std::string_view origin) {
    Settings s;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key=value");
        }
        std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
        for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        s.values_[key] = trim(std::string_view(line).substr(eq + 1));
    }
    return s;
}

Settings Settings::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse(read_file(path), path.string());
}

void Settings::apply_env(std::string_view prefix) {
    for (char** e = environ; e && *e; ++e) {
        const std::string_view entry(*e);
        if (!entry.starts_with(prefix)) continue;
        const auto eq = entry.find('=');
        if (eq == std::string_view::npos || eq == prefix.size()) continue;
        std::string key(entry.substr(prefix.size(), eq - prefix.size()));
        for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        values_[key] = std::string(entry.substr(eq + 1));
    }
}

std::optional<std::string> Settings::get(std::string_view key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Settings::get_or(std::string_view key, std::string fallback) const {
    auto v = get(key);
    return v ? *v : std::move(fallback);
}

std::size_t Settings::get_size(std::string_view key, std::size_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("setting " + std::string(key) + " is not a non-negative integer: " + *v);
    }
    return out;
}

double Settings::get_double(std::string_view key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    char* end = nullptr;
    const double out = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size()) {
        throw ConfigError("setting " + std::string(key) + " is not a number: " + *v);
    }
    return out;
}

json Settings::to_json() const {
    json j = json::object();
    for (const auto& [k, v] : values_) {
        const bool secret = k.find("key") != std::string::npos || k.find("secret") != std::string::npos ||
                            k.find("token") != std::string::npos;
        j[k] = secret ? "***" : v;
    }
    return j;
}

}  // namespace ragqa
