#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ragqa/error.hpp"
#include "ragqa/io.hpp"

namespace ragqa {

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

/// Flat key=value settings. Lines starting with '#' and blank lines are
/// ignored; keys are lower-case. Environment variables named
/// <prefix><KEY upper-cased> override file values.
class Settings {
public:
    Settings() = default;

    static Settings parse(std::string_view text, std::string_view origin = "<string>");
    static Settings load(const std::filesystem::path& path);

    /// Applies every <prefix>* environment variable.
    void apply_env(std::string_view prefix = "RAGQA_");
    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

    std::optional<std::string> get(std::string_view key) const;
    std::string get_or(std::string_view key, std::string fallback) const;
    /// Throws ConfigError on a malformed value.
    std::size_t get_size(std::string_view key, std::size_t fallback) const;
    double get_double(std::string_view key, double fallback) const;

    const std::map<std::string, std::string, std::less<>>& values() const { return values_; }
    /// Values with keys containing "key", "secret" or "token" masked.
    json to_json() const;

private:
    std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace ragqa
