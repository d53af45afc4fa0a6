#pragma once

// Flat "key = value" experiment files. The first non-blank, non-comment line
// must be the version line "irisseg-config 1". '#' starts a comment.
//
//   irisseg-config 1
//   data = synth            # directory holding manifest.csv
//   loss = boundary_dice
//   epochs = 100

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "trainer.hpp"

namespace irisseg {

inline constexpr std::string_view kConfigVersionLine = "irisseg-config 1";

struct RunConfig {
    TrainingConfig training;
    std::filesystem::path data_dir;    // resolved against the config file's directory
    std::filesystem::path output_dir;  // likewise
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    require_config(ec == std::errc{} && ptr == text.data() + text.size(),
                   "config key '" + key + "': '" + text + "' is not a valid number");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

inline Aggregation parse_aggregation(const std::string& text) {
    if (text == "pooled") return Aggregation::pooled;
    if (text == "per-image" || text == "per_image") return Aggregation::per_image;
    throw ConfigError("unknown aggregation '" + text + "' (expected pooled or per-image)");
}

}  // namespace detail

/// Applies one key to the config. Unknown keys throw ConfigError.
inline void apply_config_key(RunConfig& rc, const std::string& key, const std::string& value,
                             const std::filesystem::path& base = {}) {
    using namespace detail;
    auto& t = rc.training;
    auto real = [&] { return parse_number<double>(key, value); };
    auto count = [&] { return parse_number<std::size_t>(key, value); };
    if (key == "data") rc.data_dir = base / value;
    else if (key == "out") rc.output_dir = base / value;
    else if (key == "epochs") t.epochs = count();
    else if (key == "learning_rate") t.learning_rate = real();
    else if (key == "momentum") t.momentum = real();
    else if (key == "l2") t.l2 = real();
    else if (key == "batch_size") t.batch_size = count();
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "split_ratio") t.split_ratio = real();
    else if (key == "validation_subjects") t.validation_subjects = count();
    else if (key == "loss") t.loss.variant = parse_loss_kind(value);
    else if (key == "alpha") t.loss.alpha = real();
    else if (key == "epsilon") t.loss.epsilon = real();
    else if (key == "anneal_alpha") t.anneal_alpha = parse_bool(key, value);
    else if (key == "augment") t.augment = parse_bool(key, value);
    else if (key == "scale_min") t.augmentation.scale_min = real();
    else if (key == "scale_max") t.augmentation.scale_max = real();
    else if (key == "translate") t.augmentation.translate = real();
    else if (key == "rotate") t.augmentation.rotate = real();
    else if (key == "reflect_probability") t.augmentation.reflect_probability = real();
    else if (key == "tolerance") t.evaluation.tolerance = real();
    else if (key == "aggregation") t.evaluation.aggregation = parse_aggregation(value);
    else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base = {}) {
    RunConfig rc;
    std::string line;
    bool versioned = false;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string text = detail::trim(line);
        if (text.empty()) continue;
        if (!versioned) {
            detail::require_config(text == kConfigVersionLine,
                                   "config must start with '" + std::string(kConfigVersionLine) + "'");
            versioned = true;
            continue;
        }
        const auto eq = text.find('=');
        detail::require_config(eq != std::string::npos,
                               "config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(text).substr(0, eq));
        const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
        detail::require_config(!key.empty() && !value.empty(),
                               "config line " + std::to_string(lineno) + ": empty key or value");
        detail::require_config(seen.insert(key).second, "config key '" + key + "' given twice");
        apply_config_key(rc, key, value, base);
    }
    detail::require_config(versioned, "config is empty");
    rc.training.validate();
    return rc;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    detail::require_config(static_cast<bool>(in), "cannot open config " + path.string());
    return parse_config(in, std::filesystem::absolute(path).parent_path());
}

/// Writes every key with its current value, suitable for parse_config.
inline std::string render_config(const RunConfig& rc) {
    const auto& t = rc.training;
    std::ostringstream os;
    os.precision(17);
    os << kConfigVersionLine << '\n';
    if (!rc.data_dir.empty()) os << "data = " << rc.data_dir.string() << '\n';
    if (!rc.output_dir.empty()) os << "out = " << rc.output_dir.string() << '\n';
    os << "loss = " << loss_key(t.loss.variant) << '\n'
       << "alpha = " << t.loss.alpha << '\n'
       << "epsilon = " << t.loss.epsilon << '\n'
       << "anneal_alpha = " << (t.anneal_alpha ? "true" : "false") << '\n'
       << "epochs = " << t.epochs << '\n'
       << "learning_rate = " << t.learning_rate << '\n'
       << "momentum = " << t.momentum << '\n'
       << "l2 = " << t.l2 << '\n'
       << "batch_size = " << t.batch_size << '\n'
       << "seed = " << t.seed << '\n'
       << "split_ratio = " << t.split_ratio << '\n'
       << "validation_subjects = " << t.validation_subjects << '\n'
       << "augment = " << (t.augment ? "true" : "false") << '\n'
       << "scale_min = " << t.augmentation.scale_min << '\n'
       << "scale_max = " << t.augmentation.scale_max << '\n'
       << "translate = " << t.augmentation.translate << '\n'
       << "rotate = " << t.augmentation.rotate << '\n'
       << "reflect_probability = " << t.augmentation.reflect_probability << '\n'
       << "tolerance = " << t.evaluation.tolerance << '\n'
       << "aggregation = " << (t.evaluation.aggregation == Aggregation::pooled ? "pooled" : "per-image") << '\n';
    return os.str();
}

}  // namespace irisseg
