#pragma once

// On-disk datasets: images/<file>, masks/<file> and a manifest.csv with
// columns filename,subject_id,seed.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "image_io.hpp"
#include "synthgen.hpp"

namespace irisseg {

inline constexpr std::string_view kManifestHeader = "filename,subject_id,seed";

struct ManifestEntry {
    std::string filename;
    int subject = 0;
    std::uint64_t seed = 0;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    detail::require_data(static_cast<bool>(in), "missing manifest " + path.string());
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    detail::require_data(line == kManifestHeader, path.string() + ": unexpected manifest header");
    std::vector<ManifestEntry> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        ManifestEntry e;
        std::string subject, seed;
        const bool ok = std::getline(row, e.filename, ',') && std::getline(row, subject, ',') && std::getline(row, seed);
        detail::require_data(ok && !e.filename.empty(),
                             path.string() + ":" + std::to_string(lineno) + ": malformed manifest row");
        try {
            std::size_t used = 0;
            e.subject = std::stoi(subject, &used);
            detail::require_data(used == subject.size(), "trailing characters");
            e.seed = std::stoull(seed, &used);
            detail::require_data(used == seed.size(), "trailing characters");
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed manifest row");
        }
        out.push_back(std::move(e));
    }
    detail::require_data(!out.empty(), path.string() + ": manifest lists no samples");
    return out;
}

/// Writes samples as <prefix><index>.<ext> pairs and the manifest.
inline void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                          const std::string& extension = ".png") {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::ofstream manifest(dir / "manifest.csv");
    detail::require_data(static_cast<bool>(manifest), "cannot write manifest in " + dir.string());
    manifest << kManifestHeader << '\n';
    char name[64];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof name, "s%03d_%05zu", samples[i].subject, i);
        const std::string file = name + extension;
        save_image(dir / "images" / file, samples[i].image);
        save_mask(dir / "masks" / file, samples[i].mask);
        manifest << file << ',' << samples[i].subject << ',' << samples[i].seed << '\n';
    }
}

inline std::vector<Sample> read_dataset(const std::filesystem::path& dir, bool strict_masks = true) {
    const auto entries = read_manifest(dir / "manifest.csv");
    std::vector<Sample> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        Sample s{load_image<double>(dir / "images" / e.filename), load_mask(dir / "masks" / e.filename, {}, strict_masks),
                 e.subject, e.seed};
        detail::require_data(s.image.same_shape(s.mask), e.filename + ": image and mask dimensions differ");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace irisseg
