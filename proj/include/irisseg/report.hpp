#pragma once

// Report rendering. Percentages always carry two decimals; the column order
// is Global Accuracy, Mean Accuracy, Mean IoU, Weighted IoU, Boundary F1.

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "metrics.hpp"

namespace irisseg {

inline constexpr std::string_view kCsvHeader = "GlobalAccuracy,MeanAccuracy,MeanIoU,WeightedIoU,BoundaryF1";

inline constexpr std::array<std::string_view, 5> kTableHeaders = {
    "Global Accuracy (%)", "Mean Accuracy (%)", "Mean IoU (%)", "Weighted IoU (%)", "F1 Score (%)"};

enum class ReportFormat { csv, table, json };

struct LabeledReport {
    std::string label;
    MetricReport report;
};

inline std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

inline std::array<double, 5> headline(const MetricReport& r) {
    return {r.global_accuracy, r.mean_accuracy, r.mean_iou, r.weighted_iou, r.boundary_f1};
}

namespace detail {

// Display width of UTF-8 text (continuation bytes do not advance).
inline std::size_t display_width(std::string_view s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

inline void pad_right(std::ostringstream& os, std::string_view s, std::size_t width) {
    os << s;
    for (std::size_t w = display_width(s); w < width; ++w) os << ' ';
}

inline void pad_left(std::ostringstream& os, std::string_view s, std::size_t width) {
    for (std::size_t w = display_width(s); w < width; ++w) os << ' ';
    os << s;
}

}  // namespace detail

/// CSV with exactly the five metric columns; a leading label column is added
/// when `label_header` is non-empty.
inline std::string render_csv(const std::vector<LabeledReport>& rows, std::string_view label_header = {}) {
    std::ostringstream os;
    if (!label_header.empty()) os << label_header << ',';
    os << kCsvHeader << '\n';
    for (const auto& row : rows) {
        if (!label_header.empty()) os << row.label << ',';
        const auto v = headline(row.report);
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << percent(v[i]);
        os << '\n';
    }
    return os.str();
}

/// Aligned plain-text table in the layout of a results table: label column
/// left-aligned, metric columns right-aligned under their headers.
inline std::string render_table(const std::vector<LabeledReport>& rows, std::string_view label_header = "Loss Function") {
    std::size_t label_width = detail::display_width(label_header);
    for (const auto& row : rows) label_width = std::max(label_width, detail::display_width(row.label));
    std::ostringstream os;
    detail::pad_right(os, label_header, label_width);
    for (auto h : kTableHeaders) os << "  " << h;
    os << '\n';
    for (const auto& row : rows) {
        detail::pad_right(os, row.label, label_width);
        const auto v = headline(row.report);
        for (std::size_t i = 0; i < v.size(); ++i) {
            os << "  ";
            detail::pad_left(os, percent(v[i]), kTableHeaders[i].size());
        }
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const MetricReport& r) {
    auto per_class = [](const ClassValues& values) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : values) arr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        return arr;
    };
    return {{"GlobalAccuracy", r.global_accuracy},
            {"MeanAccuracy", r.mean_accuracy},
            {"MeanIoU", r.mean_iou},
            {"WeightedIoU", r.weighted_iou},
            {"BoundaryF1", r.boundary_f1},
            {"PerClassIoU", per_class(r.per_class_iou)},
            {"PerClassAccuracy", per_class(r.per_class_accuracy)}};
}

inline std::string render_json(const std::vector<LabeledReport>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) {
        auto j = to_json(row.report);
        j["label"] = row.label;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

inline std::string render(const std::vector<LabeledReport>& rows, ReportFormat format,
                          std::string_view label_header = "Loss Function") {
    switch (format) {
        case ReportFormat::csv: return render_csv(rows, rows.size() == 1 && rows[0].label.empty() ? "" : label_header);
        case ReportFormat::table: return render_table(rows, label_header);
        case ReportFormat::json: return render_json(rows);
    }
    return {};
}

}  // namespace irisseg
