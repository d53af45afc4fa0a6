// irisseg: evaluate masks, train the surrogate network, generate synthetic
// data, verify loss gradients and render metric tables.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error,
// 3 verification failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "irisseg/config.hpp"
#include "irisseg/dataset_io.hpp"
#include "irisseg/gradcheck.hpp"
#include "irisseg/image_io.hpp"
#include "irisseg/metrics.hpp"
#include "irisseg/report.hpp"
#include "irisseg/synthgen.hpp"
#include "irisseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace irisseg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kVerify = 3 };

ReportFormat parse_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    if (s == "table") return ReportFormat::table;
    throw ConfigError("unknown format '" + s + "' (expected csv, table or json)");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    detail::require_data(static_cast<bool>(out), "cannot write " + path.string());
    out << text;
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
    detail::require_data(fs::is_directory(dir), dir.string() + " is not a directory");
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_supported_image(e.path())) {
            const auto [it, fresh] = out.emplace(e.path().stem().string(), e.path());
            detail::require_data(fresh, "two files share the stem '" + it->first + "' in " + dir.string());
        }
    return out;
}

struct EvaluateArgs {
    std::string pred, truth, out, format = "table", aggregation = "pooled", label;
    double tolerance = -1.0;
    bool strict_masks = true;
    bool skip_unpaired = false;
};

int run_evaluate(const EvaluateArgs& a) {
    EvaluationOptions opt;
    opt.tolerance = a.tolerance;
    opt.aggregation = detail::parse_aggregation(a.aggregation);
    const auto format = parse_format(a.format);

    const auto preds = images_by_stem(a.pred);
    const auto truths = images_by_stem(a.truth);
    std::vector<std::string> unpaired;
    for (const auto& [stem, path] : preds)
        if (!truths.count(stem)) unpaired.push_back(path.string());
    for (const auto& [stem, path] : truths)
        if (!preds.count(stem)) unpaired.push_back(path.string());
    if (!unpaired.empty()) {
        for (const auto& p : unpaired) std::cerr << "unpaired: " << p << '\n';
        if (!a.skip_unpaired) {
            std::cerr << unpaired.size() << " unpaired file(s); pass --skip-unpaired to ignore them\n";
            return kData;
        }
    }

    const ClassSpec spec;
    std::vector<std::string> stems;
    std::vector<MaskPair> pairs;
    std::ostringstream per_image;
    per_image << "file," << kCsvHeader << ",error\n";
    for (const auto& [stem, pred_path] : preds) {
        const auto t = truths.find(stem);
        if (t == truths.end()) continue;
        MaskPair pair{load_mask(t->second, spec, a.strict_masks), load_mask(pred_path, spec, a.strict_masks)};
        if (!pair.truth.same_shape(pair.pred)) {
            per_image << stem << ",,,,,,dimension mismatch\n";
            std::cerr << stem << ": truth and prediction dimensions differ, skipped\n";
            continue;
        }
        const auto r = image_report(pair.truth, pair.pred, opt);
        per_image << stem;
        for (double v : headline(r)) per_image << ',' << percent(v);
        per_image << ",\n";
        stems.push_back(stem);
        pairs.push_back(std::move(pair));
    }
    detail::require_data(!pairs.empty(), "no usable mask pairs");

    const auto summary = dataset_report(pairs, opt);
    std::cout << render({{a.label, summary}}, format, a.label.empty() ? "" : "Loss Function");
    if (!a.out.empty()) write_text(a.out, per_image.str());
    return kOk;
}

struct TrainArgs {
    std::string config, data, out, format = "table", aggregation;
    std::optional<std::uint64_t> seed;
    std::optional<double> tolerance;
    bool strict_masks = true;
};

int run_train(const TrainArgs& a) {
    RunConfig rc = load_config(a.config);
    if (a.seed) rc.training.seed = *a.seed;
    if (a.tolerance) rc.training.evaluation.tolerance = *a.tolerance;
    if (!a.aggregation.empty()) rc.training.evaluation.aggregation = detail::parse_aggregation(a.aggregation);
    if (!a.data.empty()) rc.data_dir = std::filesystem::absolute(a.data);
    if (!a.out.empty()) rc.output_dir = std::filesystem::absolute(a.out);
    detail::require_config(!rc.data_dir.empty(), "no dataset directory (config key 'data' or --data)");
    if (rc.output_dir.empty()) rc.output_dir = "train_out";
    const auto format = parse_format(a.format);
    rc.training.validate();

    const auto data = read_dataset(rc.data_dir, a.strict_masks);
    const auto result = train(data, rc.training, [](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << "  loss " << e.loss << "  val MeanIoU " << e.val_mean_iou << '\n';
    });
    for (const auto& w : result.log.warnings) std::cerr << "warning: " << w << '\n';

    fs::create_directories(rc.output_dir);
    result.net.save(rc.output_dir / "checkpoint.txt");
    write_text(rc.output_dir / "training_log.csv", result.log.to_csv());
    write_text(rc.output_dir / "config.txt", render_config(rc));
    const std::vector<LabeledReport> rows{{std::string(loss_label(rc.training.loss.variant)), result.log.test_report}};
    const std::string report = render(rows, format);
    const char* ext = format == ReportFormat::json ? "json" : format == ReportFormat::csv ? "csv" : "txt";
    write_text(rc.output_dir / (std::string("report.") + ext), report);
    std::cout << report;
    return kOk;
}

struct GenerateArgs {
    std::string out, image_format = "png";
    std::size_t count = 200, subjects = 10, size = 64;
    std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
    detail::require_config(a.image_format == "png" || a.image_format == "pgm", "image format must be png or pgm");
    const auto samples = generate_dataset(a.count, a.subjects, a.seed, a.size, a.size);
    write_dataset(a.out, samples, "." + a.image_format);
    std::cout << "wrote " << samples.size() << " samples from " << a.subjects << " subjects to " << a.out << '\n';
    return kOk;
}

int run_loss_check(std::uint64_t seed, std::size_t instances, double perturb) {
    GradCheckOptions opt;
    opt.seed = seed;
    opt.instances = instances;
    opt.perturb_gradient = perturb;
    const auto rows = run_loss_check(opt);
    std::cout << render_loss_check(rows);
    return all_pass(rows) ? kOk : kVerify;
}

struct ReportArgs {
    std::vector<std::string> labels, values;
    std::string input, format = "table", label_header = "Loss Function";
};

MetricReport report_from_percentages(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(detail::parse_number<double>("values", detail::trim(item)));
    detail::require_config(v.size() == 5, "expected five comma-separated percentages, got '" + text + "'");
    MetricReport r;
    r.global_accuracy = v[0] / 100.0;
    r.mean_accuracy = v[1] / 100.0;
    r.mean_iou = v[2] / 100.0;
    r.weighted_iou = v[3] / 100.0;
    r.boundary_f1 = v[4] / 100.0;
    return r;
}

int run_report(const ReportArgs& a) {
    std::vector<LabeledReport> rows;
    if (!a.input.empty()) {
        // CSV as written by evaluate/train: optional label column + five metrics.
        std::ifstream in(a.input);
        detail::require_data(static_cast<bool>(in), "cannot open " + a.input);
        std::string line;
        std::getline(in, line);
        const bool labelled = line != kCsvHeader;
        detail::require_data(!labelled || line.ends_with(std::string(",") + std::string(kCsvHeader)),
                             a.input + ": unexpected header");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::string label;
            if (labelled) {
                const auto comma = line.find(',');
                label = line.substr(0, comma);
                line.erase(0, comma + 1);
            }
            rows.push_back({label, report_from_percentages(line)});
        }
    }
    detail::require_config(a.labels.size() == a.values.size() || a.labels.empty(),
                           "give one --label per --values or none");
    for (std::size_t i = 0; i < a.values.size(); ++i)
        rows.push_back({a.labels.empty() ? std::string() : a.labels[i], report_from_percentages(a.values[i])});
    detail::require_config(!rows.empty(), "nothing to report (use --values or --input)");
    std::cout << render(rows, parse_format(a.format), a.label_header);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segmentation metrics, loss verification and surrogate training"};
    app.require_subcommand(1);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
    evaluate->add_option("--pred", ev.pred, "Directory of predicted masks")->required();
    evaluate->add_option("--truth", ev.truth, "Directory of ground-truth masks")->required();
    evaluate->add_option("--out", ev.out, "Write per-image CSV here");
    evaluate->add_option("--format", ev.format, "csv, table or json");
    evaluate->add_option("--tolerance", ev.tolerance, "Boundary F1 tolerance in pixels (default: 0.75% of diagonal)");
    evaluate->add_option("--aggregation", ev.aggregation, "pooled or per-image");
    evaluate->add_option("--label", ev.label, "Row label for the summary");
    evaluate->add_option("--strict-masks", ev.strict_masks, "Reject mask values 1..127 (true/false)");
    evaluate->add_flag("--skip-unpaired", ev.skip_unpaired, "Ignore files without a counterpart");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train the surrogate network from a config file");
    train_cmd->add_option("--config", tr.config, "Experiment config file")->required();
    train_cmd->add_option("--data", tr.data, "Dataset directory (overrides config)");
    train_cmd->add_option("--out", tr.out, "Output directory (overrides config)");
    train_cmd->add_option("--seed", tr.seed, "Seed (overrides config)");
    train_cmd->add_option("--format", tr.format, "csv, table or json");
    train_cmd->add_option("--tolerance", tr.tolerance, "Boundary F1 tolerance in pixels");
    train_cmd->add_option("--aggregation", tr.aggregation, "pooled or per-image");
    train_cmd->add_option("--strict-masks", tr.strict_masks, "Reject mask values 1..127 (true/false)");

    GenerateArgs gen;
    auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic image/mask dataset");
    generate_cmd->add_option("--out", gen.out, "Output directory")->required();
    generate_cmd->add_option("--count", gen.count, "Number of samples");
    generate_cmd->add_option("--subjects", gen.subjects, "Number of subjects");
    generate_cmd->add_option("--seed", gen.seed, "Seed");
    generate_cmd->add_option("--size", gen.size, "Image side length in pixels");
    generate_cmd->add_option("--image-format", gen.image_format, "png or pgm");

    std::uint64_t check_seed = 0;
    std::size_t check_instances = 100;
    double perturb = 0.0;
    auto* check = app.add_subcommand("loss-check", "Finite-difference check of every loss gradient");
    check->add_option("--seed", check_seed, "Seed");
    check->add_option("--instances", check_instances, "Random instances per loss");
    check->add_option("--perturb-gradient", perturb, "Test hook: offset added to analytic gradients");

    ReportArgs rep;
    auto* report = app.add_subcommand("report", "Render metric rows given as percentages");
    report->add_option("--label", rep.labels, "Row label (repeatable)");
    report->add_option("--values", rep.values, "Five percentages: global,mean acc,mean IoU,weighted IoU,BF");
    report->add_option("--input", rep.input, "CSV written by evaluate or train");
    report->add_option("--format", rep.format, "csv, table or json");
    report->add_option("--label-header", rep.label_header, "Header of the label column");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*evaluate) return run_evaluate(ev);
        if (*train_cmd) return run_train(tr);
        if (*generate_cmd) return run_generate(gen);
        if (*check) return run_loss_check(check_seed, check_instances, perturb);
        if (*report) return run_report(rep);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
