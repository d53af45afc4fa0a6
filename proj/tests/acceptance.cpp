// Acceptance run: one PASS/FAIL line per criterion, preceded by indented
// detail lines.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "irisseg/gradcheck.hpp"
#include "irisseg/losses.hpp"
#include "irisseg/metrics.hpp"
#include "irisseg/report.hpp"
#include "irisseg/synthgen.hpp"
#include "irisseg/trainer.hpp"
#include "oracles.hpp"

using namespace irisseg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string summary;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// 1. Confusion metrics against per-pixel counting.
Outcome metric_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(101);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto truth = oracle::random_mask(gen, 16, 16);
        const auto pred = i % 3 == 0 ? oracle::random_blob(gen, 16, 16) : oracle::random_mask(gen, 16, 16);
        const auto k = oracle::count_pixels({{truth, pred}}, 2);
        const auto cm = confusion_of(truth, pred);
        auto diff = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
        diff(global_accuracy(cm), k.correct / k.total);
        diff(mean_accuracy(cm), oracle::mean_accuracy(k));
        diff(mean_iou(cm), oracle::mean_iou(k));
        diff(weighted_iou(cm), oracle::weighted_iou(k));
        const auto iou = per_class_iou(cm);
        for (std::size_t c = 0; c < 2; ++c) {
            const double uni = k.truth[c] + k.pred[c] - k.inter[c];
            if (uni > 0) diff(iou[c].value_or(-1.0), k.inter[c] / uni);
            else worst = std::max(worst, iou[c] ? 1.0 : 0.0);
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0, fmt("max |lib - oracle| = %.3g over 200 pairs, %.3f s", worst, secs)};
}

// 2. Identities at a perfect prediction.
Outcome perfect_prediction() {
    std::mt19937_64 gen(202);
    bool ok = true;
    double worst_dice = 0.0, worst_grad = 0.0, worst_lovasz = 0.0, worst_ce = 0.0;
    const std::pair<std::size_t, std::size_t> sizes[] = {{16, 16}, {64, 64}, {7, 31}, {64, 64}};
    for (int i = 0; i < 40; ++i) {
        const auto [h, w] = sizes[i % 4];
        LabelMask m = i % 2 ? oracle::random_blob(gen, h, w) : oracle::random_mask(gen, h, w);
        if (i == 3) m = LabelMask(h, w, kBackground);  // single class
        const auto report = image_report(m, m);
        for (double v : headline(report)) ok = ok && percent(v) == "100.00";

        const auto y = one_hot<double>(m, ClassSpec{});
        const auto dice = generalized_dice_loss(y, m);
        worst_dice = std::max(worst_dice, std::abs(dice.value));
        for (double g : dice.grad.values()) worst_grad = std::max(worst_grad, std::abs(g));
        worst_lovasz = std::max(worst_lovasz, std::abs(lovasz_softmax_loss(y, m).value));

        ProbMap<double> clamped = y;
        for (auto& v : clamped.values()) v = std::clamp(v, 1e-8, 1.0 - 1e-8);
        worst_ce = std::max(worst_ce, cross_entropy_loss(clamped, m).value);
    }
    ok = ok && worst_dice <= 1e-6 && worst_grad <= 1e-5 && worst_lovasz == 0.0 && worst_ce <= 1e-6;
    return {ok, fmt("metrics all 100.00; dice %.2g, |grad| %.2g, lovasz %.2g, CE %.2g", worst_dice, worst_grad,
                    worst_lovasz, worst_ce)};
}

// 3. Finite-difference certification of every loss.
Outcome gradient_certification() {
    const auto t0 = Clock::now();
    const auto rows = run_loss_check({});
    const double secs = seconds_since(t0);
    std::istringstream table(render_loss_check(rows));
    for (std::string line; std::getline(table, line);) std::cout << "    " << line << '\n';
    return {all_pass(rows) && secs < 30.0, fmt("%zu variants, %.2f s", rows.size(), secs)};
}

// 4. Hand-computed Dice value and exact signed distances.
Outcome hand_values() {
    ProbMap<double> y(1, 2, 2);
    y.at(0, 0) = 0.2, y.at(1, 0) = 0.8;
    y.at(0, 1) = 0.8, y.at(1, 1) = 0.2;
    LabelMask t(1, 2);
    t[0] = kIris;
    t[1] = kBackground;
    const double err = std::abs(generalized_dice_loss(y, t).value - (1.0 - 3.2 / 3.36));

    std::mt19937_64 gen(404);
    int exact = 0, checked = 0;
    for (int i = 0; i < 50; ++i) {
        const auto m = oracle::random_blob(gen, 16, 16);
        const auto expected = oracle::signed_distance(m, kIris);
        const auto sdm = signed_distance_transform(m, kIris);
        if (!expected) {
            exact += sdm.degenerate;
            ++checked;
            continue;
        }
        ++checked;
        exact += !sdm.degenerate && std::equal(expected->begin(), expected->end(), sdm.phi.values().begin());
    }
    return {err <= 1e-9 && exact == checked,
            fmt("dice error %.3g; signed distance exact on %d/%d blobs", err, exact, checked)};
}

struct VariantRun {
    LossKind kind;
    TrainingLog log;
    double seconds = 0.0;
};

TrainingConfig acceptance_config(LossKind kind) {
    TrainingConfig cfg;  // optimizer defaults: lr 0.001, momentum 0.9, l2 0.0005, 100 epochs
    cfg.loss.variant = kind;
    cfg.seed = 2024;
    // The hybrid starts from pure Dice and blends the boundary term in.
    cfg.anneal_alpha = kind == LossKind::boundary_dice;
    return cfg;
}

// 5. Desk-scale training of every variant.
Outcome desk_training(const std::filesystem::path& out_dir) {
    const auto data = generate_dataset(200, 10, 2024);
    std::vector<VariantRun> runs;
    const auto t0 = Clock::now();
    bool all_reach = true;
    for (auto kind : kAllLosses) {
        const auto t1 = Clock::now();
        auto result = train(data, acceptance_config(kind));
        runs.push_back({kind, std::move(result.log), seconds_since(t1)});
        const auto& r = runs.back();
        const auto& first = r.log.epochs.front();
        const auto& last = r.log.epochs.back();
        const bool reach = r.log.test_report.mean_iou >= 0.85;
        all_reach = all_reach && reach;
        std::cout << fmt("    %-16s test MeanIoU %.4f  BF %.4f  loss %.4g -> %.4g  %.1f s  %s\n",
                         std::string(loss_key(kind)).c_str(), r.log.test_report.mean_iou, r.log.test_report.boundary_f1,
                         first.loss, last.loss, r.seconds, reach ? "ok" : "below 0.85");
        std::cout.flush();
    }
    const double total = seconds_since(t0);

    std::vector<LabeledReport> rows;
    for (const auto& r : runs) rows.push_back({std::string(loss_label(r.kind)), r.log.test_report});
    const std::string table = render_table(rows);
    std::istringstream lines(table);
    for (std::string line; std::getline(lines, line);) std::cout << "    " << line << '\n';

    const auto& dice = runs[0].log.test_report;
    const auto& hybrid = runs[5].log.test_report;
    std::ostringstream side;
    side << "Results table (surrogate network, synthetic data, test split)\n\n" << table << '\n';
    side << render_table({{"Dice", dice}, {"Boundary Dice", hybrid}});
    side << fmt("\nMeanIoU:    Dice %.2f  Boundary Dice %.2f\nBoundaryF1: Dice %.2f  Boundary Dice %.2f\n",
                100 * dice.mean_iou, 100 * hybrid.mean_iou, 100 * dice.boundary_f1, 100 * hybrid.boundary_f1);
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "results_table.txt") << side.str();
    std::cout << fmt("    Dice vs Boundary Dice: MeanIoU %.2f vs %.2f, BF %.2f vs %.2f (written to %s)\n",
                     100 * dice.mean_iou, 100 * hybrid.mean_iou, 100 * dice.boundary_f1, 100 * hybrid.boundary_f1,
                     (out_dir / "results_table.txt").string().c_str());

    int reached = 0;
    for (const auto& r : runs) reached += r.log.test_report.mean_iou >= 0.85;
    return {all_reach && total <= 900.0,
            fmt("%d/6 variants reach MeanIoU >= 0.85; total %.1f s (limit 900 s)", reached, total)};
}

// 6. Two identical runs agree byte for byte.
Outcome determinism() {
    const auto data = generate_dataset(200, 10, 2024);
    auto cfg = acceptance_config(LossKind::boundary_dice);
    cfg.epochs = 4;
    auto once = [&] {
        const auto r = train(data, cfg);
        std::ostringstream ckpt;
        r.net.save(ckpt);
        return std::make_tuple(r.log.to_csv(), render_csv({{"Boundary Dice", r.log.test_report}}, "Loss Function"),
                               render_json({{"Boundary Dice", r.log.test_report}}), ckpt.str());
    };
    const auto a = once();
    const auto b = once();
    return {a == b, a == b ? "log CSV, reports and checkpoint identical across two runs" : "runs differ"};
}

// 7. Subject-disjoint split sizes.
Outcome split_contract() {
    std::vector<int> ids;
    for (int s = 0; s < 17; ++s)
        for (int k = 0; k < 4; ++k) ids.push_back(s);
    int good = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = subject_disjoint_split(ids, 14.0 / 17.0, seed);
        std::vector<int> both;
        std::set_intersection(s.train_subjects.begin(), s.train_subjects.end(), s.test_subjects.begin(),
                              s.test_subjects.end(), std::back_inserter(both));
        good += s.train_subjects.size() == 14 && s.test_subjects.size() == 3 && both.empty();
    }
    return {good == 100, fmt("%d/100 seeds give 14/3 disjoint subjects", good)};
}

// 8. Rendering of the best published row.
Outcome report_fidelity() {
    MetricReport r;
    r.global_accuracy = 0.9957;
    r.mean_accuracy = 0.9840;
    r.mean_iou = 0.9554;
    r.weighted_iou = 0.9822;
    r.boundary_f1 = 0.9305;
    std::ifstream in(std::filesystem::path(IRISSEG_GOLDEN_DIR) / "best_row_boundary_dice.txt");
    std::ostringstream golden;
    golden << in.rdbuf();
    const std::string rendered = render_table({{"Boundary Dice", r}});
    std::istringstream lines(rendered);
    for (std::string line; std::getline(lines, line);) std::cout << "    " << line << '\n';
    return {!golden.str().empty() && rendered == golden.str(), "rendered table matches golden file"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::filesystem::path out_dir = argc > 1 ? argv[1] : "acceptance_out";
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 metric oracle equivalence", metric_oracle},
        {"2 perfect-prediction identities", perfect_prediction},
        {"3 gradient certification", gradient_certification},
        {"4 hand values and exact signed distance", hand_values},
        {"5 desk-scale training", [&] { return desk_training(out_dir); }},
        {"6 determinism", determinism},
        {"7 split contract", split_contract},
        {"8 report fidelity", report_fidelity},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.summary << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << '\n';
    return failed ? 1 : 0;
}
