#pragma once

// Training loop for TinySegNet: subject-disjoint split, shuffled mini-batches
// with augmentation, SGD, per-epoch validation and a final test report.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "augment.hpp"
#include "error.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "random.hpp"
#include "segnet.hpp"
#include "sgd.hpp"
#include "synthgen.hpp"

namespace irisseg {

struct SplitResult {
    std::vector<std::size_t> train;  // item indices, original order
    std::vector<std::size_t> test;
    std::vector<int> train_subjects;  // sorted
    std::vector<int> test_subjects;
};

/// Partitions subjects (not items): round(ratio * #subjects) subjects go to
/// train, clamped so both sides keep at least one.
inline SplitResult subject_disjoint_split(std::span<const int> subject_of_item, double ratio, std::uint64_t seed) {
    detail::require_config(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1)");
    std::vector<int> subjects(subject_of_item.begin(), subject_of_item.end());
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    detail::require_data(subjects.size() >= 2, "subject-disjoint split needs at least 2 subjects");

    const auto count = static_cast<long>(subjects.size());
    const long n_train = std::clamp(std::lround(ratio * double(count)), 1L, count - 1);
    Rng rng(seed, 0x5B1);
    rng.shuffle(std::span(subjects));

    SplitResult out;
    out.train_subjects.assign(subjects.begin(), subjects.begin() + n_train);
    out.test_subjects.assign(subjects.begin() + n_train, subjects.end());
    std::sort(out.train_subjects.begin(), out.train_subjects.end());
    std::sort(out.test_subjects.begin(), out.test_subjects.end());
    for (std::size_t i = 0; i < subject_of_item.size(); ++i) {
        const bool train = std::binary_search(out.train_subjects.begin(), out.train_subjects.end(), subject_of_item[i]);
        (train ? out.train : out.test).push_back(i);
    }
    return out;
}

struct TrainingConfig {
    std::size_t epochs = 100;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double l2 = 0.0005;
    std::size_t batch_size = 8;
    LossSpec loss;
    std::uint64_t seed = 0;
    double split_ratio = 14.0 / 17.0;
    /// Training subjects held back for per-epoch validation. With 0 the
    /// un-augmented training images are scored instead.
    std::size_t validation_subjects = 1;
    bool augment = true;
    AugmentationRanges augmentation;
    /// Composite losses only: ramp the Dice weight linearly from 1 at the
    /// first epoch to loss.alpha at the last.
    bool anneal_alpha = false;
    SegNetTopology topology;
    EvaluationOptions evaluation;

    SgdConfig sgd() const { return {learning_rate, momentum, l2}; }

    void validate() const {
        detail::require_config(epochs >= 1, "epochs must be at least 1");
        detail::require_config(batch_size >= 1, "batch size must be at least 1");
        detail::require_config(split_ratio > 0.0 && split_ratio < 1.0, "split ratio must lie in (0, 1)");
        sgd().validate();
        loss.validate();
        augmentation.validate();
        detail::require_config(topology.classes == evaluation.num_classes,
                               "network classes and evaluation classes differ");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double val_mean_iou = 0.0;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    MetricReport test_report;
    SplitResult split;
    std::vector<int> validation_subjects;
    std::vector<std::string> warnings;

    /// epoch,loss,val_mean_iou with fixed-width formatting.
    std::string to_csv() const {
        std::string out = "epoch,loss,val_mean_iou\n";
        char buf[96];
        for (const auto& e : epochs) {
            std::snprintf(buf, sizeof buf, "%zu,%.9g,%.6f\n", e.epoch, e.loss, e.val_mean_iou);
            out += buf;
        }
        return out;
    }
};

struct TrainingResult {
    TinySegNet<float> net;
    TrainingLog log;
};

namespace detail {

inline Image<float> to_float(const Image<double>& img) {
    Image<float> out(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(img[i]);
    return out;
}

inline double alpha_at(const TrainingConfig& cfg, std::size_t epoch) {
    if (!cfg.anneal_alpha || cfg.epochs == 1) return cfg.loss.alpha;
    const double t = double(epoch) / double(cfg.epochs - 1);
    return 1.0 + t * (cfg.loss.alpha - 1.0);
}

}  // namespace detail

inline LabelMask predict_mask(const TinySegNet<float>& net, const Image<double>& image) {
    return argmax_decode(net.predict(detail::to_float(image)));
}

/// Evaluates `net` on the given samples.
inline MetricReport evaluate_model(const TinySegNet<float>& net, std::span<const Sample> data,
                                   std::span<const std::size_t> indices, const EvaluationOptions& opt) {
    std::vector<MaskPair> pairs;
    pairs.reserve(indices.size());
    for (auto i : indices) pairs.push_back({data[i].mask, predict_mask(net, data[i].image)});
    return dataset_report(pairs, opt);
}

/// Per-epoch hook; receives the finished record.
using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainingResult train(std::span<const Sample> data, const TrainingConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    detail::require_data(!data.empty(), "training dataset is empty");

    TrainingLog log;
    {
        bool any[2] = {false, false};
        for (const auto& s : data)
            for (auto v : s.mask.values()) any[v == kBackground ? 0 : 1] = true;
        if (!any[0] || !any[1]) log.warnings.push_back("dataset masks contain a single class everywhere");
    }

    std::vector<int> subjects;
    for (const auto& s : data) subjects.push_back(s.subject);
    log.split = subject_disjoint_split(subjects, cfg.split_ratio, cfg.seed);
    detail::require_data(!log.split.train.empty() && !log.split.test.empty(), "split produced an empty side");

    // Validation subjects come from the training side; keep at least one
    // subject to train on.
    std::vector<std::size_t> fit = log.split.train, validation;
    const std::size_t n_val = std::min(cfg.validation_subjects, log.split.train_subjects.size() - 1);
    if (n_val > 0) {
        log.validation_subjects.assign(log.split.train_subjects.end() - long(n_val), log.split.train_subjects.end());
        fit.clear();
        for (auto i : log.split.train) {
            const bool val = std::find(log.validation_subjects.begin(), log.validation_subjects.end(), data[i].subject) !=
                             log.validation_subjects.end();
            (val ? validation : fit).push_back(i);
        }
    } else {
        validation = fit;
    }

    Rng rng(cfg.seed, 0x7A1);
    TinySegNet<float> net(cfg.topology);
    net.initialize(rng.derive());
    SgdState<float> state;
    const SgdConfig sgd = cfg.sgd();
    std::vector<float> grads(net.parameter_count());

    std::vector<Image<float>> images;
    images.reserve(data.size());
    for (const auto& s : data) images.push_back(detail::to_float(s.image));

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        LossSpec spec = cfg.loss;
        spec.alpha = detail::alpha_at(cfg, epoch);
        std::vector<std::size_t> order = fit;
        rng.shuffle(std::span(order));

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grads.begin(), grads.end(), 0.0f);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                const std::uint64_t aug_seed = rng.derive();
                ForwardCache<float> cache;
                LabelMask mask;
                if (cfg.augment) {
                    auto [img, m] = apply(images[i], data[i].mask, sample_params(aug_seed, cfg.augmentation));
                    cache = net.forward(img);
                    mask = std::move(m);
                } else {
                    cache = net.forward(images[i]);
                    mask = data[i].mask;
                }
                const auto loss = evaluate_loss(spec, cache.probs, mask);
                loss_sum += static_cast<double>(loss.value);
                net.backward(cache, loss.grad, grads);
            }
            sgd_step<float>(net.parameters(), grads, state, sgd);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.loss = loss_sum / double(order.size());
        rec.val_mean_iou = evaluate_model(net, data, validation, cfg.evaluation).mean_iou;
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    log.test_report = evaluate_model(net, data, log.split.test, cfg.evaluation);
    return {std::move(net), std::move(log)};
}

}  // namespace irisseg
