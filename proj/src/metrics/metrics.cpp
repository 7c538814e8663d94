#include "openrgbt/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "openrgbt/error.hpp"
#include "openrgbt/segmentation.hpp"

namespace openrgbt {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, int ignore_index)
    : k_(num_classes), ignore_(ignore_index), counts_(num_classes * (num_classes + 1), 0) {}

std::uint64_t ConfusionMatrix::gt_total(std::size_t k) const {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p <= k_; ++p) {
        n += at(k, p);
    }
    return n;
}

std::uint64_t ConfusionMatrix::false_negatives(std::size_t k) const { return gt_total(k) - true_positives(k); }

std::uint64_t ConfusionMatrix::false_positives(std::size_t k) const {
    std::uint64_t n = 0;
    for (std::size_t g = 0; g < k_; ++g) {
        if (g != k) {
            n += at(g, k);
        }
    }
    return n;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto c : counts_) {
        n += c;
    }
    return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.k_ != k_ || other.ignore_ != ignore_) {
        throw DimensionMismatch("cannot add confusion matrices of different shape");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        counts_[i] += other.counts_[i];
    }
    return *this;
}

nlohmann::json ConfusionMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t g = 0; g < k_; ++g) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p <= k_; ++p) {
            row.push_back(at(g, p));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

ConfusionMatrix confusion(const Raster& pred, const Raster& gt, std::size_t num_classes, int ignore_index) {
    if (!same_dims(pred, gt) || pred.channels() != 1 || gt.channels() != 1) {
        throw DimensionMismatch("prediction and ground truth must be single-channel maps of equal size");
    }
    ConfusionMatrix cm(num_classes, ignore_index);
    const auto p = pred.samples();
    const auto g = gt.samples();
    // Tally into a flat table first; bounds are checked per pixel.
    for (std::size_t i = 0; i < g.size(); ++i) {
        const int gv = g[i];
        if (gv == ignore_index) {
            continue;
        }
        if (static_cast<std::size_t>(gv) >= num_classes) {
            throw InvalidInput("ground-truth label " + std::to_string(gv) + " outside the vocabulary");
        }
        const int pv = p[i];
        std::size_t column;
        if (pv == kUnlabeled) {
            column = num_classes;
        } else if (static_cast<std::size_t>(pv) < num_classes) {
            column = static_cast<std::size_t>(pv);
        } else {
            throw InvalidInput("predicted label " + std::to_string(pv) + " outside the vocabulary");
        }
        cm.add(static_cast<std::size_t>(gv), column);
    }
    return cm;
}

namespace {

template <typename Ratio>
ClassScores per_class_scores(const ConfusionMatrix& cm, Ratio ratio) {
    ClassScores out;
    out.per_class.resize(cm.num_classes());
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < cm.num_classes(); ++k) {
        if (cm.gt_total(k) == 0) {
            continue;
        }
        const double v = 100.0 * ratio(k);
        out.per_class[k] = v;
        sum += v;
        ++present;
    }
    if (present > 0) {
        out.mean = sum / static_cast<double>(present);
    }
    return out;
}

} // namespace

ClassScores miou(const ConfusionMatrix& cm) {
    return per_class_scores(cm, [&](std::size_t k) {
        const double tp = static_cast<double>(cm.true_positives(k));
        return tp / (tp + static_cast<double>(cm.false_positives(k)) + static_cast<double>(cm.false_negatives(k)));
    });
}

ClassScores macc(const ConfusionMatrix& cm) {
    return per_class_scores(cm, [&](std::size_t k) {
        return static_cast<double>(cm.true_positives(k)) / static_cast<double>(cm.gt_total(k));
    });
}

namespace {

ConditionReport make_condition(const ConfusionMatrix& cm, std::size_t samples) {
    return ConditionReport{cm, miou(cm), macc(cm), samples};
}

nlohmann::json optional_list(const std::vector<std::optional<double>>& values) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : values) {
        out.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    }
    return out;
}

nlohmann::json condition_json(const ConditionReport& r) {
    return {
        {"samples", r.samples},
        {"evaluated_pixels", r.confusion.total()},
        {"miou", r.iou.mean ? nlohmann::json(*r.iou.mean) : nlohmann::json(nullptr)},
        {"macc", r.accuracy.mean ? nlohmann::json(*r.accuracy.mean) : nlohmann::json(nullptr)},
        {"per_class_iou", optional_list(r.iou.per_class)},
        {"per_class_acc", optional_list(r.accuracy.per_class)},
        {"confusion", r.confusion.to_json()},
    };
}

std::string fmt_pct(const std::optional<double>& v) {
    if (!v) {
        return "-";
    }
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << *v;
    return s.str();
}

} // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json conds = nlohmann::json::object();
    for (const auto& [name, r] : conditions) {
        conds[name] = condition_json(r);
    }
    nlohmann::json doc = {
        {"classes", classes},
        {"ignore_index", ignore_index},
        {"samples", samples},
        {"skipped", skipped},
        {"overall", condition_json(overall)},
        {"conditions", conds},
    };
    if (!has_evaluated_pixels()) {
        doc["warning"] = "no evaluated pixels";
    }
    return doc;
}

std::string EvalReport::to_table() const {
    std::vector<std::string> header{"condition", "samples", "mAcc", "mIoU"};
    for (const auto& c : classes) {
        header.push_back(c);
    }
    std::vector<std::vector<std::string>> rows;
    auto add_row = [&](const std::string& name, const ConditionReport& r) {
        std::vector<std::string> row{name, std::to_string(r.samples), fmt_pct(r.accuracy.mean), fmt_pct(r.iou.mean)};
        for (const auto& v : r.iou.per_class) {
            row.push_back(fmt_pct(v));
        }
        rows.push_back(std::move(row));
    };
    for (const auto& [name, r] : conditions) {
        add_row(name, r);
    }
    add_row("overall", overall);

    std::vector<std::size_t> widths(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        widths[c] = header[c].size();
        for (const auto& row : rows) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) {
                out << std::left << std::setw(static_cast<int>(widths[c])) << row[c];
            } else {
                out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << row[c];
            }
        }
        out << '\n';
    };
    emit(header);
    std::size_t total_width = 0;
    for (const auto w : widths) {
        total_width += w + 2;
    }
    out << std::string(total_width - 2, '-') << '\n';
    for (const auto& row : rows) {
        emit(row);
    }
    if (!has_evaluated_pixels()) {
        out << "(no evaluated pixels)\n";
    }
    out << "(per-class columns are IoU %; ignore_index = " << ignore_index << ")\n";
    return out.str();
}

Evaluator::Evaluator(const Vocabulary& vocab, int ignore_index)
    : classes_(vocab.names()), ignore_(ignore_index), overall_(vocab.size(), ignore_index) {}

bool Evaluator::add(const Raster& pred, const Raster& gt, const std::string& condition) {
    if (!same_dims(pred, gt)) {
        ++skipped_;
        return false;
    }
    add(confusion(pred, gt, classes_.size(), ignore_), condition);
    return true;
}

void Evaluator::add(const ConfusionMatrix& cm, const std::string& condition) {
    overall_ += cm;
    ++samples_;
    if (!condition.empty()) {
        auto [it, inserted] =
            conditions_.try_emplace(condition, ConfusionMatrix(classes_.size(), ignore_), std::size_t{0});
        it->second.first += cm;
        ++it->second.second;
    }
}

EvalReport Evaluator::report() const {
    EvalReport r;
    r.classes = classes_;
    r.ignore_index = ignore_;
    r.samples = samples_;
    r.skipped = skipped_;
    r.overall = make_condition(overall_, samples_);
    for (const auto& [name, entry] : conditions_) {
        r.conditions.emplace(name, make_condition(entry.first, entry.second));
    }
    return r;
}

EvalReport evaluate_run(std::span<const EvalSample> samples, const Vocabulary& vocab, int ignore_index) {
    Evaluator eval(vocab, ignore_index);
    for (const auto& s : samples) {
        eval.add(s.pred, s.gt, s.condition);
    }
    return eval.report();
}

} // namespace openrgbt
