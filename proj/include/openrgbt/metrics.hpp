#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "openrgbt/core.hpp"

namespace openrgbt {

/// Pixel counts indexed [ground truth][prediction]. Column K collects
/// unlabeled predictions (255) so they count as misses for their GT class.
class ConfusionMatrix {
  public:
    ConfusionMatrix() = default;
    ConfusionMatrix(std::size_t num_classes, int ignore_index);

    std::size_t num_classes() const noexcept { return k_; }
    int ignore_index() const noexcept { return ignore_; }

    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_.at(gt * (k_ + 1) + pred); }
    std::uint64_t void_predictions(std::size_t gt) const { return at(gt, k_); }
    void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1) { counts_.at(gt * (k_ + 1) + pred) += n; }

    std::uint64_t true_positives(std::size_t k) const { return at(k, k); }
    /// Pixels of GT class k predicted as anything else, void included.
    std::uint64_t false_negatives(std::size_t k) const;
    /// Pixels predicted as k whose GT is another (non-ignored) class.
    std::uint64_t false_positives(std::size_t k) const;
    std::uint64_t gt_total(std::size_t k) const;
    std::uint64_t total() const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

    nlohmann::json to_json() const;

  private:
    std::size_t k_ = 0;
    int ignore_ = 0;
    std::vector<std::uint64_t> counts_;
};

/// Pixels whose GT equals `ignore_index` are skipped. Labels >= K other than
/// the ignore index (GT) or kUnlabeled (prediction) throw InvalidInput.
ConfusionMatrix confusion(const Raster& pred, const Raster& gt, std::size_t num_classes, int ignore_index);

/// Per-class percentages; classes without GT pixels are nullopt and left out
/// of the mean. `mean` is nullopt when no class has GT pixels.
struct ClassScores {
    std::vector<std::optional<double>> per_class;
    std::optional<double> mean;
};

/// IoU_k = TP / (TP + FP + FN).
ClassScores miou(const ConfusionMatrix& cm);
/// Acc_k = TP / (TP + FN).
ClassScores macc(const ConfusionMatrix& cm);

struct ConditionReport {
    ConfusionMatrix confusion;
    ClassScores iou;
    ClassScores accuracy;
    std::size_t samples = 0;
};

struct EvalReport {
    std::vector<std::string> classes;
    int ignore_index = 0;
    std::size_t samples = 0;
    std::size_t skipped = 0;
    ConditionReport overall;
    std::map<std::string, ConditionReport> conditions;

    bool has_evaluated_pixels() const { return overall.confusion.total() > 0; }
    nlohmann::json to_json() const;
    /// Aligned text table: one row per condition plus the overall row.
    std::string to_table() const;
};

/// Accumulates per-sample matrices; the overall matrix is the plain sum.
class Evaluator {
  public:
    Evaluator(const Vocabulary& vocab, int ignore_index);

    /// Adds one sample. Mismatched dimensions count as skipped, not thrown.
    /// Returns false when the sample was skipped.
    bool add(const Raster& pred, const Raster& gt, const std::string& condition = {});
    void add(const ConfusionMatrix& cm, const std::string& condition = {});
    void skip() { ++skipped_; }

    EvalReport report() const;

  private:
    std::vector<std::string> classes_;
    int ignore_;
    std::size_t samples_ = 0;
    std::size_t skipped_ = 0;
    ConfusionMatrix overall_;
    std::map<std::string, std::pair<ConfusionMatrix, std::size_t>> conditions_;
};

struct EvalSample {
    Raster pred;
    Raster gt;
    std::string condition;
};

EvalReport evaluate_run(std::span<const EvalSample> samples, const Vocabulary& vocab, int ignore_index);

} // namespace openrgbt
