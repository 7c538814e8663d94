#pragma once

#include <span>
#include <string>
#include <vector>

#include "openrgbt/backend.hpp"
#include "openrgbt/core.hpp"
#include "openrgbt/prompting.hpp"

namespace openrgbt {

/// Semantic consistency correction: proposals are scored against every class
/// text with a vision-language embedder and relabelled when the evidence for
/// another class is both strong and clearly ahead of the detector's label.

struct EmbeddingVector {
    std::vector<double> values;
    bool normalized = false;

    /// Copy scaled to unit L2 norm. Throws InvalidInput for zero or
    /// non-finite vectors.
    EmbeddingVector unit() const;
};

struct SccmConfig {
    /// Minimum lead of the predicted class over the initial one.
    double th1 = 0.2;
    /// Minimum confidence of the predicted class.
    double th2 = 0.5;
    double temperature = 10.0;
    bool normalize_embeddings = true;
    /// Text sent to the embedder for each class; "{}" is replaced by the
    /// class name. Empty means the bare name.
    std::string prompt_template;

    void validate() const;
};

/// N x K confidences F[n][k] = exp(s_nk) / (1 + sum_j exp(s_nj)) with
/// s_nk = temperature * <visual_n, text_k>. Column k stands for vocabulary
/// class `class_ids()[k]`.
class ConfidenceMatrix {
  public:
    ConfidenceMatrix() = default;
    ConfidenceMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                     std::vector<std::size_t> class_ids, double temperature);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double at(std::size_t n, std::size_t k) const { return values_.at(n * cols_ + k); }
    std::span<const double> row(std::size_t n) const {
        return std::span<const double>(values_).subspan(n * cols_, cols_);
    }
    const std::vector<std::size_t>& class_ids() const noexcept { return class_ids_; }
    double temperature() const noexcept { return temperature_; }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
    std::vector<std::size_t> class_ids_;
    double temperature_ = 1.0;
};

/// `class_ids` defaults to 0..K-1.
ConfidenceMatrix confidence_matrix(std::span<const EmbeddingVector> visual, std::span<const EmbeddingVector> text,
                                   const SccmConfig& config, std::vector<std::size_t> class_ids = {});

/// Same computation from precomputed scaled similarities s (row-major N x K).
ConfidenceMatrix confidence_from_similarities(std::span<const double> similarities, std::size_t rows,
                                              std::size_t cols, std::vector<std::size_t> class_ids,
                                              double temperature);

struct PredictedLabel {
    std::size_t column = 0;
    double confidence = 0.0;
};

/// Argmax of a confidence row; ties go to the lowest column.
PredictedLabel predicted_label(std::span<const double> row);

struct CorrectionResult {
    std::vector<DetectionProposal> proposals;
    std::size_t corrections = 0;
};

/// Relabels proposal n to its predicted class when the prediction disagrees
/// with the initial label and both F_pr - F_in >= th1 and F_pr >= th2.
CorrectionResult correct_labels(std::vector<DetectionProposal> proposals, const ConfidenceMatrix& confidences,
                                const SccmConfig& config);

/// The decision above for a single proposal.
bool should_relabel(double predicted_confidence, double initial_confidence, const SccmConfig& config) noexcept;

/// One embedding per proposal crop, in proposal order.
std::vector<EmbeddingVector> embed_proposals(const Raster& fused, const std::string& image_id,
                                             std::span<const DetectionProposal> proposals, Embedder& embedder);

/// Text embeddings for `classes` (vocabulary indices), prompt template applied.
std::vector<EmbeddingVector> embed_class_texts(const Vocabulary& vocab, std::span<const std::size_t> classes,
                                               Embedder& embedder, const SccmConfig& config);

std::string apply_prompt_template(const std::string& templ, const std::string& class_name);

} // namespace openrgbt
