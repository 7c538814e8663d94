#include "openrgbt/sccm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "openrgbt/error.hpp"

namespace openrgbt {

EmbeddingVector EmbeddingVector::unit() const {
    double sq = 0.0;
    for (const double v : values) {
        if (!std::isfinite(v)) {
            throw InvalidInput("embedding contains a non-finite value");
        }
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw InvalidInput("cannot normalize a zero embedding");
    }
    EmbeddingVector out{values, true};
    for (double& v : out.values) {
        v /= norm;
    }
    return out;
}

void SccmConfig::validate() const {
    if (!(th1 >= 0.0)) {
        throw InvalidInput("sccm th1 must be >= 0");
    }
    if (!(th2 > 0.0 && th2 < 1.0)) {
        throw InvalidInput("sccm th2 must lie in (0, 1)");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidInput("sccm temperature must be positive");
    }
}

ConfidenceMatrix::ConfidenceMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                                   std::vector<std::size_t> class_ids, double temperature)
    : rows_(rows), cols_(cols), values_(std::move(values)), class_ids_(std::move(class_ids)),
      temperature_(temperature) {
    if (values_.size() != rows * cols || class_ids_.size() != cols) {
        throw DimensionMismatch("confidence matrix shape mismatch");
    }
}

ConfidenceMatrix confidence_from_similarities(std::span<const double> similarities, std::size_t rows,
                                              std::size_t cols, std::vector<std::size_t> class_ids,
                                              double temperature) {
    if (cols == 0) {
        throw InvalidInput("confidence matrix needs at least one class");
    }
    if (similarities.size() != rows * cols) {
        throw DimensionMismatch("similarity count does not match rows x cols");
    }
    if (class_ids.empty()) {
        class_ids.resize(cols);
        std::iota(class_ids.begin(), class_ids.end(), std::size_t{0});
    }
    std::vector<double> values(rows * cols);
    for (std::size_t n = 0; n < rows; ++n) {
        const auto s = similarities.subspan(n * cols, cols);
        // Shifting by m = max(0, max_j s_nj) keeps every exponent <= 0, which
        // covers both the exp(s) terms and the constant 1 = exp(0).
        const double m = std::max(0.0, *std::max_element(s.begin(), s.end()));
        double denom = std::exp(-m);
        for (const double v : s) {
            denom += std::exp(v - m);
        }
        for (std::size_t k = 0; k < cols; ++k) {
            values[n * cols + k] = std::exp(s[k] - m) / denom;
        }
    }
    return ConfidenceMatrix(rows, cols, std::move(values), std::move(class_ids), temperature);
}

ConfidenceMatrix confidence_matrix(std::span<const EmbeddingVector> visual, std::span<const EmbeddingVector> text,
                                   const SccmConfig& config, std::vector<std::size_t> class_ids) {
    if (!(config.temperature > 0.0)) {
        throw InvalidInput("sccm temperature must be positive");
    }
    if (text.empty()) {
        throw InvalidInput("confidence matrix needs at least one class embedding");
    }
    if (!class_ids.empty() && class_ids.size() != text.size()) {
        throw DimensionMismatch("class id count does not match text embeddings");
    }
    const std::size_t dim = text.front().values.size();
    auto prepare = [&](const EmbeddingVector& e) {
        if (e.values.size() != dim) {
            throw DimensionMismatch("embedding dimensions differ (" + std::to_string(e.values.size()) + " vs " +
                                    std::to_string(dim) + ")");
        }
        if (std::any_of(e.values.begin(), e.values.end(), [](double v) { return !std::isfinite(v); })) {
            throw InvalidInput("embedding contains a non-finite value");
        }
        return config.normalize_embeddings && !e.normalized ? e.unit() : e;
    };
    std::vector<EmbeddingVector> t;
    t.reserve(text.size());
    for (const auto& e : text) {
        t.push_back(prepare(e));
    }
    std::vector<double> s(visual.size() * text.size());
    for (std::size_t n = 0; n < visual.size(); ++n) {
        const EmbeddingVector v = prepare(visual[n]);
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double dot = std::inner_product(v.values.begin(), v.values.end(), t[k].values.begin(), 0.0);
            s[n * t.size() + k] = config.temperature * dot;
        }
    }
    return confidence_from_similarities(s, visual.size(), text.size(), std::move(class_ids), config.temperature);
}

PredictedLabel predicted_label(std::span<const double> row) {
    if (row.empty()) {
        throw InvalidInput("predicted_label on an empty row");
    }
    PredictedLabel best{0, row[0]};
    for (std::size_t k = 1; k < row.size(); ++k) {
        if (row[k] > best.confidence) {
            best = PredictedLabel{k, row[k]};
        }
    }
    return best;
}

bool should_relabel(double predicted_confidence, double initial_confidence, const SccmConfig& config) noexcept {
    return predicted_confidence - initial_confidence >= config.th1 && predicted_confidence >= config.th2;
}

CorrectionResult correct_labels(std::vector<DetectionProposal> proposals, const ConfidenceMatrix& confidences,
                                const SccmConfig& config) {
    if (confidences.rows() != proposals.size()) {
        throw DimensionMismatch("confidence rows do not match the proposal count");
    }
    const auto& ids = confidences.class_ids();
    CorrectionResult result;
    for (std::size_t n = 0; n < proposals.size(); ++n) {
        auto& p = proposals[n];
        const auto row = confidences.row(n);
        const PredictedLabel pred = predicted_label(row);
        const std::size_t predicted_class = ids[pred.column];
        if (predicted_class == p.initial_class_id) {
            continue;
        }
        const auto initial_col = std::find(ids.begin(), ids.end(), p.initial_class_id);
        if (initial_col == ids.end()) {
            continue;
        }
        const double initial_confidence = row[static_cast<std::size_t>(initial_col - ids.begin())];
        if (should_relabel(pred.confidence, initial_confidence, config)) {
            p.class_id = predicted_class;
            ++result.corrections;
        }
    }
    result.proposals = std::move(proposals);
    return result;
}

std::vector<EmbeddingVector> embed_proposals(const Raster& fused, const std::string& image_id,
                                             std::span<const DetectionProposal> proposals, Embedder& embedder) {
    if (proposals.empty()) {
        return {};
    }
    std::vector<CropInput> crops;
    crops.reserve(proposals.size());
    for (const auto& p : proposals) {
        crops.push_back(CropInput{p.box, crop(fused, p.box)});
    }
    auto raw = embedder.embed_crops(image_id, crops);
    if (raw.size() != proposals.size()) {
        throw BackendError({}, "embedder returned " + std::to_string(raw.size()) + " embeddings for " +
                                   std::to_string(proposals.size()) + " crops", false);
    }
    std::vector<EmbeddingVector> out;
    out.reserve(raw.size());
    for (auto& v : raw) {
        out.push_back(EmbeddingVector{std::move(v), false});
    }
    return out;
}

std::string apply_prompt_template(const std::string& templ, const std::string& class_name) {
    if (templ.empty()) {
        return class_name;
    }
    std::string out = templ;
    const auto pos = out.find("{}");
    if (pos == std::string::npos) {
        return out + " " + class_name;
    }
    out.replace(pos, 2, class_name);
    return out;
}

std::vector<EmbeddingVector> embed_class_texts(const Vocabulary& vocab, std::span<const std::size_t> classes,
                                               Embedder& embedder, const SccmConfig& config) {
    std::vector<std::string> texts;
    texts.reserve(classes.size());
    for (const std::size_t k : classes) {
        texts.push_back(apply_prompt_template(config.prompt_template, vocab.name(k)));
    }
    auto raw = embedder.embed_texts(texts);
    if (raw.size() != texts.size()) {
        throw BackendError({}, "embedder returned " + std::to_string(raw.size()) + " text embeddings for " +
                                   std::to_string(texts.size()) + " classes", false);
    }
    std::vector<EmbeddingVector> out;
    for (auto& v : raw) {
        out.push_back(EmbeddingVector{std::move(v), false});
    }
    return out;
}

} // namespace openrgbt
