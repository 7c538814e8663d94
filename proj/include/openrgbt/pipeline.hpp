#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "openrgbt/backend.hpp"
#include "openrgbt/datasets.hpp"
#include "openrgbt/metrics.hpp"
#include "openrgbt/prompting.hpp"
#include "openrgbt/sccm.hpp"
#include "openrgbt/segmentation.hpp"

namespace openrgbt {

inline constexpr int kConfigSchemaVersion = 1;

enum class FusionMode {
    /// Weights from reference_weights().
    reference,
    /// Weight maps read from `<dir>/<id>.png`.
    weights,
    /// Fused images produced elsewhere, read from `<dir>/<id>.png`.
    external,
    /// Weights from the fusion backend.
    backend,
};

struct FusionSettings {
    FusionMode mode = FusionMode::reference;
    std::filesystem::path dir;
    ReferenceWeightOptions reference;
};

/// Endpoint per capability: `mock:<scene-dir>`, `process:<command>` or an
/// http:// URL. Identical strings share one backend connection.
struct BackendEndpoints {
    std::string text_detector;
    std::string visual_detector;
    std::string embedder;
    std::string segmenter;
    std::string fusion;
};

struct PipelineConfig {
    std::filesystem::path base_dir;
    DatasetConfig dataset;
    Vocabulary vocabulary;
    int ignore_index = 0;
    FusionSettings fusion;
    BackendEndpoints backends;
    std::optional<std::filesystem::path> exemplars;
    double text_score_floor = kDefaultTextScoreFloor;
    double visual_score_floor = kDefaultVisualScoreFloor;
    double dedup_iou = kDefaultDedupIou;
    SccmConfig sccm;
    bool sccm_enabled = true;
    bool visual_prompts_enabled = true;
    std::filesystem::path output_dir = "out";
    int workers = 1;
    std::uint64_t seed = 0;
    double timeout_seconds = 60.0;
    int retries = 2;
    int backoff_ms = 200;
    /// Text-embedding margin of the mock embedder.
    double mock_margin = 0.3;
    /// Mask containment check; defaults to 5 px when the segmenter is a mock.
    std::optional<int> max_mask_dilation;

    /// Relative paths resolve against `base`. Throws ConfigError.
    static PipelineConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base);
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Value ranges and the existence of every referenced path. Throws
    /// ConfigError.
    void validate() const;
};

/// Backends of one worker. Members may alias the same object.
struct BackendSet {
    std::shared_ptr<ModelBackend> text_detector;
    std::shared_ptr<ModelBackend> visual_detector;
    std::shared_ptr<ModelBackend> embedder;
    std::shared_ptr<ModelBackend> segmenter;
    std::shared_ptr<ModelBackend> fusion;
};

/// Builds backend sets. Mock backends are stateless and shared by every set;
/// remote endpoints get a fresh connection per set.
class BackendFactory {
  public:
    explicit BackendFactory(const PipelineConfig& config);
    BackendSet make();

  private:
    std::shared_ptr<ModelBackend> endpoint(const std::string& spec,
                                           std::map<std::string, std::shared_ptr<ModelBackend>>& local);

    const PipelineConfig& config_;
    std::map<std::string, std::shared_ptr<ModelBackend>> mocks_;
};

struct TraceOptions {
    bool visual_prompts = true;
    bool confidences = true;
    bool segment = true;
};

/// Everything about one sample that does not depend on SCCM thresholds:
/// merged proposals with their initial labels, their confidence matrix and
/// one mask per proposal. Masks depend only on boxes, so the same trace can
/// be finished under any threshold pair.
struct SampleTrace {
    std::string id;
    std::optional<std::string> condition;
    int width = 0;
    int height = 0;
    std::vector<DetectionProposal> proposals;
    std::optional<ConfidenceMatrix> confidences;
    std::vector<InstanceResult> instances;
    std::optional<Raster> gt;
    DetectionStats text_stats;
    DetectionStats visual_stats;
    SegmentStats segment_stats;
};

struct FinishedSample {
    SemanticMap map;
    std::size_t corrections = 0;
};

/// Applies SCCM (when enabled) and composites.
FinishedSample finish_sample(const SampleTrace& trace, const SccmConfig& sccm, bool sccm_enabled);

struct SampleFailure {
    std::string id;
    std::string message;
    bool backend = false;
};

struct RunSummary {
    std::size_t samples = 0;
    std::size_t processed = 0;
    std::size_t skipped = 0;
    std::size_t proposals = 0;
    std::size_t text_proposals = 0;
    std::size_t visual_proposals = 0;
    std::size_t below_floor = 0;
    std::size_t unknown_labels = 0;
    std::size_t corrections = 0;
    std::size_t empty_masks = 0;
    std::vector<SampleFailure> failures;
    std::optional<EvalReport> report;

    bool backend_failed() const;
    /// 0 success, 3 backend failure, 1 any other sample failure.
    int exit_code() const;
    nlohmann::json to_json() const;
};

struct AblationRow {
    std::string name;
    bool visual_prompts = false;
    bool sccm = false;
    EvalReport report;
    std::size_t corrections = 0;
};

struct CalibrationPoint {
    double th1 = 0.0;
    double th2 = 0.0;
    std::optional<double> miou;
    std::optional<double> macc;
    std::size_t corrections = 0;
};

class Pipeline {
  public:
    /// Validates the config and indexes the dataset.
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const noexcept { return config_; }
    const DatasetIndex& index() const noexcept { return index_; }
    const LabelMapping& mapping() const noexcept { return mapping_; }

    Raster fuse_sample(const ImagePair& pair, BackendSet& backends) const;
    SampleTrace trace(const DatasetSample& sample, BackendSet& backends, const TraceOptions& options) const;

    /// Calls `fn(sample, backends)` for every indexed sample on the worker
    /// pool, one backend set per worker. Failures are collected per sample
    /// (in index order) instead of stopping the pool.
    std::vector<SampleFailure> for_each_sample(
        const std::function<void(std::size_t index, const DatasetSample&, BackendSet&)>& fn) const;

    /// Full chain with bundles and reports under the output directory.
    /// Without `evaluate` no report is computed even when GT exists.
    RunSummary run(bool evaluate = true) const;

    /// Writes `<output>/fused/<id>.png`.
    std::vector<SampleFailure> fuse_all() const;
    /// Writes `<output>/<id>/proposals.json` after the union and SCCM stages.
    std::vector<SampleFailure> detect_all() const;

    /// Baseline, +visual, +SCCM, both; in that order.
    std::vector<AblationRow> ablate() const;
    std::vector<CalibrationPoint> calibrate(const std::vector<double>& th1, const std::vector<double>& th2) const;

    /// Traces of every sample in index order; throws on the first failure.
    std::vector<SampleTrace> trace_all(const TraceOptions& options) const;

  private:
    PipelineConfig config_;
    DatasetIndex index_;
    LabelMapping mapping_;
    ExemplarLibrary exemplars_;
};

std::string ablation_table(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
std::string calibration_csv(const std::vector<CalibrationPoint>& points);

/// Scores prediction maps on disk (`<dir>/<id>/label.png` or `<dir>/<id>.png`)
/// against the dataset ground truth. Missing predictions count as skipped.
EvalReport evaluate_predictions(const Pipeline& pipeline, const std::filesystem::path& predictions);

/// Same without a dataset config: every `<gt_dir>/<id>.png` label map is
/// matched to its prediction, conditions come from an optional `id,condition`
/// CSV.
EvalReport evaluate_directories(const std::filesystem::path& predictions, const std::filesystem::path& gt_dir,
                                const Vocabulary& vocab, int ignore_index,
                                const std::optional<std::filesystem::path>& conditions_csv = std::nullopt);

/// Threshold grid from "a:b:step" (inclusive) or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

nlohmann::json proposals_to_json(const std::vector<DetectionProposal>& proposals, const Vocabulary& vocab);

} // namespace openrgbt
