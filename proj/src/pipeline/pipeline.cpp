#include "openrgbt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"
#include "openrgbt/mock.hpp"
#include "openrgbt/transport.hpp"

namespace openrgbt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

template <class T>
T& require(const std::shared_ptr<T>& backend, const char* role) {
    if (!backend) {
        throw ConfigError(std::string("no backend endpoint configured for ") + role);
    }
    return *backend;
}

} // namespace

BackendFactory::BackendFactory(const PipelineConfig& config) : config_(config) {}

std::shared_ptr<ModelBackend> BackendFactory::endpoint(const std::string& spec,
                                                       std::map<std::string, std::shared_ptr<ModelBackend>>& local) {
    if (spec.empty()) {
        return nullptr;
    }
    if (spec.rfind("mock:", 0) == 0) {
        auto& slot = mocks_[spec];
        if (!slot) {
            auto scenes = std::make_shared<const MockSceneSet>(MockSceneSet::load_dir(spec.substr(5)));
            MockOptions options;
            options.margin = config_.mock_margin;
            options.seed = config_.seed;
            slot = std::make_shared<MockBackend>(std::move(scenes), config_.vocabulary.names(), options);
        }
        return slot;
    }
    auto& slot = local[spec];
    if (!slot) {
        const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(config_.timeout_seconds * 1000.0));
        slot = std::make_shared<RemoteBackend>(make_transport(spec, timeout),
                                               RetryPolicy{config_.retries, std::chrono::milliseconds(config_.backoff_ms)});
    }
    return slot;
}

BackendSet BackendFactory::make() {
    std::map<std::string, std::shared_ptr<ModelBackend>> local;
    BackendSet set;
    set.text_detector = endpoint(config_.backends.text_detector, local);
    set.visual_detector = endpoint(config_.backends.visual_detector, local);
    set.embedder = endpoint(config_.backends.embedder, local);
    set.segmenter = endpoint(config_.backends.segmenter, local);
    set.fusion = endpoint(config_.backends.fusion, local);
    return set;
}

FinishedSample finish_sample(const SampleTrace& trace, const SccmConfig& sccm, bool sccm_enabled) {
    std::vector<InstanceResult> instances = trace.instances;
    FinishedSample out;
    if (sccm_enabled && trace.confidences && !trace.proposals.empty()) {
        CorrectionResult corrected = correct_labels(trace.proposals, *trace.confidences, sccm);
        out.corrections = corrected.corrections;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            instances[i].proposal = corrected.proposals.at(i);
        }
    }
    out.map = composite(std::move(instances), trace.width, trace.height);
    return out;
}

bool RunSummary::backend_failed() const {
    return std::any_of(failures.begin(), failures.end(), [](const SampleFailure& f) { return f.backend; });
}

int RunSummary::exit_code() const {
    if (failures.empty()) {
        return 0;
    }
    return backend_failed() ? 3 : 1;
}

json RunSummary::to_json() const {
    json fails = json::array();
    for (const auto& f : failures) {
        fails.push_back({{"id", f.id}, {"error", f.message}, {"backend", f.backend}});
    }
    json doc = {{"status", failures.empty() ? "ok" : "partial"},
                {"samples", samples},
                {"processed", processed},
                {"failed", failures.size()},
                {"skipped", skipped},
                {"proposals", proposals},
                {"text_proposals", text_proposals},
                {"visual_proposals", visual_proposals},
                {"below_floor", below_floor},
                {"unknown_labels", unknown_labels},
                {"corrections", corrections},
                {"empty_masks", empty_masks},
                {"failures", fails}};
    if (report) {
        doc["miou"] = report->overall.iou.mean ? json(*report->overall.iou.mean) : json();
        doc["macc"] = report->overall.accuracy.mean ? json(*report->overall.accuracy.mean) : json();
    }
    return doc;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    config_.validate();
    try {
        index_ = index_dataset(config_.dataset);
        mapping_ = config_.dataset.mapping
                       ? LabelMapping::from_json(*config_.dataset.mapping, config_.vocabulary, config_.ignore_index)
                       : LabelMapping::identity(config_.vocabulary.size(), config_.ignore_index);
        if (config_.exemplars) {
            exemplars_ = ExemplarLibrary::load(*config_.exemplars, true);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

Raster Pipeline::fuse_sample(const ImagePair& pair, BackendSet& backends) const {
    const fs::path file = config_.fusion.dir / (pair.id() + ".png");
    switch (config_.fusion.mode) {
    case FusionMode::reference:
        return fuse(pair, reference_weights(pair, config_.fusion.reference));
    case FusionMode::weights:
        return fuse(pair, load_weight_map(file));
    case FusionMode::external: {
        Raster fused = load_external_fused(file);
        if (!same_dims(fused, pair.rgb())) {
            throw DimensionMismatch(file.string() + ": external fused image differs in size from the sample");
        }
        return fused;
    }
    case FusionMode::backend:
        return fuse(pair, require(backends.fusion, "fusion").fusion_weights(pair));
    }
    throw ConfigError("unknown fusion mode");
}

SampleTrace Pipeline::trace(const DatasetSample& sample, BackendSet& backends, const TraceOptions& options) const {
    const Vocabulary& vocab = config_.vocabulary;
    SampleTrace t;
    t.id = sample.id();
    t.condition = sample.condition;
    t.width = sample.pair.width();
    t.height = sample.pair.height();

    const Raster fused = fuse_sample(sample.pair, backends);
    const auto text = detect_text(fused, t.id, vocab, require(backends.text_detector, "text_detector"),
                                  config_.text_score_floor, &t.text_stats);
    std::vector<DetectionProposal> visual;
    if (options.visual_prompts && !exemplars_.empty()) {
        auto& detector = require(backends.visual_detector, "visual_detector");
        // Backends without the capability degrade to text-only detection.
        if (detector.supports(capability::detect_visual)) {
            visual = detect_visual(fused, t.id, vocab, exemplars_, detector, config_.visual_score_floor,
                                   &t.visual_stats);
        }
    }
    t.proposals = union_proposals(text, visual, config_.dedup_iou);

    if (options.confidences && !t.proposals.empty()) {
        auto& embedder = require(backends.embedder, "embedder");
        const auto crops = embed_proposals(fused, t.id, t.proposals, embedder);
        const auto classes = vocab.detectable();
        const auto texts = embed_class_texts(vocab, classes, embedder, config_.sccm);
        t.confidences = confidence_matrix(crops, texts, config_.sccm, classes);
    }
    if (options.segment) {
        SegmentOptions seg;
        seg.max_mask_dilation = config_.max_mask_dilation;
        t.instances = segment_proposals(fused, t.id, t.proposals, require(backends.segmenter, "segmenter"), seg,
                                        &t.segment_stats);
    }
    if (sample.gt) {
        t.gt = remap(*sample.gt, mapping_);
    }
    return t;
}

std::vector<SampleFailure> Pipeline::for_each_sample(
    const std::function<void(std::size_t, const DatasetSample&, BackendSet&)>& fn) const {
    const auto& entries = index_.entries();
    std::vector<std::optional<SampleFailure>> failures(entries.size());
    std::atomic<std::size_t> next{0};
    BackendFactory factory(config_);
    std::mutex factory_mutex;

    auto worker = [&] {
        std::optional<BackendSet> backends;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= entries.size()) {
                return;
            }
            try {
                if (!backends) {
                    std::lock_guard lock(factory_mutex);
                    backends = factory.make();
                }
                const DatasetSample sample = index_.load(entries[i]);
                fn(i, sample, *backends);
            } catch (const BackendError& e) {
                failures[i] = SampleFailure{entries[i].id, e.what(), true};
            } catch (const std::exception& e) {
                failures[i] = SampleFailure{entries[i].id, e.what(), false};
            }
        }
    };

    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(config_.workers), entries.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    std::vector<SampleFailure> out;
    for (auto& f : failures) {
        if (f) {
            out.push_back(std::move(*f));
        }
    }
    return out;
}

RunSummary Pipeline::run(bool evaluate) const {
    const auto& entries = index_.entries();
    const Vocabulary& vocab = config_.vocabulary;
    fs::create_directories(config_.output_dir);

    struct PerSample {
        bool done = false;
        bool has_gt = false;
        std::optional<ConfusionMatrix> confusion;
        std::string condition;
        std::size_t proposals = 0;
        std::size_t text = 0;
        std::size_t visual = 0;
        std::size_t below_floor = 0;
        std::size_t unknown = 0;
        std::size_t corrections = 0;
        std::size_t empty_masks = 0;
    };
    std::vector<PerSample> per(entries.size());

    const TraceOptions options{config_.visual_prompts_enabled, config_.sccm_enabled, true};
    RunSummary summary;
    summary.failures = for_each_sample([&](std::size_t i, const DatasetSample& sample, BackendSet& backends) {
        const SampleTrace t = trace(sample, backends, options);
        const FinishedSample finished = finish_sample(t, config_.sccm, config_.sccm_enabled);
        write_bundle(config_.output_dir / t.id, finished.map, vocab);

        PerSample& p = per[i];
        p.proposals = t.proposals.size();
        for (const auto& prop : t.proposals) {
            (prop.source == ProposalSource::text ? p.text : p.visual) += 1;
        }
        p.below_floor = t.text_stats.below_floor + t.visual_stats.below_floor;
        p.unknown = t.text_stats.unknown_label + t.visual_stats.unknown_label;
        p.corrections = finished.corrections;
        p.empty_masks = t.segment_stats.empty_masks;
        p.condition = t.condition.value_or("");
        if (evaluate && t.gt) {
            p.has_gt = true;
            if (same_dims(finished.map.labels, *t.gt)) {
                p.confusion = confusion(finished.map.labels, *t.gt, vocab.size(), config_.ignore_index);
            }
        }
        p.done = true;
    });

    summary.samples = entries.size();
    summary.skipped = index_.skipped();
    Evaluator evaluator(vocab, config_.ignore_index);
    bool any_gt = false;
    for (std::size_t s = 0; s < index_.skipped(); ++s) {
        evaluator.skip();
    }
    for (const auto& p : per) {
        if (!p.done) {
            evaluator.skip();
            continue;
        }
        ++summary.processed;
        summary.proposals += p.proposals;
        summary.text_proposals += p.text;
        summary.visual_proposals += p.visual;
        summary.below_floor += p.below_floor;
        summary.unknown_labels += p.unknown;
        summary.corrections += p.corrections;
        summary.empty_masks += p.empty_masks;
        if (p.confusion) {
            any_gt = true;
            evaluator.add(*p.confusion, p.condition);
        } else if (p.has_gt) {
            evaluator.skip();
        }
    }
    if (any_gt) {
        summary.report = evaluator.report();
        write_text(config_.output_dir / "report.json", summary.report->to_json().dump(2) + "\n");
        write_text(config_.output_dir / "report.txt", summary.report->to_table());
    }
    write_text(config_.output_dir / "summary.json", summary.to_json().dump(2) + "\n");
    return summary;
}

std::vector<SampleFailure> Pipeline::fuse_all() const {
    const fs::path dir = config_.output_dir / "fused";
    fs::create_directories(dir);
    return for_each_sample([&](std::size_t, const DatasetSample& sample, BackendSet& backends) {
        write_png(dir / (sample.id() + ".png"), fuse_sample(sample.pair, backends));
    });
}

std::vector<SampleFailure> Pipeline::detect_all() const {
    const TraceOptions options{config_.visual_prompts_enabled, config_.sccm_enabled, false};
    return for_each_sample([&](std::size_t, const DatasetSample& sample, BackendSet& backends) {
        const SampleTrace t = trace(sample, backends, options);
        std::vector<DetectionProposal> proposals = t.proposals;
        if (config_.sccm_enabled && t.confidences) {
            proposals = correct_labels(t.proposals, *t.confidences, config_.sccm).proposals;
        }
        const fs::path dir = config_.output_dir / t.id;
        fs::create_directories(dir);
        write_text(dir / "proposals.json", proposals_to_json(proposals, config_.vocabulary).dump(2) + "\n");
    });
}

std::vector<SampleTrace> Pipeline::trace_all(const TraceOptions& options) const {
    std::vector<SampleTrace> traces(index_.size());
    const auto failures = for_each_sample([&](std::size_t i, const DatasetSample& sample, BackendSet& backends) {
        traces[i] = trace(sample, backends, options);
    });
    if (!failures.empty()) {
        const auto& f = failures.front();
        const std::string message = "sample " + f.id + " failed: " + f.message;
        if (f.backend) {
            throw BackendError("", message, false);
        }
        throw Error(message);
    }
    return traces;
}

namespace {

EvalReport evaluate_traces(const std::vector<SampleTrace>& traces, const PipelineConfig& config,
                           const SccmConfig& sccm, bool sccm_enabled, std::size_t dataset_skipped,
                           std::size_t* corrections) {
    Evaluator evaluator(config.vocabulary, config.ignore_index);
    for (std::size_t s = 0; s < dataset_skipped; ++s) {
        evaluator.skip();
    }
    for (const auto& t : traces) {
        const FinishedSample finished = finish_sample(t, sccm, sccm_enabled);
        if (corrections) {
            *corrections += finished.corrections;
        }
        if (t.gt) {
            evaluator.add(finished.map.labels, *t.gt, t.condition.value_or(""));
        }
    }
    return evaluator.report();
}

} // namespace

std::vector<AblationRow> Pipeline::ablate() const {
    const auto without = trace_all({false, true, true});
    const auto with = exemplars_.empty() ? without : trace_all({true, true, true});
    std::vector<AblationRow> rows{
        {"baseline", false, false, {}, 0},
        {"+visual", true, false, {}, 0},
        {"+SCCM", false, true, {}, 0},
        {"both", true, true, {}, 0},
    };
    for (auto& row : rows) {
        row.report = evaluate_traces(row.visual_prompts ? with : without, config_, config_.sccm, row.sccm,
                                     index_.skipped(), &row.corrections);
    }
    return rows;
}

std::vector<CalibrationPoint> Pipeline::calibrate(const std::vector<double>& th1,
                                                  const std::vector<double>& th2) const {
    std::vector<SccmConfig> grid;
    for (double a : th1) {
        for (double b : th2) {
            SccmConfig c = config_.sccm;
            c.th1 = a;
            c.th2 = b;
            try {
                c.validate();
            } catch (const InvalidInput& e) {
                throw ConfigError(e.what());
            }
            grid.push_back(c);
        }
    }
    const auto traces = trace_all({config_.visual_prompts_enabled, true, true});
    std::vector<CalibrationPoint> out;
    out.reserve(grid.size());
    for (const auto& c : grid) {
        CalibrationPoint p;
        p.th1 = c.th1;
        p.th2 = c.th2;
        const EvalReport r = evaluate_traces(traces, config_, c, true, index_.skipped(), &p.corrections);
        p.miou = r.overall.iou.mean;
        p.macc = r.overall.accuracy.mean;
        out.push_back(p);
    }
    return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(10) << "config" << std::setw(8) << "visual" << std::setw(6) << "SCCM"
        << std::right << std::setw(9) << "mAcc" << std::setw(9) << "mIoU" << std::setw(13) << "corrections"
        << '\n';
    out << std::fixed << std::setprecision(2);
    for (const auto& r : rows) {
        out << std::left << std::setw(10) << r.name << std::setw(8) << (r.visual_prompts ? "yes" : "no")
            << std::setw(6) << (r.sccm ? "yes" : "no") << std::right;
        const auto& acc = r.report.overall.accuracy.mean;
        const auto& iou = r.report.overall.iou.mean;
        if (acc) {
            out << std::setw(9) << *acc;
        } else {
            out << std::setw(9) << "n/a";
        }
        if (iou) {
            out << std::setw(9) << *iou;
        } else {
            out << std::setw(9) << "n/a";
        }
        out << std::setw(13) << r.corrections << '\n';
    }
    return out.str();
}

json ablation_json(const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"name", r.name},
                       {"visual_prompts", r.visual_prompts},
                       {"sccm", r.sccm},
                       {"corrections", r.corrections},
                       {"report", r.report.to_json()}});
    }
    return out;
}

std::string calibration_csv(const std::vector<CalibrationPoint>& points) {
    std::ostringstream out;
    out << "th1,th2,miou,macc,corrections\n";
    out << std::setprecision(10);
    for (const auto& p : points) {
        out << p.th1 << ',' << p.th2 << ',';
        if (p.miou) {
            out << *p.miou;
        }
        out << ',';
        if (p.macc) {
            out << *p.macc;
        }
        out << ',' << p.corrections << '\n';
    }
    return out.str();
}

namespace {

fs::path prediction_path(const fs::path& predictions, const std::string& id) {
    const fs::path bundle = predictions / id / "label.png";
    return fs::is_regular_file(bundle) ? bundle : predictions / (id + ".png");
}

} // namespace

EvalReport evaluate_predictions(const Pipeline& pipeline, const fs::path& predictions) {
    const PipelineConfig& config = pipeline.config();
    Evaluator evaluator(config.vocabulary, config.ignore_index);
    for (std::size_t s = 0; s < pipeline.index().skipped(); ++s) {
        evaluator.skip();
    }
    for (const auto& entry : pipeline.index().entries()) {
        const fs::path pred = prediction_path(predictions, entry.id);
        if (!fs::is_regular_file(pred)) {
            evaluator.skip();
            continue;
        }
        const DatasetSample sample = pipeline.index().load(entry);
        if (!sample.gt) {
            evaluator.skip();
            continue;
        }
        evaluator.add(read_label_png(pred), remap(*sample.gt, pipeline.mapping()), sample.condition.value_or(""));
    }
    return evaluator.report();
}

EvalReport evaluate_directories(const fs::path& predictions, const fs::path& gt_dir, const Vocabulary& vocab,
                                int ignore_index, const std::optional<fs::path>& conditions_csv) {
    if (!fs::is_directory(gt_dir)) {
        throw ConfigError("ground-truth directory not found: " + gt_dir.string());
    }
    const auto conditions = conditions_csv ? read_conditions_csv(*conditions_csv) : std::map<std::string, std::string>{};
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(gt_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    Evaluator evaluator(vocab, ignore_index);
    for (const auto& gt_file : files) {
        const std::string id = gt_file.stem().string();
        const fs::path pred = prediction_path(predictions, id);
        if (!fs::is_regular_file(pred)) {
            evaluator.skip();
            continue;
        }
        const auto it = conditions.find(id);
        evaluator.add(read_label_png(pred), read_label_png(gt_file), it == conditions.end() ? "" : it->second);
    }
    return evaluator.report();
}

std::vector<double> parse_grid(const std::string& text) {
    auto number = [&](const std::string& item) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
            return v;
        } catch (const std::exception&) {
            throw ConfigError("not a number in threshold grid: '" + item + "'");
        }
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream in(text);
        std::string item;
        while (std::getline(in, item, ':')) {
            parts.push_back(item);
        }
        if (parts.size() != 3) {
            throw ConfigError("threshold grid must look like start:stop:step");
        }
        const double start = number(parts[0]);
        const double stop = number(parts[1]);
        const double step = number(parts[2]);
        if (!(step > 0.0) || stop < start) {
            throw ConfigError("threshold grid needs step > 0 and stop >= start");
        }
        const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) {
            // Rounded to 12 digits so 0.1 steps print as written.
            out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
        }
        return out;
    }
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) {
            out.push_back(number(item));
        }
    }
    if (out.empty()) {
        throw ConfigError("empty threshold grid");
    }
    return out;
}

json proposals_to_json(const std::vector<DetectionProposal>& proposals, const Vocabulary& vocab) {
    json out = json::array();
    for (const auto& p : proposals) {
        out.push_back({{"box", {p.box.x(), p.box.y(), p.box.w(), p.box.h()}},
                       {"class", vocab.name(p.class_id)},
                       {"initial_class", vocab.name(p.initial_class_id)},
                       {"score", p.score},
                       {"source", to_string(p.source)},
                       {"serial", p.serial},
                       {"corrected", p.corrected()}});
    }
    return out;
}

} // namespace openrgbt
