#include <fstream>

#include "openrgbt/error.hpp"
#include "openrgbt/pipeline.hpp"

namespace openrgbt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() ? base / path : path;
}

const char* layout_name(DatasetLayout layout) {
    switch (layout) {
    case DatasetLayout::mfnet:
        return "mfnet";
    case DatasetLayout::pst900:
        return "pst900";
    case DatasetLayout::generic:
        return "generic";
    }
    return "generic";
}

const char* fusion_mode_name(FusionMode mode) {
    switch (mode) {
    case FusionMode::reference:
        return "reference";
    case FusionMode::weights:
        return "weights";
    case FusionMode::external:
        return "external";
    case FusionMode::backend:
        return "backend";
    }
    return "reference";
}

FusionMode parse_fusion_mode(const std::string& name) {
    if (name == "reference") {
        return FusionMode::reference;
    }
    if (name == "weights" || name == "file") {
        return FusionMode::weights;
    }
    if (name == "external") {
        return FusionMode::external;
    }
    if (name == "backend") {
        return FusionMode::backend;
    }
    throw ConfigError("unknown fusion mode '" + name + "'");
}

FusionSettings parse_fusion(const json& j, const fs::path& base) {
    FusionSettings f;
    if (j.is_string()) {
        // "reference", "backend", "external:<dir>", "weights:<dir>"
        const auto s = j.get<std::string>();
        const auto colon = s.find(':');
        f.mode = parse_fusion_mode(s.substr(0, colon));
        if (colon != std::string::npos) {
            f.dir = resolve(base, s.substr(colon + 1));
        }
        return f;
    }
    f.mode = parse_fusion_mode(j.value("mode", std::string("reference")));
    if (j.contains("dir")) {
        f.dir = resolve(base, j["dir"].get<std::string>());
    }
    f.reference.window = j.value("window", f.reference.window);
    f.reference.global_blend = j.value("global_blend", f.reference.global_blend);
    return f;
}

std::string resolve_endpoint(const fs::path& base, const std::string& spec) {
    if (spec.rfind("mock:", 0) == 0) {
        return "mock:" + resolve(base, spec.substr(5)).string();
    }
    return spec;
}

void check_range(bool ok, const std::string& what) {
    if (!ok) {
        throw ConfigError(what);
    }
}

} // namespace

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base) {
    if (!doc.is_object()) {
        throw ConfigError("pipeline config must be a JSON object");
    }
    PipelineConfig c;
    c.base_dir = base;
    try {
        const int version = doc.value("schema_version", kConfigSchemaVersion);
        if (version != kConfigSchemaVersion) {
            throw ConfigError("unsupported config schema_version " + std::to_string(version) + " (expected " +
                              std::to_string(kConfigSchemaVersion) + ")");
        }
        if (!doc.contains("dataset")) {
            throw ConfigError("config needs a dataset section");
        }
        c.dataset = DatasetConfig::from_json(doc["dataset"], base);

        std::optional<std::size_t> background;
        if (doc.contains("background_index") && !doc["background_index"].is_null()) {
            background = doc["background_index"].get<std::size_t>();
        }
        if (!doc.contains("vocabulary")) {
            throw ConfigError("config needs a vocabulary (file path or list of class names)");
        }
        const json& v = doc["vocabulary"];
        try {
            if (v.is_string()) {
                c.vocabulary = Vocabulary::load(resolve(base, v.get<std::string>()).string(), background);
            } else {
                c.vocabulary = Vocabulary(v.get<std::vector<std::string>>(), background);
            }
        } catch (const Error& e) {
            throw ConfigError(std::string("vocabulary: ") + e.what());
        }
        c.ignore_index = doc.value("ignore_index", c.ignore_index);

        if (doc.contains("fusion")) {
            c.fusion = parse_fusion(doc["fusion"], base);
        }

        const std::string fallback = resolve_endpoint(base, doc.value("backend", std::string{}));
        c.backends = {fallback, fallback, fallback, fallback, fallback};
        if (doc.contains("backends")) {
            const json& b = doc["backends"];
            auto pick = [&](const char* key, std::string& slot) {
                if (b.contains(key)) {
                    slot = resolve_endpoint(base, b[key].get<std::string>());
                }
            };
            pick("text_detector", c.backends.text_detector);
            pick("visual_detector", c.backends.visual_detector);
            pick("embedder", c.backends.embedder);
            pick("segmenter", c.backends.segmenter);
            pick("fusion", c.backends.fusion);
        }

        if (doc.contains("exemplars") && !doc["exemplars"].is_null()) {
            c.exemplars = resolve(base, doc["exemplars"].get<std::string>());
        }
        c.text_score_floor = doc.value("text_score_floor", c.text_score_floor);
        c.visual_score_floor = doc.value("visual_score_floor", c.visual_score_floor);
        c.dedup_iou = doc.value("dedup_iou", c.dedup_iou);
        if (doc.contains("sccm")) {
            const json& s = doc["sccm"];
            c.sccm.th1 = s.value("th1", c.sccm.th1);
            c.sccm.th2 = s.value("th2", c.sccm.th2);
            c.sccm.temperature = s.value("temperature", c.sccm.temperature);
            c.sccm.normalize_embeddings = s.value("normalize_embeddings", c.sccm.normalize_embeddings);
            c.sccm.prompt_template = s.value("prompt_template", c.sccm.prompt_template);
        }
        c.sccm_enabled = doc.value("sccm_enabled", c.sccm_enabled);
        c.visual_prompts_enabled = doc.value("visual_prompts_enabled", c.visual_prompts_enabled);
        c.output_dir = resolve(base, doc.value("output_dir", c.output_dir.string()));
        c.workers = doc.value("workers", c.workers);
        c.seed = doc.value("seed", c.seed);
        c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
        c.retries = doc.value("retries", c.retries);
        c.backoff_ms = doc.value("backoff_ms", c.backoff_ms);
        if (doc.contains("mock")) {
            c.mock_margin = doc["mock"].value("margin", c.mock_margin);
        }
        if (doc.contains("max_mask_dilation") && !doc["max_mask_dilation"].is_null()) {
            c.max_mask_dilation = doc["max_mask_dilation"].get<int>();
        } else if (c.backends.segmenter.rfind("mock:", 0) == 0) {
            c.max_mask_dilation = 5;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed pipeline config: ") + e.what());
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(doc, fs::absolute(path).parent_path());
}

json PipelineConfig::to_json() const {
    json dataset_doc = {{"layout", layout_name(dataset.layout)},
                        {"root", dataset.root.string()},
                        {"split", dataset.split},
                        {"rgb_dir", dataset.rgb_dir},
                        {"thermal_dir", dataset.thermal_dir},
                        {"label_dir", dataset.label_dir}};
    if (dataset.conditions_csv) {
        dataset_doc["conditions_csv"] = dataset.conditions_csv->string();
    }
    if (dataset.mapping) {
        dataset_doc["mapping"] = *dataset.mapping;
    }
    json doc = {
        {"schema_version", kConfigSchemaVersion},
        {"dataset", dataset_doc},
        {"vocabulary", vocabulary.names()},
        {"background_index", vocabulary.background_index() ? json(*vocabulary.background_index()) : json()},
        {"ignore_index", ignore_index},
        {"fusion",
         {{"mode", fusion_mode_name(fusion.mode)},
          {"dir", fusion.dir.string()},
          {"window", fusion.reference.window},
          {"global_blend", fusion.reference.global_blend}}},
        {"backends",
         {{"text_detector", backends.text_detector},
          {"visual_detector", backends.visual_detector},
          {"embedder", backends.embedder},
          {"segmenter", backends.segmenter},
          {"fusion", backends.fusion}}},
        {"exemplars", exemplars ? json(exemplars->string()) : json()},
        {"text_score_floor", text_score_floor},
        {"visual_score_floor", visual_score_floor},
        {"dedup_iou", dedup_iou},
        {"sccm",
         {{"th1", sccm.th1},
          {"th2", sccm.th2},
          {"temperature", sccm.temperature},
          {"normalize_embeddings", sccm.normalize_embeddings},
          {"prompt_template", sccm.prompt_template}}},
        {"sccm_enabled", sccm_enabled},
        {"visual_prompts_enabled", visual_prompts_enabled},
        {"output_dir", output_dir.string()},
        {"workers", workers},
        {"seed", seed},
        {"timeout_seconds", timeout_seconds},
        {"retries", retries},
        {"backoff_ms", backoff_ms},
        {"mock", {{"margin", mock_margin}}},
        {"max_mask_dilation", max_mask_dilation ? json(*max_mask_dilation) : json()},
    };
    return doc;
}

void PipelineConfig::validate() const {
    check_range(fs::is_directory(dataset.root), "dataset root not found: " + dataset.root.string());
    if (dataset.conditions_csv) {
        check_range(fs::is_regular_file(*dataset.conditions_csv),
                    "conditions file not found: " + dataset.conditions_csv->string());
    }
    check_range(vocabulary.size() > 0, "vocabulary is empty");
    check_range(!vocabulary.detectable().empty(), "vocabulary has no detectable class");
    check_range(ignore_index >= 0 && ignore_index <= 255, "ignore_index must lie in [0, 255]");
    if (fusion.mode == FusionMode::weights || fusion.mode == FusionMode::external) {
        check_range(fs::is_directory(fusion.dir), "fusion directory not found: " + fusion.dir.string());
    }
    if (fusion.mode == FusionMode::reference) {
        check_range(fusion.reference.window >= 3 && fusion.reference.window % 2 == 1,
                    "fusion window must be odd and at least 3");
        check_range(fusion.reference.global_blend >= 0.0 && fusion.reference.global_blend <= 1.0,
                    "fusion global_blend must lie in [0, 1]");
    }

    auto check_endpoint = [](const std::string& name, const std::string& spec) {
        check_range(!spec.empty(), "no backend endpoint for " + name + " (set \"backend\" or \"backends." + name + "\")");
        if (spec.rfind("mock:", 0) == 0) {
            check_range(fs::is_directory(spec.substr(5)), "mock scene directory not found: " + spec.substr(5));
        } else {
            check_range(spec.rfind("process:", 0) == 0 || spec.rfind("http://", 0) == 0,
                        "backend endpoint '" + spec + "' must start with mock:, process: or http://");
        }
    };
    check_endpoint("text_detector", backends.text_detector);
    check_endpoint("segmenter", backends.segmenter);
    if (visual_prompts_enabled) {
        check_endpoint("visual_detector", backends.visual_detector);
        if (exemplars) {
            check_range(fs::is_regular_file(*exemplars), "exemplar file not found: " + exemplars->string());
        }
    }
    if (sccm_enabled) {
        check_endpoint("embedder", backends.embedder);
    }
    if (fusion.mode == FusionMode::backend) {
        check_endpoint("fusion", backends.fusion);
    }

    check_range(text_score_floor >= 0.0 && text_score_floor <= 1.0, "text_score_floor must lie in [0, 1]");
    check_range(visual_score_floor >= 0.0 && visual_score_floor <= 1.0, "visual_score_floor must lie in [0, 1]");
    check_range(dedup_iou > 0.0, "dedup_iou must be positive");
    check_range(workers >= 1 && workers <= 256, "workers must lie in [1, 256]");
    check_range(timeout_seconds > 0.0, "timeout_seconds must be positive");
    check_range(retries >= 0 && retries <= 10, "retries must lie in [0, 10]");
    check_range(backoff_ms >= 0, "backoff_ms must be non-negative");
    check_range(mock_margin > 0.0 && mock_margin <= 1.0, "mock margin must lie in (0, 1]");
    if (max_mask_dilation) {
        check_range(*max_mask_dilation >= 0, "max_mask_dilation must be non-negative");
    }
    try {
        sccm.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

} // namespace openrgbt
