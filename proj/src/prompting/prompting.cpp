#include "openrgbt/prompting.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"

namespace openrgbt {

bool ModelBackend::supports(const std::string& name) {
    const auto caps = capabilities();
    return std::find(caps.begin(), caps.end(), name) != caps.end();
}

const char* to_string(ProposalSource source) noexcept {
    return source == ProposalSource::text ? "text" : "visual";
}

ExemplarLibrary::ExemplarLibrary(std::vector<Exemplar> exemplars) : exemplars_(std::move(exemplars)) {
    for (const auto& e : exemplars_) {
        if (normalize_label(e.class_name).empty()) {
            throw InvalidInput("exemplar without a class name");
        }
    }
}

ExemplarLibrary ExemplarLibrary::load(const std::filesystem::path& path, bool load_images) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open exemplar library " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
    if (!doc.is_array()) {
        throw InvalidInput(path.string() + ": exemplar library must be a JSON array");
    }
    const auto base = path.parent_path();
    std::vector<Exemplar> exemplars;
    try {
        for (const auto& item : doc) {
            const auto& b = item.at("box");
            if (!b.is_array() || b.size() != 4) {
                throw InvalidInput("exemplar box must be [x, y, w, h]");
            }
            std::filesystem::path image = item.at("image_path").get<std::string>();
            if (image.is_relative()) {
                image = base / image;
            }
            exemplars.push_back(Exemplar{item.at("class").get<std::string>(), image,
                                         Box(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                             b[3].get<double>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }

    ExemplarLibrary library(std::move(exemplars));
    if (load_images) {
        for (const auto& e : library.exemplars_) {
            if (!library.images_.contains(e.image_path)) {
                library.images_.emplace(e.image_path, std::make_shared<const Raster>(read_png(e.image_path)));
            }
        }
    }
    return library;
}

void ExemplarLibrary::save(const std::filesystem::path& path) const {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& e : exemplars_) {
        doc.push_back({{"class", e.class_name},
                       {"image_path", e.image_path.generic_string()},
                       {"box", {e.box.x(), e.box.y(), e.box.w(), e.box.h()}}});
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

std::vector<VisualPrompt> ExemplarLibrary::prompts() const {
    std::vector<VisualPrompt> out;
    out.reserve(exemplars_.size());
    for (const auto& e : exemplars_) {
        const auto it = images_.find(e.image_path);
        out.push_back(VisualPrompt{e.class_name, e.box, it == images_.end() ? nullptr : it->second});
    }
    return out;
}

namespace {

std::vector<DetectionProposal> to_proposals(const std::vector<RawDetection>& raw, const Vocabulary& vocab,
                                            double score_floor, ProposalSource source,
                                            DetectionStats* stats) {
    DetectionStats local;
    local.returned = raw.size();
    std::vector<DetectionProposal> out;
    for (const auto& det : raw) {
        const auto id = vocab.find(det.label);
        if (!id || id == vocab.background_index()) {
            ++local.unknown_label;
            continue;
        }
        if (!(det.score >= score_floor)) {
            ++local.below_floor;
            continue;
        }
        DetectionProposal p;
        p.box = det.box;
        p.class_id = *id;
        p.initial_class_id = *id;
        p.score = std::clamp(det.score, 0.0, 1.0);
        p.source = source;
        p.serial = static_cast<std::uint32_t>(out.size());
        out.push_back(p);
    }
    if (stats != nullptr) {
        stats->returned += local.returned;
        stats->below_floor += local.below_floor;
        stats->unknown_label += local.unknown_label;
    }
    return out;
}

} // namespace

std::vector<DetectionProposal> detect_text(const Raster& fused, const std::string& image_id,
                                           const Vocabulary& vocab, TextDetector& backend, double score_floor,
                                           DetectionStats* stats) {
    std::vector<std::string> classes;
    for (const std::size_t k : vocab.detectable()) {
        classes.push_back(vocab.name(k));
    }
    if (classes.empty()) {
        return {};
    }
    return to_proposals(backend.detect_text(image_id, fused, classes), vocab, score_floor, ProposalSource::text,
                        stats);
}

std::vector<DetectionProposal> detect_visual(const Raster& fused, const std::string& image_id,
                                             const Vocabulary& vocab, const ExemplarLibrary& library,
                                             VisualDetector& backend, double score_floor,
                                             DetectionStats* stats) {
    if (library.empty()) {
        return {};
    }
    const auto prompts = library.prompts();
    return to_proposals(backend.detect_visual(image_id, fused, prompts), vocab, score_floor,
                        ProposalSource::visual, stats);
}

std::vector<DetectionProposal> union_proposals(const std::vector<DetectionProposal>& text,
                                               const std::vector<DetectionProposal>& visual, double dedup_iou) {
    if (!(dedup_iou >= 0.0)) {
        throw InvalidInput("dedup_iou must be non-negative");
    }
    std::vector<DetectionProposal> all;
    all.reserve(text.size() + visual.size());
    all.insert(all.end(), text.begin(), text.end());
    all.insert(all.end(), visual.begin(), visual.end());
    std::stable_sort(all.begin(), all.end(),
                     [](const DetectionProposal& a, const DetectionProposal& b) { return a.score > b.score; });

    std::vector<DetectionProposal> kept;
    kept.reserve(all.size());
    for (auto& candidate : all) {
        const bool duplicate = dedup_iou <= 1.0 && std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
                                   return k.class_id == candidate.class_id &&
                                          box_iou(k.box, candidate.box) >= dedup_iou;
                               });
        if (duplicate) {
            continue;
        }
        candidate.initial_class_id = candidate.class_id;
        candidate.serial = static_cast<std::uint32_t>(kept.size());
        kept.push_back(candidate);
    }
    return kept;
}

} // namespace openrgbt
