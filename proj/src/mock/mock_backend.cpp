#include <algorithm>
#include <cmath>
#include <map>

#include "openrgbt/error.hpp"
#include "openrgbt/mock.hpp"

namespace openrgbt {

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / std::sqrt(na * nb);
}

} // namespace

MockBackend::MockBackend(std::shared_ptr<const MockSceneSet> scenes, std::vector<std::string> classes,
                         MockOptions options)
    : scenes_(std::move(scenes)), classes_(std::move(classes)), options_(options),
      projection_(options.pe_dim, options.seed) {
    if (!scenes_) {
        throw InvalidInput("mock backend needs a scene set");
    }
    if (classes_.empty()) {
        throw InvalidInput("mock backend needs at least one class");
    }
    if (!(options_.margin > 0.0 && options_.margin <= 1.0)) {
        throw InvalidInput("mock embedding margin must lie in (0, 1]");
    }
}

std::vector<std::string> MockBackend::capabilities() {
    return {capability::detect_text, capability::detect_visual, capability::embed_texts,
            capability::embed_crops, capability::segment,       capability::fusion_weights};
}

const MockScene& MockBackend::scene(const std::string& image_id) const {
    const MockScene* s = scenes_->find(image_id);
    if (s == nullptr) {
        throw InvalidInput("no mock scene with id '" + image_id + "'");
    }
    return *s;
}

std::optional<std::size_t> MockBackend::class_index(const std::string& text) const {
    const std::string key = normalize_label(text);
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        const std::string name = normalize_label(classes_[k]);
        if (name.size() > best_len && key.find(name) != std::string::npos) {
            best = k;
            best_len = name.size();
        }
    }
    return best;
}

std::vector<double> MockBackend::class_embedding(std::size_t class_index) const {
    std::vector<double> v = background_embedding();
    v[classes_.size()] = std::sqrt(1.0 - options_.margin);
    v.at(class_index) += std::sqrt(options_.margin);
    return v;
}

std::vector<double> MockBackend::background_embedding() const {
    std::vector<double> v(classes_.size() + 1, 0.0);
    v[classes_.size()] = 1.0;
    return v;
}

std::vector<RawDetection> MockBackend::detect_text(const std::string& image_id, const Raster& /*image*/,
                                                   const std::vector<std::string>& classes) {
    const MockScene& s = scene(image_id);
    std::vector<RawDetection> out;
    const std::uint64_t scene_seed = mix_seed(mix_seed(s.seed, options_.seed), hash_string(s.id));
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        const PlantedObject& obj = s.objects[i];
        // Fixed draw order so an object's fate does not depend on the request.
        SplitMix64 rng(mix_seed(scene_seed, i));
        const double u_miss = rng.uniform();
        const double u_flip = rng.uniform();
        const double u_pick = rng.uniform();
        const double u_score = rng.uniform();

        const std::string key = normalize_label(obj.class_name);
        const auto requested = std::find_if(classes.begin(), classes.end(),
                                            [&](const std::string& c) { return normalize_label(c) == key; });
        if (requested == classes.end() || s.text_blind(obj.class_name) || u_miss < s.miss_rate) {
            continue;
        }
        std::string label = *requested;
        if (u_flip < s.label_flip_rate) {
            std::vector<std::string> others;
            for (const auto& c : classes) {
                if (normalize_label(c) != key) {
                    others.push_back(c);
                }
            }
            if (!others.empty()) {
                const auto pick = std::min(others.size() - 1, static_cast<std::size_t>(u_pick * others.size()));
                label = others[pick];
            }
        }
        out.push_back({obj.box, label, 0.5 + 0.45 * u_score});
    }
    return out;
}

std::vector<RawDetection> MockBackend::detect_visual(const std::string& image_id, const Raster& /*image*/,
                                                     std::span<const VisualPrompt> prompts) {
    const MockScene& s = scene(image_id);
    struct ClassPrompt {
        std::string name;
        std::vector<double> mean;
        std::size_t count = 0;
    };
    std::map<std::string, ClassPrompt> by_class;
    for (const auto& p : prompts) {
        auto [it, inserted] = by_class.try_emplace(normalize_label(p.class_name));
        ClassPrompt& cp = it->second;
        if (inserted) {
            cp.name = p.class_name;
            cp.mean.assign(projection_.dim(), 0.0);
        }
        const auto e = projection_.embed(p.box);
        for (std::size_t i = 0; i < e.size(); ++i) {
            cp.mean[i] += e[i];
        }
        ++cp.count;
    }
    std::vector<RawDetection> out;
    for (const auto& obj : s.objects) {
        const auto it = by_class.find(normalize_label(obj.class_name));
        if (it == by_class.end()) {
            continue;
        }
        const double c = cosine(projection_.embed(obj.box), it->second.mean);
        const double unit = std::clamp((1.0 + c) / 2.0, 0.0, 1.0);
        out.push_back({obj.box, it->second.name, 0.45 + 0.399 * unit});
    }
    return out;
}

std::vector<std::vector<double>> MockBackend::embed_texts(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        const auto k = class_index(t);
        out.push_back(k ? class_embedding(*k) : background_embedding());
    }
    return out;
}

std::vector<std::vector<double>> MockBackend::embed_crops(const std::string& image_id,
                                                          std::span<const CropInput> crops) {
    const MockScene& s = scene(image_id);
    std::vector<std::vector<double>> out;
    out.reserve(crops.size());
    for (const auto& c : crops) {
        const auto obj = s.majority_object(to_pixel_rect(c.box, s.width, s.height));
        const auto k = obj ? class_index(s.objects[*obj].class_name) : std::nullopt;
        out.push_back(k ? class_embedding(*k) : background_embedding());
    }
    return out;
}

std::vector<MaskResult> MockBackend::segment(const std::string& image_id, const Raster& image,
                                             std::span<const Box> boxes) {
    const MockScene& s = scene(image_id);
    if (image.width() != s.width || image.height() != s.height) {
        throw DimensionMismatch("image size differs from mock scene " + s.id);
    }
    std::vector<MaskResult> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        const PixelRect rect = to_pixel_rect(b, s.width, s.height);
        const auto obj = s.majority_object(rect);
        if (!obj) {
            out.push_back({rle_encode(BinaryMask(s.width, s.height)), ""});
            continue;
        }
        const PixelRect inside = intersect(s.object_rect(*obj), rect);
        out.push_back({rle_encode(BinaryMask::from_rect(s.width, s.height, inside)),
                       "a " + s.objects[*obj].class_name});
    }
    return out;
}

WeightMap MockBackend::fusion_weights(const ImagePair& pair) {
    return reference_weights(pair);
}

} // namespace openrgbt
