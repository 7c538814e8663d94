#include <algorithm>
#include <fstream>

#include "openrgbt/error.hpp"
#include "openrgbt/mock.hpp"

namespace openrgbt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::array<std::uint8_t, 3> read_color(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw InvalidInput("color must be an array of 3 integers");
    }
    std::array<std::uint8_t, 3> c{};
    for (std::size_t i = 0; i < 3; ++i) {
        const int v = j[i].get<int>();
        if (v < 0 || v > 255) {
            throw InvalidInput("color component out of range");
        }
        c[i] = static_cast<std::uint8_t>(v);
    }
    return c;
}

std::uint8_t read_byte(const json& j) {
    const int v = j.get<int>();
    if (v < 0 || v > 255) {
        throw InvalidInput("intensity out of range");
    }
    return static_cast<std::uint8_t>(v);
}

double read_rate(const json& doc, const char* key) {
    const double v = doc.value(key, 0.0);
    if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidInput(std::string(key) + " must lie in [0, 1]");
    }
    return v;
}

std::uint8_t textured(std::uint8_t base, int noise, std::uint64_t seed, std::uint64_t position) {
    if (noise <= 0) {
        return base;
    }
    SplitMix64 rng(seed ^ (position * 0x9e3779b97f4a7c15ULL));
    const auto span = static_cast<std::uint64_t>(2 * noise + 1);
    const int offset = static_cast<int>(rng.next() % span) - noise;
    return static_cast<std::uint8_t>(std::clamp(int{base} + offset, 0, 255));
}

} // namespace

MockScene MockScene::from_json(const json& doc) {
    try {
        MockScene s;
        s.id = doc.at("id").get<std::string>();
        s.width = doc.at("width").get<int>();
        s.height = doc.at("height").get<int>();
        if (s.id.empty() || s.width <= 0 || s.height <= 0) {
            throw InvalidInput("scene needs an id and positive dimensions");
        }
        if (doc.contains("background")) {
            const json& bg = doc["background"];
            if (bg.contains("color")) {
                s.background_color = read_color(bg["color"]);
            }
            if (bg.contains("thermal")) {
                s.background_thermal = read_byte(bg["thermal"]);
            }
            s.noise = bg.value("noise", s.noise);
        }
        s.miss_rate = read_rate(doc, "miss_rate");
        s.label_flip_rate = read_rate(doc, "label_flip_rate");
        s.seed = doc.value("seed", std::uint64_t{0});
        s.text_blind_classes = doc.value("text_blind_classes", std::vector<std::string>{});
        for (const json& o : doc.value("objects", json::array())) {
            const auto b = o.at("box").get<std::vector<double>>();
            if (b.size() != 4) {
                throw InvalidInput("object box must have 4 numbers");
            }
            PlantedObject obj;
            obj.box = Box(b[0], b[1], b[2], b[3]);
            obj.class_name = o.at("class").get<std::string>();
            if (o.contains("color")) {
                obj.color = read_color(o["color"]);
            }
            if (o.contains("thermal")) {
                obj.thermal = read_byte(o["thermal"]);
            }
            s.objects.push_back(std::move(obj));
        }
        return s;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed mock scene: ") + e.what());
    }
}

json MockScene::to_json() const {
    json objs = json::array();
    for (const auto& o : objects) {
        objs.push_back({{"box", {o.box.x(), o.box.y(), o.box.w(), o.box.h()}},
                        {"class", o.class_name},
                        {"color", o.color},
                        {"thermal", o.thermal}});
    }
    return {{"id", id},
            {"width", width},
            {"height", height},
            {"background", {{"color", background_color}, {"thermal", background_thermal}, {"noise", noise}}},
            {"objects", objs},
            {"miss_rate", miss_rate},
            {"label_flip_rate", label_flip_rate},
            {"seed", seed},
            {"text_blind_classes", text_blind_classes}};
}

MockScene MockScene::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open mock scene " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw InvalidInput("malformed mock scene " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

void MockScene::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write mock scene " + path.string());
    }
    out << to_json().dump(2) << '\n';
}

PixelRect MockScene::object_rect(std::size_t index) const {
    return to_pixel_rect(objects.at(index).box, width, height);
}

ImagePair MockScene::render() const {
    Raster rgb(width, height, 3);
    Raster thermal(width, height, 1);
    const std::uint64_t base_seed = mix_seed(seed, hash_string(id));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto pos = static_cast<std::uint64_t>(y) * width + x;
            for (int c = 0; c < 3; ++c) {
                rgb.at(x, y, c) = textured(background_color[c], noise, base_seed + c, pos);
            }
            thermal.at(x, y) = textured(background_thermal, noise, base_seed + 3, pos);
        }
    }
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const PixelRect r = object_rect(i);
        for (int y = r.y; y < r.y + r.height; ++y) {
            for (int x = r.x; x < r.x + r.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    rgb.at(x, y, c) = objects[i].color[c];
                }
                thermal.at(x, y) = objects[i].thermal;
            }
        }
    }
    return ImagePair(std::move(rgb), std::move(thermal), id);
}

Raster MockScene::render_labels(const Vocabulary& vocab, std::uint8_t background_label) const {
    Raster labels(width, height, 1, background_label);
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto cls = vocab.find(objects[i].class_name);
        if (!cls) {
            throw InvalidInput("scene " + id + " plants class '" + objects[i].class_name +
                               "' which is not in the vocabulary");
        }
        const PixelRect r = object_rect(i);
        for (int y = r.y; y < r.y + r.height; ++y) {
            for (int x = r.x; x < r.x + r.width; ++x) {
                labels.at(x, y) = static_cast<std::uint8_t>(*cls);
            }
        }
    }
    return labels;
}

std::optional<std::size_t> MockScene::majority_object(const PixelRect& rect) const {
    std::optional<std::size_t> best;
    std::int64_t best_area = 0;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const std::int64_t a = intersect(object_rect(i), rect).area();
        if (a > best_area) {
            best_area = a;
            best = i;
        }
    }
    return best;
}

bool MockScene::text_blind(const std::string& class_name) const {
    const std::string key = normalize_label(class_name);
    return std::any_of(text_blind_classes.begin(), text_blind_classes.end(),
                       [&](const std::string& c) { return normalize_label(c) == key; });
}

MockSceneSet::MockSceneSet(std::vector<MockScene> scenes) {
    for (auto& s : scenes) {
        const std::string id = s.id;
        if (!scenes_.emplace(id, std::move(s)).second) {
            throw InvalidInput("duplicate mock scene id " + id);
        }
    }
}

MockSceneSet MockSceneSet::load_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("mock scene directory not found: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<MockScene> scenes;
    scenes.reserve(files.size());
    for (const auto& f : files) {
        scenes.push_back(MockScene::load(f));
    }
    return MockSceneSet(std::move(scenes));
}

const MockScene* MockSceneSet::find(const std::string& id) const {
    const auto it = scenes_.find(id);
    return it == scenes_.end() ? nullptr : &it->second;
}

} // namespace openrgbt
