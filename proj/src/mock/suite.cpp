#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"
#include "openrgbt/mock.hpp"
#include "openrgbt/prompting.hpp"

namespace openrgbt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int uniform_int(SplitMix64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1));
}

std::uint8_t scaled(std::uint8_t v, double factor) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * factor), 0L, 255L));
}

bool overlaps(const PixelRect& a, const PixelRect& b) {
    // One pixel of clearance keeps neighbouring objects separable.
    const PixelRect grown{a.x - 1, a.y - 1, a.width + 2, a.height + 2};
    return !intersect(grown, b).empty();
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

MockScene make_scene(const MockSuiteOptions& o, const std::vector<std::string>& detectable, std::size_t n,
                     bool night) {
    MockScene s;
    std::ostringstream id;
    id << "scene_" << std::setw(3) << std::setfill('0') << n;
    s.id = id.str();
    s.width = o.width;
    s.height = o.height;
    s.seed = mix_seed(o.seed, n);
    s.miss_rate = o.miss_rate;
    s.label_flip_rate = o.label_flip_rate;
    s.text_blind_classes = o.text_blind_classes;
    const double light = night ? 0.3 : 1.0;

    SplitMix64 rng(mix_seed(s.seed, 0x5ce9e));
    s.background_color = {scaled(static_cast<std::uint8_t>(uniform_int(rng, 60, 140)), light),
                          scaled(static_cast<std::uint8_t>(uniform_int(rng, 60, 140)), light),
                          scaled(static_cast<std::uint8_t>(uniform_int(rng, 60, 140)), light)};
    s.background_thermal = static_cast<std::uint8_t>(uniform_int(rng, 20, 70));

    std::vector<std::string> wanted;
    for (const auto& c : o.text_blind_classes) {
        wanted.push_back(c);
    }
    const int count = std::max(uniform_int(rng, o.min_objects, o.max_objects), static_cast<int>(wanted.size()));
    while (static_cast<int>(wanted.size()) < count) {
        wanted.push_back(detectable[rng.next() % detectable.size()]);
    }

    std::vector<PixelRect> placed;
    for (const auto& cls : wanted) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            const int w = uniform_int(rng, std::max(2, o.width / 8), std::max(2, o.width / 3));
            const int h = uniform_int(rng, std::max(2, o.height / 8), std::max(2, o.height / 3));
            const PixelRect r{uniform_int(rng, 0, o.width - w), uniform_int(rng, 0, o.height - h), w, h};
            if (std::any_of(placed.begin(), placed.end(), [&](const PixelRect& p) { return overlaps(p, r); })) {
                continue;
            }
            placed.push_back(r);
            PlantedObject obj;
            obj.box = Box(static_cast<double>(r.x) / o.width, static_cast<double>(r.y) / o.height,
                          static_cast<double>(r.width) / o.width, static_cast<double>(r.height) / o.height);
            obj.class_name = cls;
            const std::uint64_t hc = hash_string(cls);
            for (int c = 0; c < 3; ++c) {
                const auto base = static_cast<std::uint8_t>(150 + ((hc >> (8 * c)) % 100));
                obj.color[c] = scaled(base, light);
            }
            obj.thermal = static_cast<std::uint8_t>(120 + (hc >> 24) % 130);
            s.objects.push_back(obj);
            break;
        }
    }
    return s;
}

} // namespace

fs::path generate_mock_suite(const MockSuiteOptions& o) {
    if (o.out_dir.empty()) {
        throw InvalidInput("mock suite needs an output directory");
    }
    if (o.count == 0 || o.width < 16 || o.height < 16 || o.min_objects < 0 || o.max_objects < o.min_objects) {
        throw InvalidInput("invalid mock suite dimensions or object counts");
    }
    const Vocabulary vocab(o.classes, std::size_t{0});
    std::vector<std::string> detectable;
    for (std::size_t k : vocab.detectable()) {
        detectable.push_back(vocab.name(k));
    }
    for (const auto& c : o.text_blind_classes) {
        if (!vocab.find(c) || *vocab.find(c) == 0) {
            throw InvalidInput("text-blind class '" + c + "' is not a detectable vocabulary class");
        }
    }

    const fs::path root = o.out_dir;
    const fs::path data = root / "data";
    const fs::path split = data / "test";
    for (const fs::path& d : {root / "scenes", split / "rgb", split / "thermal", split / "labels", root / "exemplars"}) {
        fs::create_directories(d);
    }

    {
        auto out = open_out(root / "vocab.txt");
        for (const auto& c : o.classes) {
            out << c << '\n';
        }
    }

    auto ids = open_out(data / "test.txt");
    auto conditions = open_out(root / "conditions.csv");
    conditions << "id,condition\n";
    std::vector<Exemplar> exemplars;
    for (std::size_t n = 0; n < o.count; ++n) {
        const bool night = n % 3 == 2;
        const MockScene s = make_scene(o, detectable, n, night);
        s.save(root / "scenes" / (s.id + ".json"));
        const ImagePair pair = s.render();
        write_png(split / "rgb" / (s.id + ".png"), pair.rgb());
        write_png(split / "thermal" / (s.id + ".png"), pair.thermal());
        write_png(split / "labels" / (s.id + ".png"), s.render_labels(vocab, 0));
        ids << s.id << '\n';
        conditions << s.id << ',' << (night ? "night" : "day") << '\n';

        // First sighting of each class becomes its exemplar.
        for (const auto& obj : s.objects) {
            const bool known = std::any_of(exemplars.begin(), exemplars.end(), [&](const Exemplar& e) {
                return normalize_label(e.class_name) == normalize_label(obj.class_name);
            });
            if (known) {
                continue;
            }
            const fs::path image = fs::path("exemplars") / (s.id + ".png");
            if (!fs::exists(root / image)) {
                write_png(root / image, pair.rgb());
            }
            exemplars.push_back({obj.class_name, image, obj.box});
        }
    }
    ExemplarLibrary(exemplars).save(root / "exemplars.json");

    const json config = {
        {"schema_version", 1},
        {"dataset", {{"layout", "pst900"}, {"root", "data"}, {"split", "test"}, {"conditions_csv", "conditions.csv"}}},
        {"vocabulary", "vocab.txt"},
        {"background_index", 0},
        {"ignore_index", 0},
        {"fusion", {{"mode", "reference"}}},
        {"backend", "mock:scenes"},
        {"exemplars", "exemplars.json"},
        {"sccm_enabled", true},
        {"visual_prompts_enabled", true},
        {"output_dir", "out"},
        {"workers", 1},
        {"seed", o.seed},
    };
    const fs::path config_path = root / "config.json";
    open_out(config_path) << config.dump(2) << '\n';
    return config_path;
}

} // namespace openrgbt
