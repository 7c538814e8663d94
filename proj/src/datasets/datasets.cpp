#include "openrgbt/datasets.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"

namespace openrgbt {

namespace fs = std::filesystem;

LabelMapping::LabelMapping(std::vector<std::optional<std::uint8_t>> table, int ignore_index)
    : table_(std::move(table)), ignore_(ignore_index) {
    if (ignore_index < 0 || ignore_index > 255) {
        throw InvalidInput("ignore index must fit in 8 bits");
    }
}

LabelMapping LabelMapping::identity(std::size_t num_classes, int ignore_index) {
    std::vector<std::optional<std::uint8_t>> table(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) {
        table[i] = static_cast<std::uint8_t>(i);
    }
    return LabelMapping(std::move(table), ignore_index);
}

LabelMapping LabelMapping::from_json(const nlohmann::json& spec, const Vocabulary& vocab, int ignore_index) {
    auto resolve = [&](const nlohmann::json& v) -> std::optional<std::uint8_t> {
        if (v.is_null()) {
            return std::nullopt;
        }
        if (v.is_number_integer()) {
            const auto idx = v.get<long long>();
            if (idx < 0 || static_cast<std::size_t>(idx) >= vocab.size()) {
                throw ConfigError("label mapping target " + std::to_string(idx) + " outside the vocabulary");
            }
            return static_cast<std::uint8_t>(idx);
        }
        if (v.is_string()) {
            const auto idx = vocab.find(v.get<std::string>());
            if (!idx) {
                throw ConfigError("label mapping target '" + v.get<std::string>() + "' not in the vocabulary");
            }
            return static_cast<std::uint8_t>(*idx);
        }
        throw ConfigError("label mapping values must be a class name, an index or null");
    };

    std::vector<std::optional<std::uint8_t>> table;
    if (spec.is_array()) {
        for (const auto& v : spec) {
            table.push_back(resolve(v));
        }
    } else if (spec.is_object()) {
        for (const auto& [key, v] : spec.items()) {
            std::size_t pos = 0;
            int idx = -1;
            try {
                idx = std::stoi(key, &pos);
            } catch (const std::exception&) {
            }
            if (idx < 0 || idx > 255 || pos != key.size()) {
                throw ConfigError("label mapping keys must be dataset indices 0-255, got '" + key + "'");
            }
            if (table.size() <= static_cast<std::size_t>(idx)) {
                table.resize(static_cast<std::size_t>(idx) + 1);
            }
            table[static_cast<std::size_t>(idx)] = resolve(v);
        }
    } else {
        throw ConfigError("label mapping must be a JSON array or object");
    }
    return LabelMapping(std::move(table), ignore_index);
}

std::uint8_t LabelMapping::map(std::uint8_t dataset_label) const noexcept {
    if (dataset_label < table_.size() && table_[dataset_label]) {
        return *table_[dataset_label];
    }
    return static_cast<std::uint8_t>(ignore_);
}

Raster remap(const Raster& gt, const LabelMapping& mapping) {
    if (gt.channels() != 1) {
        throw InvalidInput("label map must be single-channel");
    }
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) {
        lut[v] = mapping.map(static_cast<std::uint8_t>(v));
    }
    Raster out = gt;
    for (auto& v : out.samples()) {
        v = lut[v];
    }
    return out;
}

DatasetLayout parse_layout(const std::string& name) {
    const std::string key = normalize_label(name);
    if (key == "mfnet") {
        return DatasetLayout::mfnet;
    }
    if (key == "pst900") {
        return DatasetLayout::pst900;
    }
    if (key == "generic") {
        return DatasetLayout::generic;
    }
    throw ConfigError("unknown dataset layout '" + name + "' (expected mfnet, pst900 or generic)");
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& doc, const fs::path& base) {
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_relative() ? base / path : path;
    };
    DatasetConfig c;
    try {
        c.layout = parse_layout(doc.at("layout").get<std::string>());
        c.root = resolve(doc.at("root").get<std::string>());
        c.split = doc.value("split", c.split);
        if (doc.contains("conditions_csv") && !doc["conditions_csv"].is_null()) {
            c.conditions_csv = resolve(doc["conditions_csv"].get<std::string>());
        }
        if (doc.contains("mapping") && !doc["mapping"].is_null()) {
            c.mapping = doc["mapping"];
        }
        c.rgb_dir = doc.value("rgb_dir", c.rgb_dir);
        c.thermal_dir = doc.value("thermal_dir", c.thermal_dir);
        c.label_dir = doc.value("label_dir", c.label_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset config: ") + e.what());
    }
    return c;
}

DatasetIndex::DatasetIndex(DatasetLayout layout, std::string split, std::vector<SampleEntry> entries,
                           std::size_t skipped)
    : layout_(layout), split_(std::move(split)), entries_(std::move(entries)), skipped_(skipped) {
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

DatasetSample DatasetIndex::load(const SampleEntry& entry) const {
    DatasetSample sample;
    if (layout_ == DatasetLayout::mfnet) {
        const DecodedImage rgbt = read_png_any(entry.rgb);
        if (rgbt.channels != 4) {
            throw InvalidInput(entry.rgb.string() + ": MFNet images must have 4 channels (RGB + thermal)");
        }
        std::vector<std::uint8_t> rgb;
        std::vector<std::uint8_t> thermal;
        rgb.reserve(static_cast<std::size_t>(rgbt.width) * rgbt.height * 3);
        thermal.reserve(static_cast<std::size_t>(rgbt.width) * rgbt.height);
        for (std::size_t i = 0; i < rgbt.samples.size(); i += 4) {
            rgb.insert(rgb.end(), rgbt.samples.begin() + i, rgbt.samples.begin() + i + 3);
            thermal.push_back(rgbt.samples[i + 3]);
        }
        sample.pair = ImagePair(Raster(rgbt.width, rgbt.height, 3, std::move(rgb)),
                                Raster(rgbt.width, rgbt.height, 1, std::move(thermal)), entry.id);
    } else {
        Raster rgb = read_png(entry.rgb);
        if (rgb.channels() == 1) {
            // Grayscale visible frames are replicated to three channels.
            std::vector<std::uint8_t> expanded;
            expanded.reserve(rgb.pixel_count() * 3);
            for (const auto v : rgb.samples()) {
                expanded.insert(expanded.end(), 3, v);
            }
            rgb = Raster(rgb.width(), rgb.height(), 3, std::move(expanded));
        }
        Raster thermal = read_png(entry.thermal);
        if (thermal.channels() == 3) {
            // Thermal frames saved as RGB carry the same value in each channel.
            std::vector<std::uint8_t> gray;
            gray.reserve(thermal.pixel_count());
            const auto s = thermal.samples();
            for (std::size_t i = 0; i < s.size(); i += 3) {
                gray.push_back(s[i]);
            }
            thermal = Raster(thermal.width(), thermal.height(), 1, std::move(gray));
        }
        sample.pair = ImagePair(std::move(rgb), std::move(thermal), entry.id);
    }
    if (entry.label) {
        Raster gt = read_label_png(*entry.label);
        if (!same_dims(gt, sample.pair.rgb())) {
            throw DimensionMismatch(entry.label->string() + ": label size differs from the images");
        }
        sample.gt = std::move(gt);
    }
    sample.condition = entry.condition;
    sample.split = split_;
    return sample;
}

SampleStream::SampleStream(DatasetIndex index) : index_(std::move(index)) {}

std::optional<DatasetSample> SampleStream::next() {
    if (cursor_ >= index_.size()) {
        return std::nullopt;
    }
    return index_.load(index_.entries()[cursor_++]);
}

namespace {

std::vector<std::string> read_split_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open split list " + path.string());
    }
    std::vector<std::string> ids;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) {
            continue;
        }
        const auto last = line.find_last_not_of(" \t");
        std::string id = line.substr(first, last - first + 1);
        if (id.find_first_of(" \t/\\") != std::string::npos) {
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": malformed sample id '" + id + "'");
        }
        if (fs::path(id).has_extension() && fs::path(id).extension() == ".png") {
            id = fs::path(id).stem().string();
        }
        if (seen.insert(id).second) {
            ids.push_back(std::move(id));
        }
    }
    return ids;
}

std::vector<std::string> list_png_stems(const fs::path& dir) {
    std::vector<std::string> ids;
    if (!fs::is_directory(dir)) {
        throw IoError("missing directory " + dir.string());
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            ids.push_back(e.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

DatasetIndex build_index(DatasetLayout layout, const std::string& split, const std::vector<std::string>& ids,
                         const fs::path& rgb_dir, const std::optional<fs::path>& thermal_dir,
                         const fs::path& label_dir) {
    const bool has_labels = fs::is_directory(label_dir);
    std::vector<SampleEntry> entries;
    std::size_t skipped = 0;
    for (const auto& id : ids) {
        SampleEntry e;
        e.id = id;
        e.rgb = rgb_dir / (id + ".png");
        if (thermal_dir) {
            e.thermal = *thermal_dir / (id + ".png");
        }
        if (has_labels) {
            e.label = label_dir / (id + ".png");
        }
        const bool ok = fs::is_regular_file(e.rgb) && (!thermal_dir || fs::is_regular_file(e.thermal)) &&
                        (!e.label || fs::is_regular_file(*e.label));
        if (!ok) {
            ++skipped;
            continue;
        }
        entries.push_back(std::move(e));
    }
    return DatasetIndex(layout, split, std::move(entries), skipped);
}

} // namespace

DatasetIndex index_mfnet_layout(const fs::path& root, const std::string& split) {
    if (!fs::is_directory(root)) {
        throw IoError("dataset root " + root.string() + " does not exist");
    }
    const auto ids = read_split_file(root / (split + ".txt"));
    return build_index(DatasetLayout::mfnet, split, ids, root / "images", std::nullopt, root / "labels");
}

DatasetIndex index_pst900_layout(const fs::path& root, const std::string& split) {
    if (!fs::is_directory(root)) {
        throw IoError("dataset root " + root.string() + " does not exist");
    }
    const fs::path dir = root / split;
    const fs::path list = root / (split + ".txt");
    const auto ids = fs::is_regular_file(list) ? read_split_file(list) : list_png_stems(dir / "rgb");
    return build_index(DatasetLayout::pst900, split, ids, dir / "rgb", dir / "thermal", dir / "labels");
}

DatasetIndex index_generic_layout(const DatasetConfig& config) {
    if (!fs::is_directory(config.root)) {
        throw IoError("dataset root " + config.root.string() + " does not exist");
    }
    const fs::path list = config.root / (config.split + ".txt");
    const auto ids = fs::is_regular_file(list) ? read_split_file(list) : list_png_stems(config.root / config.rgb_dir);
    return build_index(DatasetLayout::generic, config.split, ids, config.root / config.rgb_dir,
                       config.root / config.thermal_dir, config.root / config.label_dir);
}

DatasetIndex index_dataset(const DatasetConfig& config) {
    DatasetIndex index;
    switch (config.layout) {
    case DatasetLayout::mfnet:
        index = index_mfnet_layout(config.root, config.split);
        break;
    case DatasetLayout::pst900:
        index = index_pst900_layout(config.root, config.split);
        break;
    case DatasetLayout::generic:
        index = index_generic_layout(config);
        break;
    }
    if (!config.conditions_csv) {
        return index;
    }
    const auto conditions = read_conditions_csv(*config.conditions_csv);
    std::vector<SampleEntry> entries = index.entries();
    for (auto& e : entries) {
        if (const auto it = conditions.find(e.id); it != conditions.end()) {
            e.condition = it->second;
        }
    }
    return DatasetIndex(index.layout(), config.split, std::move(entries), index.skipped());
}

SampleStream load_mfnet_layout(const fs::path& root, const std::string& split) {
    return SampleStream(index_mfnet_layout(root, split));
}

SampleStream load_pst900_layout(const fs::path& root, const std::string& split) {
    return SampleStream(index_pst900_layout(root, split));
}

std::map<std::string, std::string> read_conditions_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open conditions file " + path.string());
    }
    std::map<std::string, std::string> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto comma = line.find(',');
        if (line.empty()) {
            continue;
        }
        if (comma == std::string::npos) {
            throw InvalidInput(path.string() + ": expected 'id,condition' rows");
        }
        std::string id = line.substr(0, comma);
        std::string cond = normalize_label(line.substr(comma + 1));
        id = id.substr(0, id.find_last_not_of(" \t") + 1);
        if (first && normalize_label(id) == "id") {
            first = false;
            continue;
        }
        first = false;
        out[id] = cond;
    }
    return out;
}

} // namespace openrgbt
