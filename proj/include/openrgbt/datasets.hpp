#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "openrgbt/core.hpp"
#include "openrgbt/fusion.hpp"

namespace openrgbt {

struct DatasetSample {
    ImagePair pair;
    std::optional<Raster> gt;
    std::optional<std::string> condition;
    std::string split;

    const std::string& id() const noexcept { return pair.id(); }
};

/// Dataset class index -> vocabulary index, or nullopt for "ignore". Values
/// beyond the declared classes map to ignore as well.
class LabelMapping {
  public:
    LabelMapping() = default;
    LabelMapping(std::vector<std::optional<std::uint8_t>> table, int ignore_index);

    static LabelMapping identity(std::size_t num_classes, int ignore_index);

    /// Accepts either an array indexed by dataset class or an object keyed by
    /// the decimal dataset index. Values are a vocabulary name, a vocabulary
    /// index, or null.
    static LabelMapping from_json(const nlohmann::json& spec, const Vocabulary& vocab, int ignore_index);

    std::uint8_t map(std::uint8_t dataset_label) const noexcept;
    int ignore_index() const noexcept { return ignore_; }
    const std::vector<std::optional<std::uint8_t>>& table() const noexcept { return table_; }

  private:
    std::vector<std::optional<std::uint8_t>> table_;
    int ignore_ = 0;
};

Raster remap(const Raster& gt, const LabelMapping& mapping);

enum class DatasetLayout { mfnet, pst900, generic };

DatasetLayout parse_layout(const std::string& name);

/// Where each file of one sample lives. An MFNet entry stores the 4-channel
/// RGBT composite in `rgb` and leaves `thermal` empty.
struct SampleEntry {
    std::string id;
    std::filesystem::path rgb;
    std::filesystem::path thermal;
    std::optional<std::filesystem::path> label;
    std::optional<std::string> condition;
};

struct DatasetConfig {
    DatasetLayout layout = DatasetLayout::pst900;
    std::filesystem::path root;
    std::string split = "test";
    std::optional<std::filesystem::path> conditions_csv;
    /// Raw mapping spec, resolved against the vocabulary by the pipeline.
    std::optional<nlohmann::json> mapping;
    /// Generic layout only: directories relative to root.
    std::string rgb_dir = "rgb";
    std::string thermal_dir = "thermal";
    std::string label_dir = "labels";

    /// Relative paths resolve against `base`.
    static DatasetConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base);
};

/// The resolved file list of one split, in lexicographic id order. Samples
/// with missing files are dropped here and counted in `skipped`.
class DatasetIndex {
  public:
    DatasetIndex() = default;
    DatasetIndex(DatasetLayout layout, std::string split, std::vector<SampleEntry> entries, std::size_t skipped);

    const std::vector<SampleEntry>& entries() const noexcept { return entries_; }
    std::size_t skipped() const noexcept { return skipped_; }
    std::size_t size() const noexcept { return entries_.size(); }
    DatasetLayout layout() const noexcept { return layout_; }

    /// Reads the images (and label) of one entry; checks the sample invariants.
    DatasetSample load(const SampleEntry& entry) const;

  private:
    DatasetLayout layout_ = DatasetLayout::pst900;
    std::string split_;
    std::vector<SampleEntry> entries_;
    std::size_t skipped_ = 0;
};

/// Sequential reader over an index.
class SampleStream {
  public:
    explicit SampleStream(DatasetIndex index);

    std::optional<DatasetSample> next();
    std::size_t skipped() const noexcept { return index_.skipped(); }
    const DatasetIndex& index() const noexcept { return index_; }

  private:
    DatasetIndex index_;
    std::size_t cursor_ = 0;
};

/// `<root>/images/<id>.png` (4-channel RGBT), `<root>/labels/<id>.png`,
/// ids listed in `<root>/<split>.txt`.
DatasetIndex index_mfnet_layout(const std::filesystem::path& root, const std::string& split);

/// `<root>/<split>/{rgb,thermal,labels}/<id>.png`; ids from
/// `<root>/<split>.txt` when present, otherwise the sorted rgb listing.
DatasetIndex index_pst900_layout(const std::filesystem::path& root, const std::string& split);

/// Directories named by the config; optional `<root>/<split>.txt` id list.
DatasetIndex index_generic_layout(const DatasetConfig& config);

DatasetIndex index_dataset(const DatasetConfig& config);

SampleStream load_mfnet_layout(const std::filesystem::path& root, const std::string& split);
SampleStream load_pst900_layout(const std::filesystem::path& root, const std::string& split);

/// `id,condition` rows; an optional header row starting with "id" is skipped.
std::map<std::string, std::string> read_conditions_csv(const std::filesystem::path& path);

} // namespace openrgbt
