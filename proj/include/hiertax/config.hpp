#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiertax/data.hpp"
#include "hiertax/metrics.hpp"
#include "hiertax/strategies.hpp"
#include "hiertax/volprep.hpp"

namespace hiertax {

/// Flat `key = value` file with '#' comments. Keys may repeat.
class ConfigFile {
  public:
    static ConfigFile parse(std::string_view text);
    static ConfigFile load(const std::filesystem::path& path);

    std::optional<std::string> get(const std::string& key) const;
    std::vector<std::string> get_all(const std::string& key) const;
    bool has(const std::string& key) const { return values_.contains(key); }
    std::vector<std::string> keys() const;

    /// Line number of the last occurrence of `key` (for diagnostics).
    std::size_t line_of(const std::string& key) const;

  private:
    std::map<std::string, std::vector<std::string>> values_;
    std::map<std::string, std::size_t> lines_;
};

enum class DataSource { None, Csv, Synthetic, Volumes };

struct ExperimentConfig {
    std::filesystem::path config_dir;
    /// Empty means the built-in lesion taxonomy.
    std::filesystem::path taxonomy_path;
    std::uint64_t seed = 42;
    std::filesystem::path out_dir = "out";

    DataSource source = DataSource::None;
    std::filesystem::path dataset_csv;
    GeneratorConfig generator;
    double generator_scale = 0.2;
    std::filesystem::path volume_dir;
    std::filesystem::path centroids;
    HuWindow hu_window;
    std::size_t crop = 48;
    std::size_t pool_block = 8;

    int split_k = 5;
    int test_subset = kTestSubset;

    std::vector<StrategyKind> strategies;
    ModelConfig model;
    TrainConfig train;

    AucPopulation population = AucPopulation::All;
    bool renormalize_leaky = false;

    double gradcheck_h = 1e-5;
    std::size_t gradcheck_batch = 8;
    double gradcheck_tolerance = 1e-4;
};

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::optional<AucPopulation> population;
};

/// Builds an experiment config. Relative paths resolve against `base_dir`.
/// Unknown keys and malformed values raise ValidationError.
ExperimentConfig make_experiment_config(const ConfigFile& file, const std::filesystem::path& base_dir,
                                        const ConfigOverrides& overrides = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Accepts decimals and simple fractions such as "1/3".
double parse_real(std::string_view text);

} // namespace hiertax
