#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiertax/taxonomy.hpp"

namespace hiertax {

struct Sample {
    std::string id;
    std::vector<double> features;
    NodeIndex leaf = 0;
    std::optional<int> split;
};

/// Labelled feature vectors bound to one taxonomy. Every sample's leaf is a
/// taxonomy leaf, ids are unique and all features are finite with a common
/// dimension.
class Dataset {
  public:
    Dataset(std::shared_ptr<const Taxonomy> taxonomy, std::size_t feature_dim);

    /// Validates and appends; throws ValidationError on any violation.
    void add(Sample sample);

    const Taxonomy& taxonomy() const { return *taxonomy_; }
    std::shared_ptr<const Taxonomy> taxonomy_ptr() const { return taxonomy_; }
    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const std::vector<Sample>& samples() const { return samples_; }
    const Sample& operator[](std::size_t i) const { return samples_.at(i); }

    bool fully_split() const;
    void set_split(std::size_t i, std::optional<int> split);

    /// Samples whose split is one of `splits`, in dataset order.
    Dataset select_splits(std::span<const int> splits) const;

  private:
    std::shared_ptr<const Taxonomy> taxonomy_;
    std::size_t feature_dim_;
    std::vector<Sample> samples_;
    std::map<std::string, std::size_t, std::less<>> ids_;
};

struct GeneratorConfig {
    std::size_t feature_dim = 32;
    std::map<NodeTag, std::size_t> leaf_counts;
    /// Offset magnitude for nodes at level 1, 2, ... (index = level - 1).
    std::vector<double> level_scales{2.0, 1.0, 0.5};
    double noise_sigma = 1.0;
    std::uint64_t seed = 42;
};

/// Leaf counts taken from the taxonomy's count column, multiplied by
/// `scale` and rounded half away from zero.
std::map<NodeTag, std::size_t> counts_from_taxonomy(const Taxonomy& t, double scale);

/// Class prototypes indexed by NodeIndex: the root sits at the origin and each
/// child adds level_scales[level - 1] times a seeded random unit vector.
std::vector<std::vector<double>> class_prototypes(const Taxonomy& t, const GeneratorConfig& cfg);

/// Gaussian clusters around the leaf prototypes. Deterministic given cfg.seed.
Dataset generate_synthetic(std::shared_ptr<const Taxonomy> t, const GeneratorConfig& cfg);

/// Per-leaf shuffled round-robin assignment to subsets 0..k-1. The round-robin
/// start rotates between leaves so overall subset sizes also differ by <= 1.
Dataset stratified_split(const Dataset& d, int k, std::uint64_t seed);

/// Conventional partition: subsets 0-3 train-dev, 4 test.
inline constexpr int kTestSubset = 4;
std::vector<int> train_subsets(int k, int test_subset);

struct ClassWeights {
    std::vector<std::vector<double>> per_head;
    std::vector<std::vector<std::size_t>> counts;
    /// False for heads that received no concrete target; they are left out of the loss.
    std::vector<bool> active;
    std::vector<std::string> warnings;
};

/// Inverse-frequency weights w_c = N / (K * n_c), zero where n_c = 0.
std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts);

/// Weights per head from routed training targets. `widths[h]` is the effective
/// output width of head h (including a leaky slot when present).
ClassWeights class_weights(std::span<const RoutedLabel> routed, std::span<const std::size_t> widths);

/// CSV with header id,leaf,split,f0..f{D-1}; split "-" means unassigned.
Dataset load_csv(std::string_view text, std::shared_ptr<const Taxonomy> t);
Dataset load_csv_file(const std::string& path, std::shared_ptr<const Taxonomy> t);
std::string write_csv(const Dataset& d);

/// 17 significant digits ("%.17g"); parses back to the same double.
std::string format_real(double v);

} // namespace hiertax
