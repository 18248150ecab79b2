#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiertax/data.hpp"
#include "hiertax/nnet.hpp"
#include "hiertax/taxonomy.hpp"

namespace hiertax {

enum class StrategyKind : std::uint8_t { LeafNode = 0, Flattened = 1, LeakyFlattened = 2, Dense = 3, LeakyDense = 4 };

inline constexpr std::array<StrategyKind, 5> kAllStrategies{
    StrategyKind::LeafNode, StrategyKind::Flattened, StrategyKind::LeakyFlattened, StrategyKind::Dense,
    StrategyKind::LeakyDense};

/// Machine name: leaf-node, flattened, leaky-flattened, dense, leaky-dense.
std::string_view to_string(StrategyKind kind);
/// Table row label, e.g. "Leaky Dense Hierarchy".
std::string_view display_name(StrategyKind kind);
/// Accepts machine names, CamelCase and snake_case spellings.
StrategyKind parse_strategy(std::string_view text);

bool is_leaky(StrategyKind kind);
bool is_dense(StrategyKind kind);

/// What a Dense child head receives from its parent head.
enum class DenseFeed : std::uint8_t { Hidden = 0, Logits = 1 };

struct ModelConfig {
    BackboneConfig backbone;
    /// Head hidden width; 0 makes every head a linear probe on its input.
    std::size_t hidden = 32;
    DenseFeed feed = DenseFeed::Hidden;
    std::uint64_t seed = 42;
};

/// One classification head: optional Linear+ReLU hidden layer, then a linear
/// output layer of width spec.width().
struct HeadModule {
    Head spec;
    std::optional<std::size_t> parent_head;
    std::optional<LinearLayer> hidden;
    LinearLayer out;

    std::size_t input_dim() const { return hidden ? hidden->in_dim() : out.in_dim(); }
};

/// Backbone plus strategy-specific heads.
class Model {
  public:
    struct HeadCache {
        Tensor input;
        Tensor hidden;  ///< post-ReLU; empty for linear heads
        Tensor logits;
    };
    struct Cache {
        Backbone::Cache backbone;
        Tensor features;
        std::vector<HeadCache> heads;
    };

    Model(std::shared_ptr<const Taxonomy> t, StrategyKind kind, std::size_t input_dim, ModelConfig cfg);

    StrategyKind kind() const { return kind_; }
    const Taxonomy& taxonomy() const { return *taxonomy_; }
    std::shared_ptr<const Taxonomy> taxonomy_ptr() const { return taxonomy_; }
    const ModelConfig& config() const { return cfg_; }
    std::size_t input_dim() const { return backbone_.input_dim(); }
    DenseFeed feed() const;

    std::size_t head_count() const { return heads_.size(); }
    const HeadModule& head(std::size_t h) const { return heads_.at(h); }
    std::vector<Head> head_specs() const;
    std::vector<std::size_t> head_widths() const;
    const Backbone& backbone() const { return backbone_; }
    Backbone& backbone() { return backbone_; }

    /// Per-head training targets for a sample of `leaf`.
    RoutedLabel route(NodeIndex leaf) const;

    /// Logits per head for a (batch, input_dim) tensor.
    std::vector<Tensor> forward(const Tensor& x, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients given dL/dlogits per head.
    void backward(const Cache& cache, const std::vector<Tensor>& dlogits);

    /// Backbone first, then each head's hidden and output layers.
    void init(SplitMix64& rng);
    void zero_grad();
    /// Declaration order: backbone blocks, then each head's hidden and output layers.
    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;

  private:
    std::shared_ptr<const Taxonomy> taxonomy_;
    StrategyKind kind_;
    ModelConfig cfg_;
    Backbone backbone_;
    std::vector<HeadModule> heads_;
};

/// Freshly initialized model (weights from the "init" substream of cfg.seed).
Model build_model(std::shared_ptr<const Taxonomy> t, StrategyKind kind, std::size_t input_dim,
                  const ModelConfig& cfg);

struct MultiHeadLoss {
    double total = 0.0;
    std::vector<double> per_head;
    std::vector<std::size_t> applicable;
    std::vector<Tensor> dlogits;
};

/// Sum over heads of the weighted cross-entropy averaged over the samples whose
/// target in that head is concrete. Inactive heads and heads with no
/// applicable sample contribute zero.
MultiHeadLoss compute_loss(const std::vector<Tensor>& logits, std::span<const RoutedLabel> routed,
                           const ClassWeights& weights);

/// Class weights with every class weighted 1 and every head active.
ClassWeights uniform_weights(std::span<const std::size_t> widths);

struct TrainConfig {
    int epochs = 200;
    std::size_t batch = 16;
    LrSchedule lr;
    std::uint64_t seed = 42;
    std::vector<int> train_subsets{0, 1, 2, 3};
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<EpochRecord> history;
    ClassWeights weights;
};

/// Adam over shuffled mini-batches of the training subsets. Deterministic given
/// model_cfg.seed and train_cfg.seed.
TrainResult train(const Dataset& d, StrategyKind kind, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Unconditional probability of every node (indexed by NodeIndex) and, for
/// leaky heads, the conditional probability of the fall-back slot.
struct NodeProbabilities {
    std::vector<double> node;
    std::vector<double> leak;
};

struct PredictOptions {
    /// Drop the leaky slot from each head's softmax before chaining.
    bool renormalize_leaky = false;
};

/// Leaf-Node aggregation: leaves take `leaf_probs` (in Taxonomy::leaves()
/// order) and every internal node is the sum of its children.
NodeProbabilities aggregate_leaf_probs(const Taxonomy& t, std::span<const double> leaf_probs);

/// Chain-rule aggregation: P(root) = 1 and P(child) = P(parent) * p(child | parent),
/// where the conditional is the head's softmax entry (1 for an only child).
NodeProbabilities aggregate_conditionals(const Taxonomy& t, std::span<const Head> heads,
                                         std::span<const std::vector<double>> head_probs);

/// Mass that left the tree through leaky slots: sum_h P(owner_h) * leak_h.
double leaked_mass(const Taxonomy& t, std::span<const Head> heads, const NodeProbabilities& p);

std::vector<NodeProbabilities> predict_node_probs(const Model& m, const Tensor& x, PredictOptions opt = {});
NodeProbabilities predict_node_probs(const Model& m, std::span<const double> features, PredictOptions opt = {});

/// (batch, D) tensor of sample features.
Tensor features_of(const Dataset& d);

/// CSV id,<node tags depth-first>[,leak_<owner>...] with 17 significant digits.
std::string write_predictions(const Model& m, const Dataset& d, std::span<const NodeProbabilities> probs);

/// Central-difference check of the full model loss on one batch.
GradCheckResult grad_check_model(Model& m, const Tensor& x, std::span<const RoutedLabel> routed,
                                 const ClassWeights& weights, double h = 1e-5);

} // namespace hiertax
