#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiertax/data.hpp"
#include "hiertax/strategies.hpp"
#include "hiertax/taxonomy.hpp"

namespace hiertax {

struct ScoredLabel {
    double score = 0.0;
    bool positive = false;
};

/// Mann-Whitney AUC with average ranks for ties. Empty when either class is
/// missing.
std::optional<double> auc(std::span<const ScoredLabel> items);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

/// One point per distinct score (descending), preceded by (0, 0, +inf).
std::vector<RocPoint> roc_curve(std::span<const ScoredLabel> items);

enum class AucPopulation {
    All,         ///< every evaluated sample
    Applicable,  ///< samples whose true path contains the node's parent
};

AucPopulation parse_population(std::string_view text);
std::string_view to_string(AucPopulation p);

struct NodeResult {
    NodeIndex node = 0;
    std::optional<double> auc;
    std::size_t n_pos = 0;
    std::size_t n_total = 0;
};

struct HeadResult {
    Head head;
    std::string display;
    std::optional<double> mauc;
};

struct Report {
    /// Non-root nodes, depth-first.
    std::vector<NodeResult> nodes;
    std::vector<HeadResult> heads;
    std::optional<double> leaf_mauc;
    std::vector<std::string> warnings;

    const NodeResult* find(NodeIndex n) const;
};

/// Weighted mean over defined values; empty when nothing is defined or all
/// weights are zero.
std::optional<double> weighted_mean(std::span<const std::optional<double>> values,
                                    std::span<const std::size_t> weights);

/// One-vs-rest AUC per node with score P(node), positives = samples whose
/// path contains the node. Heads are the taxonomy's non-leaky heads.
Report evaluate_scores(const Taxonomy& t, std::span<const NodeIndex> true_leaves,
                       std::span<const NodeProbabilities> probs, AucPopulation population = AucPopulation::All);

struct EvalOptions {
    AucPopulation population = AucPopulation::All;
    PredictOptions predict;
};

Report evaluate(const Model& m, const Dataset& test, const EvalOptions& opt = {});

/// Sample-weighted mean of the AUCs of a head's classes.
std::optional<double> head_mauc(const Report& r, const Head& head);
/// Sample-weighted mean of the leaf AUCs.
std::optional<double> leaf_mauc(const Report& r, const Taxonomy& t);

/// node,auc,n_pos,n_total / head,mauc / metric,value blocks.
std::string report_csv(const Report& r, const Taxonomy& t);
std::string roc_csv(std::span<const RocPoint> points);
/// ROC points for node `n` over the same population evaluate_scores uses.
std::vector<RocPoint> node_roc(const Taxonomy& t, NodeIndex n, std::span<const NodeIndex> true_leaves,
                               std::span<const NodeProbabilities> probs, AucPopulation population);

struct StrategyRow {
    std::string label;
    Report report;
};

/// Rows = strategies; columns = mAUC per head, then mAUC@L (percent, 1 decimal).
std::string format_head_table(const Taxonomy& t, std::span<const StrategyRow> rows);
/// Rows = strategies; columns = per-node AUC grouped by head (percent, 1 decimal).
std::string format_node_table(const Taxonomy& t, std::span<const StrategyRow> rows);

} // namespace hiertax
