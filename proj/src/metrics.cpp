#include "hiertax/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hiertax {

namespace {

std::vector<std::size_t> order_by_score(std::span<const ScoredLabel> items) {
    for (const auto& it : items) {
        if (!std::isfinite(it.score)) {
            throw std::invalid_argument("auc: non-finite score");
        }
    }
    std::vector<std::size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return items[a].score < items[b].score; });
    return idx;
}

std::string percent(const std::optional<double>& v) {
    if (!v) {
        return "--";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
    return buf;
}

std::string pad_right(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::vector<ScoredLabel> node_items(const Taxonomy& t, NodeIndex n, std::span<const NodeIndex> true_leaves,
                                    std::span<const NodeProbabilities> probs, AucPopulation population) {
    std::vector<ScoredLabel> items;
    const auto parent = t.node(n).parent;
    for (std::size_t i = 0; i < true_leaves.size(); ++i) {
        if (population == AucPopulation::Applicable && parent && !t.is_ancestor(*parent, true_leaves[i])) {
            continue;
        }
        items.push_back({probs[i].node.at(n), t.is_ancestor(n, true_leaves[i])});
    }
    return items;
}

} // namespace

std::optional<double> auc(std::span<const ScoredLabel> items) {
    const auto idx = order_by_score(items);
    std::size_t n_pos = 0;
    for (const auto& it : items) {
        n_pos += it.positive ? 1 : 0;
    }
    const std::size_t n_neg = items.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return std::nullopt;
    }
    // Sum of 1-based average ranks of the positives.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && items[idx[j + 1]].score == items[idx[i]].score) {
            ++j;
        }
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (items[idx[k]].positive) {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<RocPoint> roc_curve(std::span<const ScoredLabel> items) {
    auto idx = order_by_score(items);
    std::reverse(idx.begin(), idx.end());
    std::size_t n_pos = 0;
    for (const auto& it : items) {
        n_pos += it.positive ? 1 : 0;
    }
    const std::size_t n_neg = items.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return {};
    }
    std::vector<RocPoint> out{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double s = items[idx[i]].score;
        while (i < idx.size() && items[idx[i]].score == s) {
            (items[idx[i]].positive ? tp : fp) += 1;
            ++i;
        }
        out.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                       static_cast<double>(tp) / static_cast<double>(n_pos), s});
    }
    return out;
}

AucPopulation parse_population(std::string_view text) {
    if (text == "all") {
        return AucPopulation::All;
    }
    if (text == "applicable") {
        return AucPopulation::Applicable;
    }
    throw ValidationError("auc population must be 'all' or 'applicable', got '" + std::string(text) + "'");
}

std::string_view to_string(AucPopulation p) {
    return p == AucPopulation::All ? "all" : "applicable";
}

const NodeResult* Report::find(NodeIndex n) const {
    for (const auto& r : nodes) {
        if (r.node == n) {
            return &r;
        }
    }
    return nullptr;
}

std::optional<double> weighted_mean(std::span<const std::optional<double>> values,
                                    std::span<const std::size_t> weights) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] && weights[i] > 0) {
            num += static_cast<double>(weights[i]) * *values[i];
            den += static_cast<double>(weights[i]);
        }
    }
    if (den == 0.0) {
        return std::nullopt;
    }
    return num / den;
}

Report evaluate_scores(const Taxonomy& t, std::span<const NodeIndex> true_leaves,
                       std::span<const NodeProbabilities> probs, AucPopulation population) {
    if (true_leaves.size() != probs.size()) {
        throw std::invalid_argument("evaluate_scores: one prediction per sample required");
    }
    if (true_leaves.empty()) {
        throw ValidationError("evaluation set is empty");
    }
    Report r;
    for (auto n : t.depth_first()) {
        if (n == t.root()) {
            continue;
        }
        const auto items = node_items(t, n, true_leaves, probs, population);
        NodeResult nr{n, auc(items), 0, items.size()};
        for (const auto& it : items) {
            nr.n_pos += it.positive ? 1 : 0;
        }
        if (!nr.auc) {
            r.warnings.push_back("node " + t.tag(n).str() + ": AUC undefined (" + std::to_string(nr.n_pos) +
                                 " positives of " + std::to_string(nr.n_total) + "); excluded from means");
        }
        r.nodes.push_back(nr);
    }
    for (const auto& h : derive_heads(t, false)) {
        r.heads.push_back(HeadResult{h, head_display_name(t, h), head_mauc(r, h)});
    }
    r.leaf_mauc = leaf_mauc(r, t);
    return r;
}

Report evaluate(const Model& m, const Dataset& test, const EvalOptions& opt) {
    const auto probs = predict_node_probs(m, features_of(test), opt.predict);
    std::vector<NodeIndex> leaves;
    leaves.reserve(test.size());
    for (const auto& s : test.samples()) {
        leaves.push_back(s.leaf);
    }
    return evaluate_scores(m.taxonomy(), leaves, probs, opt.population);
}

std::optional<double> head_mauc(const Report& r, const Head& head) {
    std::vector<std::optional<double>> values;
    std::vector<std::size_t> weights;
    for (auto c : head.classes) {
        if (const auto* nr = r.find(c)) {
            values.push_back(nr->auc);
            weights.push_back(nr->n_pos);
        }
    }
    return weighted_mean(values, weights);
}

std::optional<double> leaf_mauc(const Report& r, const Taxonomy& t) {
    std::vector<std::optional<double>> values;
    std::vector<std::size_t> weights;
    for (auto leaf : t.leaves()) {
        if (const auto* nr = r.find(leaf)) {
            values.push_back(nr->auc);
            weights.push_back(nr->n_pos);
        }
    }
    return weighted_mean(values, weights);
}

std::string report_csv(const Report& r, const Taxonomy& t) {
    std::string out = "node,auc,n_pos,n_total\n";
    for (const auto& n : r.nodes) {
        out += t.tag(n.node).str() + ',' + (n.auc ? format_real(*n.auc) : std::string("NA")) + ',' +
               std::to_string(n.n_pos) + ',' + std::to_string(n.n_total) + '\n';
    }
    out += "\nhead,parent,mauc\n";
    for (const auto& h : r.heads) {
        out += h.display + ',' + t.tag(h.head.parent).str() + ',' + (h.mauc ? format_real(*h.mauc) : std::string("NA")) + '\n';
    }
    out += "\nmetric,value\n";
    out += "mAUC@L," + (r.leaf_mauc ? format_real(*r.leaf_mauc) : std::string("NA")) + '\n';
    return out;
}

std::string roc_csv(std::span<const RocPoint> points) {
    std::string out = "fpr,tpr,threshold\n";
    for (const auto& p : points) {
        out += format_real(p.fpr) + ',' + format_real(p.tpr) + ',' +
               (std::isinf(p.threshold) ? std::string("inf") : format_real(p.threshold)) + '\n';
    }
    return out;
}

std::vector<RocPoint> node_roc(const Taxonomy& t, NodeIndex n, std::span<const NodeIndex> true_leaves,
                               std::span<const NodeProbabilities> probs, AucPopulation population) {
    return roc_curve(node_items(t, n, true_leaves, probs, population));
}

std::string format_head_table(const Taxonomy& t, std::span<const StrategyRow> rows) {
    constexpr std::size_t kLabel = 28;
    constexpr std::size_t kCol = 10;
    const auto heads = derive_heads(t, false);
    std::string out = pad_right("Methods", kLabel);
    for (const auto& h : heads) {
        out += pad_left("mAUC@" + head_display_name(t, h), kCol);
    }
    out += pad_left("mAUC@L", kCol) + '\n';
    for (const auto& row : rows) {
        out += pad_right(row.label, kLabel);
        for (const auto& h : heads) {
            std::optional<double> v;
            for (const auto& hr : row.report.heads) {
                if (hr.head.parent == h.parent) {
                    v = hr.mauc;
                }
            }
            out += pad_left(percent(v), kCol);
        }
        out += pad_left(percent(row.report.leaf_mauc), kCol) + '\n';
    }
    return out;
}

std::string format_node_table(const Taxonomy& t, std::span<const StrategyRow> rows) {
    constexpr std::size_t kLabel = 28;
    constexpr std::size_t kCol = 7;
    const auto heads = derive_heads(t, false);
    std::string out = pad_right("Methods", kLabel);
    for (const auto& h : heads) {
        out += " |";
        for (auto c : h.classes) {
            out += pad_left(t.tag(c).str(), kCol);
        }
    }
    out += '\n';
    for (const auto& row : rows) {
        out += pad_right(row.label, kLabel);
        for (const auto& h : heads) {
            out += " |";
            for (auto c : h.classes) {
                const auto* nr = row.report.find(c);
                out += pad_left(percent(nr ? nr->auc : std::nullopt), kCol);
            }
        }
        out += '\n';
    }
    return out;
}

} // namespace hiertax
