#include "hiertax/strategies.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hiertax {

namespace {

std::string normalize_name(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '-' || c == '_' || c == ' ') {
            continue;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::vector<double> softmax_vector(std::span<const double> z) {
    std::vector<double> p(z.size());
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        p[j] = std::exp(z[j] - m);
        sum += p[j];
    }
    for (auto& v : p) {
        v /= sum;
    }
    return p;
}

} // namespace

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
    case StrategyKind::LeafNode: return "leaf-node";
    case StrategyKind::Flattened: return "flattened";
    case StrategyKind::LeakyFlattened: return "leaky-flattened";
    case StrategyKind::Dense: return "dense";
    case StrategyKind::LeakyDense: return "leaky-dense";
    }
    return "unknown";
}

std::string_view display_name(StrategyKind kind) {
    switch (kind) {
    case StrategyKind::LeafNode: return "Leaf-Node";
    case StrategyKind::Flattened: return "Flattened Hierarchy";
    case StrategyKind::LeakyFlattened: return "Leaky Flattened Hierarchy";
    case StrategyKind::Dense: return "Dense Hierarchy";
    case StrategyKind::LeakyDense: return "Leaky Dense Hierarchy";
    }
    return "unknown";
}

StrategyKind parse_strategy(std::string_view text) {
    const auto key = normalize_name(text);
    for (auto k : kAllStrategies) {
        if (normalize_name(to_string(k)) == key || normalize_name(display_name(k)) == key) {
            return k;
        }
    }
    throw ValidationError("unknown strategy '" + std::string(text) +
                          "' (expected leaf-node, flattened, leaky-flattened, dense or leaky-dense)");
}

bool is_leaky(StrategyKind kind) {
    return kind == StrategyKind::LeakyFlattened || kind == StrategyKind::LeakyDense;
}

bool is_dense(StrategyKind kind) {
    return kind == StrategyKind::Dense || kind == StrategyKind::LeakyDense;
}

Model::Model(std::shared_ptr<const Taxonomy> t, StrategyKind kind, std::size_t input_dim, ModelConfig cfg)
    : taxonomy_(std::move(t)), kind_(kind), cfg_(std::move(cfg)), backbone_(input_dim, cfg_.backbone) {
    if (!taxonomy_) {
        throw std::invalid_argument("Model: null taxonomy");
    }
    if (input_dim == 0) {
        throw ValidationError("model input dimension must be positive");
    }
    const auto& tax = *taxonomy_;
    std::vector<Head> specs;
    if (kind_ == StrategyKind::LeafNode) {
        specs.push_back(Head{tax.root(), tax.leaves(), false});
    } else {
        specs = derive_heads(tax, is_leaky(kind_));
    }

    const auto features = backbone_.output_dim();
    const auto fed = feed();
    for (std::size_t h = 0; h < specs.size(); ++h) {
        HeadModule hm;
        hm.spec = specs[h];
        std::size_t in = features;
        if (is_dense(kind_)) {
            // Nearest strict ancestor of the owner that owns a head.
            auto cur = tax.node(hm.spec.parent).parent;
            while (cur && !hm.parent_head) {
                for (std::size_t p = 0; p < h; ++p) {
                    if (specs[p].parent == *cur) {
                        hm.parent_head = p;
                    }
                }
                cur = tax.node(*cur).parent;
            }
            if (hm.parent_head) {
                in += fed == DenseFeed::Hidden ? cfg_.hidden : specs[*hm.parent_head].width();
            }
        }
        const std::string name = "head." + tax.tag(hm.spec.parent).str();
        if (cfg_.hidden > 0) {
            hm.hidden.emplace(name + ".hidden", in, cfg_.hidden);
            hm.out = LinearLayer(name + ".out", cfg_.hidden, hm.spec.width());
        } else {
            hm.out = LinearLayer(name + ".out", in, hm.spec.width());
        }
        heads_.push_back(std::move(hm));
    }
}

DenseFeed Model::feed() const {
    return cfg_.hidden == 0 ? DenseFeed::Logits : cfg_.feed;
}

std::vector<Head> Model::head_specs() const {
    std::vector<Head> out;
    for (const auto& h : heads_) {
        out.push_back(h.spec);
    }
    return out;
}

std::vector<std::size_t> Model::head_widths() const {
    std::vector<std::size_t> out;
    for (const auto& h : heads_) {
        out.push_back(h.spec.width());
    }
    return out;
}

RoutedLabel Model::route(NodeIndex leaf) const {
    if (kind_ == StrategyKind::LeafNode) {
        if (leaf >= taxonomy_->size() || !taxonomy_->node(leaf).is_leaf()) {
            throw ValidationError("route: not a leaf");
        }
        return {HeadTarget{TargetKind::Class, *heads_[0].spec.slot_of(leaf)}};
    }
    return route_label(*taxonomy_, head_specs(), leaf);
}

std::vector<Tensor> Model::forward(const Tensor& x, Cache* cache) const {
    Backbone::Cache bcache;
    Tensor features = backbone_.forward(x, cache ? &bcache : nullptr);
    std::vector<Tensor> logits(heads_.size());
    std::vector<Tensor> hidden(heads_.size());
    std::vector<Tensor> inputs(heads_.size());
    const auto fed = feed();
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        const auto& hm = heads_[h];
        if (hm.parent_head) {
            const Tensor& from = fed == DenseFeed::Hidden ? hidden[*hm.parent_head] : logits[*hm.parent_head];
            const std::array<const Tensor*, 2> parts{&features, &from};
            inputs[h] = hconcat(parts);
        } else {
            inputs[h] = features;
        }
        if (hm.hidden) {
            hidden[h] = relu(hm.hidden->forward(inputs[h]));
            logits[h] = hm.out.forward(hidden[h]);
        } else {
            logits[h] = hm.out.forward(inputs[h]);
        }
    }
    if (cache) {
        cache->backbone = std::move(bcache);
        cache->features = std::move(features);
        cache->heads.resize(heads_.size());
        for (std::size_t h = 0; h < heads_.size(); ++h) {
            cache->heads[h] = HeadCache{std::move(inputs[h]), std::move(hidden[h]), logits[h]};
        }
    }
    return logits;
}

void Model::backward(const Cache& cache, const std::vector<Tensor>& dlogits) {
    if (dlogits.size() != heads_.size()) {
        throw std::invalid_argument("Model::backward: one gradient per head required");
    }
    const auto rows = cache.features.rows();
    const auto fcols = cache.features.cols();
    Tensor dfeatures(rows, fcols);
    // Gradient arriving at each head's fed quantity (hidden or logits) from its children.
    std::vector<Tensor> dfed(heads_.size());
    const auto fed = feed();
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        const auto& hc = cache.heads[h];
        dfed[h] = Tensor(rows, fed == DenseFeed::Hidden && heads_[h].hidden ? hc.hidden.cols() : hc.logits.cols());
    }
    for (std::size_t h = heads_.size(); h-- > 0;) {
        auto& hm = heads_[h];
        const auto& hc = cache.heads[h];
        Tensor dz = dlogits[h];
        if (fed == DenseFeed::Logits) {
            auto d = dz.values();
            const auto extra = dfed[h].values();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += extra[i];
            }
        }
        Tensor dinput;
        if (hm.hidden) {
            Tensor dh = hm.out.backward(hc.hidden, dz);
            if (fed == DenseFeed::Hidden) {
                auto d = dh.values();
                const auto extra = dfed[h].values();
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] += extra[i];
                }
            }
            relu_backward(hc.hidden, dh);
            dinput = hm.hidden->backward(hc.input, dh);
        } else {
            dinput = hm.out.backward(hc.input, dz);
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const auto src = dinput.row(r);
            auto df = dfeatures.row(r);
            for (std::size_t c = 0; c < fcols; ++c) {
                df[c] += src[c];
            }
            if (hm.parent_head) {
                auto dp = dfed[*hm.parent_head].row(r);
                for (std::size_t c = 0; c < dp.size(); ++c) {
                    dp[c] += src[fcols + c];
                }
            }
        }
    }
    backbone_.backward(cache.backbone, dfeatures);
}

void Model::zero_grad() {
    for (auto* p : parameters()) {
        p->grad.fill(0.0);
    }
}

std::vector<Param*> Model::parameters() {
    std::vector<Param*> out;
    backbone_.collect(out);
    for (auto& h : heads_) {
        if (h.hidden) {
            h.hidden->collect(out);
        }
        h.out.collect(out);
    }
    return out;
}

std::vector<const Param*> Model::parameters() const {
    std::vector<const Param*> out;
    backbone_.collect(out);
    for (const auto& h : heads_) {
        if (h.hidden) {
            h.hidden->collect(out);
        }
        h.out.collect(out);
    }
    return out;
}

void Model::init(SplitMix64& rng) {
    backbone_.init(rng);
    for (auto& h : heads_) {
        if (h.hidden) {
            h.hidden->init(rng);
        }
        h.out.init(rng);
    }
    zero_grad();
}

Model build_model(std::shared_ptr<const Taxonomy> t, StrategyKind kind, std::size_t input_dim,
                  const ModelConfig& cfg) {
    Model m(std::move(t), kind, input_dim, cfg);
    auto rng = SplitMix64::stream(cfg.seed, "init");
    m.init(rng);
    return m;
}

MultiHeadLoss compute_loss(const std::vector<Tensor>& logits, std::span<const RoutedLabel> routed,
                           const ClassWeights& weights) {
    MultiHeadLoss out;
    const auto heads = logits.size();
    out.per_head.assign(heads, 0.0);
    out.applicable.assign(heads, 0);
    out.dlogits.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        out.dlogits.emplace_back(logits[h].rows(), logits[h].cols());
        if (logits[h].rows() != routed.size()) {
            throw std::invalid_argument("compute_loss: one routed label per row required");
        }
        if (!weights.active.at(h)) {
            continue;
        }
        std::vector<std::size_t> rows;
        std::vector<std::size_t> targets;
        for (std::size_t i = 0; i < routed.size(); ++i) {
            const auto& t = routed[i].at(h);
            if (t.concrete()) {
                rows.push_back(i);
                targets.push_back(t.slot);
            }
        }
        out.applicable[h] = rows.size();
        if (rows.empty()) {
            continue;
        }
        const auto sub = gather_rows(logits[h], rows);
        const auto lg = weighted_ce(sub, targets, weights.per_head.at(h));
        out.per_head[h] = lg.loss;
        out.total += lg.loss;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto src = lg.dlogits.row(k);
            std::copy(src.begin(), src.end(), out.dlogits[h].row(rows[k]).begin());
        }
    }
    return out;
}

ClassWeights uniform_weights(std::span<const std::size_t> widths) {
    ClassWeights w;
    for (auto k : widths) {
        w.per_head.emplace_back(k, 1.0);
        w.counts.emplace_back(k, 0);
        w.active.push_back(true);
    }
    return w;
}

Tensor features_of(const Dataset& d) {
    Tensor x(d.size(), d.feature_dim());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& f = d[i].features;
        std::copy(f.begin(), f.end(), x.row(i).begin());
    }
    return x;
}

TrainResult train(const Dataset& d, StrategyKind kind, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    if (cfg.epochs < 1 || cfg.batch < 1) {
        throw ValidationError("training needs epochs >= 1 and batch >= 1");
    }
    const Dataset train_set = d.select_splits(cfg.train_subsets);
    if (train_set.empty()) {
        throw ValidationError("training set is empty (no samples in the training subsets)");
    }
    Model model = build_model(d.taxonomy_ptr(), kind, d.feature_dim(), model_cfg);
    const Tensor x = features_of(train_set);
    std::vector<RoutedLabel> routed;
    routed.reserve(train_set.size());
    for (const auto& s : train_set.samples()) {
        routed.push_back(model.route(s.leaf));
    }
    const auto widths = model.head_widths();
    ClassWeights weights = class_weights(routed, widths);

    Adam adam(model.parameters());
    auto rng = SplitMix64::stream(cfg.seed, "shuffle");
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochRecord> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr.at(epoch);
        shuffle(std::span<std::size_t>(order), rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const auto n = std::min(cfg.batch, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, n);
            const Tensor xb = gather_rows(x, idx);
            std::vector<RoutedLabel> rb;
            rb.reserve(n);
            for (auto i : idx) {
                rb.push_back(routed[i]);
            }
            model.zero_grad();
            Model::Cache cache;
            const auto logits = model.forward(xb, &cache);
            const auto loss = compute_loss(logits, rb, weights);
            model.backward(cache, loss.dlogits);
            adam.step(lr);
            sum += loss.total * static_cast<double>(n);
        }
        const EpochRecord rec{epoch, lr, sum / static_cast<double>(order.size())};
        if (!std::isfinite(rec.loss)) {
            throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        }
        history.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
    }
    return TrainResult{std::move(model), std::move(history), std::move(weights)};
}

NodeProbabilities aggregate_leaf_probs(const Taxonomy& t, std::span<const double> leaf_probs) {
    const auto leaves = t.leaves();
    if (leaf_probs.size() != leaves.size()) {
        throw std::invalid_argument("aggregate_leaf_probs: one probability per leaf required");
    }
    NodeProbabilities p;
    p.node.assign(t.size(), 0.0);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        p.node[leaves[i]] = leaf_probs[i];
    }
    const auto order = t.depth_first();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& n = t.node(*it);
        if (n.is_leaf()) {
            continue;
        }
        double sum = 0.0;
        for (auto c : n.children) {
            sum += p.node[c];
        }
        p.node[*it] = sum;
    }
    return p;
}

NodeProbabilities aggregate_conditionals(const Taxonomy& t, std::span<const Head> heads,
                                         std::span<const std::vector<double>> head_probs) {
    if (head_probs.size() != heads.size()) {
        throw std::invalid_argument("aggregate_conditionals: one distribution per head required");
    }
    std::vector<std::optional<std::size_t>> owned(t.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        if (head_probs[h].size() != heads[h].width()) {
            throw std::invalid_argument("aggregate_conditionals: distribution width mismatch");
        }
        owned[heads[h].parent] = h;
    }
    NodeProbabilities p;
    p.node.assign(t.size(), 0.0);
    p.leak.assign(heads.size(), 0.0);
    for (std::size_t h = 0; h < heads.size(); ++h) {
        if (heads[h].leaky) {
            p.leak[h] = head_probs[h][heads[h].leaky_slot()];
        }
    }
    for (auto i : t.depth_first()) {
        const auto& n = t.node(i);
        if (!n.parent) {
            p.node[i] = 1.0;
            continue;
        }
        double cond = 1.0;
        if (const auto h = owned[*n.parent]) {
            cond = head_probs[*h][*heads[*h].slot_of(i)];
        }
        p.node[i] = p.node[*n.parent] * cond;
    }
    return p;
}

double leaked_mass(const Taxonomy&, std::span<const Head> heads, const NodeProbabilities& p) {
    double mass = 0.0;
    for (std::size_t h = 0; h < heads.size() && h < p.leak.size(); ++h) {
        mass += p.node[heads[h].parent] * p.leak[h];
    }
    return mass;
}

std::vector<NodeProbabilities> predict_node_probs(const Model& m, const Tensor& x, PredictOptions opt) {
    const auto logits = m.forward(x);
    const auto specs = m.head_specs();
    std::vector<NodeProbabilities> out;
    out.reserve(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (m.kind() == StrategyKind::LeafNode) {
            const auto p = softmax_vector(logits[0].row(r));
            out.push_back(aggregate_leaf_probs(m.taxonomy(), p));
            continue;
        }
        std::vector<std::vector<double>> probs(specs.size());
        for (std::size_t h = 0; h < specs.size(); ++h) {
            auto z = logits[h].row(r);
            if (specs[h].leaky && opt.renormalize_leaky) {
                auto real = softmax_vector(z.first(specs[h].classes.size()));
                real.push_back(0.0);
                probs[h] = std::move(real);
            } else {
                probs[h] = softmax_vector(z);
            }
        }
        out.push_back(aggregate_conditionals(m.taxonomy(), specs, probs));
    }
    return out;
}

NodeProbabilities predict_node_probs(const Model& m, std::span<const double> features, PredictOptions opt) {
    Tensor x(1, features.size());
    std::copy(features.begin(), features.end(), x.row(0).begin());
    return predict_node_probs(m, x, opt).front();
}

std::string write_predictions(const Model& m, const Dataset& d, std::span<const NodeProbabilities> probs) {
    if (probs.size() != d.size()) {
        throw std::invalid_argument("write_predictions: one prediction per sample required");
    }
    const auto& t = m.taxonomy();
    const auto order = t.depth_first();
    std::vector<std::size_t> leaky_heads;
    for (std::size_t h = 0; h < m.head_count(); ++h) {
        if (m.head(h).spec.leaky) {
            leaky_heads.push_back(h);
        }
    }
    std::string out = "id";
    for (auto i : order) {
        out += ',' + t.tag(i).str();
    }
    for (auto h : leaky_heads) {
        out += ",leak_" + t.tag(m.head(h).spec.parent).str();
    }
    out += '\n';
    for (std::size_t s = 0; s < d.size(); ++s) {
        out += d[s].id;
        for (auto i : order) {
            out += ',' + format_real(probs[s].node[i]);
        }
        for (auto h : leaky_heads) {
            out += ',' + format_real(probs[s].leak[h]);
        }
        out += '\n';
    }
    return out;
}

GradCheckResult grad_check_model(Model& m, const Tensor& x, std::span<const RoutedLabel> routed,
                                 const ClassWeights& weights, double h) {
    const auto params = m.parameters();
    auto loss = [&] { return compute_loss(m.forward(x), routed, weights).total; };
    auto analytic = [&] {
        Model::Cache cache;
        const auto logits = m.forward(x, &cache);
        const auto l = compute_loss(logits, routed, weights);
        m.backward(cache, l.dlogits);
    };
    return grad_check(params, loss, analytic, h);
}

} // namespace hiertax
