#include "hiertax/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hiertax/rng.hpp"

namespace hiertax {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::string row_error(std::size_t line, const std::string& msg) {
    return "dataset csv line " + std::to_string(line) + ": " + msg;
}

} // namespace

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Dataset::Dataset(std::shared_ptr<const Taxonomy> taxonomy, std::size_t feature_dim)
    : taxonomy_(std::move(taxonomy)), feature_dim_(feature_dim) {
    if (!taxonomy_) {
        throw std::invalid_argument("Dataset: null taxonomy");
    }
}

void Dataset::add(Sample sample) {
    if (sample.id.empty() || sample.id.find_first_of(",\n\r") != std::string::npos) {
        throw ValidationError("sample id '" + sample.id + "' is empty or contains a separator");
    }
    if (ids_.contains(sample.id)) {
        throw ValidationError("duplicate sample id '" + sample.id + "'");
    }
    if (sample.leaf >= taxonomy_->size() || !taxonomy_->node(sample.leaf).is_leaf()) {
        throw ValidationError("sample '" + sample.id + "' is not labelled with a leaf");
    }
    if (sample.features.size() != feature_dim_) {
        throw ValidationError("sample '" + sample.id + "' has " +
                              std::to_string(sample.features.size()) + " features, expected " +
                              std::to_string(feature_dim_));
    }
    if (!std::all_of(sample.features.begin(), sample.features.end(),
                     [](double v) { return std::isfinite(v); })) {
        throw ValidationError("sample '" + sample.id + "' has a non-finite feature");
    }
    ids_.emplace(sample.id, samples_.size());
    samples_.push_back(std::move(sample));
}

bool Dataset::fully_split() const {
    return std::all_of(samples_.begin(), samples_.end(),
                       [](const Sample& s) { return s.split.has_value(); });
}

void Dataset::set_split(std::size_t i, std::optional<int> split) {
    samples_.at(i).split = split;
}

Dataset Dataset::select_splits(std::span<const int> splits) const {
    Dataset out(taxonomy_, feature_dim_);
    for (const auto& s : samples_) {
        if (s.split && std::find(splits.begin(), splits.end(), *s.split) != splits.end()) {
            out.add(s);
        }
    }
    return out;
}

std::map<NodeTag, std::size_t> counts_from_taxonomy(const Taxonomy& t, double scale) {
    std::map<NodeTag, std::size_t> counts;
    for (auto leaf : t.leaves()) {
        const auto& n = t.node(leaf);
        if (!n.count) {
            throw ValidationError("leaf '" + n.tag.str() + "' has no count column");
        }
        counts[n.tag] = static_cast<std::size_t>(std::lround(static_cast<double>(*n.count) * scale));
    }
    return counts;
}

std::vector<std::vector<double>> class_prototypes(const Taxonomy& t, const GeneratorConfig& cfg) {
    if (cfg.feature_dim == 0) {
        throw ValidationError("generator feature_dim must be positive");
    }
    if (cfg.level_scales.size() < static_cast<std::size_t>(t.max_level())) {
        throw ValidationError("generator needs " + std::to_string(t.max_level()) +
                              " level scales, got " + std::to_string(cfg.level_scales.size()));
    }
    const auto dim = cfg.feature_dim;
    std::vector<std::vector<double>> proto(t.size(), std::vector<double>(dim, 0.0));
    auto rng = SplitMix64::stream(cfg.seed, "prototypes");
    for (auto i : t.depth_first()) {
        const auto& n = t.node(i);
        if (!n.parent) {
            continue;
        }
        std::vector<double> u(dim);
        double norm2 = 0.0;
        for (auto& x : u) {
            x = rng.normal();
            norm2 += x * x;
        }
        const double scale = cfg.level_scales[static_cast<std::size_t>(n.level - 1)] / std::sqrt(norm2);
        const auto& base = proto[*n.parent];
        for (std::size_t k = 0; k < dim; ++k) {
            proto[i][k] = base[k] + scale * u[k];
        }
    }
    return proto;
}

Dataset generate_synthetic(std::shared_ptr<const Taxonomy> t, const GeneratorConfig& cfg) {
    if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) {
        throw ValidationError("generator noise_sigma must be finite and >= 0");
    }
    std::size_t total = 0;
    for (const auto& [tag, count] : cfg.leaf_counts) {
        const auto i = t->find(tag);
        if (!i || !t->node(*i).is_leaf()) {
            throw ValidationError("generator count for '" + tag.str() + "', which is not a leaf");
        }
        total += count;
    }
    if (total == 0) {
        throw ValidationError("generator leaf counts sum to zero");
    }
    const auto proto = class_prototypes(*t, cfg);
    auto rng = SplitMix64::stream(cfg.seed, "noise");
    Dataset d(t, cfg.feature_dim);
    std::size_t serial = 0;
    for (auto leaf : t->leaves()) {
        const auto it = cfg.leaf_counts.find(t->tag(leaf));
        const std::size_t count = it == cfg.leaf_counts.end() ? 0 : it->second;
        for (std::size_t c = 0; c < count; ++c) {
            Sample s;
            char id[32];
            std::snprintf(id, sizeof id, "s%06zu", serial++);
            s.id = id;
            s.leaf = leaf;
            s.features.resize(cfg.feature_dim);
            for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
                s.features[k] = proto[leaf][k] + cfg.noise_sigma * rng.normal();
            }
            d.add(std::move(s));
        }
    }
    return d;
}

Dataset stratified_split(const Dataset& d, int k, std::uint64_t seed) {
    if (k < 2) {
        throw ValidationError("stratified_split needs k >= 2");
    }
    const auto& t = d.taxonomy();
    auto rng = SplitMix64::stream(seed, "split");
    Dataset out = d;
    std::size_t offset = 0;
    for (auto leaf : t.leaves()) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i].leaf == leaf) {
                members.push_back(i);
            }
        }
        shuffle(std::span<std::size_t>(members), rng);
        for (std::size_t j = 0; j < members.size(); ++j) {
            out.set_split(members[j], static_cast<int>((offset + j) % static_cast<std::size_t>(k)));
        }
        offset = (offset + members.size()) % static_cast<std::size_t>(k);
    }
    return out;
}

std::vector<int> train_subsets(int k, int test_subset) {
    std::vector<int> out;
    for (int s = 0; s < k; ++s) {
        if (s != test_subset) {
            out.push_back(s);
        }
    }
    return out;
}

std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts) {
    const auto total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    std::vector<double> w(counts.size(), 0.0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            w[c] = static_cast<double>(total) /
                   (static_cast<double>(counts.size()) * static_cast<double>(counts[c]));
        }
    }
    return w;
}

ClassWeights class_weights(std::span<const RoutedLabel> routed, std::span<const std::size_t> widths) {
    ClassWeights cw;
    cw.counts.assign(widths.size(), {});
    for (std::size_t h = 0; h < widths.size(); ++h) {
        cw.counts[h].assign(widths[h], 0);
    }
    for (const auto& label : routed) {
        if (label.size() != widths.size()) {
            throw std::invalid_argument("class_weights: routed label has wrong head count");
        }
        for (std::size_t h = 0; h < widths.size(); ++h) {
            if (label[h].concrete()) {
                cw.counts[h].at(label[h].slot) += 1;
            }
        }
    }
    for (std::size_t h = 0; h < widths.size(); ++h) {
        cw.per_head.push_back(inverse_frequency_weights(cw.counts[h]));
        const bool any = std::any_of(cw.counts[h].begin(), cw.counts[h].end(),
                                     [](std::size_t n) { return n > 0; });
        cw.active.push_back(any);
        if (!any) {
            cw.warnings.push_back("head " + std::to_string(h) +
                                  " has no training targets; excluded from the loss");
        }
    }
    return cw;
}

Dataset load_csv(std::string_view text, std::shared_ptr<const Taxonomy> t) {
    const auto lines = split_lines(text);
    if (lines.empty()) {
        throw ValidationError("dataset csv is empty");
    }
    const auto header = split_commas(lines[0]);
    if (header.size() < 3 || header[0] != "id" || header[1] != "leaf" || header[2] != "split") {
        throw ValidationError(row_error(1, "header must start with id,leaf,split"));
    }
    const std::size_t dim = header.size() - 3;
    for (std::size_t k = 0; k < dim; ++k) {
        if (header[3 + k] != "f" + std::to_string(k)) {
            throw ValidationError(row_error(1, "expected feature column f" + std::to_string(k)));
        }
    }
    Dataset d(std::move(t), dim);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto line_no = li + 1;
        if (lines[li].empty()) {
            continue;
        }
        const auto cells = split_commas(lines[li]);
        if (cells.size() != header.size()) {
            throw ValidationError(row_error(line_no, "ragged row with " +
                                                         std::to_string(cells.size()) +
                                                         " cells, header has " +
                                                         std::to_string(header.size())));
        }
        Sample s;
        s.id = std::string(cells[0]);
        const auto leaf = d.taxonomy().find(cells[1]);
        if (!leaf) {
            throw ValidationError(row_error(line_no, "unknown leaf tag '" + std::string(cells[1]) + "'"));
        }
        if (!d.taxonomy().node(*leaf).is_leaf()) {
            throw ValidationError(row_error(line_no, "'" + std::string(cells[1]) + "' is not a leaf"));
        }
        s.leaf = *leaf;
        if (cells[2] != "-" && !cells[2].empty()) {
            int split = 0;
            const auto [p, ec] = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), split);
            if (ec != std::errc() || p != cells[2].data() + cells[2].size() || split < 0) {
                throw ValidationError(row_error(line_no, "bad split '" + std::string(cells[2]) + "'"));
            }
            s.split = split;
        }
        s.features.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            const auto cell = cells[3 + k];
            double v = 0.0;
            const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size()) {
                throw ValidationError(row_error(line_no, "bad number '" + std::string(cell) + "'"));
            }
            if (!std::isfinite(v)) {
                throw ValidationError(row_error(line_no, "non-finite feature f" + std::to_string(k)));
            }
            s.features[k] = v;
        }
        try {
            d.add(std::move(s));
        } catch (const ValidationError& e) {
            throw ValidationError(row_error(line_no, e.what()));
        }
    }
    return d;
}

Dataset load_csv_file(const std::string& path, std::shared_ptr<const Taxonomy> t) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open dataset '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_csv(ss.str(), std::move(t));
}

std::string write_csv(const Dataset& d) {
    std::string out = "id,leaf,split";
    for (std::size_t k = 0; k < d.feature_dim(); ++k) {
        out += ",f" + std::to_string(k);
    }
    out += '\n';
    for (const auto& s : d.samples()) {
        out += s.id;
        out += ',';
        out += d.taxonomy().tag(s.leaf).str();
        out += ',';
        out += s.split ? std::to_string(*s.split) : std::string("-");
        for (double v : s.features) {
            out += ',';
            out += format_real(v);
        }
        out += '\n';
    }
    return out;
}

} // namespace hiertax
