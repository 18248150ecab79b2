#include "hiertax/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace hiertax {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto pos = s.find(',', start);
        if (pos == std::string_view::npos) {
            pos = s.size();
        }
        const auto item = trim(s.substr(start, pos - start));
        if (!item.empty()) {
            out.emplace_back(item);
        }
        start = pos + 1;
    }
    return out;
}

template <typename T>
T parse_integer(std::string_view text, const std::string& key) {
    T v{};
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw ValidationError("config: '" + key + "' expects an integer, got '" + std::string(text) + "'");
    }
    return v;
}

bool parse_bool(std::string_view text, const std::string& key) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") {
        return true;
    }
    if (text == "false" || text == "0" || text == "no" || text == "off") {
        return false;
    }
    throw ValidationError("config: '" + key + "' expects true/false, got '" + std::string(text) + "'");
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "taxonomy",          "seed",
        "out",               "dataset",
        "generator",         "volumes",
        "centroids",         "gen.feature_dim",
        "gen.scale",         "gen.level_scales",
        "gen.noise_sigma",   "prep.hu_lo",
        "prep.hu_hi",        "prep.crop",
        "prep.block",        "split.k",
        "split.test_subset", "strategy",
        "backbone.widths",   "backbone.dense",
        "head.hidden",       "head.feed",
        "train.epochs",      "train.batch",
        "train.lr",          "train.lr_factor",
        "train.lr_period",   "eval.auc_population",
        "eval.renormalize_leaky",
        "gradcheck.h",       "gradcheck.batch",
        "gradcheck.tolerance",
    };
    return keys;
}

} // namespace

double parse_real(std::string_view text) {
    text = trim(text);
    const auto slash = text.find('/');
    if (slash != std::string_view::npos) {
        const double num = parse_real(text.substr(0, slash));
        const double den = parse_real(text.substr(slash + 1));
        if (den == 0.0) {
            throw ValidationError("division by zero in '" + std::string(text) + "'");
        }
        return num / den;
    }
    double v = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
        throw ValidationError("expected a number, got '" + std::string(text) + "'");
    }
    return v;
}

ConfigFile ConfigFile::parse(std::string_view text) {
    ConfigFile cf;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) {
            throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
        }
        cf.values_[key].emplace_back(trim(line.substr(eq + 1)));
        cf.lines_[key] = line_no;
    }
    return cf;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open config '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return std::nullopt;
    }
    return it->second.back();
}

std::vector<std::string> ConfigFile::get_all(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> ConfigFile::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        out.push_back(k);
    }
    return out;
}

std::size_t ConfigFile::line_of(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? 0 : it->second;
}

ExperimentConfig make_experiment_config(const ConfigFile& file, const std::filesystem::path& base_dir,
                                        const ConfigOverrides& overrides) {
    ExperimentConfig cfg;
    cfg.config_dir = base_dir;
    for (const auto& key : file.keys()) {
        if (!known_keys().contains(key) && !key.starts_with("gen.count.")) {
            throw ValidationError("config line " + std::to_string(file.line_of(key)) + ": unknown key '" + key +
                                  "'");
        }
    }
    auto path_of = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_absolute() ? p : base_dir / p;
    };
    auto real = [&](const std::string& key, double& dst) {
        if (auto v = file.get(key)) {
            try {
                dst = parse_real(*v);
            } catch (const ValidationError& e) {
                throw ValidationError("config: '" + key + "': " + e.what());
            }
        }
    };
    auto size = [&](const std::string& key, std::size_t& dst) {
        if (auto v = file.get(key)) {
            dst = parse_integer<std::size_t>(*v, key);
        }
    };
    auto integer = [&](const std::string& key, int& dst) {
        if (auto v = file.get(key)) {
            dst = parse_integer<int>(*v, key);
        }
    };

    if (auto v = file.get("taxonomy"); v && *v != "builtin") {
        cfg.taxonomy_path = path_of(*v);
    }
    if (auto v = file.get("seed")) {
        cfg.seed = parse_integer<std::uint64_t>(*v, "seed");
    }
    if (auto v = file.get("out")) {
        cfg.out_dir = path_of(*v);
    } else {
        cfg.out_dir = base_dir / "out";
    }

    int sources = 0;
    if (auto v = file.get("dataset")) {
        cfg.source = DataSource::Csv;
        cfg.dataset_csv = path_of(*v);
        ++sources;
    }
    if (auto v = file.get("generator")) {
        if (*v != "synthetic") {
            throw ValidationError("config: generator must be 'synthetic'");
        }
        cfg.source = DataSource::Synthetic;
        ++sources;
    }
    if (auto v = file.get("volumes")) {
        cfg.source = DataSource::Volumes;
        cfg.volume_dir = path_of(*v);
        ++sources;
        const auto c = file.get("centroids");
        if (!c) {
            throw ValidationError("config: 'volumes' needs 'centroids'");
        }
        cfg.centroids = path_of(*c);
    }
    if (sources > 1) {
        throw ValidationError("config: give exactly one of dataset, generator, volumes");
    }

    size("gen.feature_dim", cfg.generator.feature_dim);
    real("gen.scale", cfg.generator_scale);
    real("gen.noise_sigma", cfg.generator.noise_sigma);
    if (auto v = file.get("gen.level_scales")) {
        cfg.generator.level_scales.clear();
        for (const auto& item : split_list(*v)) {
            cfg.generator.level_scales.push_back(parse_real(item));
        }
    }
    for (const auto& key : file.keys()) {
        if (key.starts_with("gen.count.")) {
            const auto tag = key.substr(std::string_view("gen.count.").size());
            cfg.generator.leaf_counts[NodeTag(tag)] = parse_integer<std::size_t>(*file.get(key), key);
        }
    }

    real("prep.hu_lo", cfg.hu_window.lo);
    real("prep.hu_hi", cfg.hu_window.hi);
    size("prep.crop", cfg.crop);
    size("prep.block", cfg.pool_block);

    integer("split.k", cfg.split_k);
    integer("split.test_subset", cfg.test_subset);
    if (cfg.split_k < 2 || cfg.test_subset < 0 || cfg.test_subset >= cfg.split_k) {
        throw ValidationError("config: need split.k >= 2 and 0 <= split.test_subset < split.k");
    }

    for (const auto& s : file.get_all("strategy")) {
        for (const auto& item : split_list(s)) {
            if (item == "all") {
                cfg.strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
            } else {
                cfg.strategies.push_back(parse_strategy(item));
            }
        }
    }

    if (auto v = file.get("backbone.widths")) {
        cfg.model.backbone.widths.clear();
        for (const auto& item : split_list(*v)) {
            cfg.model.backbone.widths.push_back(parse_integer<std::size_t>(item, "backbone.widths"));
        }
    }
    if (auto v = file.get("backbone.dense")) {
        cfg.model.backbone.dense = parse_bool(*v, "backbone.dense");
    }
    size("head.hidden", cfg.model.hidden);
    if (auto v = file.get("head.feed")) {
        if (*v == "hidden") {
            cfg.model.feed = DenseFeed::Hidden;
        } else if (*v == "logits") {
            cfg.model.feed = DenseFeed::Logits;
        } else {
            throw ValidationError("config: head.feed must be 'hidden' or 'logits'");
        }
    }

    integer("train.epochs", cfg.train.epochs);
    size("train.batch", cfg.train.batch);
    real("train.lr", cfg.train.lr.initial);
    real("train.lr_factor", cfg.train.lr.factor);
    integer("train.lr_period", cfg.train.lr.period);
    if (cfg.train.epochs < 1 || cfg.train.batch < 1 || cfg.train.lr.period < 1) {
        throw ValidationError("config: train.epochs, train.batch and train.lr_period must be >= 1");
    }

    if (auto v = file.get("eval.auc_population")) {
        cfg.population = parse_population(*v);
    }
    if (auto v = file.get("eval.renormalize_leaky")) {
        cfg.renormalize_leaky = parse_bool(*v, "eval.renormalize_leaky");
    }

    real("gradcheck.h", cfg.gradcheck_h);
    size("gradcheck.batch", cfg.gradcheck_batch);
    real("gradcheck.tolerance", cfg.gradcheck_tolerance);

    if (overrides.seed) {
        cfg.seed = *overrides.seed;
    }
    if (overrides.out_dir) {
        cfg.out_dir = *overrides.out_dir;
    }
    if (overrides.population) {
        cfg.population = *overrides.population;
    }
    cfg.generator.seed = cfg.seed;
    cfg.model.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.train.train_subsets = train_subsets(cfg.split_k, cfg.test_subset);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    const auto file = ConfigFile::load(path);
    return make_experiment_config(file, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(),
                                  overrides);
}

} // namespace hiertax
