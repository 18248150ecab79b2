#include "hiertax/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "hiertax/checkpoint.hpp"
#include "hiertax/rng.hpp"
#include "hiertax/volprep.hpp"

namespace hiertax {

namespace {

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += (i ? ", " : "") + items[i];
    }
    return out;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open '" + p.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,lr,loss\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + ',' + format_real(r.lr) + ',' + format_real(r.loss) + '\n';
    }
    return out;
}

} // namespace

Experiment::Experiment(ExperimentConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log) {
    taxonomy_ = std::make_shared<const Taxonomy>(
        cfg_.taxonomy_path.empty() ? Taxonomy::pulmonary_radpath() : Taxonomy::load(cfg_.taxonomy_path.string()));
}

std::vector<StrategyKind> Experiment::strategies() const {
    if (cfg_.strategies.empty()) {
        return {kAllStrategies.begin(), kAllStrategies.end()};
    }
    return cfg_.strategies;
}

EvalOptions Experiment::eval_options() const {
    EvalOptions opt;
    opt.population = cfg_.population;
    opt.predict.renormalize_leaky = cfg_.renormalize_leaky;
    return opt;
}

void Experiment::write_file(const std::string& name, const std::string& bytes) const {
    std::filesystem::create_directories(cfg_.out_dir);
    const auto path = cfg_.out_dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void Experiment::write_manifest(const std::string& command, const std::vector<std::string>& extra) const {
    const auto& c = cfg_;
    std::vector<std::string> strategies;
    for (auto k : this->strategies()) {
        strategies.emplace_back(to_string(k));
    }
    std::vector<std::string> widths;
    for (auto w : c.model.backbone.widths) {
        widths.push_back(std::to_string(w));
    }
    std::vector<std::string> scales;
    for (auto s : c.generator.level_scales) {
        scales.push_back(format_real(s));
    }
    const char* source = "none";
    switch (c.source) {
    case DataSource::Csv: source = "csv"; break;
    case DataSource::Synthetic: source = "synthetic"; break;
    case DataSource::Volumes: source = "volumes"; break;
    case DataSource::None: break;
    }
    std::string m;
    auto line = [&](const std::string& k, const std::string& v) { m += k + " = " + v + '\n'; };
    line("command", command);
    line("seed", std::to_string(c.seed));
    line("stream.prototypes", hex(derive_seed(c.seed, "prototypes")));
    line("stream.noise", hex(derive_seed(c.seed, "noise")));
    line("stream.split", hex(derive_seed(c.seed, "split")));
    line("stream.init", hex(derive_seed(c.seed, "init")));
    line("stream.shuffle", hex(derive_seed(c.seed, "shuffle")));
    line("stream.gradcheck", hex(derive_seed(c.seed, "gradcheck")));
    line("taxonomy", c.taxonomy_path.empty() ? "builtin" : c.taxonomy_path.filename().string());
    line("taxonomy.fingerprint", hex(taxonomy_->fingerprint()));
    line("source", source);
    if (c.source == DataSource::Synthetic) {
        line("gen.feature_dim", std::to_string(c.generator.feature_dim));
        line("gen.scale", format_real(c.generator_scale));
        line("gen.level_scales", join(scales));
        line("gen.noise_sigma", format_real(c.generator.noise_sigma));
    }
    line("strategies", join(strategies));
    line("backbone.widths", join(widths));
    line("backbone.dense", c.model.backbone.dense ? "true" : "false");
    line("head.hidden", std::to_string(c.model.hidden));
    line("head.feed", c.model.feed == DenseFeed::Hidden ? "hidden" : "logits");
    line("train.epochs", std::to_string(c.train.epochs));
    line("train.batch", std::to_string(c.train.batch));
    line("train.lr", format_real(c.train.lr.initial));
    line("train.lr_factor", format_real(c.train.lr.factor));
    line("train.lr_period", std::to_string(c.train.lr.period));
    line("split.k", std::to_string(c.split_k));
    line("split.test_subset", std::to_string(c.test_subset));
    line("eval.auc_population", std::string(to_string(c.population)));
    line("eval.renormalize_leaky", c.renormalize_leaky ? "true" : "false");
    for (const auto& e : extra) {
        m += e + '\n';
    }
    write_file("manifest.txt", m);
}

Dataset Experiment::prep_dataset() const {
    const auto centroids = load_centroids(read_file(cfg_.centroids));
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(cfg_.volume_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".vol") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw ValidationError("no .vol files in '" + cfg_.volume_dir.string() + "'");
    }
    std::vector<std::string> problems;
    for (const auto& f : files) {
        const auto id = f.stem().string();
        const auto it = centroids.find(id);
        if (it == centroids.end()) {
            problems.push_back(f.filename().string() + ": no centroid for id '" + id + "'");
        } else if (it->second.leaf.empty()) {
            problems.push_back(f.filename().string() + ": centroid row has no leaf label");
        }
    }
    if (!problems.empty()) {
        std::string msg = "cannot preprocess " + std::to_string(problems.size()) + " volume(s):";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw ValidationError(msg);
    }
    const auto cells = cfg_.crop / cfg_.pool_block;
    Dataset d(taxonomy_, cells * cells * cells);
    for (const auto& f : files) {
        const auto id = f.stem().string();
        const auto& rec = centroids.at(id);
        Sample s;
        s.id = id;
        s.leaf = taxonomy_->index_of(rec.leaf);
        s.features = preprocess_volume(read_volume(f.string()), rec.centroid, cfg_.hu_window, cfg_.crop,
                                       cfg_.pool_block);
        d.add(std::move(s));
    }
    return d;
}

Dataset Experiment::load_dataset() const {
    switch (cfg_.source) {
    case DataSource::Csv:
        return load_csv_file(cfg_.dataset_csv.string(), taxonomy_);
    case DataSource::Synthetic: {
        GeneratorConfig g = cfg_.generator;
        if (g.leaf_counts.empty()) {
            g.leaf_counts = counts_from_taxonomy(*taxonomy_, cfg_.generator_scale);
        }
        return generate_synthetic(taxonomy_, g);
    }
    case DataSource::Volumes:
        return prep_dataset();
    case DataSource::None:
        break;
    }
    const auto fallback = cfg_.out_dir / "dataset.csv";
    if (std::filesystem::exists(fallback)) {
        return load_csv_file(fallback.string(), taxonomy_);
    }
    throw ValidationError("no dataset source: set one of dataset, generator, volumes");
}

Dataset Experiment::load_split_dataset() const {
    Dataset d = load_dataset();
    if (!d.fully_split()) {
        d = stratified_split(d, cfg_.split_k, cfg_.seed);
    }
    return d;
}

void Experiment::gen() {
    if (cfg_.source != DataSource::Synthetic) {
        throw ValidationError("gen needs 'generator = synthetic' in the config");
    }
    const auto d = load_dataset();
    write_file("dataset.csv", write_csv(d));
    write_manifest("gen", {"dataset.rows = " + std::to_string(d.size())});
    log_ << "generated " << d.size() << " samples\n";
}

void Experiment::split() {
    const auto d = stratified_split(load_dataset(), cfg_.split_k, cfg_.seed);
    write_file("dataset.csv", write_csv(d));
    std::vector<std::size_t> sizes(static_cast<std::size_t>(cfg_.split_k), 0);
    for (const auto& s : d.samples()) {
        sizes[static_cast<std::size_t>(*s.split)] += 1;
    }
    std::vector<std::string> parts;
    for (auto n : sizes) {
        parts.push_back(std::to_string(n));
    }
    write_manifest("split", {"dataset.rows = " + std::to_string(d.size()), "split.sizes = " + join(parts)});
    log_ << "split " << d.size() << " samples into " << cfg_.split_k << " subsets\n";
}

void Experiment::prep() {
    if (cfg_.source != DataSource::Volumes) {
        throw ValidationError("prep needs 'volumes' and 'centroids' in the config");
    }
    const auto d = prep_dataset();
    write_file("dataset.csv", write_csv(d));
    write_manifest("prep", {"dataset.rows = " + std::to_string(d.size()),
                            "prep.features = " + std::to_string(d.feature_dim())});
    log_ << "preprocessed " << d.size() << " volumes\n";
}

void Experiment::train() {
    const auto d = load_split_dataset();
    for (auto kind : strategies()) {
        const auto name = std::string(to_string(kind));
        log_ << "training " << name << '\n';
        auto result = hiertax::train(d, kind, cfg_.model, cfg_.train, [&](const EpochRecord& r) {
            if (r.epoch % 10 == 0 || r.epoch + 1 == cfg_.train.epochs) {
                log_ << "  epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss << '\n';
            }
        });
        for (const auto& w : result.weights.warnings) {
            log_ << "warning: " << name << ": " << w << '\n';
        }
        write_file("model_" + name + ".bin", encode_checkpoint(result.model));
        write_file("history_" + name + ".csv", history_csv(result.history));
    }
    write_manifest("train", {"dataset.rows = " + std::to_string(d.size())});
}

void Experiment::eval() {
    const auto d = load_split_dataset();
    const std::array<int, 1> test_split{cfg_.test_subset};
    const auto test = d.select_splits(test_split);
    const auto kinds = strategies();
    std::vector<NodeIndex> leaves;
    for (const auto& s : test.samples()) {
        leaves.push_back(s.leaf);
    }
    for (auto kind : kinds) {
        const auto name = std::string(to_string(kind));
        const auto model = load_checkpoint((cfg_.out_dir / ("model_" + name + ".bin")).string(), taxonomy_);
        if (model.kind() != kind) {
            throw ValidationError("model_" + name + ".bin holds a " + std::string(to_string(model.kind())) +
                                  " model");
        }
        const auto opt = eval_options();
        const auto probs = predict_node_probs(model, features_of(test), opt.predict);
        const auto report = evaluate_scores(*taxonomy_, leaves, probs, opt.population);
        for (const auto& w : report.warnings) {
            log_ << "warning: " << name << ": " << w << '\n';
        }
        write_file("report_" + name + ".csv", report_csv(report, *taxonomy_));
        const std::vector<StrategyRow> row{{std::string(display_name(kind)), report}};
        write_file("report_" + name + ".txt", format_head_table(*taxonomy_, row) + '\n' +
                                                  format_node_table(*taxonomy_, row));
        write_file("predictions_" + name + ".csv", write_predictions(model, test, probs));
        for (const auto& nr : report.nodes) {
            const auto tag = taxonomy_->tag(nr.node).str();
            const auto file = kinds.size() == 1 ? "roc_" + tag + ".csv" : "roc_" + name + "_" + tag + ".csv";
            write_file(file, roc_csv(node_roc(*taxonomy_, nr.node, leaves, probs, opt.population)));
        }
        log_ << name << ": mAUC@L "
             << (report.leaf_mauc ? format_real(*report.leaf_mauc) : std::string("NA")) << '\n';
    }
    write_manifest("eval", {"test.rows = " + std::to_string(test.size())});
}

void Experiment::compare(bool parallel) {
    const auto d = load_split_dataset();
    const std::array<int, 1> test_split{cfg_.test_subset};
    const auto test = d.select_splits(test_split);
    const auto kinds = strategies();
    std::vector<std::optional<StrategyRow>> rows(kinds.size());
    std::vector<std::exception_ptr> errors(kinds.size());
    std::mutex log_mutex;

    auto run_one = [&](std::size_t i) {
        try {
            const auto name = std::string(to_string(kinds[i]));
            {
                std::lock_guard lock(log_mutex);
                log_ << "training " << name << '\n';
            }
            auto result = hiertax::train(d, kinds[i], cfg_.model, cfg_.train);
            auto report = evaluate(result.model, test, eval_options());
            write_file("model_" + name + ".bin", encode_checkpoint(result.model));
            write_file("history_" + name + ".csv", history_csv(result.history));
            write_file("report_" + name + ".csv", report_csv(report, *taxonomy_));
            {
                std::lock_guard lock(log_mutex);
                log_ << name << ": final loss " << result.history.back().loss << ", mAUC@L "
                     << (report.leaf_mauc ? format_real(*report.leaf_mauc) : std::string("NA")) << '\n';
            }
            rows[i] = StrategyRow{std::string(display_name(kinds[i])), std::move(report)};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    if (parallel) {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            threads.emplace_back(run_one, i);
        }
        for (auto& t : threads) {
            t.join();
        }
    } else {
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            run_one(i);
            if (errors[i]) {
                break;
            }
        }
    }

    std::vector<StrategyRow> done;
    for (auto& r : rows) {
        if (r) {
            done.push_back(*r);
        }
    }
    write_file("table2.txt", format_head_table(*taxonomy_, done));
    write_file("table3.txt", format_node_table(*taxonomy_, done));
    write_manifest("compare", {"dataset.rows = " + std::to_string(d.size()),
                               "test.rows = " + std::to_string(test.size())});
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

bool Experiment::gradcheck() {
    auto rng = SplitMix64::stream(cfg_.seed, "gradcheck");
    const auto n = std::max<std::size_t>(1, cfg_.gradcheck_batch);
    const auto leaves = taxonomy_->leaves();
    std::size_t dim = cfg_.generator.feature_dim;
    Tensor x;
    std::vector<NodeIndex> labels;
    if (cfg_.source == DataSource::Csv || cfg_.source == DataSource::Volumes) {
        const auto d = load_dataset();
        dim = d.feature_dim();
        x = Tensor(n, dim);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = d[static_cast<std::size_t>(rng.below(d.size()))];
            std::copy(s.features.begin(), s.features.end(), x.row(i).begin());
            labels.push_back(s.leaf);
        }
    } else {
        // Distinct leaves (cycling) so the batch mixes concrete, leaky and
        // not-applicable targets.
        x = Tensor(n, dim);
        for (auto& v : x.values()) {
            v = rng.normal();
        }
        const auto offset = static_cast<std::size_t>(rng.below(leaves.size()));
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back(leaves[(offset + i) % leaves.size()]);
        }
    }
    bool ok = true;
    for (auto kind : strategies()) {
        Model m = build_model(taxonomy_, kind, dim, cfg_.model);
        std::vector<RoutedLabel> routed;
        for (auto l : labels) {
            routed.push_back(m.route(l));
        }
        const auto weights = class_weights(routed, m.head_widths());
        const auto r = grad_check_model(m, x, routed, weights, cfg_.gradcheck_h);
        const bool pass = r.max_rel_error <= cfg_.gradcheck_tolerance;
        ok = ok && pass;
        log_ << (pass ? "PASS " : "FAIL ") << to_string(kind) << " max_rel_err " << format_real(r.max_rel_error)
             << " (" << r.checked << " params, worst " << r.worst_param << '[' << r.worst_index << "])\n";
    }
    return ok;
}

int run_command(const std::string& command, const std::filesystem::path& config_path,
                const ConfigOverrides& overrides, bool parallel, std::ostream& out, std::ostream& err) {
    try {
        Experiment exp(load_experiment_config(config_path, overrides), err);
        if (command == "gen") {
            exp.gen();
        } else if (command == "split") {
            exp.split();
        } else if (command == "prep") {
            exp.prep();
        } else if (command == "train") {
            exp.train();
        } else if (command == "eval") {
            exp.eval();
        } else if (command == "compare") {
            exp.compare(parallel);
            out << read_file(exp.config().out_dir / "table2.txt") << '\n'
                << read_file(exp.config().out_dir / "table3.txt");
        } else if (command == "gradcheck") {
            const bool ok = exp.gradcheck();
            out << (ok ? "gradcheck: pass\n" : "gradcheck: FAIL\n");
            return ok ? 0 : 2;
        } else {
            err << "error: unknown command '" << command << "'\n";
            return 1;
        }
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return 2;
    }
}

} // namespace hiertax
