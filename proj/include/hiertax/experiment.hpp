#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "hiertax/config.hpp"
#include "hiertax/data.hpp"
#include "hiertax/metrics.hpp"
#include "hiertax/strategies.hpp"

namespace hiertax {

/// Command implementations behind the `hiertax` CLI. Every command writes
/// into cfg.out_dir and is byte-for-byte reproducible for a fixed config.
class Experiment {
  public:
    Experiment(ExperimentConfig cfg, std::ostream& log);

    const ExperimentConfig& config() const { return cfg_; }
    std::shared_ptr<const Taxonomy> taxonomy() const { return taxonomy_; }

    /// Synthetic dataset (unsplit) -> dataset.csv.
    void gen();
    /// Stratified split of the configured dataset -> dataset.csv.
    void split();
    /// Volumes + centroids -> pooled feature dataset.csv.
    void prep();
    /// model_<s>.bin and history_<s>.csv per strategy.
    void train();
    /// report_<s>.csv, report_<s>.txt, predictions_<s>.csv, ROC curves.
    void eval();
    /// Train and evaluate every strategy; table2.txt and table3.txt.
    void compare(bool parallel);
    /// Returns true when every strategy passes the tolerance.
    bool gradcheck();

    /// Configured dataset with splits assigned (splitting when needed).
    Dataset load_split_dataset() const;
    std::vector<StrategyKind> strategies() const;

  private:
    Dataset load_dataset() const;
    Dataset prep_dataset() const;
    void write_manifest(const std::string& command, const std::vector<std::string>& extra) const;
    void write_file(const std::string& name, const std::string& bytes) const;
    EvalOptions eval_options() const;

    ExperimentConfig cfg_;
    std::ostream& log_;
    std::shared_ptr<const Taxonomy> taxonomy_;
};

/// Runs `command` with the config at `config_path`. Returns the process exit
/// status: 0 success, 1 validation error, 2 runtime failure.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const ConfigOverrides& overrides, bool parallel, std::ostream& out, std::ostream& err);

} // namespace hiertax
