#pragma once

#include "zorl/ddpg.hpp"
#include "zorl/errors.hpp"
#include "zorl/estimator.hpp"
#include "zorl/objectives.hpp"
#include "zorl/optimizer.hpp"
#include "zorl/policies.hpp"
#include "zorl/updates.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace zorl::harness {

enum class Algo { zo_gs, guided_es, zo_rl };

std::string algo_name(Algo algo);
Algo parse_algo(const std::string& name);

struct TaskSpec {
    enum class Kind { synthetic, least_squares, attack };
    Kind kind = Kind::synthetic;
    std::size_t synthetic_dim = 10;
    std::filesystem::path dataset_path;            // least-squares
    std::filesystem::path images_path, labels_path; // attack
    std::filesystem::path victim_path;             // optional pre-trained victim
    double attack_c = 0.1;
    int attack_p = 1;

    /// File-name stem used by reports, e.g. "synthetic10" or the dataset stem.
    std::string name() const;
};

/// Parses "synthetic[:d]", "least-squares:<path>", "attack:<images>,<labels>[,<victim>]".
TaskSpec parse_task(const std::string& text);

struct ExperimentConfig {
    TaskSpec task;
    std::vector<Algo> algos = {Algo::zo_gs, Algo::guided_es, Algo::zo_rl};
    UpdateRuleKind update = UpdateRuleKind::sgd;
    std::size_t steps = 200;
    std::size_t q = 20;
    double mu = 0.01;
    std::size_t trials = 10;
    std::uint64_t seed = 42;

    // Tuning grids: eta = delta / d, Adam moments per the tuned values.
    std::vector<double> delta_grid = {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
    std::vector<double> beta1_grid = {0.9, 0.99};
    std::vector<double> beta2_grid = {0.99, 0.996, 0.999};
    std::size_t tune_trials = 3;

    double guided_alpha = 0.5;
    double rl_beta = 0.5;
    std::filesystem::path actor_path; // freshly initialized actor when empty
    std::size_t feature_history = 5;
    std::size_t grad_slots = 8;

    std::size_t probe_every = 0;
    std::size_t probe_repeats = 0;

    std::size_t workers = 0; // 0 = hardware concurrency
    std::filesystem::path out_dir = "zorl-out";
    double abort_fraction_limit = 0.2;

    void validate() const;
};

/// Per-iteration aggregates over the completed trials of one algorithm, with
/// the raw per-trial series retained. Standard deviations use the population
/// convention.
struct TrialSeries {
    std::string algo;
    std::vector<double> loss_mean, loss_std, grad_norm_mean, variance_mean;
    std::vector<std::uint64_t> queries;
    std::vector<std::vector<double>> raw_loss;
    std::vector<std::vector<double>> raw_grad_norm;
    std::vector<std::vector<double>> raw_variance; // 0 where no probe ran
    std::size_t aborted_trials = 0;
    bool has_probes = false;

    // Hyperparameters selected by tuning.
    double chosen_delta = 0.0;
    double chosen_eta = 0.0;
    double chosen_beta1 = 0.0;
    double chosen_beta2 = 0.0;
};

struct ExperimentResult {
    std::string base_name; // "<task>_<update>"
    std::size_t steps = 0;
    std::vector<std::pair<Algo, TrialSeries>> series; // config order
};

/// Tunes each algorithm over its grid on dedicated tuning seeds, runs the
/// reporting trials on fresh seeds, and aggregates. Fails (RunError) when more
/// than abort_fraction_limit of an algorithm's trials abort.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Aggregation helper, exposed for tests: population mean/std across rows.
void aggregate_series(const std::vector<std::vector<double>>& raw, std::vector<double>& mean,
                      std::vector<double>& std_dev);

// ---------------------------------------------------------------------------
// Offline policy training

struct TrainPolicyConfig {
    TaskSpec task;
    std::size_t episodes = 60;
    std::size_t steps_per_episode = 50;
    std::size_t q = 20;
    double mu = 0.01;
    double beta = 0.5;
    double delta = 1.0; // eta = delta / d unless eta set explicitly
    std::optional<double> eta;
    UpdateRuleKind update = UpdateRuleKind::sgd;
    std::uint64_t seed = 42;
    std::size_t feature_history = 5;
    std::size_t grad_slots = 8;
    bool conv_actor = false;
    ddpg::DdpgHyperparams ddpg; // .episodes is taken from `episodes` above
    ddpg::RewardMode reward_mode = ddpg::RewardMode::decrease;

    std::filesystem::path out_actor = "actor.zorlnn";
    std::filesystem::path out_log; // defaults to out_actor with .log.csv suffix
};

struct TrainPolicyResult {
    nn::Network actor;
    std::vector<ddpg::EpisodeLog> log;
    std::optional<double> best_eval_score;
    std::filesystem::path actor_file;
    std::filesystem::path log_file;
};

/// Trains the sampling policy on the task family, writes the actor artifact
/// and the learning-curve CSV (episode, mean_reward, critic_loss, eval_score).
TrainPolicyResult train_rl_policy_cmd(const TrainPolicyConfig& cfg);

// ---------------------------------------------------------------------------
// Problem families (shared by run_experiment, training, and the tests)

struct ProblemFamily {
    std::size_t dim = 0;
    /// Draws episode problems for training (synthetic: fresh quadratic;
    /// attack: random training instance; least-squares: the dataset itself).
    ddpg::ZoEnvironment::ProblemSampler train_sampler;
    /// Problem for reporting trial r (attack: r-th held-out instance).
    std::function<ddpg::ZoEnvironment::Problem(std::size_t trial)> trial_problem;
};

ProblemFamily load_problem_family(const TaskSpec& task, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

/// One aggregate CSV per algorithm (schema:
/// iteration,loss_mean,loss_std,grad_norm_mean,variance_mean,queries), one raw
/// CSV per algorithm, a loss SVG overlaying all algorithms with +-1 std bands,
/// and a variance SVG when probes were recorded. Output bytes are
/// deterministic for fixed input series.
void emit_reports(const ExperimentResult& result, const std::filesystem::path& out_dir);

/// Rebuilds an ExperimentResult from the raw CSVs previously written to a
/// directory (used by the `report` subcommand).
std::vector<ExperimentResult> load_raw_results(const std::filesystem::path& dir);

std::string render_loss_svg(const ExperimentResult& result);
std::string render_variance_svg(const ExperimentResult& result);

// ---------------------------------------------------------------------------
// CLI

/// Entry point behind the zorl binary; returns the process exit code
/// (0 success, 2 config error, 3 data error, 4 run failure).
int run_cli(const std::vector<std::string>& args);

} // namespace zorl::harness
