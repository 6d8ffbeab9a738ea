#include "zorl/harness.hpp"

#include "zorl/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <thread>

namespace zorl::harness {

std::string algo_name(Algo algo) {
    switch (algo) {
        case Algo::zo_gs: return "zo-gs";
        case Algo::guided_es: return "guided-es";
        case Algo::zo_rl: return "zo-rl";
    }
    return "?";
}

Algo parse_algo(const std::string& name) {
    if (name == "zo-gs") return Algo::zo_gs;
    if (name == "guided-es") return Algo::guided_es;
    if (name == "zo-rl") return Algo::zo_rl;
    throw ConfigError("unknown algorithm '" + name + "' (expected zo-gs|guided-es|zo-rl)");
}

TaskSpec parse_task(const std::string& text) {
    TaskSpec task;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);

    if (kind == "synthetic") {
        task.kind = TaskSpec::Kind::synthetic;
        if (!rest.empty()) {
            try {
                task.synthetic_dim = std::stoul(rest);
            } catch (const std::exception&) {
                throw ConfigError("bad synthetic dimension '" + rest + "'");
            }
            if (task.synthetic_dim == 0) throw ConfigError("synthetic dimension must be positive");
        }
    } else if (kind == "least-squares") {
        task.kind = TaskSpec::Kind::least_squares;
        if (rest.empty()) throw ConfigError("least-squares task needs a dataset path");
        task.dataset_path = rest;
    } else if (kind == "attack") {
        task.kind = TaskSpec::Kind::attack;
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (start <= rest.size()) {
            const auto comma = rest.find(',', start);
            parts.push_back(rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (parts.size() < 2 || parts[0].empty() || parts[1].empty())
            throw ConfigError("attack task needs attack:<images>,<labels>[,<victim>]");
        task.images_path = parts[0];
        task.labels_path = parts[1];
        if (parts.size() > 2) task.victim_path = parts[2];
    } else {
        throw ConfigError("unknown task '" + text + "' (expected synthetic|least-squares|attack)");
    }
    return task;
}

std::string TaskSpec::name() const {
    switch (kind) {
        case Kind::synthetic: return "synthetic" + std::to_string(synthetic_dim);
        case Kind::least_squares: return dataset_path.stem().string();
        case Kind::attack: return "attack-" + images_path.stem().string();
    }
    return "?";
}

void ExperimentConfig::validate() const {
    if (trials == 0) throw ConfigError("trials must be at least 1");
    if (steps == 0) throw ConfigError("steps must be at least 1");
    if (q == 0) throw ConfigError("q must be at least 1");
    if (!(mu > 0.0)) throw ConfigError("mu must be positive");
    if (algos.empty()) throw ConfigError("at least one algorithm required");
    if (delta_grid.empty()) throw ConfigError("delta grid must be nonempty");
    if (update == UpdateRuleKind::adam && (beta1_grid.empty() || beta2_grid.empty()))
        throw ConfigError("adam tuning grids must be nonempty");
    if (guided_alpha < 0.0 || guided_alpha > 1.0) throw ConfigError("alpha outside [0,1]");
    if (rl_beta < 0.0 || rl_beta >= 1.0) throw ConfigError("beta outside [0,1)");
    if (tune_trials == 0) throw ConfigError("tune-trials must be at least 1");
    if (feature_history == 0 || grad_slots == 0) throw ConfigError("feature layout must be positive");
    if (abort_fraction_limit < 0.0 || abort_fraction_limit >= 1.0)
        throw ConfigError("abort fraction limit outside [0,1)");
}

// ---------------------------------------------------------------------------
// Problem families

ProblemFamily load_problem_family(const TaskSpec& task, std::uint64_t seed) {
    ProblemFamily family;
    switch (task.kind) {
        case TaskSpec::Kind::synthetic: {
            const std::size_t d = task.synthetic_dim;
            family.dim = d;
            family.train_sampler = [d](RngStream& rng) {
                return ddpg::ZoEnvironment::Problem{synthetic_quadratic(d, rng), std::nullopt};
            };
            family.trial_problem = [d, seed](std::size_t trial) {
                RngStream rng = RngStream(seed).child("trial-problem").child(trial);
                return ddpg::ZoEnvironment::Problem{synthetic_quadratic(d, rng), std::nullopt};
            };
            break;
        }
        case TaskSpec::Kind::least_squares: {
            auto data = std::make_shared<const Dataset>(load_libsvm(task.dataset_path));
            family.dim = data->dim;
            family.train_sampler = [data](RngStream&) {
                return ddpg::ZoEnvironment::Problem{make_least_squares_objective(data), std::nullopt};
            };
            family.trial_problem = [data](std::size_t) {
                return ddpg::ZoEnvironment::Problem{make_least_squares_objective(data), std::nullopt};
            };
            break;
        }
        case TaskSpec::Kind::attack: {
            const ImageSet images = load_idx_images(task.images_path, task.labels_path);
            std::shared_ptr<const VictimClassifier> victim;
            if (!task.victim_path.empty()) {
                victim = std::make_shared<const VictimClassifier>(VictimClassifier::load(task.victim_path));
            } else {
                // Fixed stream so the same image set always yields the same
                // victim, independent of the experiment master seed.
                RngStream victim_rng(0xA11CEull);
                victim = std::make_shared<const VictimClassifier>(train_victim(images, {}, victim_rng));
            }
            if (victim->input_dim() != images.pixel_count())
                throw DataError("victim input dimension does not match the image set");

            // Attackable pool: correctly classified images. First half trains
            // the policy, second half is held out for reporting trials.
            auto instances = std::make_shared<std::vector<AttackInstance>>();
            for (std::size_t i = 0; i < images.size(); ++i) {
                if (victim->predict(images.images[i]) == images.labels[i]) {
                    AttackInstance inst;
                    inst.x0 = images.images[i];
                    inst.true_label = static_cast<std::size_t>(images.labels[i]);
                    inst.c = task.attack_c;
                    inst.p = task.attack_p;
                    instances->push_back(std::move(inst));
                }
            }
            if (instances->size() < 2)
                throw DataError("attack task: fewer than 2 correctly classified images to attack");
            const std::size_t split = instances->size() / 2;

            family.dim = images.pixel_count();
            family.train_sampler = [victim, instances, split](RngStream& rng) {
                const std::size_t idx = rng.next_below(split);
                const AttackInstance& inst = (*instances)[idx];
                return ddpg::ZoEnvironment::Problem{make_attack_objective(victim, inst), inst.x0};
            };
            family.trial_problem = [victim, instances, split](std::size_t trial) {
                const std::size_t n_test = instances->size() - split;
                const AttackInstance& inst = (*instances)[split + trial % n_test];
                return ddpg::ZoEnvironment::Problem{make_attack_objective(victim, inst), inst.x0};
            };
            break;
        }
    }
    return family;
}

// ---------------------------------------------------------------------------
// Experiment engine

namespace {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct Candidate {
    double delta = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

std::vector<Candidate> tuning_candidates(const ExperimentConfig& cfg) {
    std::vector<Candidate> out;
    for (double delta : cfg.delta_grid) {
        if (cfg.update == UpdateRuleKind::adam) {
            for (double b1 : cfg.beta1_grid)
                for (double b2 : cfg.beta2_grid) out.push_back({delta, b1, b2});
        } else {
            out.push_back({delta});
        }
    }
    return out;
}

std::unique_ptr<SamplingPolicy> make_policy(Algo algo, const ExperimentConfig& cfg, std::size_t dim,
                                            const nn::Network* actor) {
    switch (algo) {
        case Algo::zo_gs:
            return std::make_unique<StandardGaussianPolicy>();
        case Algo::guided_es:
            return std::make_unique<GuidedEsPolicy>(dim, cfg.feature_history, cfg.guided_alpha);
        case Algo::zo_rl: {
            if (!actor) throw ConfigError("zo-rl requires an actor network");
            FeatureLayout layout{cfg.feature_history, cfg.grad_slots};
            return std::make_unique<RlActorPolicy>(*actor, layout, cfg.rl_beta);
        }
    }
    throw std::logic_error("make_policy: unreachable");
}

RunTrace run_one_trial(const ProblemFamily& family, const ExperimentConfig& cfg, Algo algo,
                       const Candidate& hp, std::size_t problem_index, RngStream rng,
                       const nn::Network* actor, bool probes) {
    auto problem = family.trial_problem(problem_index);
    auto policy = make_policy(algo, cfg, family.dim, actor);

    RunConfig rc;
    rc.iterations = cfg.steps;
    rc.estimator = EstimatorConfig{cfg.mu, cfg.q};
    rc.update = cfg.update;
    rc.eta = hp.delta / static_cast<double>(family.dim);
    rc.adam = AdamParams{hp.beta1, hp.beta2, 1e-8};
    rc.x0 = problem.x0;
    rc.feature_layout = FeatureLayout{cfg.feature_history, cfg.grad_slots};
    if (probes) {
        rc.probe_every = cfg.probe_every;
        rc.probe_repeats = cfg.probe_repeats;
    }
    return run(problem.objective, *policy, rc, rng);
}

double final_loss(const RunTrace& trace) {
    if (!trace.complete || trace.records.empty()) return std::numeric_limits<double>::infinity();
    return trace.records.back().f_value;
}

nn::Network actor_for_experiment(const ExperimentConfig& cfg, std::size_t dim) {
    FeatureLayout layout{cfg.feature_history, cfg.grad_slots};
    if (!cfg.actor_path.empty()) {
        auto [spec, params] = nn::load_network(cfg.actor_path);
        nn::Network actor{std::move(spec), std::move(params)};
        if (actor.spec.input.size() != layout.history * layout.channels())
            throw ConfigError("actor input does not match the configured feature layout");
        if (actor.spec.output_size() != dim)
            throw ConfigError("actor output dimension " + std::to_string(actor.spec.output_size()) +
                              " does not match task dimension " + std::to_string(dim));
        return actor;
    }
    // No artifact configured: freshly initialized actor (untrained policy).
    const nn::NetworkSpec spec = ddpg::default_actor_spec(layout, dim);
    RngStream rng = RngStream(cfg.seed).child("fresh-actor");
    return nn::Network{spec, nn::init_parameters(spec, rng, {.final_dense_scale = 0.01})};
}

} // namespace

void aggregate_series(const std::vector<std::vector<double>>& raw, std::vector<double>& mean,
                      std::vector<double>& std_dev) {
    mean.clear();
    std_dev.clear();
    if (raw.empty()) return;
    const std::size_t k = raw.front().size();
    const double n = static_cast<double>(raw.size());
    mean.assign(k, 0.0);
    std_dev.assign(k, 0.0);
    for (const auto& row : raw) {
        if (row.size() != k) throw std::invalid_argument("aggregate_series: ragged rows");
        for (std::size_t i = 0; i < k; ++i) mean[i] += row[i];
    }
    for (double& m : mean) m /= n;
    for (const auto& row : raw) {
        for (std::size_t i = 0; i < k; ++i) {
            const double dev = row[i] - mean[i];
            std_dev[i] += dev * dev;
        }
    }
    for (double& s : std_dev) s = std::sqrt(s / n); // population convention
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ProblemFamily family = load_problem_family(cfg.task, cfg.seed);

    const bool wants_rl = std::any_of(cfg.algos.begin(), cfg.algos.end(),
                                      [](Algo a) { return a == Algo::zo_rl; });
    std::optional<nn::Network> actor;
    if (wants_rl) actor = actor_for_experiment(cfg, family.dim);

    const bool probes = cfg.probe_every > 0 && cfg.probe_repeats >= 2;
    const RngStream master(cfg.seed);

    ExperimentResult result;
    result.base_name = cfg.task.name() + "_" + update_rule_name(cfg.update);
    result.steps = cfg.steps;

    for (Algo algo : cfg.algos) {
        const nn::Network* actor_ptr = (algo == Algo::zo_rl) ? &*actor : nullptr;
        const RngStream algo_stream = master.child(algo_name(algo));

        // Hyperparameter tuning on instances and seeds disjoint from reporting.
        const auto candidates = tuning_candidates(cfg);
        Candidate best = candidates.front();
        if (candidates.size() > 1) {
            std::vector<double> scores(candidates.size(), 0.0);
            std::vector<double> finals(candidates.size() * cfg.tune_trials);
            parallel_for(candidates.size() * cfg.tune_trials, cfg.workers, [&](std::size_t task_idx) {
                const std::size_t ci = task_idx / cfg.tune_trials;
                const std::size_t t = task_idx % cfg.tune_trials;
                RngStream rng = algo_stream.child("tune").child(t);
                const RunTrace trace =
                    run_one_trial(family, cfg, algo, candidates[ci], cfg.trials + t, rng, actor_ptr, false);
                finals[task_idx] = final_loss(trace);
            });
            for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
                double mean = 0.0;
                for (std::size_t t = 0; t < cfg.tune_trials; ++t) mean += finals[ci * cfg.tune_trials + t];
                scores[ci] = mean / static_cast<double>(cfg.tune_trials);
            }
            const std::size_t best_idx = static_cast<std::size_t>(
                std::min_element(scores.begin(), scores.end()) - scores.begin());
            if (!std::isfinite(scores[best_idx]))
                throw RunError("tuning failed for " + algo_name(algo) + ": every candidate diverged");
            best = candidates[best_idx];
        }

        // Reporting trials on fresh seeds.
        std::vector<RunTrace> traces(cfg.trials);
        parallel_for(cfg.trials, cfg.workers, [&](std::size_t r) {
            RngStream rng = algo_stream.child(r);
            traces[r] = run_one_trial(family, cfg, algo, best, r, rng, actor_ptr, probes);
        });

        TrialSeries series;
        series.algo = algo_name(algo);
        series.chosen_delta = best.delta;
        series.chosen_eta = best.delta / static_cast<double>(family.dim);
        series.chosen_beta1 = best.beta1;
        series.chosen_beta2 = best.beta2;
        series.has_probes = probes;
        for (const RunTrace& trace : traces) {
            if (!trace.complete || trace.records.size() != cfg.steps) {
                ++series.aborted_trials;
                continue;
            }
            std::vector<double> loss, gnorm, var;
            loss.reserve(cfg.steps);
            for (const auto& rec : trace.records) {
                loss.push_back(rec.f_value);
                gnorm.push_back(rec.grad_norm);
                var.push_back(rec.probe_variance.value_or(0.0));
            }
            series.raw_loss.push_back(std::move(loss));
            series.raw_grad_norm.push_back(std::move(gnorm));
            series.raw_variance.push_back(std::move(var));
        }

        const double abort_fraction =
            static_cast<double>(series.aborted_trials) / static_cast<double>(cfg.trials);
        if (series.aborted_trials > 0) {
            std::fprintf(stderr, "warning: %zu/%zu %s trials aborted and were excluded\n",
                         series.aborted_trials, cfg.trials, series.algo.c_str());
        }
        if (abort_fraction > cfg.abort_fraction_limit || series.raw_loss.empty())
            throw RunError(algo_name(algo) + ": " + std::to_string(series.aborted_trials) + " of " +
                           std::to_string(cfg.trials) + " trials aborted");

        aggregate_series(series.raw_loss, series.loss_mean, series.loss_std);
        std::vector<double> unused;
        aggregate_series(series.raw_grad_norm, series.grad_norm_mean, unused);
        aggregate_series(series.raw_variance, series.variance_mean, unused);
        series.queries.resize(cfg.steps);
        for (std::size_t k = 0; k < cfg.steps; ++k)
            series.queries[k] = static_cast<std::uint64_t>(k + 1) * (cfg.q + 1);

        result.series.emplace_back(algo, std::move(series));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Offline policy training

TrainPolicyResult train_rl_policy_cmd(const TrainPolicyConfig& cfg) {
    if (cfg.steps_per_episode == 0) throw ConfigError("episode-steps must be positive");
    if (cfg.q == 0) throw ConfigError("q must be positive");
    if (!(cfg.mu > 0.0)) throw ConfigError("mu must be positive");
    if (cfg.beta < 0.0 || cfg.beta >= 1.0) throw ConfigError("beta outside [0,1)");

    ProblemFamily family = load_problem_family(cfg.task, cfg.seed);

    ddpg::EnvConfig env_cfg;
    env_cfg.estimator = EstimatorConfig{cfg.mu, cfg.q};
    env_cfg.update = cfg.update;
    env_cfg.eta = cfg.eta ? *cfg.eta : cfg.delta / static_cast<double>(family.dim);
    env_cfg.layout = FeatureLayout{cfg.feature_history, cfg.grad_slots};
    env_cfg.beta = cfg.beta;
    env_cfg.steps_per_episode = cfg.steps_per_episode;
    env_cfg.reward_mode = cfg.reward_mode;
    ddpg::ZoEnvironment env(family.train_sampler, family.dim, env_cfg);

    const nn::NetworkSpec actor_spec = cfg.conv_actor ? ddpg::conv_actor_spec(env_cfg.layout, family.dim)
                                                      : ddpg::default_actor_spec(env_cfg.layout, family.dim);
    const nn::NetworkSpec critic_spec = ddpg::default_critic_spec(env_cfg.layout, family.dim);

    ddpg::DdpgHyperparams hp = cfg.ddpg;
    hp.episodes = cfg.episodes;

    ddpg::TrainResult trained = ddpg::train_policy(env, actor_spec, critic_spec, hp, RngStream(cfg.seed));

    TrainPolicyResult result;
    result.actor = std::move(trained.actor);
    result.log = std::move(trained.log);
    result.best_eval_score = trained.best_eval_score;
    result.actor_file = cfg.out_actor;
    result.log_file = cfg.out_log.empty() ? std::filesystem::path(cfg.out_actor.string() + ".log.csv")
                                          : cfg.out_log;

    if (!result.actor_file.parent_path().empty())
        std::filesystem::create_directories(result.actor_file.parent_path());
    nn::save_network(result.actor_file, result.actor.spec, result.actor.params);

    std::ofstream log(result.log_file);
    if (!log) throw DataError("cannot open " + result.log_file.string() + " for writing");
    log << "episode,mean_reward,critic_loss,eval_score\n";
    char buf[128];
    for (const auto& row : result.log) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,", row.episode, row.mean_reward,
                      row.mean_critic_loss);
        log << buf;
        if (row.eval_score) {
            std::snprintf(buf, sizeof(buf), "%.10g", *row.eval_score);
            log << buf;
        }
        log << '\n';
    }
    return result;
}

} // namespace zorl::harness
