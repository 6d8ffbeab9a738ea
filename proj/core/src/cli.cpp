#include "zorl/datagen.hpp"
#include "zorl/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace zorl::harness {

namespace {

// --- flat key/value config file with one section per algorithm -------------

struct ConfigFile {
    std::map<std::string, std::string> global;
    std::map<std::string, std::map<std::string, std::string>> sections;
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

ConfigFile parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    ConfigFile cfg;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#' || text[0] == ';') continue;
        if (text.front() == '[' && text.back() == ']') {
            section = trim(text.substr(1, text.size() - 2));
            if (section.empty()) throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty section");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty key");
        if (section.empty()) {
            cfg.global[key] = value;
        } else {
            cfg.sections[section][key] = value;
        }
    }
    return cfg;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + value + "'");
    }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size() || v < 0) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": '" + value + "'");
    }
}

std::vector<double> parse_grid(const std::string& key, const std::string& value) {
    std::vector<double> grid;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) grid.push_back(parse_double(key, trim(item)));
    }
    if (grid.empty()) throw ConfigError("empty grid for " + key);
    return grid;
}

std::vector<std::string> split_commas(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const std::string& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!trim(part).empty()) out.push_back(trim(part));
        }
    }
    return out;
}

void apply_config_file(const ConfigFile& file, ExperimentConfig& cfg) {
    for (const auto& [key, value] : file.global) {
        if (key == "task") cfg.task = parse_task(value);
        else if (key == "algos" || key == "algo") {
            cfg.algos.clear();
            for (const std::string& name : split_commas({value})) cfg.algos.push_back(parse_algo(name));
        } else if (key == "update") cfg.update = parse_update_rule(value);
        else if (key == "q") cfg.q = parse_size(key, value);
        else if (key == "mu") cfg.mu = parse_double(key, value);
        else if (key == "steps") cfg.steps = parse_size(key, value);
        else if (key == "trials") cfg.trials = parse_size(key, value);
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_size(key, value));
        else if (key == "out") cfg.out_dir = value;
        else if (key == "probe-every") cfg.probe_every = parse_size(key, value);
        else if (key == "probe-repeats") cfg.probe_repeats = parse_size(key, value);
        else if (key == "workers") cfg.workers = parse_size(key, value);
        else if (key == "tune-trials") cfg.tune_trials = parse_size(key, value);
        else if (key == "delta-grid") cfg.delta_grid = parse_grid(key, value);
        else if (key == "beta1-grid") cfg.beta1_grid = parse_grid(key, value);
        else if (key == "beta2-grid") cfg.beta2_grid = parse_grid(key, value);
        else if (key == "history") cfg.feature_history = parse_size(key, value);
        else if (key == "grad-slots") cfg.grad_slots = parse_size(key, value);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    for (const auto& [section, keys] : file.sections) {
        if (section == "zo-gs") {
            if (!keys.empty()) throw ConfigError("zo-gs takes no configuration keys");
        } else if (section == "guided-es") {
            for (const auto& [key, value] : keys) {
                if (key == "alpha") cfg.guided_alpha = parse_double(key, value);
                else throw ConfigError("unknown guided-es key '" + key + "'");
            }
        } else if (section == "zo-rl") {
            for (const auto& [key, value] : keys) {
                if (key == "beta") cfg.rl_beta = parse_double(key, value);
                else if (key == "actor-path") cfg.actor_path = value;
                else throw ConfigError("unknown zo-rl key '" + key + "'");
            }
        } else {
            throw ConfigError("unknown config section [" + section + "]");
        }
    }
}

// --- subcommands ------------------------------------------------------------

int cmd_run(const ExperimentConfig& cfg) {
    const ExperimentResult result = run_experiment(cfg);
    emit_reports(result, cfg.out_dir);
    for (const auto& [algo, series] : result.series) {
        std::printf("%-10s delta=%-8g final_loss_mean=%.6g aborted=%zu\n", series.algo.c_str(),
                    series.chosen_delta, series.loss_mean.back(), series.aborted_trials);
    }
    std::printf("reports written to %s\n", cfg.out_dir.string().c_str());
    return 0;
}

int cmd_report(const std::filesystem::path& dir) {
    const auto results = load_raw_results(dir);
    for (const auto& result : results) {
        emit_reports(result, dir);
        std::printf("regenerated %s (%zu algorithms, %zu iterations)\n", result.base_name.c_str(),
                    result.series.size(), result.steps);
    }
    return 0;
}

int cmd_train_policy(const TrainPolicyConfig& cfg) {
    const TrainPolicyResult result = train_rl_policy_cmd(cfg);
    std::printf("actor written to %s\n", result.actor_file.string().c_str());
    std::printf("training log written to %s\n", result.log_file.string().c_str());
    if (result.best_eval_score) {
        std::printf("best greedy eval score (mean final loss): %.6g\n", *result.best_eval_score);
    }
    return 0;
}

int cmd_datasets_fetch(const std::vector<std::string>& libsvm_paths, const std::string& images,
                       const std::string& labels, const std::filesystem::path& out_dir, bool demo,
                       std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);

    for (const std::string& p : libsvm_paths) {
        const Dataset data = load_libsvm(p); // validates
        const auto dest = out_dir / std::filesystem::path(p).filename();
        if (std::filesystem::absolute(dest) != std::filesystem::absolute(p)) {
            std::filesystem::copy_file(p, dest, std::filesystem::copy_options::overwrite_existing);
        }
        std::printf("validated %s: %zu samples, dimension %zu\n", p.c_str(), data.size(), data.dim);
    }
    if (!images.empty() || !labels.empty()) {
        if (images.empty() || labels.empty())
            throw ConfigError("datasets fetch needs both --images and --labels");
        const ImageSet set = load_idx_images(images, labels);
        for (const std::string& p : {images, labels}) {
            const auto dest = out_dir / std::filesystem::path(p).filename();
            if (std::filesystem::absolute(dest) != std::filesystem::absolute(p)) {
                std::filesystem::copy_file(p, dest, std::filesystem::copy_options::overwrite_existing);
            }
        }
        std::printf("validated %s + %s: %zu images of %zux%zu, %zu classes\n", images.c_str(),
                    labels.c_str(), set.size(), set.rows, set.cols, set.num_classes());
    }
    if (demo) {
        RngStream rng(seed);
        RngStream ds_rng = rng.child("demo-libsvm");
        const Dataset demo_data = datagen::synthetic_two_class(270, 13, ds_rng);
        save_libsvm(demo_data, out_dir / "demo_scale.libsvm");
        RngStream img_rng = rng.child("demo-images");
        const ImageSet demo_images = datagen::synthetic_images(120, 6, 6, 3, img_rng);
        save_idx_images(demo_images, out_dir / "demo-images.idx3-ubyte", out_dir / "demo-labels.idx1-ubyte");
        std::printf("demo datasets written to %s\n", out_dir.string().c_str());
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"zeroth-order optimization benchmark harness with learned sampling policies"};
    app.require_subcommand(1);

    // ---- run ----
    auto* run_cmd = app.add_subcommand("run", "run a comparison experiment and emit CSV/SVG reports");
    std::string run_task, run_update;
    std::vector<std::string> run_algos;
    std::size_t run_q = 0, run_steps = 0, run_trials = 0, run_probe_every = 0, run_probe_repeats = 0;
    std::size_t run_workers = 0, run_tune_trials = 0, run_history = 0, run_grad_slots = 0;
    std::uint64_t run_seed = 0;
    double run_mu = 0.0, run_beta = 0.0, run_alpha = 0.0;
    std::string run_out, run_config, run_actor, run_delta_grid, run_beta1_grid, run_beta2_grid;

    run_cmd->add_option("--task", run_task, "synthetic[:d] | least-squares:<path> | attack:<imgs>,<lbls>[,<victim>]");
    run_cmd->add_option("--algo", run_algos, "algorithms to compare (zo-gs, guided-es, zo-rl)");
    run_cmd->add_option("--update", run_update, "update rule: sgd | signsgd | adam");
    run_cmd->add_option("--q", run_q, "query directions per iteration");
    run_cmd->add_option("--mu", run_mu, "finite-difference smoothing parameter");
    run_cmd->add_option("--steps", run_steps, "iterations per trial");
    run_cmd->add_option("--trials", run_trials, "reporting trials per algorithm");
    run_cmd->add_option("--seed", run_seed, "master seed");
    run_cmd->add_option("--out", run_out, "output directory");
    run_cmd->add_option("--config", run_config, "config file (flags override its keys)");
    run_cmd->add_option("--beta", run_beta, "zo-rl guidance weight in [0,1)");
    run_cmd->add_option("--probe-every", run_probe_every, "variance probe interval (0 = off)");
    run_cmd->add_option("--probe-repeats", run_probe_repeats, "estimates per variance probe");
    run_cmd->add_option("--alpha", run_alpha, "guided-es isotropic mixing weight");
    run_cmd->add_option("--actor-path", run_actor, "trained actor artifact for zo-rl");
    run_cmd->add_option("--workers", run_workers, "worker threads (0 = cpu count)");
    run_cmd->add_option("--tune-trials", run_tune_trials, "trials per tuning candidate");
    run_cmd->add_option("--delta-grid", run_delta_grid, "comma-separated eta=delta/d grid");
    run_cmd->add_option("--beta1-grid", run_beta1_grid, "comma-separated adam beta1 grid");
    run_cmd->add_option("--beta2-grid", run_beta2_grid, "comma-separated adam beta2 grid");
    run_cmd->add_option("--history", run_history, "optimizer state history length H");
    run_cmd->add_option("--grad-slots", run_grad_slots, "gradient summary slots m");

    // ---- train-policy ----
    auto* train_cmd = app.add_subcommand("train-policy", "train the DDPG sampling policy offline");
    TrainPolicyConfig tp;
    std::string tp_task = "synthetic:10", tp_update = "sgd", tp_out = "actor.zorlnn", tp_log;
    double tp_eta = 0.0;
    train_cmd->add_option("--task", tp_task, "problem family to train on");
    train_cmd->add_option("--episodes", tp.episodes, "training episodes");
    train_cmd->add_option("--episode-steps", tp.steps_per_episode, "optimizer steps per episode");
    train_cmd->add_option("--q", tp.q, "query directions per iteration");
    train_cmd->add_option("--mu", tp.mu, "smoothing parameter");
    train_cmd->add_option("--beta", tp.beta, "guidance weight in [0,1)");
    train_cmd->add_option("--update", tp_update, "update rule inside episodes");
    train_cmd->add_option("--delta", tp.delta, "eta = delta / d inside episodes");
    train_cmd->add_option("--eta", tp_eta, "explicit eta (overrides --delta)");
    train_cmd->add_option("--seed", tp.seed, "training seed");
    train_cmd->add_option("--out", tp_out, "actor artifact path");
    train_cmd->add_option("--log", tp_log, "learning-curve CSV path");
    train_cmd->add_option("--gamma", tp.ddpg.gamma, "discount factor");
    train_cmd->add_option("--tau", tp.ddpg.tau, "soft target update rate");
    train_cmd->add_option("--batch-size", tp.ddpg.batch_size, "replay minibatch size");
    train_cmd->add_option("--actor-lr", tp.ddpg.actor_lr, "actor Adam learning rate");
    train_cmd->add_option("--critic-lr", tp.ddpg.critic_lr, "critic Adam learning rate");
    train_cmd->add_option("--noise", tp.ddpg.exploration_noise, "exploration noise sigma");
    train_cmd->add_option("--buffer", tp.ddpg.buffer_capacity, "replay buffer capacity");
    train_cmd->add_option("--eval-every", tp.ddpg.eval_every, "episodes between greedy evals");
    train_cmd->add_option("--eval-episodes", tp.ddpg.eval_episodes, "episodes per greedy eval");
    train_cmd->add_option("--history", tp.feature_history, "state history length H");
    train_cmd->add_option("--grad-slots", tp.grad_slots, "gradient summary slots m");
    train_cmd->add_flag("--conv", tp.conv_actor, "use the conv1d actor topology");

    // ---- report ----
    auto* report_cmd = app.add_subcommand("report", "regenerate aggregate CSV/SVG from raw trial CSVs");
    std::string report_dir = "zorl-out";
    report_cmd->add_option("--out", report_dir, "directory holding *.raw.csv files");

    // ---- datasets ----
    auto* datasets_cmd = app.add_subcommand("datasets", "dataset utilities");
    auto* fetch_cmd = datasets_cmd->add_subcommand("fetch", "validate and copy local dataset files");
    std::vector<std::string> fetch_libsvm;
    std::string fetch_images, fetch_labels, fetch_out = "data";
    std::uint64_t fetch_seed = 7;
    bool fetch_demo = false;
    fetch_cmd->add_option("--libsvm", fetch_libsvm, "LIBSVM text files to validate and copy");
    fetch_cmd->add_option("--images", fetch_images, "IDX image file");
    fetch_cmd->add_option("--labels", fetch_labels, "IDX label file");
    fetch_cmd->add_option("--out", fetch_out, "destination directory");
    fetch_cmd->add_flag("--demo", fetch_demo, "generate bundled demo datasets");
    fetch_cmd->add_option("--seed", fetch_seed, "seed for demo generation");

    std::vector<const char*> argv;
    argv.push_back("zorl");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            ExperimentConfig cfg;
            if (run_cmd->count("--config")) apply_config_file(parse_config_file(run_config), cfg);
            if (run_cmd->count("--task")) cfg.task = parse_task(run_task);
            if (run_cmd->count("--algo")) {
                cfg.algos.clear();
                for (const std::string& name : split_commas(run_algos)) cfg.algos.push_back(parse_algo(name));
            }
            if (run_cmd->count("--update")) cfg.update = parse_update_rule(run_update);
            if (run_cmd->count("--q")) cfg.q = run_q;
            if (run_cmd->count("--mu")) cfg.mu = run_mu;
            if (run_cmd->count("--steps")) cfg.steps = run_steps;
            if (run_cmd->count("--trials")) cfg.trials = run_trials;
            if (run_cmd->count("--seed")) cfg.seed = run_seed;
            if (run_cmd->count("--out")) cfg.out_dir = run_out;
            if (run_cmd->count("--beta")) cfg.rl_beta = run_beta;
            if (run_cmd->count("--alpha")) cfg.guided_alpha = run_alpha;
            if (run_cmd->count("--actor-path")) cfg.actor_path = run_actor;
            if (run_cmd->count("--probe-every")) cfg.probe_every = run_probe_every;
            if (run_cmd->count("--probe-repeats")) cfg.probe_repeats = run_probe_repeats;
            if (run_cmd->count("--workers")) cfg.workers = run_workers;
            if (run_cmd->count("--tune-trials")) cfg.tune_trials = run_tune_trials;
            if (run_cmd->count("--delta-grid")) cfg.delta_grid = parse_grid("delta-grid", run_delta_grid);
            if (run_cmd->count("--beta1-grid")) cfg.beta1_grid = parse_grid("beta1-grid", run_beta1_grid);
            if (run_cmd->count("--beta2-grid")) cfg.beta2_grid = parse_grid("beta2-grid", run_beta2_grid);
            if (run_cmd->count("--history")) cfg.feature_history = run_history;
            if (run_cmd->count("--grad-slots")) cfg.grad_slots = run_grad_slots;
            return cmd_run(cfg);
        }
        if (train_cmd->parsed()) {
            tp.task = parse_task(tp_task);
            tp.update = parse_update_rule(tp_update);
            if (train_cmd->count("--eta")) tp.eta = tp_eta;
            tp.out_actor = tp_out;
            if (!tp_log.empty()) tp.out_log = tp_log;
            return cmd_train_policy(tp);
        }
        if (report_cmd->parsed()) {
            return cmd_report(report_dir);
        }
        if (datasets_cmd->parsed()) {
            if (!fetch_cmd->parsed()) throw ConfigError("datasets: expected the 'fetch' subcommand");
            if (fetch_libsvm.empty() && fetch_images.empty() && !fetch_demo)
                throw ConfigError("datasets fetch: nothing to do (use --libsvm, --images/--labels, or --demo)");
            return cmd_datasets_fetch(fetch_libsvm, fetch_images, fetch_labels, fetch_out, fetch_demo,
                                      fetch_seed);
        }
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        return 4;
    }
}

} // namespace zorl::harness
