#pragma once

#include "zorl/estimator.hpp"
#include "zorl/nn.hpp"
#include "zorl/objectives.hpp"
#include "zorl/policies.hpp"
#include "zorl/updates.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace zorl::ddpg {

struct Transition {
    Matrix state;      // feature matrix (H x channels)
    Vector action;
    double reward = 0.0;
    Matrix next_state;
    bool terminal = false;
};

/// Fixed-capacity ring; eviction is strictly oldest-first. sample() draws
/// uniformly with replacement over the stored transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return full_ ? capacity_ : next_; }
    std::size_t capacity() const { return capacity_; }

    /// Logical index 0 = oldest stored transition.
    const Transition& at(std::size_t i) const;

    std::vector<const Transition*> sample(std::size_t n, RngStream& rng) const;

private:
    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t next_ = 0;
    bool full_ = false;
};

enum class RewardMode {
    decrease,      // r = f(x_k) - f(x_{k+1})
    negative_loss, // r = -f(x_{k+1})
};

struct EnvConfig {
    EstimatorConfig estimator;
    UpdateRuleKind update = UpdateRuleKind::sgd;
    double eta = 0.1;
    AdamParams adam;
    FeatureLayout layout;
    double beta = 0.5;               // guidance weight for action-driven sampling
    std::size_t steps_per_episode = 50;
    RewardMode reward_mode = RewardMode::decrease;
    double abort_penalty = 1e3;      // negative reward when an evaluation fails
};

/// One episode = one fresh objective drawn from a problem family, optimized
/// for T steps with sampling directions built from the agent's actions.
class ZoEnvironment {
public:
    struct Problem {
        Objective objective;
        std::optional<Vector> x0; // zero-initialized when absent
    };
    using ProblemSampler = std::function<Problem(RngStream&)>;

    ZoEnvironment(ProblemSampler sampler, std::size_t dim, EnvConfig cfg);

    /// Starts a new episode; the stream seeds both the problem draw and the
    /// per-step direction noise. Returns the initial featurized state.
    Matrix reset(RngStream episode_rng);

    struct StepResult {
        double reward = 0.0;
        Matrix features;
        bool terminal = false;
    };
    StepResult step(const Vector& action);

    std::size_t dim() const { return dim_; }
    std::size_t action_dim() const { return dim_; }
    const EnvConfig& config() const { return cfg_; }
    std::size_t steps_taken() const { return step_index_; }
    bool episode_finished() const { return finished_; }
    /// f at the current iterate (known from the last step's bookkeeping).
    double last_f() const { return last_f_; }
    double episode_initial_f() const { return initial_f_; }
    const OptimizerState& state() const { return *state_; }

private:
    ProblemSampler sampler_;
    std::size_t dim_;
    EnvConfig cfg_;

    std::optional<Objective> objective_;
    std::optional<Vector> x_;
    std::optional<OptimizerState> state_;
    std::optional<UpdateRule> rule_;
    std::optional<RngStream> directions_rng_;
    std::size_t step_index_ = 0;
    bool finished_ = true;
    double last_f_ = 0.0;
    double initial_f_ = 0.0;
};

struct DdpgHyperparams {
    double gamma = 0.99;    // discount in [0,1]
    double tau = 0.005;     // soft-update rate in (0,1]
    std::size_t batch_size = 64;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double exploration_noise = 0.1; // sigma of Gaussian action noise
    std::size_t episodes = 50;
    std::size_t buffer_capacity = 100000;
    std::size_t eval_every = 10;    // episodes between greedy evaluations (0 = never)
    std::size_t eval_episodes = 4;

    void validate() const;
};

/// TD regression targets y_i = r_i + gamma * Q'(s_{i+1}, pi'(s_{i+1})); the
/// bootstrap term is dropped on terminal transitions.
std::vector<double> td_targets(const std::vector<const Transition*>& batch, const nn::Network& target_actor,
                               const nn::Network& target_critic, double gamma);

/// One Adam step on the squared-error critic loss
/// L = (1/N) sum_i (y_i - Q(s_i, a_i))^2. Returns the pre-step loss.
double critic_update(nn::Network& critic, nn::AdamState& adam, const std::vector<const Transition*>& batch,
                     const std::vector<double>& y, double lr);

/// One Adam ascent step on J = (1/N) sum_i Q(s_i, pi(s_i)); the action
/// gradient comes from the critic's input gradients restricted to the action
/// coordinates. Returns the pre-step J.
double actor_update(nn::Network& actor, nn::AdamState& adam, const nn::Network& critic,
                    const std::vector<const Transition*>& batch, double lr);

/// theta' <- tau * theta + (1 - tau) * theta', including batchnorm running
/// statistics.
void soft_update(const nn::NetworkParameters& learned, nn::NetworkParameters& target, double tau);

struct EpisodeLog {
    std::size_t episode = 0;
    double mean_reward = 0.0;
    double mean_critic_loss = 0.0;
    std::optional<double> eval_score; // mean final loss of greedy eval episodes
};

struct TrainResult {
    nn::Network actor;
    std::vector<EpisodeLog> log;
    std::optional<double> best_eval_score;
};

/// Default desk-scale topologies for the given feature layout and action
/// dimension. The actor ends in tanh; the critic ends linear.
nn::NetworkSpec default_actor_spec(const FeatureLayout& layout, std::size_t action_dim);
nn::NetworkSpec default_critic_spec(const FeatureLayout& layout, std::size_t action_dim);

/// Convolutional variant treating the feature matrix as a 1-D image with one
/// channel per feature column.
nn::NetworkSpec conv_actor_spec(const FeatureLayout& layout, std::size_t action_dim);

/// DDPG training over episodes drawn from the environment's problem family.
/// Per step after warmup: one critic update, one actor update, one soft update
/// of both targets. Returns the actor scoring best on the periodic greedy
/// evaluations (the final actor when no evaluation ever ran).
TrainResult train_policy(ZoEnvironment& env, const nn::NetworkSpec& actor_spec,
                         const nn::NetworkSpec& critic_spec, const DdpgHyperparams& hp, RngStream rng);

} // namespace zorl::ddpg
