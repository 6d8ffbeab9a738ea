#include "zorl/ddpg.hpp"

#include "zorl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zorl::ddpg {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::push(Transition t) {
    if (!full_ && next_ == storage_.size()) {
        storage_.push_back(std::move(t));
    } else {
        storage_[next_] = std::move(t);
    }
    ++next_;
    if (next_ == capacity_) {
        next_ = 0;
        full_ = true;
    }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("ReplayBuffer::at");
    return full_ ? storage_[(next_ + i) % capacity_] : storage_[i];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, RngStream& rng) const {
    if (size() == 0) throw std::invalid_argument("ReplayBuffer::sample: buffer empty");
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = rng.next_below(size());
        out.push_back(full_ ? &storage_[(next_ + idx) % capacity_] : &storage_[idx]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Environment

ZoEnvironment::ZoEnvironment(ProblemSampler sampler, std::size_t dim, EnvConfig cfg)
    : sampler_(std::move(sampler)), dim_(dim), cfg_(cfg) {
    if (!sampler_) throw std::invalid_argument("ZoEnvironment: sampler required");
    if (dim_ == 0) throw std::invalid_argument("ZoEnvironment: dimension must be positive");
    cfg_.estimator.validate();
    if (cfg_.steps_per_episode == 0)
        throw std::invalid_argument("ZoEnvironment: steps_per_episode must be positive");
}

Matrix ZoEnvironment::reset(RngStream episode_rng) {
    RngStream problem_rng = episode_rng.child("problem");
    Problem problem = sampler_(problem_rng);
    if (problem.objective.dim() != dim_)
        throw std::invalid_argument("ZoEnvironment: sampled objective dimension mismatch");

    objective_.emplace(std::move(problem.objective));
    x_ = problem.x0 ? *problem.x0 : Vector::zeros(dim_);
    state_.emplace(dim_, cfg_.layout.history, cfg_.steps_per_episode);
    rule_.emplace(cfg_.update, dim_, cfg_.eta, cfg_.adam);
    directions_rng_ = episode_rng.child("directions");
    step_index_ = 0;
    finished_ = false;
    last_f_ = 0.0;
    initial_f_ = 0.0;
    return featurize(*state_, cfg_.layout);
}

ZoEnvironment::StepResult ZoEnvironment::step(const Vector& action) {
    if (finished_) throw std::logic_error("ZoEnvironment::step: episode finished, call reset()");

    StepResult result;
    try {
        const auto directions = guided_directions(action, cfg_.beta, dim_, cfg_.estimator.q, *directions_rng_);
        const GradientEstimate est = estimate_gradient(*x_, *objective_, directions, cfg_.estimator);
        if (step_index_ == 0) initial_f_ = est.base_value;

        const Vector x_next = rule_->step(*x_, est.g);
        const double f_next = objective_->evaluate(x_next);
        if (!std::isfinite(f_next)) throw EvaluationError("non-finite objective value after update", x_next);

        result.reward = cfg_.reward_mode == RewardMode::decrease ? est.base_value - f_next : -f_next;
        state_->record_step(est.g, est.base_value, x_next - *x_, step_index_);
        *x_ = x_next;
        last_f_ = f_next;
    } catch (const EvaluationError&) {
        result.reward = -cfg_.abort_penalty;
        result.terminal = true;
        finished_ = true;
        result.features = featurize(*state_, cfg_.layout);
        return result;
    }

    ++step_index_;
    result.terminal = step_index_ >= cfg_.steps_per_episode;
    finished_ = result.terminal;
    result.features = featurize(*state_, cfg_.layout);
    return result;
}

// ---------------------------------------------------------------------------
// DDPG updates

void DdpgHyperparams::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("DdpgHyperparams: gamma outside [0,1]");
    if (!(tau > 0.0) || tau > 1.0) throw std::invalid_argument("DdpgHyperparams: tau outside (0,1]");
    if (batch_size == 0) throw std::invalid_argument("DdpgHyperparams: batch size must be positive");
    if (buffer_capacity == 0) throw std::invalid_argument("DdpgHyperparams: buffer capacity must be positive");
}

namespace {

std::size_t feature_size(const Matrix& m) { return m.rows() * m.cols(); }

void flatten_features(const Matrix& m, double* out) {
    std::size_t i = 0;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out[i++] = m(r, c);
}

nn::Batch actor_input_batch(const std::vector<const Transition*>& batch, const nn::DataShape& shape,
                            bool next_state) {
    nn::Batch out = nn::Batch::zeros(batch.size(), shape);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Matrix& features = next_state ? batch[i]->next_state : batch[i]->state;
        const nn::Batch one = features_to_batch(features, shape);
        std::copy(one.data.begin(), one.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * shape.size()));
    }
    return out;
}

// Critic input rows: [flattened state, action].
nn::Batch critic_input_batch(const std::vector<const Transition*>& batch, const nn::DataShape& shape,
                             const nn::Batch* actions, bool next_state) {
    nn::Batch out = nn::Batch::zeros(batch.size(), shape);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Matrix& features = next_state ? batch[i]->next_state : batch[i]->state;
        const std::size_t s = feature_size(features);
        const std::size_t a = shape.size() - s;
        double* row = out.data.data() + i * shape.size();
        flatten_features(features, row);
        if (actions) {
            std::copy(actions->data.begin() + static_cast<std::ptrdiff_t>(i * a),
                      actions->data.begin() + static_cast<std::ptrdiff_t>((i + 1) * a), row + s);
        } else {
            const Vector& act = batch[i]->action;
            std::copy(act.begin(), act.end(), row + s);
        }
    }
    return out;
}

} // namespace

std::vector<double> td_targets(const std::vector<const Transition*>& batch, const nn::Network& target_actor,
                               const nn::Network& target_critic, double gamma) {
    if (batch.empty()) throw std::invalid_argument("td_targets: empty batch");

    const nn::Batch next_states = actor_input_batch(batch, target_actor.spec.input, true);
    const nn::Batch next_actions = nn::forward_eval(target_actor.spec, target_actor.params, next_states);
    const nn::Batch critic_in = critic_input_batch(batch, target_critic.spec.input, &next_actions, true);
    const nn::Batch q_next = nn::forward_eval(target_critic.spec, target_critic.params, critic_in);

    std::vector<double> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        y[i] = batch[i]->reward + (batch[i]->terminal ? 0.0 : gamma * q_next.at(i, 0));
    }
    return y;
}

double critic_update(nn::Network& critic, nn::AdamState& adam, const std::vector<const Transition*>& batch,
                     const std::vector<double>& y, double lr) {
    if (batch.empty() || batch.size() != y.size())
        throw std::invalid_argument("critic_update: batch and targets misaligned");
    const double n = static_cast<double>(batch.size());

    const nn::Batch input = critic_input_batch(batch, critic.spec.input, nullptr, false);
    nn::ForwardTape tape;
    const nn::Batch q = nn::forward_train(critic.spec, critic.params, input, tape);

    double loss = 0.0;
    nn::Batch upstream = nn::Batch::zeros(batch.size(), nn::DataShape::flat_width(1));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double err = y[i] - q.at(i, 0);
        loss += err * err / n;
        upstream.at(i, 0) = -2.0 * err / n;
    }

    const nn::Gradients grads = nn::backward(critic.spec, critic.params, tape, upstream);
    nn::adam_update_net(critic.params, grads, adam, lr);
    return loss;
}

double actor_update(nn::Network& actor, nn::AdamState& adam, const nn::Network& critic,
                    const std::vector<const Transition*>& batch, double lr) {
    if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
    const double n = static_cast<double>(batch.size());
    const std::size_t action_dim = actor.spec.output_size();
    const std::size_t state_dim = critic.spec.input.size() - action_dim;

    const nn::Batch states = actor_input_batch(batch, actor.spec.input, false);
    nn::ForwardTape actor_tape;
    const nn::Batch actions = nn::forward_train(actor.spec, actor.params, states, actor_tape);

    const nn::Batch critic_in = critic_input_batch(batch, critic.spec.input, &actions, false);
    nn::ForwardTape critic_tape;
    const nn::Batch q = nn::forward_eval(critic.spec, critic.params, critic_in, &critic_tape);

    double j = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) j += q.at(i, 0) / n;

    nn::Batch upstream_q = nn::Batch::zeros(batch.size(), nn::DataShape::flat_width(1));
    for (std::size_t i = 0; i < batch.size(); ++i) upstream_q.at(i, 0) = 1.0 / n;

    nn::Batch critic_input_grads;
    nn::backward(critic.spec, critic.params, critic_tape, upstream_q, &critic_input_grads);

    // Ascend J: feed -dJ/da into the actor and let Adam minimize.
    nn::Batch upstream_actor = nn::Batch::zeros(batch.size(), actor.spec.output_shape());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t a = 0; a < action_dim; ++a) {
            upstream_actor.at(i, a) = -critic_input_grads.at(i, state_dim + a);
        }
    }

    const nn::Gradients grads = nn::backward(actor.spec, actor.params, actor_tape, upstream_actor);
    nn::adam_update_net(actor.params, grads, adam, lr);
    return j;
}

void soft_update(const nn::NetworkParameters& learned, nn::NetworkParameters& target, double tau) {
    if (learned.layers.size() != target.layers.size())
        throw std::invalid_argument("soft_update: layer count mismatch");
    auto blend = [tau](const std::vector<double>& l, std::vector<double>& t, const char* what) {
        if (l.size() != t.size()) throw std::invalid_argument(std::string("soft_update: shape mismatch in ") + what);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * l[i] + (1.0 - tau) * t[i];
    };
    for (std::size_t i = 0; i < target.layers.size(); ++i) {
        blend(learned.layers[i].weights, target.layers[i].weights, "weights");
        blend(learned.layers[i].bias, target.layers[i].bias, "bias");
        blend(learned.layers[i].gamma, target.layers[i].gamma, "gamma");
        blend(learned.layers[i].beta, target.layers[i].beta, "beta");
        blend(learned.layers[i].running_mean, target.layers[i].running_mean, "running_mean");
        blend(learned.layers[i].running_var, target.layers[i].running_var, "running_var");
    }
    ++target.revision;
}

// ---------------------------------------------------------------------------
// Network topologies

nn::NetworkSpec default_actor_spec(const FeatureLayout& layout, std::size_t action_dim) {
    const std::size_t in = layout.history * layout.channels();
    nn::NetworkSpec spec;
    spec.input = nn::DataShape::flat_width(in);
    spec.layers = {
        nn::BatchNormSpec{in},
        nn::DenseSpec{in, 64},
        nn::ActivationSpec{nn::Act::relu},
        nn::DenseSpec{64, 64},
        nn::ActivationSpec{nn::Act::relu},
        nn::DenseSpec{64, action_dim},
        nn::ActivationSpec{nn::Act::tanh},
    };
    return spec;
}

nn::NetworkSpec default_critic_spec(const FeatureLayout& layout, std::size_t action_dim) {
    const std::size_t in = layout.history * layout.channels() + action_dim;
    nn::NetworkSpec spec;
    spec.input = nn::DataShape::flat_width(in);
    spec.layers = {
        nn::DenseSpec{in, 64},
        nn::ActivationSpec{nn::Act::relu},
        nn::DenseSpec{64, 64},
        nn::ActivationSpec{nn::Act::relu},
        nn::DenseSpec{64, 1},
    };
    return spec;
}

nn::NetworkSpec conv_actor_spec(const FeatureLayout& layout, std::size_t action_dim) {
    const std::size_t channels = layout.channels();
    const std::size_t h = layout.history;
    if (h < 5) throw std::invalid_argument("conv_actor_spec: needs history >= 5");
    const std::size_t conv_out = 16;
    const std::size_t flat = conv_out * (h - 4); // two kernel-3 convs, stride 1
    nn::NetworkSpec spec;
    spec.input = nn::DataShape::image(channels, h);
    spec.layers = {
        nn::Conv1dSpec{channels, conv_out, 3, 1},
        nn::ActivationSpec{nn::Act::relu},
        nn::Conv1dSpec{conv_out, conv_out, 3, 1},
        nn::ActivationSpec{nn::Act::relu},
        nn::FlattenSpec{},
        nn::BatchNormSpec{flat},
        nn::DenseSpec{flat, 64},
        nn::ActivationSpec{nn::Act::relu},
        nn::DenseSpec{64, action_dim},
        nn::ActivationSpec{nn::Act::tanh},
    };
    return spec;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Vector greedy_action(const nn::Network& actor, const Matrix& features) {
    const nn::Batch input = features_to_batch(features, actor.spec.input);
    const nn::Batch out = nn::forward_eval(actor.spec, actor.params, input);
    return Vector(out.data);
}

double evaluate_actor(ZoEnvironment& env, const nn::Network& actor, std::size_t episodes, RngStream rng) {
    double total_final = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        Matrix features = env.reset(rng.child(e));
        bool done = false;
        while (!done) {
            const auto result = env.step(greedy_action(actor, features));
            features = result.features;
            done = result.terminal;
        }
        total_final += env.last_f();
    }
    return total_final / static_cast<double>(std::max<std::size_t>(episodes, 1));
}

} // namespace

TrainResult train_policy(ZoEnvironment& env, const nn::NetworkSpec& actor_spec,
                         const nn::NetworkSpec& critic_spec, const DdpgHyperparams& hp, RngStream rng) {
    hp.validate();
    if (critic_spec.output_size() != 1) throw std::invalid_argument("train_policy: critic must output a scalar");
    if (actor_spec.output_size() != env.action_dim())
        throw std::invalid_argument("train_policy: actor output does not match the environment action space");
    if (critic_spec.input.size() != actor_spec.input.size() + env.action_dim())
        throw std::invalid_argument("train_policy: critic input must be state size + action size");

    RngStream actor_init = rng.child("actor-init");
    RngStream critic_init = rng.child("critic-init");
    nn::Network actor{actor_spec, nn::init_parameters(actor_spec, actor_init, {.final_dense_scale = 0.01})};
    nn::Network critic{critic_spec, nn::init_parameters(critic_spec, critic_init)};

    // Targets start as exact copies of the learned networks.
    nn::Network target_actor = actor;
    nn::Network target_critic = critic;

    nn::AdamState actor_adam = nn::make_adam_state(actor.params);
    nn::AdamState critic_adam = nn::make_adam_state(critic.params);
    ReplayBuffer buffer(hp.buffer_capacity);

    RngStream noise_rng = rng.child("noise");
    RngStream replay_rng = rng.child("replay");
    RngStream episode_rng = rng.child("episodes");
    RngStream eval_rng = rng.child("evals");

    TrainResult result;
    std::optional<nn::Network> best_actor;

    const std::size_t action_dim = env.action_dim();
    for (std::size_t ep = 0; ep < hp.episodes; ++ep) {
        Matrix features = env.reset(episode_rng.child(ep));
        double reward_sum = 0.0;
        double loss_sum = 0.0;
        std::size_t steps = 0;
        std::size_t updates = 0;
        bool done = false;

        while (!done) {
            Vector action = greedy_action(actor, features);
            for (std::size_t i = 0; i < action_dim; ++i) {
                action[i] = std::clamp(action[i] + hp.exploration_noise * noise_rng.next_gaussian(), -1.0, 1.0);
            }

            const auto sr = env.step(action);
            buffer.push(Transition{features, action, sr.reward, sr.features, sr.terminal});
            reward_sum += sr.reward;
            ++steps;

            if (buffer.size() >= hp.batch_size) {
                const auto batch = buffer.sample(hp.batch_size, replay_rng);
                const auto targets = td_targets(batch, target_actor, target_critic, hp.gamma);
                const double loss = critic_update(critic, critic_adam, batch, targets, hp.critic_lr);
                if (!std::isfinite(loss)) {
                    throw RunError("train_policy: critic loss diverged at episode " + std::to_string(ep) +
                                   ", step " + std::to_string(steps));
                }
                actor_update(actor, actor_adam, critic, batch, hp.actor_lr);
                soft_update(critic.params, target_critic.params, hp.tau);
                soft_update(actor.params, target_actor.params, hp.tau);
                loss_sum += loss;
                ++updates;
            }

            features = sr.features;
            done = sr.terminal;
        }

        EpisodeLog log;
        log.episode = ep;
        log.mean_reward = steps > 0 ? reward_sum / static_cast<double>(steps) : 0.0;
        log.mean_critic_loss = updates > 0 ? loss_sum / static_cast<double>(updates) : 0.0;

        if (hp.eval_every > 0 && (ep + 1) % hp.eval_every == 0 && hp.eval_episodes > 0) {
            const double score = evaluate_actor(env, actor, hp.eval_episodes, eval_rng.child(ep));
            log.eval_score = score;
            if (!result.best_eval_score || score < *result.best_eval_score) {
                result.best_eval_score = score;
                best_actor = actor;
            }
        }
        result.log.push_back(log);
    }

    result.actor = best_actor ? std::move(*best_actor) : std::move(actor);
    return result;
}

} // namespace zorl::ddpg
