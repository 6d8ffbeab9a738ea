#include "zorl/objectives.hpp"

#include "zorl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace zorl {

namespace {
constexpr std::size_t kMaxLibsvmDim = 100000;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
} // namespace

Objective::Objective(std::string name, std::size_t dim, EvalFn eval, GradFn analytic_gradient)
    : name_(std::move(name)),
      dim_(dim),
      eval_(std::move(eval)),
      grad_(std::move(analytic_gradient)),
      counter_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
    if (dim_ == 0) throw std::invalid_argument("Objective: dimension must be positive");
    if (!eval_) throw std::invalid_argument("Objective: evaluation function required");
}

double Objective::evaluate(const Vector& x) const {
    if (x.size() != dim_)
        throw std::invalid_argument("Objective::evaluate: dimension mismatch for " + name_);
    counter_->fetch_add(1, std::memory_order_relaxed);
    return eval_(x);
}

Vector Objective::analytic_gradient(const Vector& x) const {
    if (!grad_) throw std::invalid_argument("Objective::analytic_gradient: not available for " + name_);
    if (x.size() != dim_) throw std::invalid_argument("Objective::analytic_gradient: dimension mismatch");
    return grad_(x);
}

// ---------------------------------------------------------------------------
// LIBSVM

Dataset load_libsvm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());

    struct RawSample {
        double label;
        std::map<std::size_t, double> entries; // 1-based index -> value
    };
    std::vector<RawSample> raw;
    std::size_t max_index = 0;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) continue; // blank line

        const std::string where = path.filename().string() + ":" + std::to_string(line_no);
        RawSample sample;
        try {
            std::size_t used = 0;
            sample.label = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw DataError(where + ": non-numeric label '" + token + "'");
        }

        while (ls >> token) {
            const auto colon = token.find(':');
            if (colon == std::string::npos)
                throw DataError(where + ": malformed feature '" + token + "' (expected idx:val)");
            std::size_t index = 0;
            double value = 0.0;
            try {
                std::size_t used = 0;
                const long long raw_index = std::stoll(token.substr(0, colon), &used);
                if (used != colon || raw_index <= 0) throw std::invalid_argument(token);
                index = static_cast<std::size_t>(raw_index);
                const std::string val_str = token.substr(colon + 1);
                value = std::stod(val_str, &used);
                if (used != val_str.size() || !std::isfinite(value)) throw std::invalid_argument(token);
            } catch (const std::exception&) {
                throw DataError(where + ": non-numeric field in '" + token + "'");
            }
            if (index > kMaxLibsvmDim)
                throw DataError(where + ": feature index " + std::to_string(index) + " exceeds dense cap " +
                                std::to_string(kMaxLibsvmDim));
            if (!sample.entries.emplace(index, value).second)
                throw DataError(where + ": duplicate feature index " + std::to_string(index));
            max_index = std::max(max_index, index);
        }
        raw.push_back(std::move(sample));
    }
    if (raw.empty()) throw DataError(path.string() + ": no samples");

    // Reduce labels to {-1,+1}.
    std::set<double> distinct;
    for (const auto& s : raw) distinct.insert(s.label);
    const bool canonical = std::all_of(distinct.begin(), distinct.end(),
                                       [](double v) { return v == -1.0 || v == 1.0; });
    double negative_value = -1.0;
    if (!canonical) {
        if (distinct.size() != 2) {
            throw DataError(path.string() + ": labels not reducible to two classes (" +
                            std::to_string(distinct.size()) + " distinct values)");
        }
        negative_value = *distinct.begin();
    }

    Dataset data;
    data.name = path.stem().string();
    data.dim = std::max<std::size_t>(max_index, 1);
    for (const auto& s : raw) {
        Vector x(data.dim);
        for (const auto& [idx, val] : s.entries) x[idx - 1] = val;
        data.features.push_back(std::move(x));
        data.labels.push_back(canonical ? static_cast<int>(s.label) : (s.label == negative_value ? -1 : 1));
    }
    return data;
}

void save_libsvm(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << (data.labels[i] > 0 ? "+1" : "-1");
        const Vector& x = data.features[i];
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (x[j] == 0.0) continue;
            std::snprintf(buf, sizeof(buf), " %zu:%.17g", j + 1, x[j]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

double least_squares_loss(const Vector& w, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("least_squares_loss: empty dataset");
    if (w.size() != data.dim) throw std::invalid_argument("least_squares_loss: dimension mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = static_cast<double>(data.labels[i]) - sigmoid(dot(w, data.features[i]));
        total += r * r;
    }
    return total / static_cast<double>(data.size());
}

Objective make_least_squares_objective(std::shared_ptr<const Dataset> data) {
    if (!data || data->size() == 0) throw std::invalid_argument("make_least_squares_objective: empty dataset");
    const std::size_t d = data->dim;
    auto eval = [data](const Vector& w) { return least_squares_loss(w, *data); };
    auto grad = [data](const Vector& w) {
        Vector g(w.size());
        for (std::size_t i = 0; i < data->size(); ++i) {
            const double s = sigmoid(dot(w, data->features[i]));
            const double coeff = -2.0 * (static_cast<double>(data->labels[i]) - s) * s * (1.0 - s) /
                                 static_cast<double>(data->size());
            for (std::size_t j = 0; j < w.size(); ++j) g[j] += coeff * data->features[i][j];
        }
        return g;
    };
    return Objective("least-squares-" + data->name, d, std::move(eval), std::move(grad));
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_u32_be(std::ifstream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(what + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

ImageSet load_idx_images(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open " + images_path.string());
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open " + labels_path.string());

    const std::string img_name = images_path.filename().string();
    const std::string lab_name = labels_path.filename().string();

    if (read_u32_be(img, img_name) != 0x00000803u) throw DataError(img_name + ": bad IDX image magic");
    const std::uint32_t n_images = read_u32_be(img, img_name);
    const std::uint32_t rows = read_u32_be(img, img_name);
    const std::uint32_t cols = read_u32_be(img, img_name);

    if (read_u32_be(lab, lab_name) != 0x00000801u) throw DataError(lab_name + ": bad IDX label magic");
    const std::uint32_t n_labels = read_u32_be(lab, lab_name);
    if (n_images != n_labels)
        throw DataError("image/label count mismatch (" + std::to_string(n_images) + " vs " +
                        std::to_string(n_labels) + ")");

    ImageSet set;
    set.rows = rows;
    set.cols = cols;
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
            throw DataError(img_name + ": truncated image payload at image " + std::to_string(i));
        Vector v(pixels);
        for (std::size_t p = 0; p < pixels; ++p) v[p] = static_cast<double>(buf[p]) / 255.0;
        set.images.push_back(std::move(v));
    }
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        char c;
        if (!lab.read(&c, 1)) throw DataError(lab_name + ": truncated label payload at label " + std::to_string(i));
        set.labels.push_back(static_cast<unsigned char>(c));
    }
    return set;
}

void save_idx_images(const ImageSet& set, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open " + images_path.string() + " for writing");
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open " + labels_path.string() + " for writing");

    write_u32_be(img, 0x00000803u);
    write_u32_be(img, static_cast<std::uint32_t>(set.size()));
    write_u32_be(img, static_cast<std::uint32_t>(set.rows));
    write_u32_be(img, static_cast<std::uint32_t>(set.cols));
    for (const Vector& v : set.images) {
        for (double p : v) {
            const double clamped = std::clamp(p, 0.0, 1.0);
            img.put(static_cast<char>(std::lround(clamped * 255.0)));
        }
    }

    write_u32_be(lab, 0x00000801u);
    write_u32_be(lab, static_cast<std::uint32_t>(set.labels.size()));
    for (int l : set.labels) lab.put(static_cast<char>(l));
    if (!img || !lab) throw DataError("failed writing IDX files");
}

std::size_t ImageSet::num_classes() const {
    int max_label = -1;
    for (int l : labels) max_label = std::max(max_label, l);
    return static_cast<std::size_t>(max_label + 1);
}

// ---------------------------------------------------------------------------
// Victim classifier

VictimClassifier::VictimClassifier(nn::Network net) : net_(std::move(net)) {
    if (net_.spec.output_size() < 2) throw std::invalid_argument("VictimClassifier: needs at least 2 classes");
}

std::vector<double> VictimClassifier::scores(const Vector& x) const {
    if (x.size() != input_dim()) throw std::invalid_argument("VictimClassifier::scores: dimension mismatch");
    return net_.eval(x).values();
}

int VictimClassifier::predict(const Vector& x) const {
    const auto s = scores(x);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

void VictimClassifier::save(const std::filesystem::path& path) const {
    nn::save_network(path, net_.spec, net_.params);
}

VictimClassifier VictimClassifier::load(const std::filesystem::path& path) {
    auto [spec, params] = nn::load_network(path);
    return VictimClassifier(nn::Network{std::move(spec), std::move(params)});
}

double classification_accuracy(const VictimClassifier& victim, const ImageSet& data,
                               const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        if (victim.predict(data.images[i]) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

VictimClassifier train_victim(const ImageSet& data, const VictimTrainOptions& opts, RngStream& rng) {
    if (data.size() == 0) throw DataError("train_victim: empty image set");
    const std::size_t k = data.num_classes();
    {
        std::set<int> present(data.labels.begin(), data.labels.end());
        if (present.size() < 2) throw DataError("train_victim: fewer than 2 classes present");
    }
    const std::size_t d = data.pixel_count();

    nn::NetworkSpec spec;
    spec.input = nn::DataShape::flat_width(d);
    spec.layers = {nn::DenseSpec{d, opts.hidden}, nn::ActivationSpec{nn::Act::relu},
                   nn::DenseSpec{opts.hidden, k}};
    RngStream init_rng = rng.child("victim-init");
    nn::NetworkParameters params = nn::init_parameters(spec, init_rng);
    nn::AdamState adam = nn::make_adam_state(params);

    // Deterministic shuffle, then holdout split from the tail.
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng = rng.child("victim-shuffle");
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    }
    const std::size_t holdout = std::min(data.size() - 1,
                                         static_cast<std::size_t>(std::llround(opts.holdout_fraction *
                                                                               static_cast<double>(data.size()))));
    const std::size_t train_n = data.size() - holdout;
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
    std::vector<std::size_t> holdout_idx(order.begin() + static_cast<std::ptrdiff_t>(train_n), order.end());
    if (holdout_idx.empty()) holdout_idx = train_idx; // tiny sets: validate in-sample

    RngStream batch_rng = rng.child("victim-batches");
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = train_idx.size(); i > 1; --i) {
            std::swap(train_idx[i - 1], train_idx[batch_rng.next_below(i)]);
        }
        for (std::size_t start = 0; start < train_idx.size(); start += opts.batch_size) {
            const std::size_t n = std::min(opts.batch_size, train_idx.size() - start);
            nn::Batch batch = nn::Batch::zeros(n, spec.input);
            for (std::size_t b = 0; b < n; ++b) {
                const Vector& x = data.images[train_idx[start + b]];
                std::copy(x.begin(), x.end(), batch.data.begin() + static_cast<std::ptrdiff_t>(b * d));
            }
            nn::ForwardTape tape;
            nn::Batch logits = nn::forward_train(spec, params, batch, tape);

            // Softmax cross-entropy gradient: (softmax - onehot) / n.
            nn::Batch upstream = nn::Batch::zeros(n, nn::DataShape::flat_width(k));
            double loss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                double max_logit = logits.at(b, 0);
                for (std::size_t j = 1; j < k; ++j) max_logit = std::max(max_logit, logits.at(b, j));
                double denom = 0.0;
                for (std::size_t j = 0; j < k; ++j) denom += std::exp(logits.at(b, j) - max_logit);
                const int y = data.labels[train_idx[start + b]];
                loss -= (logits.at(b, static_cast<std::size_t>(y)) - max_logit - std::log(denom)) /
                        static_cast<double>(n);
                for (std::size_t j = 0; j < k; ++j) {
                    const double p = std::exp(logits.at(b, j) - max_logit) / denom;
                    upstream.at(b, j) = (p - (static_cast<int>(j) == y ? 1.0 : 0.0)) / static_cast<double>(n);
                }
            }
            if (!std::isfinite(loss)) throw RunError("train_victim: training diverged (loss not finite)");

            nn::Gradients grads = nn::backward(spec, params, tape, upstream);
            nn::adam_update_net(params, grads, adam, opts.learning_rate);
        }
    }

    VictimClassifier victim(nn::Network{spec, std::move(params)});
    const double acc = classification_accuracy(victim, data, holdout_idx);
    if (acc < opts.accuracy_floor) {
        throw RunError("train_victim: held-out accuracy " + std::to_string(acc) + " below floor " +
                       std::to_string(opts.accuracy_floor));
    }
    return victim;
}

// ---------------------------------------------------------------------------
// Attack loss

double attack_loss(const Vector& x, const VictimClassifier& victim, const AttackInstance& inst) {
    if (inst.true_label >= victim.num_classes())
        throw std::invalid_argument("attack_loss: true label out of range");
    if (x.size() != inst.x0.size()) throw std::invalid_argument("attack_loss: dimension mismatch");
    if (inst.p != 1 && inst.p != 2) throw std::invalid_argument("attack_loss: norm order must be 1 or 2");

    const auto f = victim.scores(x);
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < f.size(); ++j) {
        if (j != inst.true_label) best_other = std::max(best_other, f[j]);
    }
    const double hinge = std::max(f[inst.true_label] - best_other, 0.0);
    const Norms n = norms(x - inst.x0);
    return hinge + inst.c * (inst.p == 1 ? n.l1 : n.l2);
}

Objective make_attack_objective(std::shared_ptr<const VictimClassifier> victim, AttackInstance inst) {
    if (!victim) throw std::invalid_argument("make_attack_objective: null victim");
    if (inst.c <= 0) throw std::invalid_argument("make_attack_objective: c must be positive");
    for (double v : inst.x0) {
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("make_attack_objective: x0 not in [0,1]^d");
    }
    if (inst.true_label >= victim->num_classes())
        throw std::invalid_argument("make_attack_objective: true label out of range");
    const std::size_t d = inst.x0.size();
    auto eval = [victim, inst](const Vector& x) { return attack_loss(x, *victim, inst); };
    return Objective("attack", d, std::move(eval));
}

// ---------------------------------------------------------------------------
// Quadratics

Objective quadratic_objective(Vector spectrum, Vector x_star) {
    if (spectrum.size() != x_star.size()) throw std::invalid_argument("quadratic_objective: dimension mismatch");
    for (double s : spectrum) {
        if (s <= 0.0) throw std::invalid_argument("quadratic_objective: spectrum must be positive");
    }
    const std::size_t d = spectrum.size();
    auto eval = [spectrum, x_star](const Vector& x) {
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double dev = x[i] - x_star[i];
            total += spectrum[i] * dev * dev;
        }
        return 0.5 * total;
    };
    auto grad = [spectrum, x_star](const Vector& x) {
        Vector g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = spectrum[i] * (x[i] - x_star[i]);
        return g;
    };
    return Objective("quadratic-d" + std::to_string(d), d, std::move(eval), std::move(grad));
}

Objective quadratic_objective(Matrix a, Vector x_star) {
    if (a.rows() != a.cols() || a.rows() != x_star.size())
        throw std::invalid_argument("quadratic_objective: shape mismatch");
    const std::size_t d = x_star.size();
    auto eval = [a, x_star](const Vector& x) {
        const Vector dev = x - x_star;
        return 0.5 * dot(dev, a.matvec(dev));
    };
    auto grad = [a, x_star](const Vector& x) { return a.matvec(x - x_star); };
    return Objective("quadratic-d" + std::to_string(d), d, std::move(eval), std::move(grad));
}

Objective synthetic_quadratic(std::size_t d, RngStream& rng) {
    if (d == 0) throw std::invalid_argument("synthetic_quadratic: dimension must be positive");
    Vector spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 0.1 + 9.9 * rng.next_uniform();
    Vector x_star = gaussian_vector(rng, d);
    return quadratic_objective(std::move(spectrum), std::move(x_star));
}

Matrix random_spd_matrix(std::size_t d, RngStream& rng) {
    if (d == 0) throw std::invalid_argument("random_spd_matrix: dimension must be positive");
    // Orthogonal basis via Gram-Schmidt on random Gaussian columns.
    Matrix q(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        Vector v = gaussian_vector(rng, d);
        for (std::size_t prev = 0; prev < j; ++prev) {
            const Vector u = q.column(prev);
            v -= dot(v, u) * u;
        }
        const double len = norms(v).l2;
        if (len < 1e-12) {
            v = Vector::unit(d, j); // vanishing residual: fall back to a basis vector
        } else {
            v = (1.0 / len) * v;
        }
        q.set_column(j, v);
    }
    Vector spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 0.1 + 9.9 * rng.next_uniform();

    Matrix a(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += q(r, i) * spectrum[i] * q(c, i);
            a(r, c) = s;
        }
    }
    return a;
}

} // namespace zorl
