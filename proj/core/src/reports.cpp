#include "zorl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace zorl::harness {

namespace {

std::string fmt(double v, const char* spec = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

struct PlotRange {
    double lo = 0.0, hi = 1.0;
    void include(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (hi <= lo) {
            lo -= 1.0;
            hi += 1.0;
        } else {
            const double m = 0.05 * (hi - lo);
            lo -= m;
            hi += m;
        }
    }
};

std::string render_svg(const ExperimentResult& result, bool variance) {
    constexpr double width = 960, height = 600;
    constexpr double ml = 80, mr = 200, mt = 50, mb = 60;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const std::size_t steps = result.steps;

    PlotRange range;
    range.lo = std::numeric_limits<double>::infinity();
    range.hi = -std::numeric_limits<double>::infinity();
    for (const auto& [algo, series] : result.series) {
        const auto& mean = variance ? series.variance_mean : series.loss_mean;
        const auto& stdv = variance ? std::vector<double>(mean.size(), 0.0) : series.loss_std;
        for (std::size_t k = 0; k < mean.size(); ++k) {
            range.include(mean[k] - (k < stdv.size() ? stdv[k] : 0.0));
            range.include(mean[k] + (k < stdv.size() ? stdv[k] : 0.0));
        }
    }
    if (!std::isfinite(range.lo) || !std::isfinite(range.hi)) {
        range.lo = 0.0;
        range.hi = 1.0;
    }
    range.pad();

    auto x_of = [&](double k) { return ml + pw * (steps <= 1 ? 0.0 : k / static_cast<double>(steps - 1)); };
    auto y_of = [&](double v) { return mt + ph * (1.0 - (v - range.lo) / (range.hi - range.lo)); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    const std::string title = result.base_name + (variance ? " estimator variance" : " loss");
    svg << "<text x=\"" << ml << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\">" << title
        << "</text>\n";

    // Axes and ticks.
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double frac = static_cast<double>(i) / 4.0;
        const double xv = frac * static_cast<double>(steps > 0 ? steps - 1 : 0);
        const double x = x_of(xv);
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt(x) << "\" y2=\""
            << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << mt + ph + 22
            << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << fmt(xv, "%.4g")
            << "</text>\n";
        const double yv = range.lo + frac * (range.hi - range.lo);
        const double y = y_of(yv);
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt(y) << "\" x2=\"" << ml << "\" y2=\"" << fmt(y)
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << ml - 10 << "\" y=\"" << fmt(y + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" << fmt(yv, "%.4g")
            << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 14
        << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">iteration</text>\n";

    std::size_t color = 0;
    for (const auto& [algo, series] : result.series) {
        const char* stroke = kPalette[color % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const auto& mean = variance ? series.variance_mean : series.loss_mean;

        if (!variance && !series.loss_std.empty()) {
            // +-1 std band as a closed polygon.
            std::ostringstream pts;
            for (std::size_t k = 0; k < mean.size(); ++k)
                pts << fmt(x_of(static_cast<double>(k))) << "," << fmt(y_of(mean[k] + series.loss_std[k])) << " ";
            for (std::size_t k = mean.size(); k-- > 0;)
                pts << fmt(x_of(static_cast<double>(k))) << "," << fmt(y_of(mean[k] - series.loss_std[k])) << " ";
            svg << "<polygon points=\"" << pts.str() << "\" fill=\"" << stroke
                << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        }

        std::ostringstream pts;
        for (std::size_t k = 0; k < mean.size(); ++k)
            pts << fmt(x_of(static_cast<double>(k))) << "," << fmt(y_of(mean[k])) << " ";
        svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << stroke
            << "\" stroke-width=\"1.8\"/>\n";

        const double ly = mt + 20 + 22 * static_cast<double>(color);
        svg << "<line x1=\"" << ml + pw + 14 << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << ml + pw + 44
            << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << stroke << "\" stroke-width=\"3\"/>\n";
        svg << "<text x=\"" << ml + pw + 50 << "\" y=\"" << fmt(ly)
            << "\" font-family=\"sans-serif\" font-size=\"13\">" << series.algo << "</text>\n";
        ++color;
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw DataError("failed writing " + path.string());
}

} // namespace

std::string render_loss_svg(const ExperimentResult& result) { return render_svg(result, false); }
std::string render_variance_svg(const ExperimentResult& result) { return render_svg(result, true); }

void emit_reports(const ExperimentResult& result, const std::filesystem::path& out_dir) {
    if (result.series.empty()) throw std::invalid_argument("emit_reports: empty series");
    std::filesystem::create_directories(out_dir);

    bool any_probes = false;
    for (const auto& [algo, series] : result.series) {
        const std::string base = result.base_name + "_" + series.algo;

        // Aggregate CSV. The comment line records the aggregation conventions
        // and the tuned hyperparameters.
        std::ostringstream csv;
        csv << "# " << base << "; std=population; trials=" << series.raw_loss.size()
            << "; delta=" << fmt(series.chosen_delta) << "; eta=" << fmt(series.chosen_eta);
        if (series.chosen_beta1 > 0.0) {
            csv << "; beta1=" << fmt(series.chosen_beta1) << "; beta2=" << fmt(series.chosen_beta2);
        }
        csv << "; variance_mean=0 when probing is off\n";
        csv << "iteration,loss_mean,loss_std,grad_norm_mean,variance_mean,queries\n";
        for (std::size_t k = 0; k < series.loss_mean.size(); ++k) {
            csv << k << ',' << fmt(series.loss_mean[k]) << ',' << fmt(series.loss_std[k]) << ','
                << fmt(series.grad_norm_mean[k]) << ',' << fmt(series.variance_mean[k]) << ','
                << series.queries[k] << '\n';
        }
        write_file(out_dir / (base + ".csv"), csv.str());

        // Raw per-trial CSV (full precision, feeds the `report` subcommand).
        std::ostringstream raw;
        raw << "trial,iteration,loss,grad_norm,variance,queries\n";
        for (std::size_t t = 0; t < series.raw_loss.size(); ++t) {
            for (std::size_t k = 0; k < series.raw_loss[t].size(); ++k) {
                raw << t << ',' << fmt(series.raw_loss[t][k], "%.17g") << ','
                    << fmt(series.raw_grad_norm[t][k], "%.17g") << ','
                    << fmt(series.raw_variance[t][k], "%.17g") << ',' << series.queries[k] << '\n';
            }
        }
        write_file(out_dir / (base + ".raw.csv"), raw.str());
        any_probes = any_probes || series.has_probes;
    }

    write_file(out_dir / (result.base_name + "_loss.svg"), render_loss_svg(result));
    if (any_probes) {
        write_file(out_dir / (result.base_name + "_variance.svg"), render_variance_svg(result));
    }
}

std::vector<ExperimentResult> load_raw_results(const std::filesystem::path& dir) {
    // Group <base>_<algo>.raw.csv files by base.
    static const std::vector<std::string> kAlgos = {"zo-gs", "guided-es", "zo-rl"};
    std::map<std::string, std::vector<std::pair<Algo, std::filesystem::path>>> groups;

    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = ".raw.csv";
        if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix) continue;
        const std::string stem = name.substr(0, name.size() - suffix.size());
        for (const std::string& algo : kAlgos) {
            const std::string tail = "_" + algo;
            if (stem.size() > tail.size() && stem.substr(stem.size() - tail.size()) == tail) {
                groups[stem.substr(0, stem.size() - tail.size())].emplace_back(parse_algo(algo), entry.path());
                break;
            }
        }
    }
    if (groups.empty()) throw DataError("no raw trial CSVs found in " + dir.string());

    std::vector<ExperimentResult> results;
    for (auto& [base, files] : groups) {
        std::sort(files.begin(), files.end(),
                  [](const auto& a, const auto& b) { return static_cast<int>(a.first) < static_cast<int>(b.first); });
        ExperimentResult result;
        result.base_name = base;
        for (const auto& [algo, path] : files) {
            std::ifstream in(path);
            if (!in) throw DataError("cannot open " + path.string());
            TrialSeries series;
            series.algo = algo_name(algo);
            std::string line;
            std::getline(in, line); // header
            std::size_t current_trial = static_cast<std::size_t>(-1);
            std::vector<std::uint64_t> queries;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::istringstream ls(line);
                std::string field;
                auto next_field = [&]() {
                    if (!std::getline(ls, field, ',')) throw DataError(path.string() + ": short row");
                    return field;
                };
                const std::size_t trial = std::stoul(next_field());
                next_field(); // iteration (implied by position)
                const double loss = std::stod(next_field());
                const double gnorm = std::stod(next_field());
                const double var = std::stod(next_field());
                const std::uint64_t q = std::stoull(next_field());
                if (trial != current_trial) {
                    series.raw_loss.emplace_back();
                    series.raw_grad_norm.emplace_back();
                    series.raw_variance.emplace_back();
                    current_trial = trial;
                }
                series.raw_loss.back().push_back(loss);
                series.raw_grad_norm.back().push_back(gnorm);
                series.raw_variance.back().push_back(var);
                if (series.raw_loss.size() == 1) queries.push_back(q);
            }
            if (series.raw_loss.empty()) throw DataError(path.string() + ": no rows");
            aggregate_series(series.raw_loss, series.loss_mean, series.loss_std);
            std::vector<double> unused;
            aggregate_series(series.raw_grad_norm, series.grad_norm_mean, unused);
            aggregate_series(series.raw_variance, series.variance_mean, unused);
            series.queries = std::move(queries);
            series.has_probes = std::any_of(series.variance_mean.begin(), series.variance_mean.end(),
                                            [](double v) { return v != 0.0; });
            result.steps = std::max(result.steps, series.loss_mean.size());
            result.series.emplace_back(algo, std::move(series));
        }
        results.push_back(std::move(result));
    }
    return results;
}

} // namespace zorl::harness
