// Acceptance run: one line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "cli_run.hpp"
#include "fixtures.hpp"
#include "hdawf/augment.hpp"
#include "hdawf/eval.hpp"
#include "hdawf/experiment.hpp"
#include "oracles.hpp"

using namespace hdawf;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;
std::vector<int> only;  // criteria named on the command line; empty runs all

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit_s) {
        o.pass = false;
        o.detail += " [over the " + std::to_string(static_cast<int>(limit_s)) + " s limit]";
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d %-36s %s  %s (%.1f s)\n", id, title, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Outcome matrix_oracle() {
    std::size_t cases = 0, bad = 0;
    Rng rng = make_rng(1);
    for (std::size_t n = 2; n <= 16; ++n) {
        std::vector<double> x(n);
        for (auto& v : x) v = 2 * uniform_real(rng) - 1;
        for (std::size_t s = 0; s <= n; ++s) {
            for (bool fwd : {true, false}) {
                const auto got = rotate(x, RotationParams{s, fwd ? RotationDir::forward : RotationDir::backward});
                bad += got != oracle::rotate_by_matrix(x, s, fwd);
                ++cases;
            }
        }
        for (std::size_t start = 0; start < n; ++start) {
            for (std::size_t len = 0; start + len <= n; ++len) {
                bad += mask(x, MaskParams{start, len}) != oracle::mask_by_matrix(x, start, len);
                ++cases;
            }
        }
    }
    return {bad == 0, fmt("%.0f cases, %.0f mismatches", static_cast<double>(cases), static_cast<double>(bad))};
}

Outcome distributions() {
    const int draws = 100000;
    Rng rng = make_rng(2);
    std::vector<std::size_t> steps(20, 0), dirs(2, 0), starts(1000 - 36 + 1, 0);
    for (int i = 0; i < draws; ++i) {
        const auto r = sample_rotation(20, rng);
        ++steps[r.steps - 1];
        ++dirs[r.dir == RotationDir::forward ? 0 : 1];
        ++starts[sample_mask(36, 1000, rng).start];
    }
    const double p_step = oracle::chi_square_uniform_p(steps);
    const double p_dir = oracle::chi_square_uniform_p(dirs);
    const double p_start = oracle::chi_square_uniform_p(starts);
    bool ok = p_step > 0.01 && p_dir > 0.01 && p_start > 0.01;
    std::string detail = fmt("chi-square p: steps %.3f dir %.3f start %.3f;", p_step, p_dir, p_start);

    for (double alpha : {0.1, 0.5, 1.0, 2.0}) {
        double sum = 0.0, tails = 0.0, central = 0.0, ks = 0.0;
        std::vector<double> v(draws);
        for (auto& l : v) {
            l = sample_lambda(alpha, rng).lambda;
            sum += l;
            tails += (l <= 0.1 || l >= 0.9) ? 1 : 0;
            central += (l >= 0.45 && l <= 0.55) ? 1 : 0;
        }
        std::sort(v.begin(), v.end());
        ks = oracle::ks_distance(v, [&](double x) { return oracle::incomplete_beta(alpha, alpha, x); });
        const double mean = sum / draws;
        const double want_tails = 2 * oracle::incomplete_beta(alpha, alpha, 0.1);
        const double want_central = oracle::incomplete_beta(alpha, alpha, 0.55) - oracle::incomplete_beta(alpha, alpha, 0.45);
        ok = ok && std::abs(mean - 0.5) <= 0.01 && ks < 1.628 / std::sqrt(static_cast<double>(draws)) &&
             std::abs(tails / draws - want_tails) < 0.01 && std::abs(central / draws - want_central) < 0.01;
        if (alpha == 0.1) ok = ok && tails > central;
        detail += fmt(" a=%.1f mean %.4f ks %.4f", alpha, mean, ks);
    }
    return {ok, detail};
}

Outcome gradients() {
    const auto g = fixture::gradient_check(27);
    return {g.probed >= 100 && g.worst < 1e-3,
            fmt("worst relative error %.2e over %.0f coordinates", g.worst, static_cast<double>(g.probed))};
}

Outcome overfit() {
    const auto t = fixture::overfit_task(1);
    const auto r = train(t.model, t.train, t.data, t.data, nullptr);
    const double acc = accuracy(r.best, t.data, false);
    return {acc >= 0.99 && r.history.size() <= 50, fmt("train accuracy %.3f after %.0f epochs", acc,
                                                         static_cast<double>(r.history.size()))};
}

Outcome hda_benefit() {
    const auto data = fixture::hda_dataset();
    auto progress = [](const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); };
    const auto base = run_experiment(fixture::hda_config(false), data, progress);
    const auto hda = run_experiment(fixture::hda_config(true), data, progress);
    const double a = base.aggregate.at("accuracy").mean, b = hda.aggregate.at("accuracy").mean;
    return {b - a >= 0.10, fmt("no-aug %.3f, HDA %.3f, delta %+.1f points", a, b, 100 * (b - a))};
}

Outcome tpe() {
    int hits = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) hits += std::abs(fixture::quadratic_best(s) - 7.0) <= 1.0 ? 1 : 0;
    const auto spaces = fixture::interacting_spaces();
    double seq = 0.0, ind = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        seq += fixture::interacting(
            optimize_sequential(random_order(spaces, s), spaces, fixture::interacting, TpeConfig{}, s).params, 0);
        ind += fixture::interacting(optimize_independent(spaces, fixture::interacting, TpeConfig{}, s).params, 0);
    }
    return {hits >= 18 && seq >= ind,
            fmt("quadratic within one step %.0f/20; interacting sequential %.3f vs independent %.3f", hits, seq / 20,
                ind / 20)};
}

Outcome open_world() {
    const auto t = fixture::six_traces();
    const auto c = confusion(t.preds, t.labels, 3, 0.5);
    const bool exact = c.tp == 3 && c.fp == 2 && c.fn == 0 && c.tn == 1 && c.precision() == 0.6 && c.recall() == 1.0;
    int monotone = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) monotone += fixture::recall_monotone_on_random_model(s) ? 1 : 0;
    return {exact && monotone == 10,
            fmt("TP=%.0f FP=%.0f FN=%.0f", c.tp, c.fp, c.fn) +
                fmt(" TN=%.0f precision %.3f recall %.3f;", c.tn, c.precision(), c.recall()) +
                fmt(" recall monotone on %.0f/10 models", monotone)};
}

Outcome determinism() {
    const auto a = cli::pipeline("accept_a", 11);
    const auto b = cli::pipeline("accept_b", 11);
    if (a.empty() || b.empty()) return {false, "pipeline step failed"};
    return {a == b, fmt("report JSON %.0f bytes, ", static_cast<double>(a.size())) + (a == b ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    criterion(1, "matrix-oracle equivalence", 10, matrix_oracle);
    criterion(2, "sampler distributions", 30, distributions);
    criterion(3, "gradient check", 60, gradients);
    criterion(4, "overfit sanity", 60, overfit);
    criterion(5, "HDA benefit over no augmentation", 900, hda_benefit);
    criterion(6, "TPE competence", 120, tpe);
    criterion(7, "open-world metrics", 10, open_world);
    criterion(8, "end-to-end determinism", 300, determinism);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
