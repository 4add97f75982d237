#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdawf/augment.hpp"
#include "oracles.hpp"

using namespace hdawf;

namespace {

std::vector<double> random_signal(Rng& rng, std::size_t n) {
    std::vector<double> x(n);
    for (auto& v : x) v = static_cast<double>(uniform_int(rng, -1, 1));
    return x;
}

Sample sample_of(std::vector<double> x, std::size_t cls, std::size_t dim) {
    return {std::move(x), one_hot(cls, dim)};
}

}  // namespace

TEST_CASE("forward rotation by one moves the last cell to the front") {
    const std::vector<double> x{1, -1, -1, 1};
    CHECK(rotate(x, {1, RotationDir::forward}) == std::vector<double>{1, 1, -1, -1});
    CHECK(rotate(x, {1, RotationDir::backward}) == std::vector<double>{-1, -1, 1, 1});
}

TEST_CASE("rotation identities") {
    Rng rng = make_rng(1);
    for (int iter = 0; iter < 50; ++iter) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 40));
        const auto x = random_signal(rng, n);
        const auto s = static_cast<std::size_t>(uniform_int(rng, 1, 60));
        CHECK(rotate(x, {n, RotationDir::forward}) == x);
        CHECK(rotate(rotate(x, {s, RotationDir::forward}), {s, RotationDir::backward}) == x);
        auto a = rotate(x, {s, RotationDir::forward});
        auto b = x;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
}

TEST_CASE("rotation and masking equal their matrix forms") {
    Rng rng = make_rng(2);
    for (std::size_t n = 2; n <= 16; ++n) {
        const auto x = random_signal(rng, n);
        for (std::size_t s = 0; s <= n; ++s) {
            CHECK(rotate(x, {s, RotationDir::forward}) == oracle::rotate_by_matrix(x, s, true));
            CHECK(rotate(x, {s, RotationDir::backward}) == oracle::rotate_by_matrix(x, s, false));
        }
        for (std::size_t len = 0; len <= n; ++len) {
            for (std::size_t start = 0; start + len <= n; ++start) {
                CHECK(mask(x, {start, len}) == oracle::mask_by_matrix(x, start, len));
            }
        }
    }
}

TEST_CASE("masking zeroes exactly the window") {
    const std::vector<double> x{1, -1, 1, -1, 1};
    CHECK(mask(x, {1, 2}) == std::vector<double>{1, 0, 0, -1, 1});
    CHECK(mask(x, {3, 0}) == x);
    CHECK_THROWS_AS(mask(x, {4, 2}), AugError);
    const Trace t({1, 1, -1});
    CHECK(mask(t, {0, 1}).cells == std::vector<Cell>{0, 1, -1});
    CHECK(rotate(t, {1, RotationDir::forward}).cells == std::vector<Cell>{-1, 1, 1});
}

TEST_CASE("masking never adds nonzero cells") {
    Rng rng = make_rng(3);
    for (int iter = 0; iter < 100; ++iter) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 30));
        const auto x = random_signal(rng, n);
        const auto p = sample_mask(static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n))), n, rng);
        const auto y = mask(x, p);
        auto nz = [](const std::vector<double>& v) { return std::count_if(v.begin(), v.end(), [](double a) { return a != 0; }); };
        CHECK(nz(y) <= nz(x));
    }
}

TEST_CASE("mixing examples") {
    const SoftLabel e0{1, 0}, e1{0, 1};
    auto m = mix(std::vector<double>{1, 1}, e0, std::vector<double>{-1, 1}, e1, {0.5});
    CHECK(m.x == std::vector<double>{0, 1});
    CHECK(m.y == SoftLabel{0.5, 0.5});
    m = mix(std::vector<double>{1, -1}, e0, std::vector<double>{-1, -1}, e1, {0.25});
    CHECK(m.x == std::vector<double>{-0.5, -1});
    CHECK(m.y == SoftLabel{0.25, 0.75});
    m = mix(std::vector<double>{1, -1}, e0, std::vector<double>{-1, 0}, e1, {1.0});
    CHECK(m.x == std::vector<double>{1, -1});
    CHECK(m.y == e0);
    CHECK_THROWS_AS(mix(std::vector<double>{1}, e0, std::vector<double>{1, 1}, e1, {0.5}), AugError);
    CHECK_THROWS_AS(mix(std::vector<double>{1}, e0, std::vector<double>{1}, SoftLabel{1, 0, 0}, {0.5}), AugError);
}

TEST_CASE("mixed values stay between their endpoints") {
    Rng rng = make_rng(4);
    for (int iter = 0; iter < 200; ++iter) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 20));
        const auto a = random_signal(rng, n);
        const auto b = random_signal(rng, n);
        const double lam = uniform_real(rng);
        const auto m = mix(a, one_hot(0, 3), b, one_hot(2, 3), {lam});
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(m.x[k] >= std::min(a[k], b[k]));
            CHECK(m.x[k] <= std::max(a[k], b[k]));
        }
        CHECK(std::accumulate(m.y.begin(), m.y.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rotation sampler support and determinism") {
    Rng rng = make_rng(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_rotation(1, rng).steps == 1);
    Rng a = make_rng(6), b = make_rng(6);
    for (int i = 0; i < 50; ++i) {
        const auto pa = sample_rotation(20, a);
        const auto pb = sample_rotation(20, b);
        CHECK(pa.steps == pb.steps);
        CHECK(pa.dir == pb.dir);
    }
    CHECK_THROWS_AS(sample_rotation(0, rng), AugError);
}

TEST_CASE("rotation steps and directions are uniform") {
    Rng rng = make_rng(7);
    std::vector<std::size_t> steps(20, 0), dirs(2, 0);
    for (int i = 0; i < 100000; ++i) {
        const auto p = sample_rotation(20, rng);
        REQUIRE(p.steps >= 1);
        REQUIRE(p.steps <= 20);
        ++steps[p.steps - 1];
        ++dirs[p.dir == RotationDir::forward ? 0 : 1];
    }
    CHECK(oracle::chi_square_uniform_p(steps) > 0.01);
    CHECK(oracle::chi_square_uniform_p(dirs) > 0.01);
    for (auto c : steps) CHECK(std::abs(static_cast<double>(c) - 5000.0) < 5.0 * std::sqrt(100000 * 0.05 * 0.95));
}

TEST_CASE("mask start is uniform") {
    Rng rng = make_rng(8);
    for (int i = 0; i < 100; ++i) {
        const auto p = sample_mask(99, 100, rng);
        CHECK(p.start <= 1);
        CHECK(p.length == 99);
    }
    std::vector<std::size_t> counts(51, 0);
    for (int i = 0; i < 100000; ++i) ++counts[sample_mask(50, 100, rng).start];
    CHECK(oracle::chi_square_uniform_p(counts) > 0.01);
    CHECK_THROWS_AS(sample_mask(101, 100, rng), AugError);
}

TEST_CASE("lambda passes a KS test against the Beta CDF") {
    for (double alpha : {0.1, 0.5, 1.0, 2.0}) {
        Rng rng = make_rng(9);
        const int n = 100000;
        std::vector<double> v(n);
        for (auto& x : v) x = sample_lambda(alpha, rng).lambda;
        std::sort(v.begin(), v.end());
        const double d = oracle::ks_distance(v, [&](double x) { return oracle::incomplete_beta(alpha, alpha, x); });
        CAPTURE(alpha);
        // Asymptotic Kolmogorov critical value at p = 0.01.
        CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("ks distance treats ties as one step") {
    auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
    CHECK(oracle::ks_distance({0.25, 0.75}, uniform) == doctest::Approx(0.25));
    CHECK(oracle::ks_distance({1.0, 1.0}, uniform) == doctest::Approx(1.0));
    CHECK(oracle::ks_distance({0.5, 1.0}, uniform) == doctest::Approx(0.5));
}

TEST_CASE("lambda follows Beta(alpha, alpha)") {
    for (double alpha : {0.1, 0.5, 1.0, 2.0}) {
        Rng rng = make_rng(10);
        const int n = 100000;
        double sum = 0.0;
        std::size_t tails = 0, central = 0, below = 0;
        for (int i = 0; i < n; ++i) {
            const double l = sample_lambda(alpha, rng).lambda;
            REQUIRE(l >= 0.0);
            REQUIRE(l <= 1.0);
            sum += l;
            tails += l <= 0.1 || l >= 0.9;
            central += l >= 0.45 && l <= 0.55;
            below += l <= 0.3;
        }
        CAPTURE(alpha);
        CHECK(std::abs(sum / n - 0.5) <= 0.01);
        const double want_tails = 2.0 * oracle::incomplete_beta(alpha, alpha, 0.1);
        const double want_central =
            oracle::incomplete_beta(alpha, alpha, 0.55) - oracle::incomplete_beta(alpha, alpha, 0.45);
        CHECK(std::abs(static_cast<double>(tails) / n - want_tails) < 0.01);
        CHECK(std::abs(static_cast<double>(central) / n - want_central) < 0.01);
        CHECK(std::abs(static_cast<double>(below) / n - oracle::incomplete_beta(alpha, alpha, 0.3)) < 0.01);
        if (alpha == 0.1) CHECK(tails > central);
    }
}

TEST_CASE("beta oracle sanity") {
    CHECK(oracle::incomplete_beta(1, 1, 0.3) == doctest::Approx(0.3));
    CHECK(oracle::incomplete_beta(2, 2, 0.5) == doctest::Approx(0.5));
    CHECK(oracle::incomplete_beta(2, 3, 0.4) == doctest::Approx(0.5248));
    CHECK(oracle::upper_gamma_q(1.0, 2.0) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("gamma and beta samplers reject bad shapes") {
    Rng rng = make_rng(1);
    CHECK_THROWS_AS(sample_gamma(0.0, rng), AugError);
    CHECK_THROWS_AS(sample_beta(1.0, -1.0, rng), AugError);
    CHECK_THROWS_AS(sample_lambda(0.0, rng), AugError);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) sum += sample_gamma(3.0, rng);
    CHECK(sum / 20000 == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("hda_batch with everything disabled is the identity") {
    Rng rng = make_rng(11);
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < 6; ++i) batch.push_back(sample_of(random_signal(rng, 40), i % 3, 3));
    const auto out = hda_batch(batch, AugConfig::none(), 99);
    REQUIRE(out.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(out[i].x == batch[i].x);
        CHECK(out[i].y == batch[i].y);
    }
}

TEST_CASE("intra-sample operators keep labels") {
    Rng rng = make_rng(12);
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < 8; ++i) batch.push_back(sample_of(random_signal(rng, 60), i % 4, 4));
    AugConfig cfg;
    cfg.r_max = 10;
    cfg.m_len = 5;
    cfg.enable_mixing = false;
    const auto out = hda_batch(batch, cfg, 5);
    for (std::size_t i = 0; i < batch.size(); ++i) CHECK(out[i].y == batch[i].y);
    bool changed = false;
    for (std::size_t i = 0; i < batch.size(); ++i) changed |= out[i].x != batch[i].x;
    CHECK(changed);
}

TEST_CASE("single-sample batch mixes with itself") {
    Rng rng = make_rng(13);
    std::vector<Sample> batch{sample_of(random_signal(rng, 30), 1, 3)};
    AugConfig cfg = AugConfig::none();
    cfg.enable_mixing = true;
    cfg.alpha = 0.4;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto out = hda_batch(batch, cfg, s);
        CHECK(out[0].x == batch[0].x);
        CHECK(out[0].y == batch[0].y);
    }
}

TEST_CASE("hda_batch invariants over random configurations") {
    Rng rng = make_rng(14);
    for (int iter = 0; iter < 60; ++iter) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 10, 50));
        const auto bs = static_cast<std::size_t>(uniform_int(rng, 1, 9));
        std::vector<Sample> batch;
        for (std::size_t i = 0; i < bs; ++i) batch.push_back(sample_of(random_signal(rng, n), i % 3, 3));
        AugConfig cfg;
        cfg.r_max = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(n)));
        cfg.m_len = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n - 1)));
        cfg.alpha = 0.05 + uniform_real(rng);
        std::vector<AugOp> ord(kAllOps.begin(), kAllOps.end());
        for (std::size_t i = 3; i > 1; --i) std::swap(ord[i - 1], ord[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)))]);
        cfg.order = ord;
        for (AugOp op : kAllOps) cfg.set_enabled(op, uniform_int(rng, 0, 1) == 1);
        CHECK_NOTHROW(cfg.validate(n));
        const auto seed = static_cast<std::uint64_t>(uniform_int(rng, 0, 1 << 30));
        const auto out = hda_batch(batch, cfg, seed);
        const auto again = hda_batch(batch, cfg, seed);
        REQUIRE(out.size() == batch.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].x == again[i].x);
            CHECK(out[i].x.size() == n);
            CHECK(std::accumulate(out[i].y.begin(), out[i].y.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
            for (double v : out[i].x) CHECK((v >= -1.0 && v <= 1.0));
            for (double v : out[i].y) CHECK(v >= 0.0);
        }
    }
}

TEST_CASE("operator order changes the virtual samples") {
    Rng rng = make_rng(15);
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < 6; ++i) batch.push_back(sample_of(random_signal(rng, 80), i % 2, 2));
    AugConfig a;
    a.r_max = 20;
    a.m_len = 10;
    a.alpha = 0.5;
    AugConfig b = a;
    b.order = {AugOp::mixing, AugOp::masking, AugOp::rotation};
    const auto oa = hda_batch(batch, a, 3);
    const auto ob = hda_batch(batch, b, 3);
    bool differ = false;
    for (std::size_t i = 0; i < oa.size(); ++i) differ |= oa[i].x != ob[i].x;
    CHECK(differ);
}

TEST_CASE("config validation and key round trip") {
    AugConfig c;
    CHECK_NOTHROW(c.validate(5000));
    CHECK_THROWS_AS(c.validate(100), AugError);
    c.order = {AugOp::rotation, AugOp::rotation, AugOp::mixing};
    CHECK_THROWS_AS(c.validate(5000), AugError);

    AugConfig d;
    d.r_max = 7;
    d.m_len = 3;
    d.alpha = 0.3;
    d.order = {AugOp::mixing, AugOp::rotation, AugOp::masking};
    d.enable_masking = false;
    AugConfig e;
    e.apply_kv(d.to_kv());
    CHECK(e.to_kv() == d.to_kv());
    CHECK_THROWS_AS(e.apply_kv({{"aug.bogus", "1"}}), AugError);
    CHECK_THROWS_AS(parse_aug_op("flip"), AugError);
}
