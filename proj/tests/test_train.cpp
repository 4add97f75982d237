#include <doctest.h>

#include "fixtures.hpp"
#include "hdawf/train.hpp"

using namespace hdawf;

namespace {

Tensor vec(std::vector<double> v) {
    Tensor t({v.size()});
    t.data = std::move(v);
    return t;
}

Dataset tiny_set(std::uint64_t seed, int classes = 3, int per = 6, std::size_t len = 64) {
    SynthSpec ss;
    ss.num_classes = classes;
    ss.samples_per_class = per;
    ss.trace_len = len;
    ss.noise_rate = 0.05;
    ss.seed = seed;
    return synth_dataset(ss);
}

TrainConfig quick(std::uint64_t seed, std::size_t epochs = 4) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 5;
    tc.lr = 3e-3;
    tc.seed = seed;
    return tc;
}

}  // namespace

TEST_CASE("overfit sanity reaches full train accuracy") {
    const auto t = fixture::overfit_task(1);
    const auto r = train(t.model, t.train, t.data, t.data, nullptr);
    CHECK(r.history.size() == 50);
    CHECK(accuracy(r.best, t.data, false) >= 0.99);
}

TEST_CASE("full-batch training loss keeps falling after warm-up") {
    int monotone = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto t = fixture::overfit_task(seed);
        const auto r = train(t.model, t.train, t.data, t.data, nullptr);
        bool ok = true;
        for (std::size_t e = 5; e < r.history.size(); ++e) {
            if (r.history[e].train_loss > r.history[e - 1].train_loss) ok = false;
        }
        monotone += ok ? 1 : 0;
    }
    MESSAGE(monotone << "/10 seeds monotone");
    CHECK(monotone >= 9);
}

TEST_CASE("disabled augmentation is the same as none") {
    const auto d = tiny_set(3);
    const auto mc = fixture::narrow_model(64, 3, 4);
    const auto tc = quick(9);
    const auto off = AugConfig::none();
    const auto a = train(mc, tc, d, d, nullptr);
    const auto b = train(mc, tc, d, d, &off);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_acc == b.history[i].val_acc);
    }
    CHECK(a.best == b.best);
}

TEST_CASE("training is bitwise reproducible") {
    const auto d = tiny_set(4);
    const auto mc = fixture::narrow_model(64, 3, 4);
    AugConfig aug;
    aug.m_len = 8;
    auto tc = quick(5);
    const auto a = train(mc, tc, d, d, &aug);
    const auto b = train(mc, tc, d, d, &aug);
    CHECK(a.best == b.best);
    CHECK(history_csv(a.history) == history_csv(b.history));
    tc.exec = Exec::serial;
    CHECK(train(mc, tc, d, d, &aug).best == a.best);
    tc.seed = 6;
    CHECK_FALSE(train(mc, tc, d, d, &aug).best == a.best);
}

TEST_CASE("best epoch follows validation accuracy") {
    const auto d = tiny_set(5);
    const auto mc = fixture::narrow_model(64, 3, 4);
    auto tc = quick(2, 8);
    const auto r = train(mc, tc, d, d, nullptr);
    double best = -1.0;
    std::size_t want = 0;
    for (const auto& h : r.history) {
        if (h.val_acc > best) {
            best = h.val_acc;
            want = h.epoch;
        }
    }
    CHECK(r.best_epoch == want);
    CHECK(accuracy(r.best, d, false) == best);
    tc.select = Selection::last_epoch;
    CHECK(train(mc, tc, d, d, nullptr).best_epoch == 8);
}

TEST_CASE("sgd with momentum also trains") {
    const auto d = tiny_set(6);
    const auto mc = fixture::narrow_model(64, 3, 4);
    auto tc = quick(3, 15);
    tc.optimizer = OptimizerKind::sgd_momentum;
    tc.lr = 0.05;
    const auto r = train(mc, tc, d, d, nullptr);
    CHECK(r.history.back().train_loss < r.history.front().train_loss);
}

TEST_CASE("adam step matches a hand computation") {
    TrainConfig tc;
    tc.lr = 0.1;
    Optimizer opt(tc);
    std::vector<Tensor> p{vec({1.0, -1.0})};
    const std::vector<Tensor> g{vec({0.5, -2.0})};
    opt.step(p, g);
    // First Adam step moves each weight by lr * sign(g) up to epsilon.
    CHECK(p[0].data[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p[0].data[1] == doctest::Approx(-0.9).epsilon(1e-6));

    tc.optimizer = OptimizerKind::sgd_momentum;
    tc.momentum = 0.5;
    Optimizer sgd(tc);
    std::vector<Tensor> q{vec({0.0})};
    sgd.step(q, {vec({1.0})});
    sgd.step(q, {vec({1.0})});
    CHECK(q[0].data[0] == doctest::Approx(-0.1 - 0.15));
}

TEST_CASE("training preconditions") {
    const auto d = tiny_set(7);
    const auto mc = fixture::narrow_model(64, 3, 4);
    CHECK_THROWS_AS(train(mc, quick(1), d, Dataset{}, nullptr), DatasetError);
    CHECK_THROWS_AS(train(fixture::narrow_model(64, 4, 4), quick(1), d, d, nullptr), ModelError);
    CHECK_THROWS_AS(train(fixture::narrow_model(65, 3, 4), quick(1), d, d, nullptr), ModelError);
    auto tc = quick(1);
    tc.epochs = 0;
    CHECK_THROWS_AS(train(mc, tc, d, d, nullptr), ModelError);
    AugConfig bad;
    bad.m_len = 64;
    CHECK_THROWS_AS(train(mc, quick(1), d, d, &bad), AugError);
}

TEST_CASE("divergence aborts with the history so far") {
    const auto d = tiny_set(8);
    const auto mc = fixture::narrow_model(64, 3, 4);
    auto tc = quick(1, 30);
    tc.optimizer = OptimizerKind::sgd_momentum;
    tc.lr = 1e12;
    try {
        train(mc, tc, d, d, nullptr);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.history.size() < 30);
    }
}

TEST_CASE("history csv and config keys") {
    std::vector<EpochStats> h{{1, 1.5, 0.25}, {2, 0.75, 0.5}};
    CHECK(history_csv(h) == "epoch,train_loss,val_acc\n1,1.5,0.25\n2,0.75,0.5\n");
    TrainConfig tc;
    tc.epochs = 7;
    tc.lr = 0.0025;
    tc.optimizer = OptimizerKind::sgd_momentum;
    tc.select = Selection::last_epoch;
    TrainConfig back;
    back.apply_kv(tc.to_kv());
    CHECK(back.to_kv() == tc.to_kv());
    CHECK_THROWS_AS(back.apply_kv({{"train.optimizer", "rmsprop"}}), ConfigError);
    CHECK_THROWS_AS(back.apply_kv({{"train.bogus", "1"}}), ConfigError);
}

TEST_CASE("open-world accuracy maps background to the extra class") {
    SynthSpec ss;
    ss.num_classes = 2;
    ss.samples_per_class = 3;
    ss.trace_len = 32;
    ss.background = 4;
    const auto d = synth_dataset(ss);
    auto mc = fixture::narrow_model(32, 3, 2);
    const auto params = init_params(mc, 1);
    CHECK_THROWS_AS(accuracy(params, d, false), DatasetError);
    const auto preds = predict(params, d);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < d.size(); ++i) hit += preds[i].cls == class_index(d.records[i].label, 2);
    CHECK(accuracy(params, d, true) == doctest::Approx(static_cast<double>(hit) / d.size()));
}
