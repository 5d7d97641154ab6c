// MLP tests: hand-computed forward pass, gradient correctness against
// finite differences, SGD mechanics, training behavior, evaluation
// bookkeeping, and the MZNN checkpoint codec.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest/doctest.h"
#include "mazefl/errors.hpp"
#include "mazefl/mlp.hpp"
#include "mazefl/rng.hpp"
#include "test_support.hpp"

using namespace mazefl;

namespace {

// 2-in 2-hidden 2-out net with fixed round weights for hand checks.
MlpParams tiny_params() {
    MlpParams p = MlpParams::zeros(2, 2, 2);
    p.w1 = {1.0, 0.5,    // hidden 0 weights
            -1.0, 0.25}; // hidden 1 weights
    p.b1 = {0.125, -0.5};
    p.w2 = {2.0, 1.0,
            -0.5, 0.75};
    p.b2 = {0.0625, -0.25};
    return p;
}

// Deterministic toy dataset: 3 gaussian-ish clusters in 5 dimensions,
// labeled by cluster, linearly separable with margin.
Dataset toy_dataset(std::size_t n_per_class, std::uint64_t seed) {
    Dataset ds(5);
    Rng rng(seed);
    for (std::uint8_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            float f[5];
            for (int k = 0; k < 5; ++k) {
                f[k] = static_cast<float>(rng.uniform(-0.1, 0.1)) +
                       (k == c ? 1.0f : 0.0f);
            }
            ds.append(f, c);
        }
    }
    return ds;
}

double weight_sq_norm(const MlpParams& p) {
    double s = 0.0;
    for (double w : p.w1) s += w * w;
    for (double w : p.w2) s += w * w;
    return s;
}

}  // namespace

TEST_CASE("zeros builds the requested shape") {
    MlpParams p = MlpParams::zeros(3, 4, 2);
    CHECK(p.in_dim == 3);
    CHECK(p.hidden_dim == 4);
    CHECK(p.out_dim == 2);
    CHECK(p.w1.size() == 12);
    CHECK(p.b1.size() == 4);
    CHECK(p.w2.size() == 8);
    CHECK(p.b2.size() == 2);
    CHECK(std::all_of(p.w1.begin(), p.w1.end(),
                      [](double v) { return v == 0.0; }));
    CHECK(p.same_shape(MlpParams::zeros(3, 4, 2)));
    CHECK_FALSE(p.same_shape(MlpParams::zeros(3, 5, 2)));
    CHECK_FALSE(p.canonical_shape());
    CHECK(MlpParams::zeros(kMlpInputDim, kMlpHiddenDim, kMlpOutputDim)
              .canonical_shape());
}

TEST_CASE("init draws Glorot-uniform weights and zero biases") {
    MlpParams p = init_params(10, 6, 4, 42);
    const double limit1 = std::sqrt(6.0 / (10 + 6));
    const double limit2 = std::sqrt(6.0 / (6 + 4));
    for (double w : p.w1) {
        CHECK(w >= -limit1);
        CHECK(w <= limit1);
    }
    for (double w : p.w2) {
        CHECK(w >= -limit2);
        CHECK(w <= limit2);
    }
    CHECK(std::all_of(p.b1.begin(), p.b1.end(),
                      [](double v) { return v == 0.0; }));
    CHECK(std::all_of(p.b2.begin(), p.b2.end(),
                      [](double v) { return v == 0.0; }));

    // Pinned draw order: w1 then w2, flat row-major, from one stream.
    Rng rng(42);
    for (double w : p.w1) CHECK(w == rng.uniform(-limit1, limit1));
    for (double w : p.w2) CHECK(w == rng.uniform(-limit2, limit2));

    MlpParams q = init_params(10, 6, 4, 42);
    CHECK(p.w1 == q.w1);
    CHECK(p.w2 == q.w2);
    MlpParams r = init_params(10, 6, 4, 43);
    CHECK(p.w1 != r.w1);

    // Canonical shape stays inside the closed-form bound sqrt(6/1403).
    MlpParams c = init_params(7);
    CHECK(c.canonical_shape());
    const double bound = 0.0654;
    CHECK(std::all_of(c.w1.begin(), c.w1.end(), [&](double w) {
        return std::abs(w) <= bound;
    }));
}

TEST_CASE("forward matches a hand-computed pass with ReLU clamping") {
    MlpParams p = tiny_params();
    // x = (0.5, -1): z1 = (1*0.5 + 0.5*-1 + 0.125, -1*0.5 + 0.25*-1 - 0.5)
    //              = (0.125, -1.25) -> h = (0.125, 0)
    // logits = (2*0.125 + 1*0 + 0.0625, -0.5*0.125 + 0.75*0 - 0.25)
    //        = (0.3125, -0.3125)
    float x[2] = {0.5f, -1.0f};
    auto logits = forward(p, x);
    REQUIRE(logits.size() == 2);
    CHECK(logits[0] == 0.3125);
    CHECK(logits[1] == -0.3125);
    CHECK(predict(p, x) == 0);

    float bad[3] = {0, 0, 0};
    CHECK_THROWS_AS((void)forward(p, bad), ShapeMismatch);
}

TEST_CASE("softmax normalizes, shifts cancel, large logits stay finite") {
    std::vector<double> z = {1.0, 2.0, 3.0};
    auto s = softmax(z);
    REQUIRE(s.size() == 3);
    CHECK(std::accumulate(s.begin(), s.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[2] > s[1]);
    CHECK(s[1] > s[0]);

    std::vector<double> shifted = {101.0, 102.0, 103.0};
    auto s2 = softmax(shifted);
    for (int i = 0; i < 3; ++i) {
        CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-12));
    }

    std::vector<double> huge = {1000.0, 0.0, -1000.0};
    auto s3 = softmax(huge);
    CHECK(std::isfinite(s3[0]));
    CHECK(s3[0] == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> uniform(15, 0.25);
    auto u = softmax(uniform);
    for (double v : u) {
        CHECK(v == doctest::Approx(1.0 / 15).epsilon(1e-12));
    }
}

TEST_CASE("prediction ties break toward the lowest label") {
    MlpParams p = MlpParams::zeros(4, 3, 5);  // all logits equal zero
    float x[4] = {1, 2, 3, 4};
    CHECK(predict(p, x) == 0);
}

TEST_CASE("zero-parameter loss is ln(num classes)") {
    Dataset ds = toy_dataset(4, 1);
    MlpParams p = MlpParams::zeros(5, 4, 3);
    MlpParams grad;
    std::vector<std::size_t> batch(ds.size());
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    double loss = loss_and_grad(p, ds, batch, 0.0, grad);
    CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    // Same check at the canonical class count.
    Dataset wide(2);
    float f[2] = {0.3f, 0.4f};
    wide.append(f, 11);
    MlpParams pw = MlpParams::zeros(2, 3, kMlpOutputDim);
    std::size_t one[1] = {0};
    CHECK(loss_and_grad(pw, wide, one, 0.0, grad) ==
          doctest::Approx(std::log(15.0)).epsilon(1e-12));
}

TEST_CASE("batch loss is the mean: duplicated sample changes nothing") {
    Dataset ds = toy_dataset(2, 3);
    MlpParams p = init_params(5, 4, 3, 9);
    MlpParams g1, g2;
    std::size_t single[1] = {2};
    std::size_t doubled[2] = {2, 2};
    double l1 = loss_and_grad(p, ds, single, 0.0, g1);
    double l2 = loss_and_grad(p, ds, doubled, 0.0, g2);
    CHECK(l2 == doctest::Approx(l1).epsilon(1e-15));
    for (std::size_t i = 0; i < g1.w1.size(); ++i) {
        CHECK(g2.w1[i] == doctest::Approx(g1.w1[i]).epsilon(1e-14));
    }
    for (std::size_t i = 0; i < g1.w2.size(); ++i) {
        CHECK(g2.w2[i] == doctest::Approx(g1.w2[i]).epsilon(1e-14));
    }
}

TEST_CASE("weight decay adds wd/2 * |W|^2 and decays weights only") {
    Dataset ds = toy_dataset(3, 5);
    MlpParams p = init_params(5, 4, 3, 11);
    std::vector<std::size_t> batch = {0, 3, 6, 8};
    MlpParams g0, gd;
    const double wd = 0.125;
    double l0 = loss_and_grad(p, ds, batch, 0.0, g0);
    double ld = loss_and_grad(p, ds, batch, wd, gd);
    CHECK(ld == doctest::Approx(l0 + wd / 2 * weight_sq_norm(p)).epsilon(1e-12));
    for (std::size_t i = 0; i < p.w1.size(); ++i) {
        CHECK(gd.w1[i] ==
              doctest::Approx(g0.w1[i] + wd * p.w1[i]).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < p.w2.size(); ++i) {
        CHECK(gd.w2[i] ==
              doctest::Approx(g0.w2[i] + wd * p.w2[i]).epsilon(1e-12));
    }
    CHECK(gd.b1 == g0.b1);  // biases are never decayed
    CHECK(gd.b2 == g0.b2);
}

TEST_CASE("analytic gradients match central finite differences") {
    Dataset ds = toy_dataset(4, 7);
    MlpParams p = init_params(5, 4, 3, 21);
    std::vector<std::size_t> batch = {0, 1, 4, 5, 8, 9, 11};
    // Full sweep over every component of the toy net.
    auto rep = mazefl::test::fd_check(p, ds, batch, 0.01);
    std::size_t total =
        p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size();
    CHECK(rep.checked + rep.skipped == total);
    // The kink guard may conservatively drop a component or two, but a
    // full sweep must remain a full sweep in substance.
    CHECK(rep.skipped <= 2);
    CHECK(rep.max_rel_err < 1e-4);

    // Sampled components at the canonical shape on lidar-like features.
    Dataset wide = mazefl::test::random_dataset(
        kMlpInputDim, std::vector<int>(15, 2), 13);
    MlpParams cp = init_params(31);
    std::vector<std::size_t> wide_batch = {0, 5, 12, 20, 29};
    auto rep2 =
        mazefl::test::fd_check(cp, wide, wide_batch, 0.001, 1e-4, 200, 3);
    CHECK(rep2.checked == 200);
    CHECK(rep2.max_rel_err < 1e-4);
}

TEST_CASE("sgd_step applies params minus lr times grad") {
    MlpParams p = tiny_params();
    MlpParams g = tiny_params();  // any same-shape values
    MlpParams before = p;
    sgd_step(p, g, 0.0);
    CHECK(p.w1 == before.w1);
    CHECK(p.b2 == before.b2);

    sgd_step(p, g, 0.5);
    for (std::size_t i = 0; i < p.w1.size(); ++i) {
        CHECK(p.w1[i] == before.w1[i] - 0.5 * g.w1[i]);
    }
    for (std::size_t i = 0; i < p.b1.size(); ++i) {
        CHECK(p.b1[i] == before.b1[i] - 0.5 * g.b1[i]);
    }

    // Two steps at lr/2 equal one step at lr on fixed grads.
    MlpParams once = before, twice = before;
    sgd_step(once, g, 0.25);
    sgd_step(twice, g, 0.125);
    sgd_step(twice, g, 0.125);
    for (std::size_t i = 0; i < once.w2.size(); ++i) {
        CHECK(twice.w2[i] == doctest::Approx(once.w2[i]).epsilon(1e-15));
    }
}

TEST_CASE("training is deterministic and follows the shuffle stream") {
    Dataset ds = toy_dataset(10, 17);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.weight_decay = 0.0;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.shuffle_seed = 5;
    MlpParams p0 = init_params(5, 4, 3, 2);
    MlpParams a = train(p0, ds, cfg);
    MlpParams b = train(p0, ds, cfg);
    CHECK(a.w1 == b.w1);
    CHECK(a.b1 == b.b1);
    CHECK(a.w2 == b.w2);
    CHECK(a.b2 == b.b2);

    // Independent replay: reproduce the exact shuffles and batching.
    MlpParams manual = p0;
    Rng rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    MlpParams grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size();
             start += cfg.batch_size) {
            std::size_t len = std::min<std::size_t>(cfg.batch_size,
                                                    order.size() - start);
            std::span<const std::size_t> batch(order.data() + start, len);
            (void)loss_and_grad(manual, ds, batch, cfg.weight_decay, grad);
            sgd_step(manual, grad, cfg.learning_rate);
        }
    }
    CHECK(manual.w1 == a.w1);
    CHECK(manual.b2 == a.b2);

    TrainConfig other = cfg;
    other.shuffle_seed = 6;
    MlpParams c = train(p0, ds, other);
    CHECK(c.w1 != a.w1);
}

TEST_CASE("max_steps caps the minibatch count") {
    Dataset ds = toy_dataset(10, 17);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 8;
    cfg.epochs = 1;
    cfg.shuffle_seed = 5;
    cfg.max_steps = 2;
    MlpParams p0 = init_params(5, 4, 3, 2);
    MlpParams capped = train(p0, ds, cfg);

    MlpParams manual = p0;
    Rng rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    MlpParams grad;
    for (int step = 0; step < 2; ++step) {
        std::span<const std::size_t> batch(order.data() + step * 8, 8);
        (void)loss_and_grad(manual, ds, batch, cfg.weight_decay, grad);
        sgd_step(manual, grad, cfg.learning_rate);
    }
    CHECK(capped.w1 == manual.w1);
    CHECK(capped.w2 == manual.w2);

    // A cap larger than one epoch keeps reshuffling fresh epochs.
    cfg.max_steps = 9;  // 30 samples / 8 per batch = 4 steps per epoch
    MlpParams longer = train(p0, ds, cfg);
    CHECK(longer.w1 != capped.w1);
}

TEST_CASE("training rejects bad inputs") {
    Dataset empty(5);
    TrainConfig cfg;
    CHECK_THROWS_AS((void)train(init_params(5, 4, 3, 1), empty, cfg),
                    EmptyDataset);
    Dataset ds = toy_dataset(2, 1);
    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS((void)train(init_params(5, 4, 3, 1), ds, bad),
                    InvalidArgument);
    CHECK_THROWS_AS((void)train(init_params(4, 4, 3, 1), ds, cfg),
                    ShapeMismatch);
}

TEST_CASE("loss decreases over training on a separable toy set") {
    Dataset ds = toy_dataset(17, 29);  // ~50 samples
    MlpParams p = init_params(5, 8, 3, 4);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    MlpParams grad;
    std::vector<double> losses;
    for (int step = 0; step < 100; ++step) {
        losses.push_back(loss_and_grad(p, ds, all, 0.0, grad));
        sgd_step(p, grad, 0.5);
    }
    // Windowed means must fall monotonically.
    auto window_mean = [&](int lo) {
        double s = 0.0;
        for (int i = lo; i < lo + 20; ++i) s += losses[static_cast<size_t>(i)];
        return s / 20;
    };
    for (int lo = 0; lo + 40 <= 100; lo += 20) {
        CHECK(window_mean(lo + 20) < window_mean(lo));
    }
    CHECK(losses.back() < losses.front());
    CHECK(evaluate(p, ds).accuracy == 1.0);  // separable set is learned
}

TEST_CASE("evaluate counts a full confusion matrix") {
    Dataset ds = toy_dataset(6, 31);
    MlpParams p = init_params(5, 8, 3, 4);
    Evaluation ev = evaluate(p, ds);
    REQUIRE(ev.confusion.size() == 3);
    std::uint64_t total = 0, diag = 0;
    auto hist = ds.label_histogram();
    for (int y = 0; y < 3; ++y) {
        std::uint64_t row = 0;
        for (int k = 0; k < 3; ++k) {
            row += ev.confusion[y][k];
            total += ev.confusion[y][k];
        }
        CHECK(row == hist[y]);  // row sums are per-label counts
        diag += ev.confusion[y][y];
    }
    CHECK(total == ds.size());
    CHECK(ev.accuracy ==
          doctest::Approx(static_cast<double>(diag) / total).epsilon(1e-15));

    CHECK_THROWS_AS((void)evaluate(p, Dataset(5)), EmptyDataset);
}

TEST_CASE("random parameters score at chance on balanced data") {
    Dataset ds = mazefl::test::random_dataset(
        kMlpInputDim, std::vector<int>(15, 160), 3);  // 2400 samples
    MlpParams p = init_params(99);
    Evaluation ev = evaluate(p, ds);
    CHECK(ev.accuracy > 1.0 / 15 - 0.03);
    CHECK(ev.accuracy < 1.0 / 15 + 0.03);
}

TEST_CASE("checkpoint encoding round-trips through f32") {
    MlpParams p = init_params(8);
    auto bytes = encode_params(p);
    // "MZNN" + version + f32 payload.
    const std::size_t n_params = p.w1.size() + p.b1.size() + p.w2.size() +
                                 p.b2.size();
    CHECK(bytes.size() == 5 + 4 * n_params);
    CHECK(bytes[0] == 'M');
    CHECK(bytes[1] == 'Z');
    CHECK(bytes[2] == 'N');
    CHECK(bytes[3] == 'N');
    CHECK(bytes[4] == 1);

    MlpParams q = decode_params(bytes);
    REQUIRE(q.same_shape(p));
    for (std::size_t i = 0; i < p.w1.size(); ++i) {
        CHECK(q.w1[i] == static_cast<double>(static_cast<float>(p.w1[i])));
    }
    for (std::size_t i = 0; i < p.b2.size(); ++i) {
        CHECK(q.b2[i] == static_cast<double>(static_cast<float>(p.b2[i])));
    }
    // A second trip is the identity: f32 values survive exactly.
    CHECK(encode_params(q) == bytes);
}

TEST_CASE("only canonical shapes are encodable") {
    CHECK_THROWS_AS((void)encode_params(MlpParams::zeros(5, 4, 3)),
                    ShapeMismatch);
}

TEST_CASE("checkpoint decoder rejects corrupted bytes") {
    auto bytes = encode_params(init_params(2));
    {
        auto b = bytes;
        b[0] = 'X';
        CHECK_THROWS_AS((void)decode_params(b), FormatError);
    }
    {
        auto b = bytes;
        b[4] = 2;
        CHECK_THROWS_AS((void)decode_params(b), FormatError);
    }
    {
        auto b = bytes;
        b.resize(b.size() - 1);
        CHECK_THROWS_AS((void)decode_params(b), FormatError);
    }
    {
        auto b = bytes;
        b.push_back(0);
        CHECK_THROWS_AS((void)decode_params(b), FormatError);
    }
}

TEST_CASE("checkpoint files round-trip and missing files raise IoError") {
    mazefl::test::TempDir tmp;
    MlpParams p = init_params(61);
    const std::string path = tmp.path("model.mznn");
    save_params(p, path);
    MlpParams q = load_params(path);
    CHECK(encode_params(q) == encode_params(p));
    CHECK_THROWS_AS((void)load_params(tmp.path("absent.mznn")), IoError);
}
