#include <doctest.h>

#include <cmath>

#include "kcal/ensemble.hpp"
#include "kcal/error.hpp"
#include "kcal/rng.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace kcal;
using kcal::test::TempDir;

namespace {

BackboneSpec tiny_spec() {
    BackboneSpec spec;
    spec.input_h = spec.input_w = 16;
    spec.channels = {4, 8};
    return spec;
}

std::vector<ModelGraph> make_members(int n, std::uint64_t seed) {
    std::vector<ModelGraph> members;
    for (int i = 0; i < n; ++i)
        members.push_back(make_model(tiny_spec(), HeadKind::regression, 1,
                                     derive_seed(seed, static_cast<std::uint64_t>(i))));
    return members;
}

Dataset random_dataset(std::size_t n, std::uint64_t seed) {
    Dataset d;
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.image = Tensor3(16, 16, 3);
        for (auto& v : s.image.v) v = rng.next_double();
        s.target = rng.next_uniform(2, 30);
        d.samples.push_back(std::move(s));
    }
    return d;
}

TrainConfig combiner_config(int epochs, std::uint64_t seed) {
    TrainConfig c;
    c.task = TaskKind::calories;
    c.loss = LossSpec{LossKind::mse, 0.5};
    c.epochs = epochs;
    c.batch_size = 4;
    c.learning_rate = 0.01;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("combiner width follows the member count") {
    EnsembleModel two = build_ensemble(make_members(2, 1));
    CHECK(two.combiner.in_features == 2);
    CHECK(two.combiner.hidden == 100);

    EnsembleModel three = build_ensemble(make_members(3, 2));
    CHECK(three.combiner.in_features == 3);

    try {
        build_ensemble(make_members(1, 3));
        FAIL("expected TooFewMembers");
    } catch (const error& e) {
        CHECK(e.code() == errc::too_few_members);
    }

    auto members = make_members(2, 4);
    members[1] = make_model(tiny_spec(), HeadKind::classification, 3, 9);
    try {
        build_ensemble(std::move(members));
        FAIL("expected NonRegressionMember");
    } catch (const error& e) {
        CHECK(e.code() == errc::non_regression_member);
    }
}

TEST_CASE("identity wiring reproduces a member exactly") {
    EnsembleModel ensemble = build_ensemble(make_members(2, 5));
    SplitMix64 rng(5);
    std::vector<Tensor3> batch;
    for (int i = 0; i < 4; ++i) {
        Tensor3 img(16, 16, 3);
        for (auto& v : img.v) v = rng.next_double();
        batch.push_back(std::move(img));
    }

    for (std::size_t pick : {std::size_t{0}, std::size_t{1}}) {
        set_identity_wiring(ensemble, pick);
        std::vector<double> ens = ensemble_predict(ensemble, batch);
        ForwardResult member = forward(ensemble.members[pick], batch);
        for (std::size_t i = 0; i < batch.size(); ++i)
            CHECK(ens[i] == member.predictions[i][0]);
    }
}

TEST_CASE("zero combiner weights collapse to the bias") {
    EnsembleModel ensemble = build_ensemble(make_members(2, 6));
    std::fill(ensemble.combiner.w1.begin(), ensemble.combiner.w1.end(), 0.0f);
    std::fill(ensemble.combiner.b1.begin(), ensemble.combiner.b1.end(), 0.0f);
    std::fill(ensemble.combiner.w2.begin(), ensemble.combiner.w2.end(), 0.0f);
    ensemble.combiner.b2[0] = 7.25f;

    SplitMix64 rng(6);
    Tensor3 img(16, 16, 3);
    for (auto& v : img.v) v = rng.next_double();
    std::vector<double> pred = ensemble_predict(ensemble, std::span<const Tensor3>(&img, 1));
    CHECK(pred[0] == 7.25);
}

TEST_CASE("combiner matches an explicit dense-layer oracle") {
    EnsembleModel ensemble = build_ensemble(make_members(2, 7), 16, 7);
    const Combiner& c = ensemble.combiner;
    SplitMix64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> f{rng.next_uniform(-20, 20), rng.next_uniform(-20, 20)};
        double got = combiner_forward(c, f);

        double expect = c.b2[0];
        for (int j = 0; j < c.hidden; ++j) {
            double pre = c.b1[static_cast<std::size_t>(j)];
            for (int k = 0; k < 2; ++k)
                pre += static_cast<double>(c.w1[static_cast<std::size_t>(j) * 2 + k]) *
                       f[static_cast<std::size_t>(k)];
            expect += static_cast<double>(c.w2[static_cast<std::size_t>(j)]) * std::max(0.0, pre);
        }
        CHECK(std::fabs(got - expect) < 1e-6);
    }
}

TEST_CASE("combiner training never touches the members") {
    TempDir dir("freeze");
    EnsembleModel ensemble = build_ensemble(make_members(2, 8), 32, 8);
    Dataset train_set = random_dataset(12, 8);
    Dataset val_set = random_dataset(4, 9);

    // serialized member bytes before and after training
    save_checkpoint(ensemble.members[0], CheckpointMeta{}, dir / "m0_before.ckpt");
    save_checkpoint(ensemble.members[1], CheckpointMeta{}, dir / "m1_before.ckpt");
    train_combiner(ensemble, combiner_config(4, 8), train_set, val_set);
    save_checkpoint(ensemble.members[0], CheckpointMeta{}, dir / "m0_after.ckpt");
    save_checkpoint(ensemble.members[1], CheckpointMeta{}, dir / "m1_after.ckpt");

    CHECK(file_digest(dir / "m0_before.ckpt") == file_digest(dir / "m0_after.ckpt"));
    CHECK(file_digest(dir / "m1_before.ckpt") == file_digest(dir / "m1_after.ckpt"));
}

TEST_CASE("a single sample is overfit below 1 kcal^2") {
    EnsembleModel ensemble = build_ensemble(make_members(2, 10), 16, 10);
    Dataset one = random_dataset(1, 10);
    TrainConfig config = combiner_config(300, 10);
    config.batch_size = 1;
    CombinerTrainResult result = train_combiner(ensemble, config, one, one);
    CHECK(result.history.epochs.back().total < 1.0);
}

TEST_CASE("combiner training is deterministic") {
    Dataset train_set = random_dataset(10, 11);
    Dataset val_set = random_dataset(4, 12);
    auto run = [&]() {
        EnsembleModel e = build_ensemble(make_members(2, 11), 16, 11);
        return train_combiner(e, combiner_config(5, 11), train_set, val_set);
    };
    CombinerTrainResult a = run();
    CombinerTrainResult b = run();
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
        CHECK(a.history.epochs[i].total == b.history.epochs[i].total);
        CHECK(a.history.epochs[i].val_metric == b.history.epochs[i].val_metric);
    }
}

TEST_CASE("identity-initialized training never ends worse than the member") {
    EnsembleModel ensemble = build_ensemble(make_members(2, 13), 16, 13);
    Dataset train_set = random_dataset(12, 13);

    // training-set MSE of member 0 alone
    std::vector<Tensor3> images;
    std::vector<double> targets;
    for (const auto& s : train_set.samples) {
        images.push_back(s.image);
        targets.push_back(s.target);
    }
    ForwardResult member = forward(ensemble.members[0], images);
    double member_mse = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double diff = member.predictions[i][0] - targets[i];
        member_mse += diff * diff;
    }
    member_mse /= static_cast<double>(targets.size());

    set_identity_wiring(ensemble, 0);
    TrainConfig config = combiner_config(40, 13);
    config.batch_size = static_cast<int>(train_set.size()); // full batch: monotone-ish
    config.learning_rate = 1e-3;
    train_combiner(ensemble, config, train_set, train_set);

    std::vector<double> preds = ensemble_predict(ensemble, images);
    double trained_mse = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double diff = preds[i] - targets[i];
        trained_mse += diff * diff;
    }
    trained_mse /= static_cast<double>(targets.size());
    CHECK(trained_mse <= member_mse + 1e-3);
}

TEST_CASE("ensemble checkpoints round trip and verify member digests") {
    TempDir dir("ens_ckpt");
    EnsembleModel ensemble = build_ensemble(make_members(2, 14), 16, 14);
    save_checkpoint(ensemble.members[0], CheckpointMeta{}, dir / "m0.ckpt");
    save_checkpoint(ensemble.members[1], CheckpointMeta{}, dir / "m1.ckpt");

    std::vector<EnsembleMemberRef> refs = {
        {"m0.ckpt", file_digest(dir / "m0.ckpt")},
        {"m1.ckpt", file_digest(dir / "m1.ckpt")},
    };
    CheckpointMeta meta;
    meta.task = "calories";
    save_ensemble(ensemble, refs, meta, dir / "ens.ckpt");

    CHECK(checkpoint_kind(dir / "ens.ckpt") == "ensemble");
    CHECK(checkpoint_kind(dir / "m0.ckpt") == "model");

    LoadedEnsemble loaded = load_ensemble(dir / "ens.ckpt");
    CHECK(loaded.model.members.size() == 2);
    CHECK(loaded.model.combiner.hidden == 16);
    for (std::size_t i = 0; i < ensemble.combiner.w1.size(); ++i)
        CHECK(loaded.model.combiner.w1[i] == ensemble.combiner.w1[i]);

    // altering a member breaks its digest
    save_checkpoint(make_model(tiny_spec(), HeadKind::regression, 1, 99), CheckpointMeta{},
                    dir / "m0.ckpt");
    try {
        load_ensemble(dir / "ens.ckpt");
        FAIL("expected CorruptCheckpoint");
    } catch (const error& e) {
        CHECK(e.code() == errc::corrupt_checkpoint);
    }
}

TEST_CASE("combiner training rejects non-MSE configs") {
    EnsembleModel ensemble = build_ensemble(make_members(2, 15), 16, 15);
    Dataset d = random_dataset(4, 15);
    TrainConfig config = combiner_config(1, 15);
    config.loss = LossSpec{LossKind::cyborg_multiplied, 0.5};
    CHECK_THROWS_AS(train_combiner(ensemble, config, d, d), error);
}
