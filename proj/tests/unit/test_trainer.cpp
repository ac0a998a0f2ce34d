#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "qfvs/trainer.hpp"

using namespace qfvs;

namespace {

DatasetBundle toy_bundle() {
    SyntheticConfig c;
    c.n_videos = 3;
    c.shots_per_video = 60;
    c.feature_dim = 64;
    c.n_concepts = 8;
    c.embedding_dim = 300;
    c.seed = 5;
    c.scene_min = 6;
    c.scene_max = 15;
    c.scenario_counts = {2, 2, 1, 1};
    return generate_synthetic(c);
}

TrainConfig toy_config() {
    TrainConfig t;
    t.model = ModelConfig::test_scale();
    t.lr = 3e-3;
    t.epochs = 6;
    t.seed = 4;
    return t;
}

}  // namespace

TEST_SUITE("trainer") {
    TEST_CASE("Adam: zero grads keep parameters and advance the step") {
        ParameterStore store;
        auto w = store.add("w", Tensor::from_data({3}, {1, -2, 3}, true));
        Adam adam(store.parameters());
        w.mutable_grad();
        adam.step(0.1);
        CHECK(adam.steps() == 1);
        CHECK(std::vector<real>(w.data().begin(), w.data().end()) == std::vector<real>{1, -2, 3});
    }

    TEST_CASE("Adam: first bias-corrected step moves by lr against the gradient sign") {
        ParameterStore store;
        auto w = store.add("w", Tensor::from_data({2}, {0.5, 0.5}, true));
        Adam adam(store.parameters());
        w.mutable_grad()[0] = 4;
        w.mutable_grad()[1] = -0.01;
        adam.step(0.01);
        CHECK(w.data()[0] == doctest::Approx(0.49).epsilon(1e-6));
        CHECK(w.data()[1] == doctest::Approx(0.51).epsilon(1e-4));
    }

    TEST_CASE("Adam: quadratic bowl converges") {
        ParameterStore store;
        auto x = store.add("x", Tensor::from_data({1}, {1}, true));
        Adam adam(store.parameters());
        std::size_t steps = 0;
        while (std::abs(x.data()[0]) >= 1e-3 && steps < 500) {
            store.zero_grad();
            backward(sum(mul(x, x)));
            adam.step(0.1);
            ++steps;
        }
        CHECK(std::abs(x.data()[0]) < 1e-3);
    }

    TEST_CASE("Adam: a parameter without a gradient is named") {
        ParameterStore store;
        store.add("alpha", Tensor::zeros({1}, true));
        Adam adam(store.parameters());
        try {
            adam.step(0.1);
            FAIL("expected a contract error");
        } catch (const ContractError& e) {
            CHECK(std::string(e.what()).find("alpha") != std::string::npos);
        }
    }

    TEST_CASE("learning rate decays by exactly 0.8 per epoch") {
        TrainConfig t;
        t.lr = 1e-4;
        real expect = 1e-4;
        for (std::size_t e = 0; e < 20; ++e) {
            CHECK(t.lr_at(e) == doctest::Approx(expect).epsilon(1e-14));
            expect *= 0.8;
        }
    }

    TEST_CASE("toy training lowers the loss, never trains on the held-out video, and is deterministic") {
        const auto bundle = toy_bundle();
        const auto cfg = toy_config();
        const auto a = train(bundle, cfg);
        REQUIRE(a.size() == bundle.videos.size());
        for (const auto& f : a) {
            CHECK(f.held_out_samples_trained == 0);
            CHECK(f.epochs.size() == cfg.epochs);
            CHECK(f.epochs.back().mean_loss < f.epochs.front().mean_loss);
            for (const auto& r : f.epochs) CHECK(r.lr == cfg.lr_at(r.epoch));
        }
        auto threaded = cfg;
        threaded.threads = 3;
        const auto b = train(bundle, threaded);
        std::ostringstream la, lb;
        for (std::size_t f = 0; f < a.size(); ++f) {
            write_train_log(la, a[f].epochs);
            write_train_log(lb, b[f].epochs);
            CHECK(a[f].model->store().export_arrays() == b[f].model->store().export_arrays());
        }
        CHECK(la.str() == lb.str());
    }

    TEST_CASE("perfect scorer reaches the budget bound on every query") {
        const auto bundle = toy_bundle();
        const auto r = run_experiment(bundle, label_scorer(bundle), 0.02);
        real f1_sum = 0;
        for (const auto& f : r.folds) {
            for (const auto& q : f.queries) {
                const auto& bq = bundle.queries[q.query];
                const real n = static_cast<real>(bundle.videos[bq.video].size());
                const real k = std::max(1.0, std::floor(0.02 * n));
                const real o = static_cast<real>(bq.oracle.size());
                const real bound = o == 0 ? 0 : 2 * std::min(k, o) / (k + o);
                CHECK(q.report.f1 == doctest::Approx(bound).epsilon(1e-12));
                CHECK(perfect_scorer_f1(bundle.videos[bq.video].size(), bq.oracle.size(), 0.02) ==
                      doctest::Approx(bound).epsilon(1e-12));
            }
            f1_sum += f.f1;
        }
        CHECK(r.f1 == doctest::Approx(f1_sum / static_cast<real>(r.folds.size())).epsilon(1e-12));
    }

    TEST_CASE("random scorer is reproducible and near one half") {
        const auto bundle = toy_bundle();
        const auto a = run_experiment(bundle, random_scorer(bundle, 9));
        const auto b = run_experiment(bundle, random_scorer(bundle, 9));
        std::ostringstream ra, rb;
        write_experiment_report(ra, bundle, a);
        write_experiment_report(rb, bundle, b);
        CHECK(ra.str() == rb.str());
        CHECK(ra.str().find("row = AVG") != std::string::npos);
        REQUIRE(a.ranking.has_value());
        CHECK(std::abs(*a.ranking - 0.5) < 0.1);
    }

    TEST_CASE("ranking quality counts ties as one half") {
        const std::vector<real> labels{1, 0, 1, 0};
        CHECK(*ranking_quality(std::vector<real>{0.9, 0.1, 0.8, 0.2}, labels) == 1);
        CHECK(*ranking_quality(std::vector<real>{0.1, 0.9, 0.2, 0.8}, labels) == 0);
        CHECK(*ranking_quality(std::vector<real>{0.5, 0.5, 0.5, 0.5}, labels) == 0.5);
        CHECK_FALSE(ranking_quality(std::vector<real>{0.1, 0.2}, std::vector<real>{0, 0}).has_value());
    }

    TEST_CASE("train config keys round-trip and unknown keys are rejected") {
        TrainConfig t = TrainConfig::desk_profile();
        t.epochs = 3;
        TrainConfig back;
        apply_key_values(back, to_key_values(t));
        CHECK(to_key_values(back) == to_key_values(t));
        KeyValues bad{{"train.learning_rate", "1"}};
        CHECK_THROWS_AS(apply_key_values(back, bad), ConfigError);
        t.lr_decay = 1.5;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }

    TEST_CASE("checkpoints reload to identical scores") {
        const auto bundle = toy_bundle();
        auto cfg = toy_config();
        cfg.epochs = 1;
        const auto prepared = prepare_videos(bundle, cfg.model);
        auto fold = train_fold(bundle, prepared, cfg, 0);
        const auto path = std::filesystem::temp_directory_path() / "qfvs_trainer_test.ckpt";
        fold.model->save(path);
        std::shared_ptr<QfvsModel> back(QfvsModel::load(path));
        const auto s1 = model_scorer(bundle, prepared, {fold.model})(0, 0, 0);
        const auto s2 = model_scorer(bundle, prepared, {back})(0, 0, 0);
        CHECK(s1 == s2);
        std::filesystem::remove(path);
        std::filesystem::remove(path.string() + ".cfg");
    }
}
