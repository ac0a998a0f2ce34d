#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "grad_suite.hpp"
#include "oracles.hpp"
#include "qfvs/model.hpp"

using namespace qfvs;
using namespace qfvs::testing;

TEST_SUITE("scoring") {
    TEST_CASE("fusion lays out sum, product, visual and query blocks") {
        auto v = Tensor::from_data({2, 2}, {1, 2, 3, 4});
        auto q = Tensor::from_data({2}, {10, 20});
        auto f = fuse(v, q);
        CHECK(f.shape() == Shape{2, 8});
        const std::vector<real> row0{11, 22, 10, 40, 1, 2, 10, 20};
        for (std::size_t i = 0; i < 8; ++i) CHECK(f.data()[i] == row0[i]);
        CHECK_THROWS_AS(fuse(v, Tensor::zeros({3})), ShapeError);
    }

    TEST_CASE("uniform scores give loss ln 2") {
        ShotScores s{Tensor::full({50}, 0.5)};
        std::vector<real> labels(50);
        for (std::size_t i = 0; i < 50; ++i) labels[i] = i % 3 == 0;
        CHECK(std::abs(bce_loss(s, labels).item() - std::log(2.0)) < 1e-9);
        CHECK_THROWS_AS(bce_loss(s, std::vector<real>(3)), ShapeError);
    }

    TEST_CASE("head scores every valid shot once, in shot order") {
        ModelConfig cfg = ModelConfig::test_scale();
        QfvsModel model(cfg, 9);
        Rng rng(4);
        auto video = composite_video(cfg.backbone.input_dim, rng);
        Rng unused(0);
        NoGradGuard no_grad;
        auto scores = model.forward(video, Tensor::zeros({cfg.backbone.query_dim}), Mode::eval, unused);
        CHECK(scores.size() == video.valid_count());
        for (real p : scores.values()) CHECK((p > 0 && p < 1));
    }

    TEST_CASE("selection matches a brute-force sort including ties") {
        const auto run = selection_oracle(300, 21);
        CAPTURE(run.first_failure);
        CHECK(run.passed());
    }

    TEST_CASE("selection size and order") {
        std::vector<real> s(200, 0.1);
        s[150] = 0.9;
        s[3] = 0.8;
        s[77] = 0.8;
        const auto sum = select_summary(s, 0.02);
        CHECK(sum.indices == std::vector<std::size_t>{0, 3, 77, 150});
        CHECK(select_summary(std::vector<real>(10, 0.5), 0.02).indices == std::vector<std::size_t>{0});
        CHECK(select_summary(std::vector<real>(49, 0.5), 0.02).indices.size() == 1);
        CHECK(select_summary(std::vector<real>(100, 0.5), 0.02).indices == std::vector<std::size_t>{0, 1});
        CHECK_THROWS_AS(select_summary(std::vector<real>{}, 0.02), ContractError);
    }

    TEST_CASE("summary file round-trips and rejects malformed rows") {
        const auto path = std::filesystem::temp_directory_path() / "qfvs_summary_test.csv";
        const std::vector<real> scores{0.25, 0.1 + 0.2, 0.9, 1.0 / 3};
        const auto sum = select_summary(scores, 0.5);
        write_summary_file(path, scores, sum);
        const auto back = read_summary_file(path);
        CHECK(back.scores == scores);
        CHECK(back.summary.indices == sum.indices);
        {
            std::ofstream os(path);
            os << "shot_index,score,selected\n0,0.5,1\n2,0.1,0\n";
        }
        CHECK_THROWS_AS(read_summary_file(path), FormatError);
        std::filesystem::remove(path);
    }
}
