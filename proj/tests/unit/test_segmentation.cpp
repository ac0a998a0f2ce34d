#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace qfvs;
using namespace qfvs::testing;

TEST_SUITE("segmentation") {
    TEST_CASE("noise-free plateaus are recovered exactly") {
        Rng rng(10);
        for (int trial = 0; trial < 50; ++trial) {
            auto v = plateau_video(rng, 3 + rng.below(4), 5, 30, 16, 0);
            SegmentationConfig cfg;
            CHECK(kts_segment(v.features, v.count, v.dim, cfg).change_points() == v.change_points);
        }
    }

    TEST_CASE("noisy plateaus are recovered within one shot") {
        Rng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            auto v = plateau_video(rng, 3 + rng.below(4), 5, 30, 16, 0.05);
            const auto got = kts_segment(v.features, v.count, v.dim).change_points();
            REQUIRE(got.size() == v.change_points.size());
            for (std::size_t i = 0; i < got.size(); ++i)
                CHECK(std::abs(static_cast<long>(got[i]) - static_cast<long>(v.change_points[i])) <= 1);
        }
    }

    TEST_CASE("dynamic program equals exhaustive search") {
        Rng rng(12);
        for (std::size_t n = 1; n <= 12; ++n) {
            auto v = plateau_video(rng, 1, n, n, 5, 0);
            for (auto& x : v.features) x += 0.3 * rng.normal();
            const ScatterCost cost(v.features, n, 5);
            const auto fits = fit_change_points(cost, n - 1);
            REQUIRE(fits.size() == n);
            for (std::size_t m = 0; m < n; ++m) {
                std::vector<std::size_t> cps;
                const real best = exhaustive_scatter(cost, m, cps);
                CHECK(fits[m].scatter == doctest::Approx(best).epsilon(1e-12));
                CHECK(fits[m].change_points.size() == m);
            }
        }
    }

    TEST_CASE("segments respect the shot cap and videos past both caps split evenly") {
        Rng rng(13);
        auto v = plateau_video(rng, 1, 130, 130, 4, 0.01);
        SegmentationConfig cfg;
        cfg.max_shots = 40;
        cfg.max_segments = 20;
        const auto b = kts_segment(v.features, v.count, v.dim, cfg);
        for (auto len : b.lengths) CHECK(len <= 40);
        CHECK_NOTHROW(b.validate(cfg));

        cfg.max_segments = 2;
        const auto over = kts_segment(v.features, v.count, v.dim, cfg);
        CHECK(over.over_segment_cap);
        CHECK(over.lengths == std::vector<std::size_t>{33, 33, 32, 32});

        const auto split = enforce_max_shots(SegmentBoundaries::from_change_points(10, {}), 4);
        CHECK(split.lengths == std::vector<std::size_t>{4, 3, 3});
    }

    TEST_CASE("segmented layout pads, masks and maps back to shots") {
        ShotSequence s;
        s.video_id = "v";
        s.feature_dim = 2;
        for (std::size_t i = 0; i < 7; ++i) {
            s.features.push_back(static_cast<real>(i + 1));
            s.features.push_back(-static_cast<real>(i + 1));
            s.tags.emplace_back();
        }
        const auto seg = build_segmented(s, SegmentBoundaries::from_change_points(7, {3}), 5);
        CHECK(seg.features.shape() == Shape{2, 5, 2});
        CHECK(seg.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1, 1, 1, 1, 0});
        CHECK(seg.valid_count() == 7);
        CHECK(seg.valid_slots() == std::vector<std::size_t>{0, 1, 2, 5, 6, 7, 8});
        CHECK(seg.features.data()[3 * 2] == 0);
        CHECK(flatten(seg) == s.features);
        CHECK_THROWS_AS(build_segmented(s, SegmentBoundaries::from_change_points(7, {}), 5), ContractError);
    }

    TEST_CASE("boundary file round-trip") {
        const auto path = std::filesystem::temp_directory_path() / "qfvs_boundaries_test.txt";
        const auto b = SegmentBoundaries::from_change_points(20, {4, 11});
        write_boundaries(path, b);
        const auto back = read_boundaries(path, 20);
        CHECK(back.starts == b.starts);
        CHECK(back.lengths == b.lengths);
        {
            std::ofstream os(path);
            os << "0\nfive\n";
        }
        CHECK_THROWS_AS(read_boundaries(path, 20), FormatError);
        std::filesystem::remove(path);
    }
}
