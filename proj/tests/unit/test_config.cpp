#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qfvs/checkpoint.hpp"
#include "qfvs/config.hpp"
#include "qfvs/model.hpp"

using namespace qfvs;

TEST_SUITE("config") {
    TEST_CASE("key-value files strip comments and report bad lines") {
        const auto path = std::filesystem::temp_directory_path() / "qfvs_config_test.cfg";
        {
            std::ofstream os(path);
            os << "# header\n  a = 1  \nb=two # trailing\n\n";
        }
        const auto kv = read_key_values(path);
        CHECK(kv.at("a") == "1");
        CHECK(kv.at("b") == "two");
        {
            std::ofstream os(path);
            os << "a = 1\nnot a pair\n";
        }
        try {
            read_key_values(path);
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
        write_key_values(path, KeyValues{{"x", "3"}});
        CHECK(read_key_values(path) == KeyValues{{"x", "3"}});
        std::filesystem::remove(path);
    }

    TEST_CASE("value parsing") {
        CHECK(parse_size("k", "42") == 42);
        CHECK_THROWS_AS(parse_size("k", "-1"), ConfigError);
        CHECK_THROWS_AS(parse_size("k", "4x"), ConfigError);
        CHECK(parse_real("k", "1e-4") == 1e-4);
        CHECK_THROWS_AS(parse_real("k", "fast"), ConfigError);
        CHECK(parse_size_list("k", "2,2,5") == std::vector<std::size_t>{2, 2, 5});
        CHECK_THROWS_AS(parse_size_list("k", "2,,5"), ConfigError);
        for (real v : {0.1, 1.0 / 3, 1e-300, 12345.678}) CHECK(parse_real("k", format_real(v)) == v);
        CHECK(format_size_list({1, 2}) == "1,2");
    }

    TEST_CASE("model config couples dimensions and rejects unknown keys") {
        auto m = ModelConfig::paper_default();
        CHECK(m.scoring.visual_dim == m.backbone.output_dim());
        CHECK(m.scoring.query_dim == m.backbone.query_dim);
        CHECK(m.segmentation.max_shots == m.backbone.segment_len);
        CHECK(m.scoring.fused_dim() == 1200);
        CHECK_NOTHROW(m.validate());
        KeyValues kv = to_key_values(m);
        kv["backbone.colour"] = "red";
        CHECK_THROWS_AS(apply_key_values(m, kv), ConfigError);
    }

    TEST_CASE("checkpoint files round-trip and reject corruption") {
        const auto path = std::filesystem::temp_directory_path() / "qfvs_ckpt_test.bin";
        const std::vector<NamedArray> arrays{{"a", {2, 2}, {1, 2, 3, 4}}, {"b", {1}, {-0.5}}};
        save_checkpoint(path, arrays);
        CHECK(load_checkpoint(path) == arrays);
        {
            std::ofstream os(path, std::ios::binary | std::ios::trunc);
            os << "garbage";
        }
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
        std::filesystem::remove(path);
    }
}
