#pragma once

// Annotated videos, concept lexicon and (video, query) pairs: synthetic
// generation, label and oracle derivation, and the line-delimited JSON
// bundle file.
//
// Bundle file, one JSON object per line, in this order:
//   {"type":"header","format":"qfvs-bundle","version":1,"concepts":K,"videos":V,
//    "queries":Q,"embedding_dim":E,"feature_dim":C,"split":"leave-one-video-out"}
//   {"type":"concept","id":k,"name":"FOOD","embedding":[E numbers]}      x K
//   {"type":"video","index":v,"id":"video0","shots":N,"shot_seconds":5}  x V, each
//   {"type":"shot","video":v,"index":i,"tags":[ids],"feature":[C numbers]} x N
//   {"type":"query","video":v,"concepts":[c1,c2],"scenario":"both-joint","oracle":[shots]} x Q
//   {"type":"end"}
// A file without the end record is truncated and rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfvs/tensor.hpp"
#include "qfvs/video.hpp"

namespace qfvs {

class ParseError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ConceptLexicon {
   public:
    ConceptLexicon() = default;
    ConceptLexicon(std::vector<std::string> names, std::size_t embedding_dim, std::vector<real> embeddings);

    std::size_t size() const { return names_.size(); }
    std::size_t embedding_dim() const { return dim_; }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    std::span<const real> embedding(int id) const;
    std::optional<int> find(const std::string& name) const;  // case-insensitive
    // Closest names by edit distance, for error messages.
    std::vector<std::string> nearest(const std::string& name, std::size_t count = 3) const;

    // Rows keyed by concept name; every lexicon concept must be present.
    void replace_embeddings(const std::map<std::string, std::vector<real>>& table);

    bool operator==(const ConceptLexicon&) const = default;

   private:
    std::vector<std::string> names_;
    std::size_t dim_ = 0;
    std::vector<real> embeddings_;
};

// 48 everyday-object concept names; the first `count` are used.
std::vector<std::string> default_concept_names(std::size_t count = 48);

enum class Scenario { both_joint, both_disjoint, one_present, none_present };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& text);
// Derived from the tags actually present in `video`.
Scenario classify_scenario(const ShotSequence& video, int c1, int c2);

struct QuerySpec {
    int c1 = 0, c2 = 0;
    std::vector<real> e1, e2;
    std::vector<real> h_q;  // (e1 + e2) / 2
    Scenario scenario = Scenario::none_present;

    Tensor query_tensor() const { return Tensor::from_data({h_q.size()}, h_q); }
};

QuerySpec make_query(const ConceptLexicon& lexicon, int c1, int c2, Scenario scenario);

// label_t = 1 iff tags_t contains c1 or c2.
std::vector<real> ground_truth_labels(const ShotSequence& video, int c1, int c2);
// Every shot with label 1, ascending.
std::vector<std::size_t> oracle_summary(const ShotSequence& video, int c1, int c2);

struct BundleQuery {
    std::size_t video = 0;
    int c1 = 0, c2 = 0;
    Scenario scenario = Scenario::none_present;
    std::vector<std::size_t> oracle;

    bool operator==(const BundleQuery&) const = default;
};

struct DatasetBundle {
    ConceptLexicon lexicon;
    std::vector<ShotSequence> videos;
    std::vector<BundleQuery> queries;
    std::string split = "leave-one-video-out";

    std::size_t feature_dim() const { return videos.empty() ? 0 : videos.front().feature_dim; }
    QuerySpec query(std::size_t q) const;
    std::vector<std::size_t> queries_of(std::size_t video) const;
    std::optional<std::size_t> find_video(const std::string& id) const;

    bool operator==(const DatasetBundle&) const = default;
};

struct SyntheticConfig {
    std::size_t n_videos = 4;
    std::size_t shots_per_video = 200;
    std::size_t feature_dim = 64;
    std::size_t n_concepts = 48;
    std::size_t embedding_dim = 300;
    real noise_sigma = 0.1;
    std::uint64_t seed = 1;
    // Concepts that may appear in a given video.
    std::size_t present_per_video = 0;  // 0 = two thirds of the lexicon
    std::size_t scene_min = 10, scene_max = 40;
    real keep_prob = 0.75;  // chance a shot shows each concept of its scene
    // Queries per video for each scenario, in Scenario order.
    std::vector<std::size_t> scenario_counts{5, 5, 5, 1};
};

// Throws ConfigError when the lexicon cannot support the scenarios.
DatasetBundle generate_synthetic(const SyntheticConfig& cfg);

// Counts of (video, query) pairs per scenario; throws ContractError if any
// stored scenario or oracle disagrees with the tags.
std::vector<std::size_t> audit_scenarios(const DatasetBundle& bundle);

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& path);
std::string serialize_bundle(const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::filesystem::path& path);
DatasetBundle parse_bundle(const std::string& text, const std::string& source = "<bundle>");

// "name<TAB>v1 v2 ..." per line.
std::map<std::string, std::vector<real>> load_embedding_table(const std::filesystem::path& path);

}  // namespace qfvs
