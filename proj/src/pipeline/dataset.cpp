#include "qfvs/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "qfvs/checkpoint.hpp"
#include "qfvs/rng.hpp"

namespace qfvs {

using json = nlohmann::ordered_json;

namespace {

std::string upper(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::vector<real> unit_gaussian(Rng& rng, std::size_t dim) {
    std::vector<real> v(dim);
    real n = 0;
    for (auto& x : v) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

}  // namespace

ConceptLexicon::ConceptLexicon(std::vector<std::string> names, std::size_t embedding_dim, std::vector<real> embeddings)
    : names_(std::move(names)), dim_(embedding_dim), embeddings_(std::move(embeddings)) {
    if (embeddings_.size() != names_.size() * dim_)
        throw ShapeError("lexicon: " + std::to_string(embeddings_.size()) + " embedding values for " +
                         std::to_string(names_.size()) + " concepts of dim " + std::to_string(dim_));
    std::set<std::string> seen;
    for (const auto& n : names_)
        if (n.empty() || !seen.insert(upper(n)).second) throw ContractError("lexicon: duplicate or empty concept name '" + n + "'");
}

std::span<const real> ConceptLexicon::embedding(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
        throw ContractError("concept id " + std::to_string(id) + " outside the lexicon");
    return std::span<const real>(embeddings_).subspan(static_cast<std::size_t>(id) * dim_, dim_);
}

std::optional<int> ConceptLexicon::find(const std::string& name) const {
    const auto key = upper(name);
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (upper(names_[i]) == key) return static_cast<int>(i);
    return std::nullopt;
}

std::vector<std::string> ConceptLexicon::nearest(const std::string& name, std::size_t count) const {
    std::vector<std::pair<std::size_t, std::size_t>> d;
    for (std::size_t i = 0; i < names_.size(); ++i) d.emplace_back(edit_distance(upper(name), upper(names_[i])), i);
    std::stable_sort(d.begin(), d.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(count, d.size()); ++i) out.push_back(names_[d[i].second]);
    return out;
}

void ConceptLexicon::replace_embeddings(const std::map<std::string, std::vector<real>>& table) {
    if (table.empty()) throw ContractError("embedding table is empty");
    const std::size_t dim = table.begin()->second.size();
    std::vector<real> values;
    for (const auto& n : names_) {
        auto it = table.find(upper(n));
        if (it == table.end()) throw ContractError("embedding table lacks concept " + n);
        if (it->second.size() != dim) throw ShapeError("embedding for " + n + " has inconsistent width");
        values.insert(values.end(), it->second.begin(), it->second.end());
    }
    dim_ = dim;
    embeddings_ = std::move(values);
}

std::vector<std::string> default_concept_names(std::size_t count) {
    static const std::vector<std::string> names{
        "BAG",      "BEACH",   "BED",     "BIKE",     "BIRD",    "BLUE",     "BOOK",     "BUILDING",
        "CAR",      "CHAIR",   "CHOCOLATE", "COMPUTER", "COOKIE", "DESK",    "DOG",      "DRINK",
        "FACE",     "FLOWER",  "FOOD",    "GLASSES",  "GRASS",   "HAIR",     "HALL",     "HAND",
        "HAT",      "KIDS",    "LADY",    "LEGS",     "LIGHT",   "MARKET",   "MEN",      "MUSIC",
        "OFFICE",   "PAINTING", "PHONE",  "PLANT",    "ROAD",    "ROOM",     "SHOES",    "SHOP",
        "SIGN",     "SKY",     "STREET",  "SUNGLASSES", "TABLE", "TOY",      "TREE",     "WATER"};
    if (count > names.size())
        throw ConfigError("the default lexicon has " + std::to_string(names.size()) + " concepts, " +
                          std::to_string(count) + " requested");
    return {names.begin(), names.begin() + static_cast<std::ptrdiff_t>(count)};
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::both_joint: return "both-joint";
        case Scenario::both_disjoint: return "both-disjoint";
        case Scenario::one_present: return "one-present";
        case Scenario::none_present: return "none-present";
    }
    return "?";
}

Scenario parse_scenario(const std::string& text) {
    for (auto s : {Scenario::both_joint, Scenario::both_disjoint, Scenario::one_present, Scenario::none_present})
        if (to_string(s) == text) return s;
    throw ParseError("unknown scenario '" + text + "'");
}

Scenario classify_scenario(const ShotSequence& video, int c1, int c2) {
    bool has1 = false, has2 = false, joint = false;
    for (const auto& t : video.tags) {
        const bool a = t.contains(c1), b = t.contains(c2);
        has1 |= a;
        has2 |= b;
        joint |= a && b;
    }
    if (joint) return Scenario::both_joint;
    if (has1 && has2) return Scenario::both_disjoint;
    if (has1 || has2) return Scenario::one_present;
    return Scenario::none_present;
}

QuerySpec make_query(const ConceptLexicon& lexicon, int c1, int c2, Scenario scenario) {
    if (c1 == c2) throw ContractError("a query needs two distinct concepts");
    QuerySpec q;
    q.c1 = c1;
    q.c2 = c2;
    q.scenario = scenario;
    const auto e1 = lexicon.embedding(c1), e2 = lexicon.embedding(c2);
    q.e1.assign(e1.begin(), e1.end());
    q.e2.assign(e2.begin(), e2.end());
    q.h_q.resize(q.e1.size());
    for (std::size_t i = 0; i < q.h_q.size(); ++i) q.h_q[i] = (q.e1[i] + q.e2[i]) / 2;
    return q;
}

std::vector<real> ground_truth_labels(const ShotSequence& video, int c1, int c2) {
    std::vector<real> labels(video.size());
    for (std::size_t i = 0; i < video.size(); ++i)
        labels[i] = video.tags[i].contains(c1) || video.tags[i].contains(c2) ? 1 : 0;
    return labels;
}

std::vector<std::size_t> oracle_summary(const ShotSequence& video, int c1, int c2) {
    std::vector<std::size_t> out;
    const auto labels = ground_truth_labels(video, c1, c2);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != 0) out.push_back(i);
    return out;
}

QuerySpec DatasetBundle::query(std::size_t q) const {
    const auto& b = queries.at(q);
    return make_query(lexicon, b.c1, b.c2, b.scenario);
}

std::vector<std::size_t> DatasetBundle::queries_of(std::size_t video) const {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < queries.size(); ++q)
        if (queries[q].video == video) out.push_back(q);
    return out;
}

std::optional<std::size_t> DatasetBundle::find_video(const std::string& id) const {
    for (std::size_t v = 0; v < videos.size(); ++v)
        if (videos[v].video_id == id) return v;
    return std::nullopt;
}

DatasetBundle generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_videos < 2) throw ConfigError("leave-one-video-out needs at least 2 videos");
    if (cfg.shots_per_video == 0 || cfg.feature_dim == 0 || cfg.embedding_dim == 0)
        throw ConfigError("shots, feature_dim and embedding_dim must be positive");
    if (cfg.n_concepts < 4) throw ConfigError("the four query scenarios need a lexicon of at least 4 concepts");
    if (!(cfg.noise_sigma >= 0)) throw ConfigError("noise sigma must be non-negative");
    if (cfg.scene_min == 0 || cfg.scene_min > cfg.scene_max) throw ConfigError("invalid scene length range");
    if (cfg.scenario_counts.size() != 4) throw ConfigError("scenario_counts needs one entry per scenario");
    const std::size_t present =
        cfg.present_per_video ? cfg.present_per_video : std::max<std::size_t>(3, cfg.n_concepts * 2 / 3);
    if (present < 2 || present + 2 > cfg.n_concepts)
        throw ConfigError("each video must show at least 2 concepts and miss at least 2 for the scenarios");

    Rng root(cfg.seed);
    Rng concept_rng = root.fork(1);
    DatasetBundle b;
    const auto names = default_concept_names(cfg.n_concepts);
    std::vector<real> emb;
    std::vector<std::vector<real>> protos;
    for (std::size_t k = 0; k < cfg.n_concepts; ++k) {
        protos.push_back(unit_gaussian(concept_rng, cfg.feature_dim));
        const auto e = unit_gaussian(concept_rng, cfg.embedding_dim);
        emb.insert(emb.end(), e.begin(), e.end());
    }
    b.lexicon = ConceptLexicon(names, cfg.embedding_dim, std::move(emb));

    for (std::size_t v = 0; v < cfg.n_videos; ++v) {
        Rng rng = root.fork(100 + v);
        std::vector<int> ids(cfg.n_concepts);
        std::iota(ids.begin(), ids.end(), 0);
        rng.shuffle(ids.begin(), ids.end());
        ids.resize(present);

        ShotSequence video;
        video.video_id = "video" + std::to_string(v);
        video.feature_dim = cfg.feature_dim;
        while (video.size() < cfg.shots_per_video) {
            std::size_t len = cfg.scene_min + rng.below(cfg.scene_max - cfg.scene_min + 1);
            len = std::min(len, cfg.shots_per_video - video.size());
            rng.shuffle(ids.begin(), ids.end());
            const std::size_t m = std::min<std::size_t>(1 + rng.below(3), ids.size());
            const std::vector<int> scene(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
            for (std::size_t s = 0; s < len; ++s) {
                std::vector<int> tags;
                for (int c : scene)
                    if (rng.bernoulli(cfg.keep_prob)) tags.push_back(c);
                std::vector<real> f(cfg.feature_dim, 0);
                for (int c : tags)
                    for (std::size_t d = 0; d < f.size(); ++d) f[d] += protos[static_cast<std::size_t>(c)][d];
                real n = 0;
                for (real x : f) n += x * x;
                n = std::sqrt(n);
                for (auto& x : f) {
                    if (n > 0) x /= n;
                    x += cfg.noise_sigma * rng.normal();
                }
                video.features.insert(video.features.end(), f.begin(), f.end());
                video.tags.emplace_back(std::move(tags));
            }
        }

        std::vector<std::vector<std::pair<int, int>>> by_scenario(4);
        for (int c1 = 0; c1 < static_cast<int>(cfg.n_concepts); ++c1)
            for (int c2 = c1 + 1; c2 < static_cast<int>(cfg.n_concepts); ++c2)
                by_scenario[static_cast<std::size_t>(classify_scenario(video, c1, c2))].emplace_back(c1, c2);
        for (std::size_t s = 0; s < 4; ++s) {
            auto& cands = by_scenario[s];
            rng.shuffle(cands.begin(), cands.end());
            for (std::size_t i = 0; i < std::min(cfg.scenario_counts[s], cands.size()); ++i) {
                const auto [c1, c2] = cands[i];
                b.queries.push_back({v, c1, c2, static_cast<Scenario>(s), oracle_summary(video, c1, c2)});
            }
        }
        b.videos.push_back(std::move(video));
    }
    return b;
}

std::vector<std::size_t> audit_scenarios(const DatasetBundle& b) {
    std::vector<std::size_t> counts(4, 0);
    for (const auto& q : b.queries) {
        if (q.video >= b.videos.size()) throw ContractError("query references a missing video");
        const auto& video = b.videos[q.video];
        const Scenario actual = classify_scenario(video, q.c1, q.c2);
        if (actual != q.scenario)
            throw ContractError("query (" + b.lexicon.name(q.c1) + "," + b.lexicon.name(q.c2) + ") on " + video.video_id +
                                " is tagged " + to_string(q.scenario) + " but the tags say " + to_string(actual));
        if (q.oracle != oracle_summary(video, q.c1, q.c2))
            throw ContractError("stored oracle summary disagrees with the tags on " + video.video_id);
        ++counts[static_cast<std::size_t>(actual)];
    }
    return counts;
}

std::string serialize_bundle(const DatasetBundle& b) {
    std::string out;
    auto emit = [&](const json& j) {
        out += j.dump();
        out += '\n';
    };
    emit({{"type", "header"},
          {"format", "qfvs-bundle"},
          {"version", 1},
          {"concepts", b.lexicon.size()},
          {"videos", b.videos.size()},
          {"queries", b.queries.size()},
          {"embedding_dim", b.lexicon.embedding_dim()},
          {"feature_dim", b.feature_dim()},
          {"split", b.split}});
    for (std::size_t k = 0; k < b.lexicon.size(); ++k) {
        const auto e = b.lexicon.embedding(static_cast<int>(k));
        emit({{"type", "concept"}, {"id", k}, {"name", b.lexicon.names()[k]}, {"embedding", std::vector<real>(e.begin(), e.end())}});
    }
    for (std::size_t v = 0; v < b.videos.size(); ++v) {
        const auto& video = b.videos[v];
        emit({{"type", "video"}, {"index", v}, {"id", video.video_id}, {"shots", video.size()}, {"shot_seconds", video.shot_seconds}});
        for (std::size_t i = 0; i < video.size(); ++i) {
            const auto f = video.feature(i);
            emit({{"type", "shot"},
                  {"video", v},
                  {"index", i},
                  {"tags", video.tags[i].ids()},
                  {"feature", std::vector<real>(f.begin(), f.end())}});
        }
    }
    for (const auto& q : b.queries)
        emit({{"type", "query"},
              {"video", q.video},
              {"concepts", {q.c1, q.c2}},
              {"scenario", to_string(q.scenario)},
              {"oracle", q.oracle}});
    emit({{"type", "end"}});
    return out;
}

void save_bundle(const DatasetBundle& b, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os << serialize_bundle(b);
    if (!os) throw FormatError("write failed for " + path.string());
}

DatasetBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open bundle " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_bundle(ss.str(), path.string());
}

DatasetBundle parse_bundle(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) -> ParseError {
        return ParseError(source + ":" + std::to_string(lineno) + ": " + msg);
    };

    std::size_t n_concepts = 0, n_videos = 0, n_queries = 0, emb_dim = 0, feat_dim = 0;
    std::vector<std::string> names;
    std::vector<real> embeddings;
    DatasetBundle b;
    std::size_t expected_shots = 0;
    bool header = false, ended = false;

    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (ended) throw fail("content after the end record");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw fail(std::string("malformed JSON: ") + e.what());
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (!header) {
                if (type != "header") throw fail("first record must be the header");
                if (j.at("format").get<std::string>() != "qfvs-bundle" || j.at("version").get<int>() != 1)
                    throw fail("unsupported bundle format or version");
                n_concepts = j.at("concepts").get<std::size_t>();
                n_videos = j.at("videos").get<std::size_t>();
                n_queries = j.at("queries").get<std::size_t>();
                emb_dim = j.at("embedding_dim").get<std::size_t>();
                feat_dim = j.at("feature_dim").get<std::size_t>();
                b.split = j.at("split").get<std::string>();
                header = true;
            } else if (type == "concept") {
                if (j.at("id").get<std::size_t>() != names.size()) throw fail("concept ids must be 0,1,2,... in order");
                if (!b.videos.empty() || !b.queries.empty()) throw fail("concept records must precede videos");
                names.push_back(j.at("name").get<std::string>());
                const auto e = j.at("embedding").get<std::vector<real>>();
                if (e.size() != emb_dim) throw fail("embedding has " + std::to_string(e.size()) + " values, header says " + std::to_string(emb_dim));
                embeddings.insert(embeddings.end(), e.begin(), e.end());
            } else if (type == "video") {
                if (names.size() != n_concepts) throw fail("expected " + std::to_string(n_concepts) + " concepts before videos");
                if (!b.videos.empty() && b.videos.back().size() != expected_shots)
                    throw fail("previous video is missing shots");
                if (j.at("index").get<std::size_t>() != b.videos.size()) throw fail("video indices must be 0,1,2,... in order");
                if (!b.queries.empty()) throw fail("video records must precede queries");
                ShotSequence v;
                v.video_id = j.at("id").get<std::string>();
                v.feature_dim = feat_dim;
                v.shot_seconds = j.at("shot_seconds").get<real>();
                expected_shots = j.at("shots").get<std::size_t>();
                if (expected_shots == 0) throw fail("a video needs at least one shot");
                b.videos.push_back(std::move(v));
            } else if (type == "shot") {
                if (b.videos.empty() || j.at("video").get<std::size_t>() != b.videos.size() - 1)
                    throw fail("shot does not belong to the current video");
                auto& v = b.videos.back();
                if (j.at("index").get<std::size_t>() != v.size() || v.size() >= expected_shots)
                    throw fail("unexpected shot index");
                const auto f = j.at("feature").get<std::vector<real>>();
                if (f.size() != feat_dim) throw fail("feature has " + std::to_string(f.size()) + " values, header says " + std::to_string(feat_dim));
                auto tags = j.at("tags").get<std::vector<int>>();
                for (int t : tags)
                    if (t < 0 || static_cast<std::size_t>(t) >= n_concepts) throw fail("tag " + std::to_string(t) + " outside the lexicon");
                v.features.insert(v.features.end(), f.begin(), f.end());
                v.tags.emplace_back(std::move(tags));
            } else if (type == "query") {
                if (b.videos.size() != n_videos || (!b.videos.empty() && b.videos.back().size() != expected_shots))
                    throw fail("queries must follow all videos and shots");
                BundleQuery q;
                q.video = j.at("video").get<std::size_t>();
                const auto c = j.at("concepts").get<std::vector<int>>();
                if (c.size() != 2 || c[0] == c[1]) throw fail("a query needs two distinct concepts");
                for (int x : c)
                    if (x < 0 || static_cast<std::size_t>(x) >= n_concepts) throw fail("query concept outside the lexicon");
                if (q.video >= n_videos) throw fail("query references a missing video");
                q.c1 = c[0];
                q.c2 = c[1];
                q.scenario = parse_scenario(j.at("scenario").get<std::string>());
                q.oracle = j.at("oracle").get<std::vector<std::size_t>>();
                b.queries.push_back(std::move(q));
            } else if (type == "end") {
                ended = true;
            } else {
                throw fail("unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw fail(std::string("bad record: ") + e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw fail(e.what());
        }
    }
    if (!header) throw ParseError(source + ": empty bundle");
    if (!ended) throw ParseError(source + ":" + std::to_string(lineno) + ": truncated bundle (no end record)");
    if (b.videos.size() != n_videos || b.queries.size() != n_queries || names.size() != n_concepts)
        throw ParseError(source + ": record counts disagree with the header");
    if (!b.videos.empty() && b.videos.back().size() != expected_shots) throw ParseError(source + ": last video is missing shots");
    b.lexicon = ConceptLexicon(std::move(names), emb_dim, std::move(embeddings));
    return b;
}

std::map<std::string, std::vector<real>> load_embedding_table(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open embedding table " + path.string());
    std::map<std::string, std::vector<real>> table;
    std::string line;
    std::size_t lineno = 0, width = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw ParseError(where + ": expected concept<TAB>values");
        std::istringstream vs(line.substr(tab + 1));
        std::vector<real> values;
        std::string tok;
        while (vs >> tok) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError(where + ": '" + tok + "' is not a number");
            }
        }
        if (values.empty()) throw ParseError(where + ": no values");
        if (width == 0) width = values.size();
        if (values.size() != width) throw ParseError(where + ": row width " + std::to_string(values.size()) + " differs from " + std::to_string(width));
        table[upper(line.substr(0, tab))] = std::move(values);
    }
    return table;
}

}  // namespace qfvs
