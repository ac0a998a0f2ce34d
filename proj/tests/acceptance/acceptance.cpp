// Acceptance harness: one PASS/FAIL line per criterion.
//
//   qfvs_acceptance [--only 1,2,...] [--known-failure 7,...] [--work DIR]
//
// Exit status is 0 when every selected criterion passes, or fails only among
// those listed with --known-failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "grad_suite.hpp"
#include "oracles.hpp"
#include "qfvs/trainer.hpp"

namespace fs = std::filesystem;
using namespace qfvs;
using namespace qfvs::testing;

namespace {

// Pinned tolerances and budgets.
constexpr real kSimplexTol = 1e-6;
constexpr real kBceTol = 1e-9;
constexpr real kLossRatio = 0.5;
constexpr real kRankTarget = 0.80;
constexpr real kRandomBand = 0.05;
constexpr std::size_t kMatchingCases = 500;
constexpr std::size_t kSelectionCases = 1000;
constexpr std::size_t kAttentionCases = 1000;
constexpr std::size_t kPlateauTrials = 200;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(real v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::set<int> parse_list(const std::string& text) {
    std::set<int> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.insert(std::stoi(item));
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Outcome iou_example() {
    const auto names = default_concept_names();
    auto id = [&](const std::string& n) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return static_cast<int>(i);
        throw ContractError("concept " + n + " missing from the default lexicon");
    };
    const real v = iou(TagSet{id("CAR"), id("MEN")}, TagSet{id("MEN"), id("TREE"), id("SIGN")});
    return {v == 0.25, "iou({CAR,MEN},{MEN,TREE,SIGN}) = " + fmt(v, 17)};
}

Outcome matching() {
    const auto run = matching_oracle(kMatchingCases, 2);
    std::string d = std::to_string(run.cases) + " matrices up to 6x6, " + std::to_string(run.failures) + " mismatches";
    if (!run.passed()) d += "; first: " + run.first_failure;
    return {run.passed(), d};
}

Outcome gradients() {
    std::size_t failed = 0, total = 0;
    real worst_op = 0;
    std::string first;
    for (const auto& c : op_gradient_cases()) {
        ++total;
        worst_op = std::max(worst_op, c.result.max_rel_err);
        if (!c.passed()) {
            if (failed++ == 0) first = c.name + " " + c.result.worst;
        }
    }
    const auto comp = composite_gradient_case(32);
    if (!comp.passed() && failed++ == 0) first = comp.name + " " + comp.result.worst;
    std::string d = std::to_string(total) + " ops max rel err " + fmt(worst_op, 3) + " (< " + fmt(tol::grad_op) +
                    "), composite T=40 S=3 max rel err " + fmt(comp.result.max_rel_err, 3) + " (< " +
                    fmt(tol::grad_composite) + ")";
    if (failed) d += "; first failure: " + first;
    return {failed == 0, d};
}

Outcome temporal_round_trip() {
    ModelConfig cfg = ModelConfig::paper_default();
    bool ok = cfg.backbone.reduced_len() == 10;
    // Real forward pass through the default network on one full segment.
    QfvsModel model(cfg, 1);
    Rng rng(3);
    ShotSequence shots;
    shots.video_id = "rt";
    shots.feature_dim = cfg.backbone.input_dim;
    for (std::size_t i = 0; i < 200; ++i) {
        for (std::size_t d = 0; d < shots.feature_dim; ++d) shots.features.push_back(rng.uniform(-1, 1));
        shots.tags.emplace_back();
    }
    const SegmentedVideo video = build_segmented(shots, SegmentBoundaries::from_change_points(200, {}), 200);
    Tensor c_v, c_l;
    {
        NoGradGuard no_grad;
        Rng unused(0);
        c_v = model.backbone().encode(video, Mode::eval, unused);
        c_l = model.backbone().forward(video, Tensor::zeros({cfg.backbone.query_dim}), Mode::eval, unused).c_l;
    }
    ok = ok && c_v.shape()[1] == 10 && c_l.shape()[1] == 200;

    // Property: random valid stride layouts map T -> T / reduction -> T.
    std::size_t configs = 0;
    for (int trial = 0; trial < 500; ++trial) {
        BackboneConfig c = BackboneConfig::test_scale();
        std::size_t reduction = 1;
        for (auto& s : c.pool_strides) {
            s = 1 + rng.below(5);
            reduction *= s;
        }
        c.segment_len = reduction * (1 + rng.below(12));
        std::size_t first = 1;
        for (std::size_t d = 1; d <= reduction; ++d)
            if (reduction % d == 0 && rng.bernoulli(0.4)) first = d;
        c.deconv_strides = {first, reduction / first};
        c.validate();
        std::size_t up = c.reduced_len();
        for (auto s : c.deconv_strides) up *= s;
        ok = ok && up == c.segment_len && c.reduced_len() * reduction == c.segment_len;
        ++configs;
    }
    return {ok, "default 200 -> " + std::to_string(c_v.shape()[1]) + " -> " + std::to_string(c_l.shape()[1]) +
                    " by forward pass; " + std::to_string(configs) + " random stride layouts round-trip"};
}

Outcome attention_props() {
    const auto run = attention_properties(kAttentionCases, 5);
    const bool ok = run.max_row_error <= kSimplexTol && run.max_masked_weight == 0 && run.permutation_exact;
    return {ok, std::to_string(run.cases) + " cases: max |row sum - 1| " + fmt(run.max_row_error, 3) +
                    ", max masked weight " + fmt(run.max_masked_weight, 3) + ", permutation " +
                    (run.permutation_exact ? "bit-exact" : "NOT exact")};
}

Outcome kts_recovery() {
    Rng rng(6);
    std::size_t exact = 0, near = 0, dp = 0, dp_total = 0;
    for (std::size_t t = 0; t < kPlateauTrials; ++t) {
        auto v = plateau_video(rng, 3 + rng.below(4), 5, 30, 16, 0);
        if (kts_segment(v.features, v.count, v.dim).change_points() == v.change_points) ++exact;
    }
    for (std::size_t t = 0; t < kPlateauTrials; ++t) {
        auto v = plateau_video(rng, 3 + rng.below(4), 5, 30, 16, 0.05);
        const auto got = kts_segment(v.features, v.count, v.dim).change_points();
        bool ok = got.size() == v.change_points.size();
        for (std::size_t i = 0; ok && i < got.size(); ++i)
            ok = std::abs(static_cast<long>(got[i]) - static_cast<long>(v.change_points[i])) <= 1;
        near += ok;
    }
    for (std::size_t n = 1; n <= 12; ++n)
        for (int rep = 0; rep < 3; ++rep) {
            std::vector<real> f(n * 4);
            for (auto& x : f) x = rng.uniform(-1, 1);
            const ScatterCost cost(f, n, 4);
            const auto fits = fit_change_points(cost, n - 1);
            for (std::size_t m = 0; m < n; ++m) {
                std::vector<std::size_t> cps;
                const real best = exhaustive_scatter(cost, m, cps);
                ++dp_total;
                dp += std::abs(fits[m].scatter - best) <= 1e-12 * std::max<real>(1, std::abs(best));
            }
        }
    const bool ok = exact == kPlateauTrials && near == kPlateauTrials && dp == dp_total;
    return {ok, "sigma=0 exact " + std::to_string(exact) + "/" + std::to_string(kPlateauTrials) +
                    ", sigma=0.05 within 1 shot " + std::to_string(near) + "/" + std::to_string(kPlateauTrials) +
                    ", DP = exhaustive " + std::to_string(dp) + "/" + std::to_string(dp_total) + " (N <= 12)"};
}

Outcome selection() {
    const auto run = selection_oracle(kSelectionCases, 8);
    std::string d = std::to_string(run.cases) + " score vectors (a third with ties), " + std::to_string(run.failures) +
                    " mismatches";
    if (!run.passed()) d += "; first: " + run.first_failure;
    return {run.passed(), d};
}

Outcome bce_point() {
    std::vector<real> labels(101);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 4 == 0;
    const real loss = bce_loss(ShotScores{Tensor::full({labels.size()}, 0.5)}, labels).item();
    return {std::abs(loss - std::log(2.0)) <= kBceTol, "loss " + fmt(loss, 17) + ", |loss - ln 2| = " +
                                                            fmt(std::abs(loss - std::log(2.0)), 3)};
}

// gen-data -> train -> evaluate through the command-line tool.
struct PipelineRun {
    fs::path dir;
    real train_seconds = 0;
    bool ok = false;
    std::string error;
};

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + QFVS_CLI + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return status;
}

PipelineRun run_pipeline(const fs::path& dir) {
    PipelineRun r;
    r.dir = dir;
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path log = dir / "cli.log";
    const std::string bundle = (dir / "bundle.jsonl").string();
    if (run_cli("gen-data --out \"" + bundle + "\" --videos 4 --shots 200 --concepts 12 --noise 0.1 --seed 7 "
                "--scenario-counts 15,15,15,1",
                log) != 0) {
        r.error = "gen-data failed, see " + log.string();
        return r;
    }
    const auto t0 = std::chrono::steady_clock::now();
    if (run_cli("train --data \"" + bundle + "\" --out-dir \"" + (dir / "run").string() + "\" --profile desk --seed 7",
                log) != 0) {
        r.error = "train failed, see " + log.string();
        return r;
    }
    r.train_seconds = std::chrono::duration<real>(std::chrono::steady_clock::now() - t0).count();
    if (run_cli("evaluate --data \"" + bundle + "\" --checkpoint \"" + (dir / "run").string() + "\" --out \"" +
                    (dir / "report.txt").string() + "\"",
                log) != 0) {
        r.error = "evaluate failed, see " + log.string();
        return r;
    }
    r.ok = true;
    return r;
}

std::vector<fs::path> artifacts(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "cli.log") out.push_back(fs::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

Outcome desk_learning(const PipelineRun& run) {
    if (!run.ok) return {false, run.error};
    // (a) per-fold loss ratio from the training log.
    std::map<std::size_t, std::vector<real>> losses;
    {
        std::ifstream is(run.dir / "run" / "train_log.csv");
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            std::stringstream ss(line);
            std::string fold, epoch, loss;
            std::getline(ss, fold, ',');
            std::getline(ss, epoch, ',');
            std::getline(ss, loss, ',');
            losses[std::stoul(fold)].push_back(std::stod(loss));
        }
    }
    bool loss_ok = losses.size() == 4;
    std::string ratios;
    for (const auto& [fold, l] : losses) {
        const real ratio = l.back() / l.front();
        loss_ok = loss_ok && l.size() == 20 && ratio < kLossRatio;
        ratios += (ratios.empty() ? "" : " ") + fmt(ratio, 3);
    }

    // (b) held-out ranking quality against a seeded random scorer.
    const DatasetBundle bundle = load_bundle(run.dir / "bundle.jsonl");
    std::vector<std::shared_ptr<QfvsModel>> models;
    for (std::size_t f = 0; f < bundle.videos.size(); ++f)
        models.push_back(std::shared_ptr<QfvsModel>(
            QfvsModel::load(run.dir / "run" / ("fold" + std::to_string(f) + ".ckpt"))));
    const auto prepared = prepare_videos(bundle, models.front()->config());
    const auto model = run_experiment(bundle, model_scorer(bundle, prepared, models));
    const auto random = run_experiment(bundle, random_scorer(bundle, 7));
    const real rank = model.ranking.value_or(0), base = random.ranking.value_or(0);
    const bool random_ok = std::abs(base - 0.5) <= kRandomBand;
    const bool rank_ok = rank > kRankTarget;
    const bool time_ok = run.train_seconds < 900;
    return {loss_ok && rank_ok && random_ok && time_ok,
            "published benchmark numbers (avg F1 47.47) need the original egocentric videos and pretrained "
            "features and are not reproduced; synthetic substitute: final/first loss per fold " + ratios +
                " (< " + fmt(kLossRatio) + (loss_ok ? ", ok" : ", FAIL") + "), held-out ranking " + fmt(rank, 4) +
                " (> " + fmt(kRankTarget) + (rank_ok ? ", ok" : ", FAIL") + "), random scorer " + fmt(base, 4) +
                (random_ok ? " (ok)" : " (outside 0.50 +- 0.05)") + ", avg F1 " + fmt(100 * model.f1, 4) +
                ", training " + fmt(run.train_seconds, 4) + " s"};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
    if (!a.ok || !b.ok) return {false, a.ok ? b.error : a.error};
    const auto fa = artifacts(a.dir), fb = artifacts(b.dir);
    if (fa != fb) return {false, "the two runs wrote different file sets"};
    std::size_t same = 0;
    std::string diff;
    for (const auto& f : fa) {
        const std::string x = slurp(a.dir / f), y = slurp(b.dir / f);
        if (x == y && fnv1a(x) == fnv1a(y)) ++same;
        else if (diff.empty()) diff = f.string();
    }
    std::string d = std::to_string(same) + "/" + std::to_string(fa.size()) +
                    " files identical (bundle, train log, checkpoints, configs, report)";
    if (!diff.empty()) d += "; first difference: " + diff;
    return {same == fa.size() && !fa.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only, known;
    fs::path work = fs::current_path() / "acceptance_work";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) only = parse_list(argv[++i]);
        else if (a == "--known-failure" && i + 1 < argc) known = parse_list(argv[++i]);
        else if (a == "--work" && i + 1 < argc) work = argv[++i];
        else {
            std::cerr << "usage: qfvs_acceptance [--only LIST] [--known-failure LIST] [--work DIR]\n";
            return 2;
        }
    }
    auto selected = [&](int c) { return only.empty() || only.count(c) > 0; };

    PipelineRun first, second;
    bool pipelines = false;
    auto ensure_pipelines = [&](bool both) {
        if (!pipelines) {
            first = run_pipeline(work / "run_a");
            pipelines = true;
        }
        if (both && second.dir.empty()) second = run_pipeline(work / "run_b");
    };

    struct Criterion {
        int id;
        std::string name;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "IoU worked example", iou_example},
        {2, "matching oracle", matching},
        {3, "gradient suite", gradients},
        {4, "temporal round-trip", temporal_round_trip},
        {5, "attention properties", attention_props},
        {6, "KTS recovery", kts_recovery},
        {7, "desk-scale learning", [&] { ensure_pipelines(false); return desk_learning(first); }},
        {8, "selection contract", selection},
        {9, "determinism", [&] { ensure_pipelines(true); return determinism(first, second); }},
        {10, "BCE analytic point", bce_point},
    };

    int unexpected = 0;
    for (const auto& c : criteria) {
        if (!selected(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const real secs = std::chrono::duration<real>(std::chrono::steady_clock::now() - t0).count();
        const bool expected_failure = !o.pass && known.count(c.id) > 0;
        if (!o.pass && !expected_failure) ++unexpected;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail << " ["
                  << fmt(secs, 3) << " s]" << (expected_failure ? " (known failure)" : "") << std::endl;
    }
    return unexpected == 0 ? 0 : 1;
}
