// qfvs: data generation, training, summarization, evaluation and graph export.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qfvs/trainer.hpp"

namespace fs = std::filesystem;
using namespace qfvs;

namespace {

class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("QFVS_SEED")) {
        try {
            return parse_size("QFVS_SEED", env);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    return 1;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    return os;
}

fs::path fold_checkpoint(const fs::path& dir, std::size_t fold) { return dir / ("fold" + std::to_string(fold) + ".ckpt"); }

std::size_t resolve_video(const DatasetBundle& b, const std::string& text) {
    if (auto v = b.find_video(text)) return *v;
    std::size_t idx = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), idx);
    if (ec == std::errc() && p == text.data() + text.size() && idx < b.videos.size()) return idx;
    throw UsageError("unknown video '" + text + "'");
}

std::pair<int, int> resolve_query(const ConceptLexicon& lex, const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw UsageError("--query expects two concepts as c1,c2");
    int ids[2];
    const std::string parts[2] = {text.substr(0, comma), text.substr(comma + 1)};
    for (int i = 0; i < 2; ++i) {
        auto id = lex.find(parts[i]);
        if (!id) {
            std::string msg = "unknown concept '" + parts[i] + "'; nearest:";
            for (const auto& n : lex.nearest(parts[i])) msg += " " + n;
            throw UsageError(msg);
        }
        ids[i] = *id;
    }
    if (ids[0] == ids[1]) throw UsageError("--query concepts must differ");
    return {ids[0], ids[1]};
}

// Per-shot table written next to a summary file.
struct ReportRow {
    std::size_t shot = 0;
    real score = 0;
    std::string category;
    bool selected = false, in_ground_truth = false, query1 = false, query2 = false;
};

struct RowsFile {
    std::string query1, query2, scenario;
    std::vector<ReportRow> rows;
};

std::string category_of(bool q1, bool q2) {
    if (q1) return "query1-relevant";
    if (q2) return "query2-relevant";
    return "irrelevant";
}

void write_rows(const fs::path& path, const RowsFile& f) {
    auto os = open_out(path);
    os << "# query1 = " << f.query1 << "\n# query2 = " << f.query2 << "\n# scenario = " << f.scenario << '\n';
    os << "shot_index,score,category,selected,in_ground_truth,query1,query2\n";
    for (const auto& r : f.rows)
        os << r.shot << ',' << format_real(r.score) << ',' << r.category << ',' << int(r.selected) << ','
           << int(r.in_ground_truth) << ',' << int(r.query1) << ',' << int(r.query2) << '\n';
}

RowsFile read_rows(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    RowsFile f;
    std::string line;
    std::size_t lineno = 0;
    auto bad = [&](const std::string& msg) { return FormatError(path.string() + ":" + std::to_string(lineno) + ": " + msg); };
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto eq = line.find(" = ");
            if (eq == std::string::npos) throw bad("malformed metadata line");
            const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 3);
            if (key == "query1") f.query1 = value;
            else if (key == "query2") f.query2 = value;
            else if (key == "scenario") f.scenario = value;
            continue;
        }
        if (!header) {
            if (line != "shot_index,score,category,selected,in_ground_truth,query1,query2") throw bad("unexpected header");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (cells.size() != 7) throw bad("expected 7 fields");
        auto flag = [&](const std::string& c) {
            if (c != "0" && c != "1") throw bad("flags must be 0 or 1");
            return c == "1";
        };
        ReportRow r;
        try {
            r.shot = parse_size("shot_index", cells[0]);
            r.score = parse_real("score", cells[1]);
        } catch (const ConfigError& e) {
            throw bad(e.what());
        }
        if (r.shot != f.rows.size()) throw bad("shot indices must be 0,1,2,... in order");
        r.category = cells[2];
        r.selected = flag(cells[3]);
        r.in_ground_truth = flag(cells[4]);
        r.query1 = flag(cells[5]);
        r.query2 = flag(cells[6]);
        f.rows.push_back(r);
    }
    if (!header) throw FormatError(path.string() + ": missing header");
    return f;
}

std::string svg_open(real w, real h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

void write_timeline_svg(const fs::path& path, const RowsFile& f) {
    const real step = 4, left = 90, band = 20;
    const std::size_t n = f.rows.size();
    auto os = open_out(path);
    os << svg_open(left + step * static_cast<real>(n) + 10, 4 * band + 20);
    const char* names[4] = {"gt query1", "gt query2", "gt union", "machine"};
    const char* colors[4] = {"purple", "blue", "gray", "red"};
    for (int b = 0; b < 4; ++b) {
        const real y = 10 + b * band;
        os << "<text x=\"2\" y=\"" << y + 14 << "\" font-size=\"11\">" << names[b] << "</text>\n";
        for (const auto& r : f.rows) {
            const bool on = b == 0 ? r.query1 : b == 1 ? r.query2 : b == 2 ? r.in_ground_truth : r.selected;
            if (on)
                os << "<rect x=\"" << left + step * static_cast<real>(r.shot) << "\" y=\"" << y << "\" width=\"" << step
                   << "\" height=\"" << band - 4 << "\" fill=\"" << colors[b] << "\"/>\n";
        }
    }
    os << "</svg>\n";
}

void write_scores_svg(const fs::path& path, const RowsFile& f) {
    const real step = 4, h = 200, pad = 10;
    auto os = open_out(path);
    os << svg_open(2 * pad + step * static_cast<real>(f.rows.size()), h + 2 * pad);
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
    for (const auto& r : f.rows) os << pad + step * static_cast<real>(r.shot) << ',' << pad + h * (1 - r.score) << ' ';
    os << "\"/>\n";
    for (const auto& r : f.rows) {
        if (r.category == "irrelevant") continue;
        os << "<circle cx=\"" << pad + step * static_cast<real>(r.shot) << "\" cy=\"" << pad + h * (1 - r.score)
           << "\" r=\"2\" fill=\"" << (r.category == "query1-relevant" ? "purple" : "blue") << "\"/>\n";
    }
    os << "</svg>\n";
}

struct Options {
    // gen-data
    fs::path out;
    std::size_t videos = 4, shots = 200, dim = 64, concepts = 48;
    real noise = 0.1;
    std::string scenario_counts = "5,5,5,1";
    std::uint64_t seed = 1;
    // train
    fs::path data, config, out_dir;
    std::string profile = "desk";
    std::optional<std::size_t> epochs, threads;
    std::optional<real> lr;
    bool resume = false, force = false;
    // summarize / evaluate
    fs::path checkpoint, summary_file;
    std::string video, query;
    std::optional<real> ratio;
    // report-graphs
    fs::path summary, rows, out_prefix;
    bool svg = false, verify = false;
};

int cmd_gen_data(const Options& o) {
    if (o.videos < 2) throw UsageError("--videos must be at least 2 for leave-one-video-out");
    SyntheticConfig cfg;
    cfg.n_videos = o.videos;
    cfg.shots_per_video = o.shots;
    cfg.feature_dim = o.dim;
    cfg.n_concepts = o.concepts;
    cfg.noise_sigma = o.noise;
    cfg.seed = o.seed;
    try {
        cfg.scenario_counts = parse_size_list("--scenario-counts", o.scenario_counts);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (cfg.scenario_counts.size() != 4) throw UsageError("--scenario-counts needs four entries");
    DatasetBundle b = generate_synthetic(cfg);
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    save_bundle(b, o.out);
    const auto counts = audit_scenarios(b);
    std::cout << "wrote " << o.out.string() << ": " << b.videos.size() << " videos, " << b.queries.size() << " queries\n";
    for (int s = 0; s < 4; ++s) std::cout << "scenario " << to_string(static_cast<Scenario>(s)) << " = " << counts[s] << '\n';
    return 0;
}

TrainConfig load_train_config(const Options& o, const DatasetBundle& b) {
    TrainConfig cfg;
    if (o.profile == "desk") cfg = TrainConfig::desk_profile();
    else if (o.profile == "test") cfg.model = ModelConfig::test_scale();
    else if (o.profile == "paper") cfg.model = ModelConfig::paper_default();
    else throw UsageError("--profile must be desk, test or paper");
    cfg.seed = o.seed;
    cfg.model.backbone.input_dim = b.feature_dim();
    cfg.model.link();
    if (!o.config.empty()) apply_key_values(cfg, read_key_values(o.config));
    if (o.lr) cfg.lr = *o.lr;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.threads) cfg.threads = *o.threads;
    cfg.validate();
    return cfg;
}

int cmd_train(const Options& o) {
    if (o.resume && o.force) throw UsageError("--resume and --force are exclusive");
    DatasetBundle b = load_bundle(o.data);
    TrainConfig cfg = load_train_config(o, b);
    fs::create_directories(o.out_dir);
    std::vector<std::size_t> existing;
    for (std::size_t f = 0; f < b.videos.size(); ++f)
        if (fs::exists(fold_checkpoint(o.out_dir, f))) existing.push_back(f);
    if (!existing.empty() && !o.resume && !o.force)
        throw UsageError(o.out_dir.string() + " already holds checkpoints; pass --resume to reuse or --force to overwrite");

    write_key_values(o.out_dir / "train.cfg", to_key_values(cfg));
    TrainHooks hooks;
    hooks.on_epoch = [](const EpochRecord& r) {
        std::cerr << "fold " << r.fold << " epoch " << r.epoch << " loss " << format_real(r.mean_loss) << '\n';
    };
    if (o.resume)
        hooks.reuse = [&](std::size_t fold) -> std::shared_ptr<QfvsModel> {
            const auto path = fold_checkpoint(o.out_dir, fold);
            if (!fs::exists(path)) return nullptr;
            return std::shared_ptr<QfvsModel>(QfvsModel::load(path));
        };
    auto folds = train(b, cfg, hooks);
    std::vector<EpochRecord> log;
    for (const auto& f : folds) {
        log.insert(log.end(), f.epochs.begin(), f.epochs.end());
        if (!f.epochs.empty()) f.model->save(fold_checkpoint(o.out_dir, f.fold));
        std::cout << "fold " << f.fold << ": " << (f.epochs.empty() ? "reused" : "trained") << ", "
                  << f.samples_seen << " samples\n";
    }
    auto log_os = open_out(o.out_dir / "train_log.csv");
    write_train_log(log_os, log);
    return 0;
}

int cmd_summarize(const Options& o) {
    DatasetBundle b = load_bundle(o.data);
    const std::size_t v = resolve_video(b, o.video);
    const auto [c1, c2] = resolve_query(b.lexicon, o.query);
    auto model = QfvsModel::load(o.checkpoint);
    const ShotSequence& video = b.videos[v];
    const Scenario scenario = classify_scenario(video, c1, c2);
    QuerySpec q = make_query(b.lexicon, c1, c2, scenario);

    std::vector<real> scores;
    {
        NoGradGuard no_grad;
        Rng unused(0);
        scores = model->forward(model->prepare(video), q.query_tensor(), Mode::eval, unused).values();
    }
    for (real s : scores)
        if (!std::isfinite(s)) throw NumericError("non-finite shot score");
    const Summary summary = select_summary(scores, o.ratio.value_or(model->config().scoring.summary_ratio));
    write_summary_file(o.out, scores, summary);

    RowsFile rows{b.lexicon.name(c1), b.lexicon.name(c2), to_string(scenario), {}};
    std::vector<bool> selected(scores.size(), false);
    for (auto i : summary.indices) selected[i] = true;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool h1 = video.tags[i].contains(c1), h2 = video.tags[i].contains(c2);
        rows.rows.push_back({i, scores[i], category_of(h1, h2), selected[i], h1 || h2, h1, h2});
    }
    write_rows(fs::path(o.out.string() + ".rows.csv"), rows);
    std::cout << "video = " << video.video_id << "\nquery = " << rows.query1 << ',' << rows.query2
              << "\nscenario = " << rows.scenario << "\nselected = " << summary.indices.size() << " of "
              << scores.size() << '\n';
    return 0;
}

int cmd_evaluate(const Options& o) {
    DatasetBundle b = load_bundle(o.data);
    if (o.checkpoint.empty() == o.summary_file.empty())
        throw UsageError("pass exactly one of --checkpoint and --summary-file");
    auto os = open_out(o.out);
    if (!o.summary_file.empty()) {
        if (o.video.empty() || o.query.empty()) throw UsageError("--summary-file needs --video and --query");
        const std::size_t v = resolve_video(b, o.video);
        const auto [c1, c2] = resolve_query(b.lexicon, o.query);
        const SummaryFile sf = read_summary_file(o.summary_file);
        const ShotSequence& video = b.videos[v];
        if (sf.scores.size() != video.size())
            throw FormatError(o.summary_file.string() + ": " + std::to_string(sf.scores.size()) + " shots, video has " +
                              std::to_string(video.size()));
        const auto gt = oracle_summary(video, c1, c2);
        const EvalReport r = evaluate_summary(gt, sf.summary.indices, video.tags);
        os << "video = " << video.video_id << "\nconcepts = " << b.lexicon.name(c1) << ',' << b.lexicon.name(c2)
           << "\nscenario = " << to_string(classify_scenario(video, c1, c2)) << '\n';
        write_report(os, r);
        std::cout << "precision " << format_real(r.precision) << " recall " << format_real(r.recall) << " f1 "
                  << format_real(r.f1) << '\n';
        return 0;
    }
    std::vector<std::shared_ptr<QfvsModel>> models;
    for (std::size_t f = 0; f < b.videos.size(); ++f) {
        const auto path = fold_checkpoint(o.checkpoint, f);
        if (!fs::exists(path)) throw FormatError("missing checkpoint " + path.string());
        models.push_back(std::shared_ptr<QfvsModel>(QfvsModel::load(path)));
    }
    const auto prepared = prepare_videos(b, models.front()->config());
    const real ratio = o.ratio.value_or(models.front()->config().scoring.summary_ratio);
    const ExperimentReport r = run_experiment(b, model_scorer(b, prepared, models), ratio);
    write_experiment_report(os, b, r);
    std::cout << "video Pre Rec F1\n";
    for (const auto& f : r.folds)
        std::cout << f.video_id << ' ' << format_real(f.precision * 100) << ' ' << format_real(f.recall * 100) << ' '
                  << format_real(f.f1 * 100) << '\n';
    std::cout << "AVG " << format_real(r.precision * 100) << ' ' << format_real(r.recall * 100) << ' '
              << format_real(r.f1 * 100) << '\n';
    return 0;
}

int cmd_report_graphs(const Options& o) {
    const SummaryFile sf = read_summary_file(o.summary);
    const fs::path rows_path = o.rows.empty() ? fs::path(o.summary.string() + ".rows.csv") : o.rows;
    const RowsFile rf = read_rows(rows_path);

    {
        auto os = open_out(o.out_prefix.string() + "_timeline.csv");
        os << "shot_index,gt_query1,gt_query2,gt_union,machine\n";
        for (const auto& r : rf.rows)
            os << r.shot << ',' << int(r.query1) << ',' << int(r.query2) << ',' << int(r.query1 || r.query2) << ','
               << int(r.selected) << '\n';
    }
    {
        auto os = open_out(o.out_prefix.string() + "_scores.csv");
        os << "shot_index,score,category\n";
        for (const auto& r : rf.rows) os << r.shot << ',' << format_real(r.score) << ',' << r.category << '\n';
    }
    if (o.svg) {
        write_timeline_svg(o.out_prefix.string() + "_timeline.svg", rf);
        write_scores_svg(o.out_prefix.string() + "_scores.svg", rf);
    }

    std::size_t n1 = 0, n2 = 0, both = 0, irrelevant = 0, sel1 = 0, sel2 = 0;
    for (const auto& r : rf.rows) {
        n1 += r.query1;
        n2 += r.query2;
        both += r.query1 && r.query2;
        irrelevant += !r.query1 && !r.query2;
        sel1 += r.selected && r.query1;
        sel2 += r.selected && r.query2;
    }
    std::cout << "query = " << rf.query1 << ',' << rf.query2 << " (" << rf.scenario << ")\n"
              << n1 << " shots of scenes containing " << rf.query1 << '\n'
              << n2 << " shots of scenes containing " << rf.query2 << '\n'
              << both << " shots containing both\n"
              << irrelevant << " irrelevant shots\n"
              << "summary: " << sf.summary.indices.size() << " shots, " << sel1 << " with " << rf.query1 << ", "
              << sel2 << " with " << rf.query2 << '\n';

    if (o.verify) {
        auto fail = [](const std::string& msg) { throw FormatError("verify: " + msg); };
        if (rf.rows.size() != sf.scores.size()) fail("row count differs from the summary file");
        std::vector<std::size_t> selected;
        for (const auto& r : rf.rows) {
            if (r.score != sf.scores[r.shot]) fail("score of shot " + std::to_string(r.shot) + " differs");
            if (r.category != category_of(r.query1, r.query2)) fail("category of shot " + std::to_string(r.shot));
            if (r.in_ground_truth != (r.query1 || r.query2)) fail("ground truth flag of shot " + std::to_string(r.shot));
            if (r.selected) selected.push_back(r.shot);
        }
        if (selected != sf.summary.indices) fail("machine band differs from the summary selection");
        std::cout << "verify: ok\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Query-focused video summarization"};
    app.require_subcommand(1);
    Options o;

    try {
        o.seed = default_seed();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset bundle");
    gen->add_option("--out", o.out, "Bundle path")->required();
    gen->add_option("--videos", o.videos, "Number of videos")->capture_default_str();
    gen->add_option("--shots", o.shots, "Shots per video")->capture_default_str();
    gen->add_option("--dim", o.dim, "Shot feature dimension")->capture_default_str();
    gen->add_option("--concepts", o.concepts, "Lexicon size")->capture_default_str();
    gen->add_option("--noise", o.noise, "Feature noise sigma")->capture_default_str();
    gen->add_option("--scenario-counts", o.scenario_counts, "Queries per video per scenario")->capture_default_str();
    gen->add_option("--seed", o.seed, "Seed (default QFVS_SEED or 1)");

    auto* tr = app.add_subcommand("train", "Leave-one-video-out training");
    tr->add_option("--data", o.data, "Bundle path")->required();
    tr->add_option("--config", o.config, "key = value config file; flags override it");
    tr->add_option("--out-dir", o.out_dir, "Directory for checkpoints and logs")->required();
    tr->add_option("--profile", o.profile, "Base profile: desk, test or paper")->capture_default_str();
    tr->add_option("--epochs", o.epochs, "Epochs per fold");
    tr->add_option("--lr", o.lr, "Initial learning rate");
    tr->add_option("--threads", o.threads, "Folds trained concurrently");
    tr->add_option("--seed", o.seed, "Seed (default QFVS_SEED or 1)");
    tr->add_flag("--resume", o.resume, "Reuse existing fold checkpoints");
    tr->add_flag("--force", o.force, "Overwrite existing fold checkpoints");

    auto* sum = app.add_subcommand("summarize", "Score one video for one query and select its summary");
    sum->add_option("--data", o.data, "Bundle path")->required();
    sum->add_option("--checkpoint", o.checkpoint, "Fold checkpoint file")->required();
    sum->add_option("--video", o.video, "Video id or index")->required();
    sum->add_option("--query", o.query, "Two concepts, c1,c2")->required();
    sum->add_option("--out", o.out, "Summary file; rows go to <out>.rows.csv")->required();
    sum->add_option("--ratio", o.ratio, "Summary ratio");

    auto* ev = app.add_subcommand("evaluate", "Evaluate fold checkpoints or one summary file");
    ev->add_option("--data", o.data, "Bundle path")->required();
    ev->add_option("--checkpoint", o.checkpoint, "Training output directory with foldN.ckpt files");
    ev->add_option("--summary-file", o.summary_file, "Summary file from summarize");
    ev->add_option("--video", o.video, "Video of the summary file");
    ev->add_option("--query", o.query, "Query of the summary file, c1,c2");
    ev->add_option("--out", o.out, "Report path")->required();
    ev->add_option("--ratio", o.ratio, "Summary ratio");

    auto* rg = app.add_subcommand("report-graphs", "Export timeline and score-curve graphs");
    rg->add_option("--summary", o.summary, "Summary file")->required();
    rg->add_option("--rows", o.rows, "Rows file (default <summary>.rows.csv)");
    rg->add_option("--out-prefix", o.out_prefix, "Output path prefix")->required();
    rg->add_flag("--svg", o.svg, "Also write SVG renderings");
    rg->add_flag("--verify", o.verify, "Cross-check the graphs against the summary file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (tr->parsed()) return cmd_train(o);
        if (sum->parsed()) return cmd_summarize(o);
        if (ev->parsed()) return cmd_evaluate(o);
        if (rg->parsed()) return cmd_report_graphs(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
