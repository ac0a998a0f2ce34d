#include "qfvs/trainer.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

namespace qfvs {

real TrainConfig::lr_at(std::size_t epoch) const { return lr * std::pow(lr_decay, static_cast<real>(epoch)); }

TrainConfig TrainConfig::desk_profile() {
    TrainConfig c;
    c.model = ModelConfig::desk_scale();
    c.lr = 1e-2;
    return c;
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("train.lr must be positive");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("train.lr_decay must lie in (0, 1]");
    if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
    if (threads == 0) throw ConfigError("train.threads must be at least 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0))
        throw ConfigError("Adam betas must lie in [0, 1) and eps must be positive");
    model.validate();
}

KeyValues to_key_values(const TrainConfig& c) {
    KeyValues kv = to_key_values(c.model);
    kv["train.lr"] = format_real(c.lr);
    kv["train.lr_decay"] = format_real(c.lr_decay);
    kv["train.epochs"] = std::to_string(c.epochs);
    kv["train.batch_size"] = std::to_string(c.batch_size);
    kv["train.seed"] = std::to_string(c.seed);
    kv["train.beta1"] = format_real(c.beta1);
    kv["train.beta2"] = format_real(c.beta2);
    kv["train.adam_eps"] = format_real(c.adam_eps);
    kv["train.threads"] = std::to_string(c.threads);
    return kv;
}

void apply_key_values(TrainConfig& c, KeyValues kv) {
    auto take = [&](const char* key) -> std::optional<std::pair<std::string, std::string>> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        auto out = *it;
        kv.erase(it);
        return out;
    };
    if (auto e = take("train.lr")) c.lr = parse_real(e->first, e->second);
    if (auto e = take("train.lr_decay")) c.lr_decay = parse_real(e->first, e->second);
    if (auto e = take("train.epochs")) c.epochs = parse_size(e->first, e->second);
    if (auto e = take("train.batch_size")) c.batch_size = parse_size(e->first, e->second);
    if (auto e = take("train.seed")) c.seed = parse_size(e->first, e->second);
    if (auto e = take("train.beta1")) c.beta1 = parse_real(e->first, e->second);
    if (auto e = take("train.beta2")) c.beta2 = parse_real(e->first, e->second);
    if (auto e = take("train.adam_eps")) c.adam_eps = parse_real(e->first, e->second);
    if (auto e = take("train.threads")) c.threads = parse_size(e->first, e->second);
    apply_key_values(c.model, std::move(kv));
    c.model.link();
}

Adam::Adam(std::vector<NamedParameter> params, real beta1, real beta2, real eps)
    : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), real{0});
        v_.emplace_back(p.tensor.numel(), real{0});
    }
}

void Adam::step(real lr) {
    for (const auto& p : params_)
        if (!p.tensor.has_grad()) throw ContractError("Adam: parameter " + p.name + " has no gradient");
    ++t_;
    const real c1 = 1 - std::pow(b1_, static_cast<real>(t_));
    const real c2 = 1 - std::pow(b2_, static_cast<real>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& t = params_[i].tensor;
        const auto g = t.grad();
        auto x = t.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < x.size(); ++j) {
            m[j] = b1_ * m[j] + (1 - b1_) * g[j];
            v[j] = b2_ * v[j] + (1 - b2_) * g[j] * g[j];
            const real mhat = m[j] / c1, vhat = v[j] / c2;
            x[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::vector<PreparedVideo> prepare_videos(const DatasetBundle& bundle, const ModelConfig& cfg) {
    std::vector<PreparedVideo> out;
    for (const auto& v : bundle.videos) {
        if (v.feature_dim != cfg.backbone.input_dim)
            throw ConfigError("video " + v.video_id + " has " + std::to_string(v.feature_dim) +
                              "-d features, model expects " + std::to_string(cfg.backbone.input_dim));
        out.push_back({build_segmented(v, kts_segment(v, cfg.segmentation), cfg.backbone.segment_len)});
    }
    return out;
}

FoldResult train_fold(const DatasetBundle& bundle, const std::vector<PreparedVideo>& prepared, const TrainConfig& cfg,
                      std::size_t fold, const TrainHooks& hooks) {
    FoldResult result;
    result.fold = fold;
    if (hooks.reuse)
        if (auto m = hooks.reuse(fold)) {
            result.model = std::move(m);
            return result;
        }

    const Rng fold_root = Rng(cfg.seed).fork(fold);
    result.model = std::make_shared<QfvsModel>(cfg.model, fold_root.fork(0).next_u64());
    QfvsModel& model = *result.model;
    Rng order_rng = fold_root.fork(1);
    Rng dropout_rng = fold_root.fork(2);
    Adam adam(model.store().parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps);

    std::vector<std::size_t> samples;
    for (std::size_t q = 0; q < bundle.queries.size(); ++q)
        if (bundle.queries[q].video != fold) samples.push_back(q);
    if (samples.empty()) throw ContractError("fold " + std::to_string(fold) + " has no training samples");

    std::vector<std::vector<real>> labels(bundle.queries.size());
    std::vector<Tensor> queries(bundle.queries.size());
    for (auto q : samples) {
        const auto& bq = bundle.queries[q];
        labels[q] = ground_truth_labels(bundle.videos[bq.video], bq.c1, bq.c2);
        queries[q] = bundle.query(q).query_tensor();
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const real lr = cfg.lr_at(epoch);
        order_rng.shuffle(samples.begin(), samples.end());
        real total = 0;
        for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(samples.size(), start + cfg.batch_size);
            const real inv = real{1} / static_cast<real>(end - start);
            model.store().zero_grad();
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t q = samples[i];
                const std::size_t video = bundle.queries[q].video;
                if (video == fold) ++result.held_out_samples_trained;
                ShotScores scores = model.forward(prepared[video].segmented, queries[q], Mode::train, dropout_rng);
                Tensor loss = bce_loss(scores, labels[q], cfg.model.scoring.clamp_eps);
                const real value = loss.item();
                if (!std::isfinite(value))
                    throw NumericError("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) +
                                             ": non-finite loss on video " + bundle.videos[video].video_id);
                total += value;
                backward(scale(loss, inv));
                ++result.samples_seen;
            }
            adam.step(lr);
        }
        EpochRecord rec{fold, epoch, total / static_cast<real>(samples.size()), lr};
        result.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
    }
    return result;
}

std::vector<FoldResult> train(const DatasetBundle& bundle, const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (bundle.videos.size() < 2) throw ContractError("leave-one-video-out training needs at least 2 videos");
    const auto prepared = prepare_videos(bundle, cfg.model);
    const std::size_t folds = bundle.videos.size();
    std::vector<FoldResult> results(folds);

    std::mutex hook_mutex;
    TrainHooks locked = hooks;
    if (hooks.on_epoch)
        locked.on_epoch = [&](const EpochRecord& r) {
            std::lock_guard<std::mutex> lock(hook_mutex);
            hooks.on_epoch(r);
        };

    std::vector<std::exception_ptr> errors(folds);
    auto run = [&](std::size_t fold) {
        try {
            results[fold] = train_fold(bundle, prepared, cfg, fold, locked);
        } catch (...) {
            errors[fold] = std::current_exception();
        }
    };
    const std::size_t workers = std::min(cfg.threads, folds);
    if (workers <= 1) {
        for (std::size_t f = 0; f < folds; ++f) run(f);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t f = w; f < folds; f += workers) run(f);
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

void write_train_log(std::ostream& os, const std::vector<EpochRecord>& records) {
    os << "fold,epoch,mean_loss,lr\n";
    for (const auto& r : records)
        os << r.fold << ',' << r.epoch << ',' << format_real(r.mean_loss) << ',' << format_real(r.lr) << '\n';
}

Scorer model_scorer(const DatasetBundle& bundle, const std::vector<PreparedVideo>& prepared,
                    std::vector<std::shared_ptr<QfvsModel>> fold_models) {
    return [&bundle, &prepared, models = std::move(fold_models)](std::size_t fold, std::size_t video, std::size_t query) {
        NoGradGuard no_grad;
        Rng unused(0);
        auto scores = models.at(fold)->forward(prepared.at(video).segmented, bundle.query(query).query_tensor(),
                                               Mode::eval, unused);
        return scores.values();
    };
}

Scorer label_scorer(const DatasetBundle& bundle) {
    return [&bundle](std::size_t, std::size_t video, std::size_t query) {
        const auto& q = bundle.queries[query];
        return ground_truth_labels(bundle.videos[video], q.c1, q.c2);
    };
}

Scorer random_scorer(const DatasetBundle& bundle, std::uint64_t seed) {
    return [&bundle, seed](std::size_t, std::size_t video, std::size_t query) {
        Rng rng = Rng(seed).fork(query);
        std::vector<real> s(bundle.videos[video].size());
        for (auto& x : s) x = rng.uniform();
        return s;
    };
}

std::optional<real> ranking_quality(std::span<const real> scores, std::span<const real> labels) {
    if (scores.size() != labels.size()) throw ShapeError("ranking_quality: scores and labels differ in length");
    std::vector<real> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] != 0 ? pos : neg).push_back(scores[i]);
    if (pos.empty() || neg.empty()) return std::nullopt;
    std::sort(neg.begin(), neg.end());
    real good = 0;
    for (real p : pos) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
        good += static_cast<real>(lo - neg.begin()) + real{0.5} * static_cast<real>(hi - lo);
    }
    return good / (static_cast<real>(pos.size()) * static_cast<real>(neg.size()));
}

real perfect_scorer_f1(std::size_t shots, std::size_t oracle_size, real ratio) {
    if (oracle_size == 0) return 0;
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ratio * static_cast<real>(shots))));
    return 2 * static_cast<real>(std::min(k, oracle_size)) / static_cast<real>(k + oracle_size);
}

ExperimentReport run_experiment(const DatasetBundle& bundle, const Scorer& scorer, real ratio) {
    ExperimentReport out;
    std::vector<real> fold_rank;
    for (std::size_t fold = 0; fold < bundle.videos.size(); ++fold) {
        const auto& video = bundle.videos[fold];
        FoldReport fr;
        fr.fold = fold;
        fr.video_id = video.video_id;
        std::vector<real> ranks;
        for (auto q : bundle.queries_of(fold)) {
            const auto& bq = bundle.queries[q];
            const auto scores = scorer(fold, fold, q);
            if (scores.size() != video.size()) throw ContractError("scorer returned the wrong number of scores");
            QueryResult qr;
            qr.query = q;
            qr.summary = select_summary(scores, ratio);
            qr.report = evaluate_summary(bq.oracle, qr.summary.indices, video.tags);
            qr.ranking = ranking_quality(scores, ground_truth_labels(video, bq.c1, bq.c2));
            if (qr.ranking) ranks.push_back(*qr.ranking);
            fr.precision += qr.report.precision;
            fr.recall += qr.report.recall;
            fr.f1 += qr.report.f1;
            fr.queries.push_back(std::move(qr));
        }
        if (!fr.queries.empty()) {
            const real n = static_cast<real>(fr.queries.size());
            fr.precision /= n, fr.recall /= n, fr.f1 /= n;
        }
        if (!ranks.empty()) {
            real s = 0;
            for (real r : ranks) s += r;
            fr.ranking = s / static_cast<real>(ranks.size());
            fold_rank.push_back(*fr.ranking);
        }
        out.precision += fr.precision;
        out.recall += fr.recall;
        out.f1 += fr.f1;
        out.folds.push_back(std::move(fr));
    }
    const real n = static_cast<real>(out.folds.size());
    out.precision /= n, out.recall /= n, out.f1 /= n;
    if (!fold_rank.empty()) {
        real s = 0;
        for (real r : fold_rank) s += r;
        out.ranking = s / static_cast<real>(fold_rank.size());
    }
    return out;
}

void write_experiment_report(std::ostream& os, const DatasetBundle& bundle, const ExperimentReport& r) {
    auto pct = [](real v) { return format_real(std::round(v * 1e4) / 1e2); };
    os << "[table]\n";
    os << "# video  Pre  Rec  F1 (percent)\n";
    for (const auto& f : r.folds)
        os << "row = " << f.video_id << ' ' << pct(f.precision) << ' ' << pct(f.recall) << ' ' << pct(f.f1) << '\n';
    os << "row = AVG " << pct(r.precision) << ' ' << pct(r.recall) << ' ' << pct(r.f1) << '\n';
    os << "\n[summary]\n";
    os << "precision = " << format_real(r.precision) << '\n'
       << "recall = " << format_real(r.recall) << '\n'
       << "f1 = " << format_real(r.f1) << '\n'
       << "ranking = " << (r.ranking ? format_real(*r.ranking) : std::string("none")) << '\n'
       << "ground_truth = oracle\n";
    for (const auto& f : r.folds) {
        os << "\n[fold " << f.fold << "]\n";
        os << "video = " << f.video_id << '\n'
           << "precision = " << format_real(f.precision) << '\n'
           << "recall = " << format_real(f.recall) << '\n'
           << "f1 = " << format_real(f.f1) << '\n'
           << "ranking = " << (f.ranking ? format_real(*f.ranking) : std::string("none")) << '\n';
        for (const auto& q : f.queries) {
            const auto& bq = bundle.queries[q.query];
            os << "\n[query " << q.query << "]\n";
            os << "video = " << f.video_id << '\n'
               << "concepts = " << bundle.lexicon.name(bq.c1) << ',' << bundle.lexicon.name(bq.c2) << '\n'
               << "scenario = " << to_string(bq.scenario) << '\n'
               << "ranking = " << (q.ranking ? format_real(*q.ranking) : std::string("none")) << '\n'
               << "selected = " << format_size_list(q.summary.indices) << '\n';
            write_report(os, q.report);
        }
    }
}

}  // namespace qfvs
