#pragma once

// Leave-one-video-out training and evaluation.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfvs/dataset.hpp"
#include "qfvs/evalmetric.hpp"
#include "qfvs/model.hpp"

namespace qfvs {

class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    real lr = 1e-4;
    real lr_decay = 0.8;  // multiplicative, per epoch
    std::size_t epochs = 20;
    std::size_t batch_size = 5;
    std::uint64_t seed = 1;
    real beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t threads = 1;  // folds trained concurrently
    ModelConfig model = ModelConfig::paper_default();

    real lr_at(std::size_t epoch) const;
    // desk_scale model with a higher learning rate.
    static TrainConfig desk_profile();
    void validate() const;
};

KeyValues to_key_values(const TrainConfig& cfg);
// Train keys are "train.*"; the rest go to the model config.
void apply_key_values(TrainConfig& cfg, KeyValues kv);

class Adam {
   public:
    Adam(std::vector<NamedParameter> params, real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8);

    // Throws ContractError naming the first parameter without a gradient.
    void step(real lr);
    std::size_t steps() const { return t_; }

   private:
    std::vector<NamedParameter> params_;
    std::vector<std::vector<real>> m_, v_;
    real b1_, b2_, eps_;
    std::size_t t_ = 0;
};

// Video prepared once per bundle: segmented layout plus per-query labels.
struct PreparedVideo {
    SegmentedVideo segmented;
};
std::vector<PreparedVideo> prepare_videos(const DatasetBundle& bundle, const ModelConfig& cfg);

struct EpochRecord {
    std::size_t fold = 0, epoch = 0;
    real mean_loss = 0, lr = 0;
};

struct FoldResult {
    std::size_t fold = 0;  // index of the held-out video
    std::vector<EpochRecord> epochs;
    std::size_t samples_seen = 0;
    // Samples from the held-out video that reached backward(); must stay 0.
    std::size_t held_out_samples_trained = 0;
    std::shared_ptr<QfvsModel> model;
};

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    // Folds for which this returns a model are not trained.
    std::function<std::shared_ptr<QfvsModel>(std::size_t fold)> reuse;
};

// One fold per video; results ordered by fold.
std::vector<FoldResult> train(const DatasetBundle& bundle, const TrainConfig& cfg, const TrainHooks& hooks = {});
FoldResult train_fold(const DatasetBundle& bundle, const std::vector<PreparedVideo>& prepared, const TrainConfig& cfg,
                      std::size_t fold, const TrainHooks& hooks = {});

void write_train_log(std::ostream& os, const std::vector<EpochRecord>& records);  // "fold,epoch,mean_loss,lr"

// Scores of every shot of bundle.videos[video] for bundle.queries[query].
using Scorer = std::function<std::vector<real>(std::size_t fold, std::size_t video, std::size_t query)>;

Scorer model_scorer(const DatasetBundle& bundle, const std::vector<PreparedVideo>& prepared,
                    std::vector<std::shared_ptr<QfvsModel>> fold_models);
Scorer label_scorer(const DatasetBundle& bundle);             // scores = labels
Scorer random_scorer(const DatasetBundle& bundle, std::uint64_t seed);

// Fraction of (relevant, irrelevant) pairs with the relevant shot scored
// higher, ties counting one half. Empty if either class is absent.
std::optional<real> ranking_quality(std::span<const real> scores, std::span<const real> labels);

// F1 of a perfect scorer under the top-ratio budget: 2 min(k, o) / (k + o).
real perfect_scorer_f1(std::size_t shots, std::size_t oracle_size, real ratio);

struct QueryResult {
    std::size_t query = 0;
    EvalReport report;
    std::optional<real> ranking;
    Summary summary;
};

struct FoldReport {
    std::size_t fold = 0;
    std::string video_id;
    std::vector<QueryResult> queries;
    real precision = 0, recall = 0, f1 = 0;  // means over queries
    std::optional<real> ranking;             // mean over queries with both classes
};

struct ExperimentReport {
    std::vector<FoldReport> folds;
    real precision = 0, recall = 0, f1 = 0;  // means over folds
    std::optional<real> ranking;
};

ExperimentReport run_experiment(const DatasetBundle& bundle, const Scorer& scorer, real ratio = 0.02);

// Sectioned key = value text with a per-video Pre/Rec/F1 table.
void write_experiment_report(std::ostream& os, const DatasetBundle& bundle, const ExperimentReport& r);

}  // namespace qfvs
