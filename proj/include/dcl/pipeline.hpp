#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcl/concept_train.hpp"
#include "dcl/dynamics.hpp"
#include "dcl/executor.hpp"
#include "dcl/qa_gen.hpp"
#include "dcl/tracker.hpp"

namespace dcl::run {

struct DatasetConfig {
    int n_train = 400;
    int n_test = 100;
    int cut_frame = 48;           // predictive boundary
    int temporal_guard = 6;
    world::QaQuota quota;
    int expressions_per_video = 6;
    int retrieval_per_video = 6;
    int retrieval_max = 1000;
};

struct TrackerConfig {
    track::ScoringParams params;
    bool kalman = false;  // optional smoothing pass after extraction
};

struct TrainConfig {
    double lr = 1e-2;
    double momentum = 0.9;
    int batch = 16;
    int epochs_stage1 = 20;
    int epochs_stage4 = 8;
    double clip = 5.0;
};

struct RunConfig {
    uint64_t seed = 1;
    std::string out_dir = "runs";
    std::string world_kind = "bounce";  // bounce | tower
    int jobs = 1;
    world::WorldConfig world;
    world::TowerConfig tower;
    world::NoiseConfig noise;
    TrackerConfig tracker;
    feat::BackboneConfig backbone;
    concepts::ConceptConfig concepts;
    TrainConfig train;
    dyn::DynConfig dynamics;
    DatasetConfig dataset;

    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;  // canonical form; hashes name the run dir
    std::string run_dir() const;
    const std::vector<prog::Template>& templates() const;
};

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides = {});

struct VideoData {
    SceneRecord scene;
    std::vector<ProposalFrame> proposals;
    std::vector<QAPair> qa;
    std::vector<Expression> ground_exprs;
    std::vector<Expression> retrieval_exprs;
};

// one JSON document per video plus newline-delimited manifests
void cmd_gen(const RunConfig& cfg);
std::vector<VideoData> load_split(const RunConfig& cfg, const std::string& split);

struct MetricsReport {
    std::map<std::string, double> qa_per_type;          // per-question accuracy
    std::map<std::string, double> qa_per_option;        // per-option accuracy (MC types)
    double qa_average = 0.0;                            // mean over present types
    std::map<std::string, double> concept_acc;          // static/dynamic/event accuracies
    int dynamic_eval_excluded = 0;                      // objects with no usable anchor
    double ground_obj_acc50 = 0.0, ground_obj_miou = 0.0;
    double ground_col_union_iou = 0.0;
    std::map<std::string, double> ground_frame_diff_median;  // per event type
    std::map<std::string, double> retrieval_map;        // per query type + "all"
    int retrieval_skipped = 0;                          // queries with no positive
    std::vector<track::EvalRow> tracker_refined, tracker_base;
    std::vector<double> concept_loss_curve, dynamics_loss_curve;
    std::string notes;

    nlohmann::ordered_json to_json() const;
    std::string to_text() const;
};

// the four-stage training run; writes checkpoints and the report under run_dir
MetricsReport cmd_pipeline(const RunConfig& cfg);

// standalone tracking + evaluation over one split
void cmd_track(const RunConfig& cfg, const std::string& split, track::LinkMode mode);

// per-question answering against trained checkpoints
nlohmann::ordered_json cmd_answer(const RunConfig& cfg, const std::string& video_id,
                                  const std::string& question, bool want_trace);

// loaded state for evaluation commands
struct TrainedModel {
    concepts::ConceptSpace space;
    std::optional<dyn::DynNets> nets;
};
TrainedModel load_model(const RunConfig& cfg);

MetricsReport evaluate(const RunConfig& cfg, const std::vector<VideoData>& test,
                       concepts::ConceptSpace& space, dyn::DynNets* nets);

}  // namespace dcl::run
