#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcl/concepts.hpp"
#include "dcl/features.hpp"
#include "dcl/proglang.hpp"

namespace dcl::exec {

// Predicted-scene tensors consumed by UnseenEvents(): either a dynamics
// rollout or an oracle re-simulation, featurized over the predicted frames.
struct PredictedScene {
    feat::FeatureBundle unseen;          // k_frames restricted to predicted frames
    std::vector<bool> object_valid;      // false for removed / never-present objects
    bool counterfactual = false;
    int removed_obj = -1;
};

struct AnswerOut {
    enum class Kind { ConceptDist, Integer, BooleanProb, Invalid };
    Kind kind = Kind::Invalid;
    std::vector<std::pair<std::string, double>> dist;  // concept answers
    double count_value = 0.0;                          // unrounded accumulation
    int integer = 0;                                   // rounded presentation
    double prob = 0.0;                                 // boolean probability
    std::string presented = "invalid";

    // training hooks, set by the taped execution path
    ad::Var count_var;
    ad::Var prob_var;
    std::vector<std::pair<std::string, ad::Var>> dist_vars;
};

// One grounding result: the argmax object or event of an object/event-typed
// program.
struct GroundOut {
    bool valid = false;
    bool is_event = false;
    int object = -1;        // object grounding, or the pair for collisions
    int partner = -1;
    EventKind event_kind = EventKind::Collision;
    int frame = -1;
    double confidence = 0.0;
};

struct TraceEntry {
    int node = 0;
    std::string op;
    std::string type;
    std::string value_summary;
};

// Memoized per-(video, space) concept scores; reused across executions while
// the space is frozen (evaluation, retrieval sweeps).
struct ScoreCache {
    std::map<std::string, std::vector<double>> statics;          // concept -> N scores
    std::map<std::string, std::vector<double>> video_dyn;        // concept -> N scores
    std::map<std::string, std::map<int, std::vector<double>>> moment;  // concept -> t* -> N
    std::optional<std::vector<double>> in_scores, out_scores;
    std::optional<std::vector<double>> col;         // N*N*K raw scores (i<j filled)
    std::optional<std::vector<double>> col_unseen;  // over predicted frames
};

struct ExecOptions {
    const PredictedScene* predicted = nullptr;
    ScoreCache* cache = nullptr;
    std::vector<TraceEntry>* trace = nullptr;
};

// Probabilistic bottom-up execution over latent features (Table-8 style
// semantics: sigmoid probabilities, soft intersections by element-wise min,
// a binary time mask for before/after).
AnswerOut execute(const prog::Program& program, const feat::FeatureBundle& bundle,
                  const concepts::ConceptSpace& space, const ExecOptions& opts = {});

// Same semantics with every score recorded on the tape.
AnswerOut execute_t(ad::Tape& tape, const prog::Program& program,
                    const feat::FeatureBundle& bundle, concepts::ConceptSpace& space,
                    const PredictedScene* predicted = nullptr);

// Executes several programs against one shared per-item score memo (one
// multiple-choice question's options).
std::vector<AnswerOut> execute_many_t(ad::Tape& tape, const std::vector<prog::Program>& programs,
                                      const feat::FeatureBundle& bundle,
                                      concepts::ConceptSpace& space,
                                      const PredictedScene* predicted = nullptr);

// Object/event-typed programs (grounding, retrieval targets).
GroundOut ground(const prog::Program& program, const feat::FeatureBundle& bundle,
                 const concepts::ConceptSpace& space, const ExecOptions& opts = {});

// Table-8 input-module masks.
std::vector<uint8_t> start_mask(int T);
std::vector<uint8_t> end_mask(int T);

// ---- oracle ----------------------------------------------------------------

enum class UnseenMode { None, AfterFrame, All };

struct OracleContext {
    UnseenMode unseen = UnseenMode::None;
    int cut_frame = 0;  // AfterFrame: UnseenEvents = events at frame >= cut
};

// Exact set-based execution against ground truth; the reference for every
// equivalence test. Returns the presentation-form answer label.
std::string oracle_execute(const prog::Program& program, const SceneRecord& scene,
                           const OracleContext& ctx = {});

struct OracleGround {
    bool valid = false;
    bool is_event = false;
    int object = -1;
    int event_id = -1;
};
OracleGround oracle_ground(const prog::Program& program, const SceneRecord& scene,
                           const OracleContext& ctx = {});

// Oracle predicted scenes for the equivalence suites.
PredictedScene predicted_from_scene(const SceneRecord& scene, const feat::BackboneConfig& cfg,
                                    int first_sampled_frame, bool counterfactual = false,
                                    int removed_obj = -1);

nlohmann::ordered_json trace_to_json(const std::vector<TraceEntry>& trace);

}  // namespace dcl::exec
