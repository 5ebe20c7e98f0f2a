#pragma once

#include "dcl/executor.hpp"
#include "dcl/proglang.hpp"
#include "dcl/worldsim.hpp"

namespace dcl::world {

struct QaQuota {
    int query = 3;
    int exist = 3;
    int count = 3;
    int explanatory = 2;
    int predictive = 2;
    int counterfactual = 1;
};

struct QaConfig {
    QaQuota quota;
    int cut_frame = 48;      // predictive questions ask about frames >= cut
    int temporal_guard = 6;  // min frame gap for order / before-after anchors
    WorldConfig world;       // physics for counterfactual re-simulation
};

// Template-driven questions whose answers come from the oracle executor.
// Bindings with no valid instantiation in the scene are skipped.
std::vector<QAPair> gen_qa(const SceneRecord& scene, const std::vector<prog::Template>& templates,
                           uint64_t seed, const QaConfig& cfg);

struct ExprConfig {
    int per_video = 6;
    int temporal_guard = 6;
};

std::vector<Expression> gen_expressions(const SceneRecord& scene, ExprKind kind, uint64_t seed,
                                        const ExprConfig& cfg = {});

// Counterfactual ground truth for one QA pair: the re-simulated scene with
// the stem's object removed.
SceneRecord counterfactual_scene(const SceneRecord& scene, const QAPair& qa,
                                 const WorldConfig& world);

}  // namespace dcl::world
