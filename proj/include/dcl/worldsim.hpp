#pragma once

#include <string>
#include <vector>

#include "dcl/common.hpp"
#include "dcl/scene.hpp"

namespace dcl::world {

struct WorldConfig {
    int n_min = 4;
    int n_max = 6;
    int T = 64;
    double size_min = 0.09;
    double size_max = 0.16;
    double speed_min = 0.004;
    double speed_max = 0.014;
    double static_frac = 0.30;    // objects spawned with zero velocity
    double traveler_frac = 0.25;  // objects that ignore walls and may enter/exit
    // Contact at or above this box IoU collides; softer grazes are nudged
    // apart without an event, so recorded overlap always means a collision.
    double contact_iou = 0.01;

    void validate() const;
};

struct TowerConfig {
    int blocks_min = 2;
    int blocks_max = 4;
    int T = 64;
    double block_w = 0.18;
    double block_h = 0.12;
    // offset beyond stability_ratio * block width topples everything above
    double stability_ratio = 0.25;
    double unstable_frac = 0.55;  // fraction of generated towers with a violation
    double gravity = 0.0012;      // normalized units / frame^2

    void validate() const;
};

struct NoiseConfig {
    double jitter_sigma = 0.01;
    double drop_rate = 0.05;
    double spurious_rate = 0.05;
    double appearance_sigma = 0.10;
    // detector confidence ranges; true boxes score above spurious ones
    double true_score_min = 0.70, true_score_max = 1.00;
    double spurious_score_min = 0.05, spurious_score_max = 0.35;
};

// Deterministic 2-D bouncing world. Objects move at constant velocity,
// reflect off the unit-square walls (travelers pass through and generate
// in/out events), and exchange velocities on equal-mass elastic contact.
SceneRecord gen_video(const WorldConfig& config, uint64_t seed);

// Stacked-block world with a single stability rule: a block whose center is
// offset from the one below by more than stability_ratio * width makes that
// block and everything above it fall.
SceneRecord gen_tower_video(const TowerConfig& config, uint64_t seed);

// Simulated detector: jittered true boxes (minus drops) plus uniform
// spurious boxes with weaker confidence and junk appearance.
std::vector<ProposalFrame> emit_proposals(const SceneRecord& scene, const NoiseConfig& noise,
                                          uint64_t seed);

// Re-simulates a bounce scene with one object removed from the initial
// conditions; used for counterfactual ground truth.
SceneRecord resimulate_without(const SceneRecord& scene, int removed_obj,
                               const WorldConfig& config);

// speed test used by the "moving" oracle
inline bool gt_moving_at(const ObjectGT& o, int t) {
    if (t < 0 || t >= int(o.present.size()) || !o.present[size_t(t)]) return false;
    return std::abs(o.vx[size_t(t)]) + std::abs(o.vy[size_t(t)]) > 1e-9;
}

bool gt_moving_video(const ObjectGT& o);  // moving at any present frame

}  // namespace dcl::world
