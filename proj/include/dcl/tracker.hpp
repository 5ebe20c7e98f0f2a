#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcl/common.hpp"
#include "dcl/scene.hpp"

namespace dcl::track {

struct ScoringParams {
    double lambda1 = 1.0;        // IoU term weight
    double lambda2 = 0.5;        // attribute-similarity term weight (refined mode)
    double new_track_cost = -0.4;  // score of leaving a track or proposal unmatched;
                                   // -new_track_cost also gates opening new tracks on s_c
    int miss_tolerance = 4;        // consecutive unmatched frames before a track closes
};

struct Trajectory {
    int track_id = 0;
    std::vector<Box> boxes;            // length T
    std::vector<bool> present;         // length T
    std::vector<double> source_scores; // matched proposal s_c, 0 on filled gaps

    int first_present() const;
    int last_present() const;
};

// (color, material, shape) labels for one proposal; refined-mode linking and
// trajectory refinement consume these. The whole frame is passed so a learned
// quantizer can build its context feature.
using Quantizer = std::function<std::array<int, 3>(const Proposal&, const ProposalFrame&)>;

// Labels straight from the appearance one-hot layout (argmax per block).
std::array<int, 3> appearance_argmax(const std::vector<double>& appearance);
Quantizer oracle_quantizer();

enum class LinkMode { Base, Refined };

struct Assignment {
    std::vector<int> row_to_col;  // -1 where a row is unassigned
    double total_cost = 0.0;
};

// Minimum-cost one-to-one assignment (Jonker-Volgenant style shortest
// augmenting paths, O(n^3)). Rectangular inputs are padded with zero-cost
// dummies, so the smaller side is matched completely. Deterministic: rows
// augment in order and column scans ascend, which resolves ties toward the
// lowest row, then the lowest column.
Assignment linear_assign(const Mat& cost);

double connection_score(const Proposal& prev, const Proposal& next, const ScoringParams& params);

// Eq-3 style attribute agreement in [0,1] over the (truncated) track history.
double f_appear(const std::vector<std::array<int, 3>>& history,
                const std::array<int, 3>& candidate);

std::vector<Trajectory> extract_trajectories(const std::vector<ProposalFrame>& frames,
                                             const ScoringParams& params, LinkMode mode,
                                             const Quantizer* quantizer = nullptr);

// Constant-velocity Kalman filter over (cx, cy, w, h); gaps get the predicted
// state, presence flags stay untouched. Tracks with <2 present frames are
// returned unchanged.
Trajectory kalman_smooth(const Trajectory& traj);

struct EvalRow {
    double threshold = 0.0;
    double precision = 0.0;
    std::optional<double> recall;  // empty when there is no ground truth
};

double trajectory_iou(const Trajectory& a, const Trajectory& b);

std::vector<EvalRow> eval_trajectories(const std::vector<Trajectory>& pred,
                                       const std::vector<Trajectory>& gt,
                                       const std::vector<double>& thresholds);

std::vector<Trajectory> gt_trajectories(const SceneRecord& scene);

nlohmann::ordered_json trajectories_to_json(const std::vector<Trajectory>& trajs);
std::vector<Trajectory> trajectories_from_json(const nlohmann::json& j, int T);
std::string eval_to_csv(const std::vector<EvalRow>& rows);

}  // namespace dcl::track
