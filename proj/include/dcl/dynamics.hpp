#pragma once

#include <array>
#include <deque>
#include <vector>

#include "dcl/features.hpp"
#include "dcl/scene.hpp"
#include "dcl/tape.hpp"
#include "dcl/tracker.hpp"

namespace dcl::dyn {

struct DynConfig {
    int w = 3;        // history window, in sampled steps
    int L = 2;        // propagation steps
    int hidden = 64;
    int stride = 4;   // raw frames per sampled step
    int patch = 8;    // synthetic patch side
    double gate_radius = 0.4;  // pairs farther apart than this exert no influence
    bool residual = true;      // predict the box as last box + learned delta
    double delta_scale = 1.0;   // residual outputs are in units of this scale

    double lr = 1e-3;  // adam
    double lr_decay = 0.95;  // per-epoch multiplier
    int batch = 16;
    int epochs_stage1 = 6;
    int epochs_stage2 = 2;
    double clip = 5.0;

    int patch_vals() const { return 3 * patch * patch; }
    int vertex_width() const { return w * (4 + patch_vals()); }
    int edge_width() const { return 4 * w; }
    // object encodings carry the raw relative-box block alongside the MLP
    // features; the box predictor adds a linear skip over its input
    int eo_width() const { return hidden + 4 * w; }

    void validate() const {
        if (w < 1 || L < 1 || hidden < 1) throw ConfigError("dynamics: bad config");
    }
};

// Per-object state at one sampled frame: box plus a solid-color patch.
struct ObjState {
    bool present = false;
    Box box;
    std::array<double, 3> rgb = {0, 0, 0};
};

// Strided view of one video; the unit dynamics trains and rolls out on.
struct StridedVideo {
    std::vector<int> frames;                   // sampled raw-frame indices
    std::vector<std::vector<ObjState>> steps;  // [step][object]
    int n_objects() const { return steps.empty() ? 0 : int(steps[0].size()); }
};

StridedVideo strided_from_trajectories(const std::vector<track::Trajectory>& trajs,
                                       const feat::Backbone& backbone, int T,
                                       const DynConfig& cfg);

// The six networks (vertex/edge encoders, object/relation propagators, box
// and patch predictors), all 2-layer affine+ReLU.
class DynNets {
public:
    DynNets() = default;
    DynNets(const DynConfig& cfg, Rng& rng);

    DynConfig cfg;
    ad::Param enc_o1, enc_o1b, enc_o2, enc_o2b;
    ad::Param enc_r1, enc_r1b, enc_r2, enc_r2b;
    ad::Param prop_r1, prop_r1b, prop_r2, prop_r2b;
    ad::Param prop_o1, prop_o1b, prop_o2, prop_o2b;
    ad::Param pred_b1, pred_b1b, pred_b2, pred_b2b, pred_b_skip;
    ad::Param pred_p1, pred_p1b, pred_p2, pred_p2b;

    std::vector<ad::Param*> parameters();
    std::vector<const ad::Param*> parameters() const;
};

// one forward step over the window ending at history.back()
struct StepInput {
    std::vector<std::vector<ObjState>> window;  // [w][object]
};

struct StepOutput {
    std::vector<ObjState> next;               // clamped predictions
    std::vector<std::array<double, 4>> raw_box;  // pre-clamp (residual applied)
};

// plain double-precision forward (inference)
StepOutput predict_step(const DynNets& nets, const StepInput& in);

// encode + propagate exposed for the equivariance and shape tests
struct Encoded {
    std::vector<std::vector<double>> e_o;                 // per object
    std::vector<std::vector<std::vector<double>>> e_r;    // [n1][n2]
    std::vector<std::vector<double>> h;                   // final influences
};
Encoded encode_propagate(const DynNets& nets, const StepInput& in);

// autoregressive rollout for `steps` sampled frames past the window
std::vector<std::vector<ObjState>> rollout(const DynNets& nets,
                                           const std::vector<std::vector<ObjState>>& window,
                                           int steps);

// graph rebuilt without `removed`; rollout from the video's first w steps
std::vector<std::vector<ObjState>> counterfactual_rollout(const DynNets& nets,
                                                          const StridedVideo& video, int removed,
                                                          int steps);

struct TrainStats {
    std::vector<double> epoch_loss;
    bool aborted = false;
    std::string abort_reason;
};

// Stage 1 minimizes box error only; stage 2 adds the patch term.
TrainStats train_dynamics(DynNets& nets, const std::vector<StridedVideo>& corpus,
                          uint64_t seed);

// taped single-sample loss (shared machinery with the concept trainer);
// exposed for the finite-difference suite
ad::Var step_loss_t(ad::Tape& tape, DynNets& nets, const StepInput& in,
                    const std::vector<ObjState>& target, bool with_patch);

std::string nets_to_bytes(const DynNets& nets);
DynNets nets_from_bytes(const std::string& bytes);

}  // namespace dcl::dyn
