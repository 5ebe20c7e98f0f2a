#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dcl/scene.hpp"
#include "dcl/tracker.hpp"

namespace dcl::feat {

struct BackboneConfig {
    int d_app = kAppearanceDim;  // appearance vector width
    int K = 16;                  // sampled frame count
    int patch = 8;               // synthetic patch side P
    int loc_window = 2;          // +- raw frames around k for f_loc
    double iou_gain = 20.0;      // fixed preconditioner on the f_loc IoU block

    int d1() const { return 2 * d_app; }
    int d2() const { return d_app + 1 + 3 * 4 * (2 * loc_window + 1); }
};

// Appearance source; a pixel backbone would slot in behind this.
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual std::vector<double> feature_of(int obj, int frame) const = 0;
};

// Clean one-hot appearances straight from ground truth.
class SceneBackbone : public Backbone {
public:
    explicit SceneBackbone(const SceneRecord& scene);
    std::vector<double> feature_of(int obj, int frame) const override;

private:
    std::vector<std::vector<double>> app_;
};

// Appearances recovered from the proposals a tracker matched: a trajectory
// frame whose box equals a proposal box verbatim takes that proposal's
// appearance; interpolated gap frames reuse the nearest matched frame.
class TrackBackbone : public Backbone {
public:
    TrackBackbone(const std::vector<track::Trajectory>& trajs,
                  const std::vector<ProposalFrame>& frames);
    std::vector<double> feature_of(int obj, int frame) const override;

private:
    std::vector<std::vector<std::vector<double>>> app_;  // [obj][frame]
};

struct FeatureBundle {
    int N = 0, T = 0, K = 0, D1 = 0, D2 = 0;
    std::vector<int> k_frames;  // sampled raw frame indices, ascending
    std::vector<double> f_v;    // N * D1
    std::vector<double> f_s;    // N * 4T, frame-major (cx, cy, w, h)
    std::vector<double> f_c;    // K * N * N * D2
    std::vector<std::vector<bool>> present;  // N x T
    std::vector<int> t_in;      // first present frame per object (-1 if never)
    std::vector<int> t_out;     // last present frame per object

    std::span<const double> fv_row(int n) const { return {f_v.data() + size_t(n) * D1, size_t(D1)}; }
    std::span<const double> fs_row(int n) const {
        return {f_s.data() + size_t(n) * 4 * size_t(T), size_t(4 * T)};
    }
    std::span<const double> fc_entry(int k, int i, int j) const {
        size_t off = ((size_t(k) * N + size_t(i)) * N + size_t(j)) * size_t(D2);
        return {f_c.data() + off, size_t(D2)};
    }
    Box box_at(int n, int t) const {
        const double* p = f_s.data() + size_t(n) * 4 * size_t(T) + size_t(t) * 4;
        return Box{p[0], p[1], p[2], p[3]};
    }
    int nearest_k(int frame) const;  // index into k_frames
};

std::vector<int> sample_frames(int T, int K);

std::vector<double> avg_visual_feature(const track::Trajectory& traj, int obj,
                                       const std::vector<track::Trajectory>& all,
                                       const Backbone& backbone, const BackboneConfig& cfg,
                                       const std::vector<int>& k_frames);
std::vector<double> temporal_sequence_feature(const track::Trajectory& traj, int T);
std::vector<double> frame_specific_feature(std::span<const double> fs_row, int T, int t_star,
                                           int tau);
std::vector<double> apply_time_mask(std::span<const double> fs_row,
                                    const std::vector<uint8_t>& mask);
std::vector<double> collision_feature(const track::Trajectory& ti, const track::Trajectory& tj,
                                      int obj_i, int obj_j, int k_frame, const Backbone& backbone,
                                      const BackboneConfig& cfg);

// Full bundle over the video; `first_sampled_frame` > 0 restricts the sampled
// frames to those >= the bound (used for predicted-scene tensors).
FeatureBundle build_bundle(const std::vector<track::Trajectory>& trajs, const Backbone& backbone,
                           const BackboneConfig& cfg, int T, int first_sampled_frame = 0);

// Flat binary serialization: int32 header (N, T, K, D1, D2), float32 tensors
// in declaration order, then the int32 sampled-frame indices.
std::string bundle_to_bytes(const FeatureBundle& b);
FeatureBundle bundle_from_bytes(const std::string& bytes);

}  // namespace dcl::feat
