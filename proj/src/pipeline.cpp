#include "dcl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <thread>

namespace dcl::run {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- config -----------------------------------------------------------------

namespace {
template <class T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    maybe(j, "seed", c.seed);
    maybe(j, "out_dir", c.out_dir);
    maybe(j, "world_kind", c.world_kind);
    maybe(j, "jobs", c.jobs);
    if (j.contains("world")) {
        const json& w = j.at("world");
        maybe(w, "n_min", c.world.n_min);
        maybe(w, "n_max", c.world.n_max);
        maybe(w, "frame_count", c.world.T);
        maybe(w, "size_min", c.world.size_min);
        maybe(w, "size_max", c.world.size_max);
        maybe(w, "speed_min", c.world.speed_min);
        maybe(w, "speed_max", c.world.speed_max);
        maybe(w, "static_frac", c.world.static_frac);
        maybe(w, "traveler_frac", c.world.traveler_frac);
        maybe(w, "contact_iou", c.world.contact_iou);
    }
    if (j.contains("tower")) {
        const json& w = j.at("tower");
        maybe(w, "blocks_min", c.tower.blocks_min);
        maybe(w, "blocks_max", c.tower.blocks_max);
        maybe(w, "frame_count", c.tower.T);
        maybe(w, "stability_ratio", c.tower.stability_ratio);
        maybe(w, "unstable_frac", c.tower.unstable_frac);
        maybe(w, "gravity", c.tower.gravity);
    }
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        maybe(n, "jitter_sigma", c.noise.jitter_sigma);
        maybe(n, "drop_rate", c.noise.drop_rate);
        maybe(n, "spurious_rate", c.noise.spurious_rate);
        maybe(n, "appearance_sigma", c.noise.appearance_sigma);
    }
    if (j.contains("tracker")) {
        const json& t = j.at("tracker");
        maybe(t, "lambda1", c.tracker.params.lambda1);
        maybe(t, "lambda2", c.tracker.params.lambda2);
        maybe(t, "new_track_cost", c.tracker.params.new_track_cost);
        maybe(t, "miss_tolerance", c.tracker.params.miss_tolerance);
        maybe(t, "kalman", c.tracker.kalman);
    }
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        maybe(b, "k", c.backbone.K);
        maybe(b, "patch", c.backbone.patch);
        maybe(b, "loc_window", c.backbone.loc_window);
    }
    if (j.contains("concepts")) {
        const json& k = j.at("concepts");
        maybe(k, "d_c", c.concepts.d_c);
        maybe(k, "delta", c.concepts.delta);
        maybe(k, "lambda_s", c.concepts.lambda_s);
        maybe(k, "tau_strides", c.concepts.tau_strides);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        maybe(t, "lr", c.train.lr);
        maybe(t, "momentum", c.train.momentum);
        maybe(t, "batch", c.train.batch);
        maybe(t, "epochs_stage1", c.train.epochs_stage1);
        maybe(t, "epochs_stage4", c.train.epochs_stage4);
        maybe(t, "clip", c.train.clip);
    }
    if (j.contains("dynamics")) {
        const json& d = j.at("dynamics");
        maybe(d, "w", c.dynamics.w);
        maybe(d, "l", c.dynamics.L);
        maybe(d, "hidden", c.dynamics.hidden);
        maybe(d, "stride", c.dynamics.stride);
        maybe(d, "patch", c.dynamics.patch);
        maybe(d, "gate_radius", c.dynamics.gate_radius);
        maybe(d, "residual", c.dynamics.residual);
        maybe(d, "lr", c.dynamics.lr);
        maybe(d, "lr_decay", c.dynamics.lr_decay);
        maybe(d, "batch", c.dynamics.batch);
        maybe(d, "epochs_stage1", c.dynamics.epochs_stage1);
        maybe(d, "epochs_stage2", c.dynamics.epochs_stage2);
    }
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        maybe(d, "n_train", c.dataset.n_train);
        maybe(d, "n_test", c.dataset.n_test);
        maybe(d, "cut_frame", c.dataset.cut_frame);
        maybe(d, "temporal_guard", c.dataset.temporal_guard);
        maybe(d, "expressions_per_video", c.dataset.expressions_per_video);
        maybe(d, "retrieval_per_video", c.dataset.retrieval_per_video);
        maybe(d, "retrieval_max", c.dataset.retrieval_max);
        if (d.contains("quota")) {
            const json& q = d.at("quota");
            maybe(q, "query", c.dataset.quota.query);
            maybe(q, "exist", c.dataset.quota.exist);
            maybe(q, "count", c.dataset.quota.count);
            maybe(q, "explanatory", c.dataset.quota.explanatory);
            maybe(q, "predictive", c.dataset.quota.predictive);
            maybe(q, "counterfactual", c.dataset.quota.counterfactual);
        }
    }
    return c;
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["world_kind"] = world_kind;
    j["jobs"] = jobs;
    j["world"] = {{"n_min", world.n_min},
                  {"n_max", world.n_max},
                  {"frame_count", world.T},
                  {"size_min", num(world.size_min)},
                  {"size_max", num(world.size_max)},
                  {"speed_min", num(world.speed_min)},
                  {"speed_max", num(world.speed_max)},
                  {"static_frac", num(world.static_frac)},
                  {"traveler_frac", num(world.traveler_frac)},
                  {"contact_iou", num(world.contact_iou)}};
    j["tower"] = {{"blocks_min", tower.blocks_min},
                  {"blocks_max", tower.blocks_max},
                  {"frame_count", tower.T},
                  {"stability_ratio", num(tower.stability_ratio)},
                  {"unstable_frac", num(tower.unstable_frac)},
                  {"gravity", num(tower.gravity)}};
    j["noise"] = {{"jitter_sigma", num(noise.jitter_sigma)},
                  {"drop_rate", num(noise.drop_rate)},
                  {"spurious_rate", num(noise.spurious_rate)},
                  {"appearance_sigma", num(noise.appearance_sigma)}};
    j["tracker"] = {{"lambda1", num(tracker.params.lambda1)},
                    {"lambda2", num(tracker.params.lambda2)},
                    {"new_track_cost", num(tracker.params.new_track_cost)},
                    {"miss_tolerance", tracker.params.miss_tolerance},
                    {"kalman", tracker.kalman}};
    j["backbone"] = {{"k", backbone.K}, {"patch", backbone.patch},
                     {"loc_window", backbone.loc_window}};
    j["concepts"] = {{"d_c", concepts.d_c},
                     {"delta", num(concepts.delta)},
                     {"lambda_s", num(concepts.lambda_s)},
                     {"tau_strides", concepts.tau_strides}};
    j["train"] = {{"lr", num(train.lr)},         {"momentum", num(train.momentum)},
                  {"batch", train.batch},        {"epochs_stage1", train.epochs_stage1},
                  {"epochs_stage4", train.epochs_stage4}, {"clip", num(train.clip)}};
    j["dynamics"] = {{"w", dynamics.w},
                     {"l", dynamics.L},
                     {"hidden", dynamics.hidden},
                     {"stride", dynamics.stride},
                     {"patch", dynamics.patch},
                     {"gate_radius", num(dynamics.gate_radius)},
                     {"residual", dynamics.residual},
                     {"lr", num(dynamics.lr)},
                     {"lr_decay", num(dynamics.lr_decay)},
                     {"batch", dynamics.batch},
                     {"epochs_stage1", dynamics.epochs_stage1},
                     {"epochs_stage2", dynamics.epochs_stage2}};
    j["dataset"] = {{"n_train", dataset.n_train},
                    {"n_test", dataset.n_test},
                    {"cut_frame", dataset.cut_frame},
                    {"temporal_guard", dataset.temporal_guard},
                    {"expressions_per_video", dataset.expressions_per_video},
                    {"retrieval_per_video", dataset.retrieval_per_video},
                    {"retrieval_max", dataset.retrieval_max},
                    {"quota",
                     {{"query", dataset.quota.query},
                      {"exist", dataset.quota.exist},
                      {"count", dataset.quota.count},
                      {"explanatory", dataset.quota.explanatory},
                      {"predictive", dataset.quota.predictive},
                      {"counterfactual", dataset.quota.counterfactual}}}};
    return j;
}

std::string RunConfig::run_dir() const {
    return out_dir + "/" + hex16(fnv1a(dump_json(to_json())));
}

const std::vector<prog::Template>& RunConfig::templates() const {
    return world_kind == "tower" ? prog::tower_templates() : prog::qa_templates();
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = path.empty() ? json::object() : json::parse(read_file(path));
    for (const std::string& kv : overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + kv);
        std::string key = kv.substr(0, eq);
        std::string val = kv.substr(eq + 1);
        json* node = &j;
        size_t pos = 0;
        while (true) {
            size_t dot = key.find('.', pos);
            std::string part = key.substr(pos, dot - pos);
            if (dot == std::string::npos) {
                json parsed;
                try {
                    parsed = json::parse(val);
                } catch (...) {
                    parsed = val;  // bare strings
                }
                (*node)[part] = parsed;
                break;
            }
            node = &(*node)[part];
            pos = dot + 1;
        }
    }
    RunConfig cfg = RunConfig::from_json(j);
    if (const char* env = std::getenv("DCL_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
    return cfg;
}

// ---- dataset ------------------------------------------------------------------

namespace {

ordered_json video_to_json(const VideoData& v) {
    ordered_json j;
    j["scene"] = scene_to_json(v.scene);
    j["proposals"] = proposals_to_json(v.proposals);
    j["qa"] = qa_to_json(v.qa);
    ordered_json ex;
    ex["grounding"] = expressions_to_json(v.ground_exprs);
    ex["retrieval"] = expressions_to_json(v.retrieval_exprs);
    j["expressions"] = std::move(ex);
    return j;
}

VideoData video_from_json(const json& j) {
    VideoData v;
    v.scene = scene_from_json(j.at("scene"));
    v.proposals = proposals_from_json(j.at("proposals"));
    v.qa = qa_from_json(j.at("qa"));
    v.ground_exprs = expressions_from_json(j.at("expressions").at("grounding"));
    v.retrieval_exprs = expressions_from_json(j.at("expressions").at("retrieval"));
    return v;
}

VideoData make_video(const RunConfig& cfg, const std::string& split, int index) {
    uint64_t salt = fnv1a(split) ^ (uint64_t(index) * 0x9E3779B97F4A7C15ULL);
    Rng seeder(cfg.seed);
    Rng vid_rng = seeder.fork(salt);
    uint64_t scene_seed = vid_rng.next_u64();

    VideoData v;
    if (cfg.world_kind == "tower") {
        v.scene = world::gen_tower_video(cfg.tower, scene_seed);
    } else {
        v.scene = world::gen_video(cfg.world, scene_seed);
    }
    v.scene.video_id = split + "-" + std::to_string(index);
    v.proposals = world::emit_proposals(v.scene, cfg.noise, vid_rng.next_u64());
    world::QaConfig qcfg;
    qcfg.quota = cfg.dataset.quota;
    qcfg.cut_frame = cfg.dataset.cut_frame;
    qcfg.temporal_guard = cfg.dataset.temporal_guard;
    qcfg.world = cfg.world;
    v.qa = world::gen_qa(v.scene, cfg.templates(), vid_rng.next_u64(), qcfg);
    if (cfg.world_kind != "tower") {
        world::ExprConfig ecfg;
        ecfg.per_video = cfg.dataset.expressions_per_video;
        ecfg.temporal_guard = cfg.dataset.temporal_guard;
        auto obj = world::gen_expressions(v.scene, ExprKind::GroundObject, vid_rng.next_u64(),
                                          ecfg);
        auto evt = world::gen_expressions(v.scene, ExprKind::GroundEvent, vid_rng.next_u64(),
                                          ecfg);
        v.ground_exprs = std::move(obj);
        for (auto& e : evt) v.ground_exprs.push_back(std::move(e));
        world::ExprConfig rcfg;
        rcfg.per_video = cfg.dataset.retrieval_per_video;
        v.retrieval_exprs =
            world::gen_expressions(v.scene, ExprKind::Retrieval, vid_rng.next_u64(), rcfg);
    }
    return v;
}

}  // namespace

void cmd_gen(const RunConfig& cfg) {
    std::string dir = cfg.run_dir();
    fs::create_directories(dir + "/data");
    write_file(dir + "/config.json", dump_json(cfg.to_json()));

    struct Split {
        std::string name;
        int count;
    };
    std::vector<Split> splits = {{"train", cfg.dataset.n_train}, {"test", cfg.dataset.n_test}};
    for (const auto& split : splits) {
        std::vector<std::string> ids(size_t(split.count));
        std::atomic<int> next{0};
        auto worker = [&]() {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= split.count) break;
                VideoData v = make_video(cfg, split.name, i);
                ids[size_t(i)] = v.scene.video_id;
                write_file(dir + "/data/" + v.scene.video_id + ".json",
                           dump_json(video_to_json(v)));
            }
        };
        int jobs = std::max(1, cfg.jobs);
        std::vector<std::thread> pool;
        for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
        std::string manifest;
        for (const auto& id : ids) manifest += id + "\n";
        write_file(dir + "/" + split.name + "_manifest.txt", manifest);
    }
    int qa_total = 0;
    for (const auto& split : splits) qa_total += split.count;
    std::printf("generated %d train + %d test videos under %s\n", cfg.dataset.n_train,
                cfg.dataset.n_test, dir.c_str());
}

std::vector<VideoData> load_split(const RunConfig& cfg, const std::string& split) {
    std::string dir = cfg.run_dir();
    std::string manifest = read_file(dir + "/" + split + "_manifest.txt");
    std::vector<VideoData> out;
    size_t pos = 0;
    while (pos < manifest.size()) {
        size_t nl = manifest.find('\n', pos);
        if (nl == std::string::npos) break;
        std::string id = manifest.substr(pos, nl - pos);
        pos = nl + 1;
        if (id.empty()) continue;
        out.push_back(video_from_json(json::parse(read_file(dir + "/data/" + id + ".json"))));
    }
    return out;
}

// ---- per-video computed state ----------------------------------------------

namespace {

// constant per-object appearance source for predicted scenes
class VectorBackbone : public feat::Backbone {
public:
    explicit VectorBackbone(std::vector<std::vector<double>> app) : app_(std::move(app)) {}
    std::vector<double> feature_of(int obj, int) const override { return app_[size_t(obj)]; }

private:
    std::vector<std::vector<double>> app_;
};

struct VideoWork {
    const VideoData* data = nullptr;
    std::vector<track::Trajectory> trajs;
    feat::FeatureBundle bundle;
    // predictive evaluation state (built lazily in stage 4 / evaluation)
    feat::FeatureBundle bundle_cut;
    std::optional<exec::PredictedScene> pred_future;
    std::map<int, exec::PredictedScene> pred_cf;
};

std::vector<track::Trajectory> run_tracker(const RunConfig& cfg, const VideoData& v,
                                           track::LinkMode mode,
                                           const track::Quantizer* quantizer) {
    auto trajs = track::extract_trajectories(v.proposals, cfg.tracker.params, mode, quantizer);
    if (cfg.tracker.kalman)
        for (auto& t : trajs) t = track::kalman_smooth(t);
    return trajs;
}

void build_bundle(const RunConfig& cfg, VideoWork& w) {
    feat::TrackBackbone backbone(w.trajs, w.data->proposals);
    w.bundle = feat::build_bundle(w.trajs, backbone, cfg.backbone, w.data->scene.T);
}

std::vector<track::Trajectory> clip_trajectories(const std::vector<track::Trajectory>& trajs,
                                                 int cut) {
    std::vector<track::Trajectory> out = trajs;
    for (auto& t : out)
        for (int f = cut; f < int(t.present.size()); ++f) t.present[size_t(f)] = false;
    return out;
}

// expand strided predictions into raw-frame trajectories, bridging from the
// last observed box
std::vector<track::Trajectory> expand_predictions(
    const std::vector<track::Trajectory>& observed,
    const std::vector<std::vector<dyn::ObjState>>& pred, const std::vector<int>& pred_frames,
    int bridge_frame, int T) {
    size_t N = observed.size();
    std::vector<track::Trajectory> out(N);
    for (size_t n = 0; n < N; ++n) {
        track::Trajectory t;
        t.track_id = int(n);
        t.boxes.assign(size_t(T), Box{});
        t.present.assign(size_t(T), false);
        t.source_scores.assign(size_t(T), 0.0);
        // anchor sequence: (bridge_frame, observed box) then predictions
        std::vector<std::pair<int, Box>> anchors;
        if (bridge_frame >= 0 && observed[n].present[size_t(bridge_frame)])
            anchors.emplace_back(bridge_frame, observed[n].boxes[size_t(bridge_frame)]);
        for (size_t s = 0; s < pred.size(); ++s)
            if (pred[s][n].present) anchors.emplace_back(pred_frames[s], pred[s][n].box);
        for (size_t a = 0; a + 1 < anchors.size(); ++a) {
            auto [f0, b0] = anchors[a];
            auto [f1, b1] = anchors[a + 1];
            for (int f = f0; f <= f1 && f < T; ++f) {
                double alpha = f1 == f0 ? 0.0 : double(f - f0) / double(f1 - f0);
                Box b;
                b.cx = b0.cx + alpha * (b1.cx - b0.cx);
                b.cy = b0.cy + alpha * (b1.cy - b0.cy);
                b.w = b0.w + alpha * (b1.w - b0.w);
                b.h = b0.h + alpha * (b1.h - b0.h);
                t.boxes[size_t(f)] = b;
                t.present[size_t(f)] = true;
            }
        }
        // predictions only: mark absent before the first predicted frame
        if (!anchors.empty() && bridge_frame >= 0)
            for (int f = 0; f < std::min(bridge_frame, T); ++f) t.present[size_t(f)] = false;
        out[n] = std::move(t);
    }
    return out;
}

std::vector<std::vector<double>> predicted_appearances(
    const RunConfig& cfg, const feat::FeatureBundle& bundle,
    const concepts::ConceptSpace& space,
    const std::vector<std::vector<dyn::ObjState>>& pred) {
    std::vector<std::vector<double>> apps;
    for (int n = 0; n < bundle.N; ++n) {
        auto labels = concepts::quantize_static(bundle.fv_row(n), space);
        // color read from the first predicted patch; material and shape carry
        // over from the quantized track
        int color = labels[0];
        for (const auto& step : pred) {
            if (!step[size_t(n)].present) continue;
            double best = 1e300;
            for (int c = 0; c < kNumColors; ++c) {
                auto rgb = color_rgb(c);
                double d = 0;
                for (int k = 0; k < 3; ++k) {
                    double diff = rgb[size_t(k)] - step[size_t(n)].rgb[size_t(k)];
                    d += diff * diff;
                }
                if (d < best) {
                    best = d;
                    color = c;
                }
            }
            break;
        }
        std::vector<double> app(size_t(cfg.backbone.d_app), 0.0);
        app[size_t(color)] = 1.0;
        app[size_t(kNumColors + labels[1])] = 1.0;
        app[size_t(kNumColors + kNumMaterials + labels[2])] = 1.0;
        apps.push_back(std::move(app));
    }
    return apps;
}

// future rollout past the cut frame, featurized for UnseenEvents
exec::PredictedScene build_future_scene(const RunConfig& cfg, const VideoWork& w,
                                        const concepts::ConceptSpace& space,
                                        const dyn::DynNets& nets) {
    const int T = w.data->scene.T;
    const int cut = cfg.dataset.cut_frame;
    feat::TrackBackbone backbone(w.trajs, w.data->proposals);
    auto observed = clip_trajectories(w.trajs, cut);
    dyn::StridedVideo sv =
        dyn::strided_from_trajectories(observed, backbone, T, nets.cfg);
    std::vector<std::vector<dyn::ObjState>> window;
    std::vector<int> obs_frames;
    for (size_t s = 0; s < sv.frames.size(); ++s)
        if (sv.frames[s] < cut) {
            window.push_back(sv.steps[s]);
            obs_frames.push_back(sv.frames[s]);
        }
    std::vector<int> pred_frames;
    for (size_t s = 0; s < sv.frames.size(); ++s)
        if (sv.frames[s] >= cut) pred_frames.push_back(sv.frames[s]);
    exec::PredictedScene ps;
    if (int(window.size()) < nets.cfg.w || pred_frames.empty()) {
        // not enough observed history: empty prediction
        ps.unseen = feat::build_bundle(observed, backbone, cfg.backbone, T, T);
        ps.object_valid.assign(size_t(w.bundle.N), false);
        return ps;
    }
    auto pred = dyn::rollout(nets, window, int(pred_frames.size()));
    auto pred_trajs = expand_predictions(observed, pred, pred_frames, obs_frames.back(), T);
    VectorBackbone vb(predicted_appearances(cfg, w.bundle, space, pred));
    ps.unseen = feat::build_bundle(pred_trajs, vb, cfg.backbone, T, cut);
    for (int n = 0; n < w.bundle.N; ++n)
        ps.object_valid.push_back(w.bundle.t_in[size_t(n)] >= 0);
    return ps;
}

exec::PredictedScene build_cf_scene(const RunConfig& cfg, const VideoWork& w,
                                    const concepts::ConceptSpace& space,
                                    const dyn::DynNets& nets, int removed) {
    const int T = w.data->scene.T;
    feat::TrackBackbone backbone(w.trajs, w.data->proposals);
    dyn::StridedVideo sv = dyn::strided_from_trajectories(w.trajs, backbone, T, nets.cfg);
    int steps = int(sv.frames.size()) - nets.cfg.w;
    exec::PredictedScene ps;
    ps.counterfactual = true;
    ps.removed_obj = removed;
    if (steps <= 0) {
        ps.unseen = feat::build_bundle(w.trajs, backbone, cfg.backbone, T, T);
        ps.object_valid.assign(size_t(w.bundle.N), false);
        return ps;
    }
    auto pred = dyn::counterfactual_rollout(nets, sv, removed, steps);
    std::vector<int> pred_frames(sv.frames.begin() + nets.cfg.w, sv.frames.end());
    auto pred_trajs =
        expand_predictions(w.trajs, pred, pred_frames, sv.frames[size_t(nets.cfg.w - 1)], T);
    VectorBackbone vb(predicted_appearances(cfg, w.bundle, space, pred));
    ps.unseen = feat::build_bundle(pred_trajs, vb, cfg.backbone, T,
                                   sv.frames[size_t(nets.cfg.w)]);
    for (int n = 0; n < w.bundle.N; ++n)
        ps.object_valid.push_back(n != removed && w.bundle.t_in[size_t(n)] >= 0);
    return ps;
}

int resolve_removal(const QAPair& qa, const VideoWork& w, const concepts::ConceptSpace& space,
                    exec::ScoreCache* cache) {
    prog::Program stem = prog::parse_typed(qa.program);
    exec::ExecOptions opts;
    opts.cache = cache;
    exec::GroundOut g = exec::ground(stem, w.bundle, space, opts);
    return g.valid && !g.is_event ? g.object : -1;
}

}  // namespace

// ---- training pipeline -----------------------------------------------------

MetricsReport cmd_pipeline(const RunConfig& cfg) {
    std::string dir = cfg.run_dir();
    fs::create_directories(dir);
    write_file(dir + "/config.json", dump_json(cfg.to_json()));

    if (!fs::exists(dir + "/train_manifest.txt")) cmd_gen(cfg);
    std::printf("[pipeline] loading dataset\n");
    std::vector<VideoData> train = load_split(cfg, "train");
    std::vector<VideoData> test = load_split(cfg, "test");
    if (train.empty()) throw StageError("stage 1: empty training split");
    int T = train[0].scene.T;

    Rng rng(cfg.seed ^ 0x5EEDULL);
    concepts::ConceptSpace space(cfg.concepts, cfg.backbone, T, rng);

    // stage 1: base tracking + concept training on descriptive/explanatory QA
    std::printf("[pipeline] stage 1: base tracking + concept grounding\n");
    std::vector<VideoWork> work(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
        work[i].data = &train[i];
        work[i].trajs = run_tracker(cfg, train[i], track::LinkMode::Base, nullptr);
        build_bundle(cfg, work[i]);
    }
    std::vector<concepts::TrainItem> items;
    for (auto& w : work)
        for (const auto& qa : w.data->qa) {
            if (qa.qtype == QType::Predictive || qa.qtype == QType::Counterfactual) continue;
            items.push_back(concepts::make_train_item(qa, w.bundle));
        }
    concepts::FitSchedule sched;
    sched.lr = cfg.train.lr;
    sched.momentum = cfg.train.momentum;
    sched.batch = cfg.train.batch;
    sched.epochs = cfg.train.epochs_stage1;
    sched.clip = cfg.train.clip;
    sched.seed = cfg.seed;
    concepts::FitStats stage1 = concepts::fit(items, space, sched);
    write_file(dir + "/ckpt_stage1.bin", concepts::space_to_bytes(space));

    // stage 2: attribute quantization refines the trajectories
    std::printf("[pipeline] stage 2: trajectory refinement\n");
    track::Quantizer quantizer = concepts::concept_quantizer(space);
    for (auto& w : work) {
        w.trajs = run_tracker(cfg, *w.data, track::LinkMode::Refined, &quantizer);
        build_bundle(cfg, w);
    }
    write_file(dir + "/ckpt_stage2.bin", concepts::space_to_bytes(space));

    bool needs_dynamics = false;
    for (const auto& v : train)
        for (const auto& qa : v.qa)
            needs_dynamics |= qa.qtype == QType::Predictive ||
                              qa.qtype == QType::Counterfactual;

    std::optional<dyn::DynNets> nets;
    dyn::TrainStats dstats;
    if (needs_dynamics) {
        // stage 3: dynamics on the refined trajectories
        std::printf("[pipeline] stage 3: dynamics training\n");
        dyn::DynConfig dcfg = cfg.dynamics;
        Rng drng(cfg.seed ^ 0xD1CEULL);
        nets.emplace(dcfg, drng);
        std::vector<dyn::StridedVideo> corpus;
        for (auto& w : work) {
            feat::TrackBackbone backbone(w.trajs, w.data->proposals);
            corpus.push_back(dyn::strided_from_trajectories(w.trajs, backbone, T, dcfg));
        }
        dstats = dyn::train_dynamics(*nets, corpus, cfg.seed);
        write_file(dir + "/ckpt_dynamics.bin", dyn::nets_to_bytes(*nets));

        // stage 4: joint training over every question type with the predicted
        // scenes cached per video
        std::printf("[pipeline] stage 4: joint training with predictions\n");
        std::vector<concepts::TrainItem> all_items;
        for (auto& w : work) {
            bool any_pred = false, any_cf = false;
            for (const auto& qa : w.data->qa) {
                any_pred |= qa.qtype == QType::Predictive;
                any_cf |= qa.qtype == QType::Counterfactual;
            }
            if (any_pred) {
                w.pred_future = build_future_scene(cfg, w, space, *nets);
                auto cut_trajs = clip_trajectories(w.trajs, cfg.dataset.cut_frame);
                feat::TrackBackbone backbone(w.trajs, w.data->proposals);
                w.bundle_cut = feat::build_bundle(cut_trajs, backbone, cfg.backbone, T);
            }
            if (any_cf) {
                exec::ScoreCache cache;
                for (const auto& qa : w.data->qa) {
                    if (qa.qtype != QType::Counterfactual) continue;
                    int removed = resolve_removal(qa, w, space, &cache);
                    if (removed >= 0 && !w.pred_cf.count(removed))
                        w.pred_cf.emplace(removed,
                                          build_cf_scene(cfg, w, space, *nets, removed));
                }
            }
            for (const auto& qa : w.data->qa) {
                if (qa.qtype == QType::Predictive) {
                    if (w.pred_future)
                        all_items.push_back(
                            concepts::make_train_item(qa, w.bundle_cut, &*w.pred_future));
                } else if (qa.qtype == QType::Counterfactual) {
                    exec::ScoreCache cache;
                    int removed = resolve_removal(qa, w, space, &cache);
                    auto it = w.pred_cf.find(removed);
                    if (it != w.pred_cf.end())
                        all_items.push_back(
                            concepts::make_train_item(qa, w.bundle, &it->second));
                } else {
                    all_items.push_back(concepts::make_train_item(qa, w.bundle));
                }
            }
        }
        sched.epochs = cfg.train.epochs_stage4;
        sched.include_pred_cf = true;
        sched.seed = cfg.seed ^ 4;
        concepts::FitStats stage4 = concepts::fit(all_items, space, sched);
        for (double l : stage4.epoch_loss) stage1.epoch_loss.push_back(l);
    }
    write_file(dir + "/ckpt_final.bin", concepts::space_to_bytes(space));

    std::printf("[pipeline] evaluation\n");
    MetricsReport report = evaluate(cfg, test, space, nets ? &*nets : nullptr);
    report.concept_loss_curve = stage1.epoch_loss;
    report.dynamics_loss_curve = dstats.epoch_loss;
    if (stage1.halted) report.notes += "concept fit: " + stage1.note + "\n";
    write_file(dir + "/report.json", dump_json(report.to_json()));
    write_file(dir + "/report.txt", report.to_text());
    std::printf("%s", report.to_text().c_str());
    return report;
}

// ---- evaluation ---------------------------------------------------------------

namespace {

struct Matched {
    int track = -1;  // index into trajs / bundle rows
    int object = -1; // index into scene.objects
};

std::vector<Matched> match_tracks(const std::vector<track::Trajectory>& trajs,
                                  const SceneRecord& scene) {
    auto gt = track::gt_trajectories(scene);
    std::vector<Matched> out;
    std::vector<bool> used(trajs.size(), false);
    for (size_t g = 0; g < gt.size(); ++g) {
        double best = 0.5;
        int best_t = -1;
        for (size_t t = 0; t < trajs.size(); ++t) {
            if (used[t]) continue;
            double ov = track::trajectory_iou(trajs[t], gt[g]);
            if (ov > best) {
                best = ov;
                best_t = int(t);
            }
        }
        if (best_t >= 0) {
            used[size_t(best_t)] = true;
            out.push_back({best_t, int(g)});
        }
    }
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

MetricsReport evaluate(const RunConfig& cfg, const std::vector<VideoData>& test,
                       concepts::ConceptSpace& space, dyn::DynNets* nets) {
    MetricsReport rep;
    int T = test.empty() ? cfg.world.T : test[0].scene.T;
    track::Quantizer quantizer = concepts::concept_quantizer(space);

    std::vector<VideoWork> work(test.size());
    std::vector<exec::ScoreCache> caches(test.size());
    std::vector<std::vector<track::Trajectory>> base_trajs(test.size());
    for (size_t i = 0; i < test.size(); ++i) {
        work[i].data = &test[i];
        work[i].trajs = run_tracker(cfg, test[i], track::LinkMode::Refined, &quantizer);
        base_trajs[i] = run_tracker(cfg, test[i], track::LinkMode::Base, nullptr);
        build_bundle(cfg, work[i]);
    }

    // ---- tracker quality table
    {
        std::vector<double> thresholds = {0.5, 0.6, 0.7, 0.8, 0.9};
        std::vector<track::EvalRow> refined_total, base_total;
        std::vector<track::Trajectory> all_pred, all_gt, all_base;
        // evaluate per video and aggregate counts via micro-average
        std::vector<double> p_num(thresholds.size(), 0), p_den(thresholds.size(), 0),
            r_num(thresholds.size(), 0), r_den(thresholds.size(), 0), bp_num(thresholds.size(), 0),
            bp_den(thresholds.size(), 0);
        for (size_t i = 0; i < test.size(); ++i) {
            auto gt = track::gt_trajectories(test[i].scene);
            auto rows = track::eval_trajectories(work[i].trajs, gt, thresholds);
            auto rows_b = track::eval_trajectories(base_trajs[i], gt, thresholds);
            for (size_t k = 0; k < thresholds.size(); ++k) {
                p_num[k] += rows[k].precision * double(work[i].trajs.size());
                p_den[k] += double(work[i].trajs.size());
                if (rows[k].recall) {
                    r_num[k] += *rows[k].recall * double(gt.size());
                    r_den[k] += double(gt.size());
                }
                bp_num[k] += rows_b[k].precision * double(base_trajs[i].size());
                bp_den[k] += double(base_trajs[i].size());
            }
        }
        for (size_t k = 0; k < thresholds.size(); ++k) {
            track::EvalRow r;
            r.threshold = thresholds[k];
            r.precision = p_den[k] > 0 ? p_num[k] / p_den[k] : 0.0;
            if (r_den[k] > 0) r.recall = r_num[k] / r_den[k];
            rep.tracker_refined.push_back(r);
            track::EvalRow b;
            b.threshold = thresholds[k];
            b.precision = bp_den[k] > 0 ? bp_num[k] / bp_den[k] : 0.0;
            rep.tracker_base.push_back(b);
        }
    }

    // ---- QA accuracy
    std::map<std::string, std::pair<int, int>> per_type;       // correct, total
    std::map<std::string, std::pair<int, int>> per_option;
    for (size_t i = 0; i < test.size(); ++i) {
        VideoWork& w = work[i];
        bool built_future = false;
        for (const auto& qa : w.data->qa) {
            const exec::PredictedScene* predicted = nullptr;
            const feat::FeatureBundle* bundle = &w.bundle;
            exec::ScoreCache* cache = &caches[i];
            exec::ScoreCache local;  // predictive/cf run against other tensors
            if (qa.qtype == QType::Predictive) {
                if (!nets) continue;
                if (!built_future) {
                    w.pred_future = build_future_scene(cfg, w, space, *nets);
                    auto cut_trajs = clip_trajectories(w.trajs, cfg.dataset.cut_frame);
                    feat::TrackBackbone backbone(w.trajs, w.data->proposals);
                    w.bundle_cut = feat::build_bundle(cut_trajs, backbone, cfg.backbone, T);
                    built_future = true;
                }
                predicted = &*w.pred_future;
                bundle = &w.bundle_cut;
                cache = &local;
            } else if (qa.qtype == QType::Counterfactual) {
                if (!nets) continue;
                int removed = resolve_removal(qa, w, space, &caches[i]);
                if (removed < 0) continue;
                if (!w.pred_cf.count(removed))
                    w.pred_cf.emplace(removed, build_cf_scene(cfg, w, space, *nets, removed));
                predicted = &w.pred_cf.at(removed);
                cache = &local;
            }
            std::string type = qtype_name(qa.qtype);
            exec::ExecOptions opts;
            opts.cache = cache;
            opts.predicted = predicted;
            if (!qa.choices.empty()) {
                bool all_right = true;
                for (const auto& [text, label] : qa.choices) {
                    prog::Program p = prog::parse_typed(text);
                    exec::AnswerOut out = exec::execute(p, *bundle, space, opts);
                    bool right = out.kind == exec::AnswerOut::Kind::BooleanProb &&
                                 (out.prob > 0.5) == label;
                    per_option[type].first += right ? 1 : 0;
                    per_option[type].second += 1;
                    all_right &= right;
                }
                per_type[type].first += all_right ? 1 : 0;
                per_type[type].second += 1;
            } else {
                prog::Program p = prog::parse_typed(qa.program);
                exec::AnswerOut out = exec::execute(p, *bundle, space, opts);
                per_type[type].first += out.presented == qa.answer ? 1 : 0;
                per_type[type].second += 1;
            }
        }
    }
    double type_sum = 0;
    int type_n = 0;
    for (const auto& [type, pair] : per_type) {
        double acc = pair.second ? double(pair.first) / pair.second : 0.0;
        rep.qa_per_type[type] = acc;
        type_sum += acc;
        ++type_n;
    }
    rep.qa_average = type_n ? type_sum / type_n : 0.0;
    for (const auto& [type, pair] : per_option)
        rep.qa_per_option[type] = pair.second ? double(pair.first) / pair.second : 0.0;

    // ---- concept accuracies
    {
        int stat_ok = 0, stat_n = 0;
        int dyn_ok = 0, dyn_n = 0;
        int in_ok = 0, in_n = 0, out_ok = 0, out_n = 0;
        int col_ok = 0, col_n = 0;
        int fall_ok = 0, fall_n = 0;
        for (size_t i = 0; i < test.size(); ++i) {
            const SceneRecord& scene = test[i].scene;
            VideoWork& w = work[i];
            auto matches = match_tracks(w.trajs, scene);
            for (const auto& m : matches) {
                const ObjectGT& o = scene.objects[size_t(m.object)];
                auto labels = concepts::quantize_static(w.bundle.fv_row(m.track), space);
                stat_ok += labels[0] == o.color ? 1 : 0;
                stat_ok += labels[1] == o.material ? 1 : 0;
                stat_ok += labels[2] == o.shape ? 1 : 0;
                stat_n += 3;

                if (scene.world_kind == WorldKind::Tower) {
                    double p = concepts::score_to_prob(concepts::concept_score(
                        w.bundle.fs_row(m.track), "falling", concepts::Family::Dynamic, space));
                    fall_ok += (p > 0.5) == o.falling ? 1 : 0;
                    ++fall_n;
                }
                // moving/stationary at the anchors the concept space is
                // supervised at: the end of the video, else the start
                int anchor = -1;
                if (o.present[size_t(scene.T - 1)])
                    anchor = scene.T - 1;
                else if (o.present[0])
                    anchor = 0;
                if (anchor < 0) {
                    rep.dynamic_eval_excluded += 1;
                } else {
                    bool gt_mov = world::gt_moving_at(o, anchor);
                    auto mov = concepts::obj_filter("moving", w.bundle, space, nullptr, anchor);
                    auto sta = concepts::obj_filter("stationary", w.bundle, space, nullptr,
                                                    anchor);
                    dyn_ok += (concepts::score_to_prob(mov[size_t(m.track)]) > 0.5) == gt_mov
                                  ? 1
                                  : 0;
                    dyn_ok +=
                        (concepts::score_to_prob(sta[size_t(m.track)]) > 0.5) == !gt_mov ? 1 : 0;
                    dyn_n += 2;
                }

                // event detection as the executor exposes it: the score is
                // gated by the trajectory's presence span
                bool has_in = o.first_present() > 0;
                bool has_out = o.first_present() >= 0 && o.last_present() < scene.T - 1;
                bool gate_in = w.bundle.t_in[size_t(m.track)] > 0;
                bool gate_out = w.bundle.t_out[size_t(m.track)] < scene.T - 1;
                double p_in = !gate_in ? 0.0
                                       : concepts::score_to_prob(concepts::concept_score(
                                             w.bundle.fs_row(m.track), "in",
                                             concepts::Family::Dynamic, space));
                double p_out = !gate_out ? 0.0
                                         : concepts::score_to_prob(concepts::concept_score(
                                               w.bundle.fs_row(m.track), "out",
                                               concepts::Family::Dynamic, space));
                in_ok += (p_in > 0.5) == has_in ? 1 : 0;
                out_ok += (p_out > 0.5) == has_out ? 1 : 0;
                ++in_n;
                ++out_n;
            }
            // collisions per matched pair
            for (size_t a = 0; a < matches.size(); ++a)
                for (size_t b = a + 1; b < matches.size(); ++b) {
                    bool gt_col = false;
                    for (const auto& e : scene.events) {
                        if (e.kind != EventKind::Collision) continue;
                        bool match = (e.participants[0] == matches[a].object &&
                                      e.participants[1] == matches[b].object) ||
                                     (e.participants[0] == matches[b].object &&
                                      e.participants[1] == matches[a].object);
                        gt_col |= match;
                    }
                    double best = 0;
                    for (int k = 0; k < w.bundle.K; ++k) {
                        double p = concepts::score_to_prob(concepts::concept_score(
                            w.bundle.fc_entry(k, std::min(matches[a].track, matches[b].track),
                                              std::max(matches[a].track, matches[b].track)),
                            "collision", concepts::Family::Collision, space));
                        best = std::max(best, p);
                    }
                    col_ok += (best > 0.5) == gt_col ? 1 : 0;
                    ++col_n;
                }
        }
        if (stat_n) rep.concept_acc["static"] = double(stat_ok) / stat_n;
        if (dyn_n) rep.concept_acc["moving_stationary"] = double(dyn_ok) / dyn_n;
        if (in_n) rep.concept_acc["in"] = double(in_ok) / in_n;
        if (out_n) rep.concept_acc["out"] = double(out_ok) / out_n;
        if (col_n) rep.concept_acc["collision"] = double(col_ok) / col_n;
        if (fall_n) rep.concept_acc["falling"] = double(fall_ok) / fall_n;
    }

    // ---- grounding
    {
        int obj_hits = 0, obj_n = 0;
        double obj_iou_sum = 0;
        double col_union_sum = 0;
        int col_union_n = 0;
        std::map<std::string, std::vector<double>> frame_diffs;
        for (size_t i = 0; i < test.size(); ++i) {
            const SceneRecord& scene = test[i].scene;
            VideoWork& w = work[i];
            auto gt = track::gt_trajectories(scene);
            exec::ExecOptions opts;
            opts.cache = &caches[i];
            for (const auto& ex : test[i].ground_exprs) {
                prog::Program p = prog::parse_typed(ex.program);
                exec::GroundOut g = exec::ground(p, w.bundle, space, opts);
                if (ex.kind == ExprKind::GroundObject) {
                    ++obj_n;
                    if (!g.valid || g.is_event) continue;
                    double ov =
                        track::trajectory_iou(w.trajs[size_t(g.object)], gt[size_t(ex.target_object)]);
                    obj_iou_sum += ov;
                    obj_hits += ov > 0.5 ? 1 : 0;
                } else {
                    const EventGT* target = scene.find_event(ex.target_event);
                    if (!target || !g.valid || !g.is_event) continue;
                    double diff = std::abs(g.frame - target->frame);
                    frame_diffs[event_kind_name(target->kind)].push_back(diff);
                    if (target->kind == EventKind::Collision && g.partner >= 0) {
                        // union box at the predicted frame vs ground truth
                        int pf = std::clamp(g.frame, 0, scene.T - 1);
                        const auto& ta = w.trajs[size_t(g.object)];
                        const auto& tb = w.trajs[size_t(g.partner)];
                        if (ta.present[size_t(pf)] && tb.present[size_t(pf)]) {
                            Box pred_u = union_box(ta.boxes[size_t(pf)], tb.boxes[size_t(pf)]);
                            const auto& oa = scene.objects[size_t(target->participants[0])];
                            const auto& ob = scene.objects[size_t(target->participants[1])];
                            Box gt_u = union_box(oa.boxes[size_t(target->frame)],
                                                 ob.boxes[size_t(target->frame)]);
                            col_union_sum += iou(pred_u, gt_u);
                            ++col_union_n;
                        }
                    }
                }
            }
        }
        rep.ground_obj_acc50 = obj_n ? double(obj_hits) / obj_n : 0.0;
        rep.ground_obj_miou = obj_n ? obj_iou_sum / obj_n : 0.0;
        rep.ground_col_union_iou = col_union_n ? col_union_sum / col_union_n : 0.0;
        for (auto& [kind, v] : frame_diffs) rep.ground_frame_diff_median[kind] = median(v);
        std::vector<double> all;
        for (auto& [kind, v] : frame_diffs) all.insert(all.end(), v.begin(), v.end());
        if (!all.empty()) rep.ground_frame_diff_median["all"] = median(all);
    }

    // ---- retrieval
    {
        struct Query {
            std::string text, type;
            prog::Program program;
        };
        std::vector<Query> queries;
        std::set<std::string> seen;
        for (const auto& v : test)
            for (const auto& ex : v.retrieval_exprs) {
                if (int(queries.size()) >= cfg.dataset.retrieval_max) break;
                if (seen.count(ex.text)) continue;
                seen.insert(ex.text);
                queries.push_back({ex.text, ex.query_type, prog::parse_typed(ex.program)});
            }
        std::map<std::string, std::vector<double>> ap_per_type;
        for (const auto& q : queries) {
            std::vector<std::pair<double, int>> scored;  // score, video index
            std::vector<bool> positive(test.size(), false);
            int n_pos = 0;
            for (size_t i = 0; i < test.size(); ++i) {
                positive[i] = exec::oracle_execute(q.program, test[i].scene) == "yes";
                n_pos += positive[i] ? 1 : 0;
                exec::ExecOptions opts;
                opts.cache = &caches[i];
                exec::AnswerOut out = exec::execute(q.program, work[i].bundle, space, opts);
                scored.emplace_back(out.prob, int(i));
            }
            if (n_pos == 0) {
                rep.retrieval_skipped += 1;
                continue;
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            double ap = 0;
            int hits = 0;
            for (size_t rank = 0; rank < scored.size(); ++rank) {
                if (!positive[size_t(scored[rank].second)]) continue;
                ++hits;
                ap += double(hits) / double(rank + 1);
            }
            ap /= n_pos;
            ap_per_type[q.type].push_back(ap);
            ap_per_type["all"].push_back(ap);
        }
        for (auto& [type, v] : ap_per_type)
            rep.retrieval_map[type] = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    }

    return rep;
}

// ---- reports -------------------------------------------------------------------

ordered_json MetricsReport::to_json() const {
    ordered_json j;
    ordered_json qa;
    for (const auto& [k, v] : qa_per_type) qa[k] = num(v);
    j["qa_per_question"] = qa;
    ordered_json qo;
    for (const auto& [k, v] : qa_per_option) qo[k] = num(v);
    j["qa_per_option"] = qo;
    j["qa_average"] = num(qa_average);
    ordered_json ca;
    for (const auto& [k, v] : concept_acc) ca[k] = num(v);
    j["concept_accuracy"] = ca;
    j["dynamic_eval_excluded"] = dynamic_eval_excluded;
    j["grounding"] = {{"object_accuracy_at_0.5", num(ground_obj_acc50)},
                      {"object_mean_iou", num(ground_obj_miou)},
                      {"collision_union_iou", num(ground_col_union_iou)}};
    ordered_json fd;
    for (const auto& [k, v] : ground_frame_diff_median) fd[k] = num(v);
    j["grounding"]["frame_diff_median"] = fd;
    ordered_json rm;
    for (const auto& [k, v] : retrieval_map) rm[k] = num(v);
    j["retrieval_map"] = rm;
    j["retrieval_skipped"] = retrieval_skipped;
    auto rows = [&](const std::vector<track::EvalRow>& t) {
        ordered_json arr = ordered_json::array();
        for (const auto& r : t) {
            ordered_json jr;
            jr["threshold"] = num(r.threshold);
            jr["precision"] = num(r.precision);
            if (r.recall) jr["recall"] = num(*r.recall);
            arr.push_back(jr);
        }
        return arr;
    };
    j["tracker_refined"] = rows(tracker_refined);
    j["tracker_base"] = rows(tracker_base);
    ordered_json cl = ordered_json::array();
    for (double v : concept_loss_curve) cl.push_back(num(v));
    j["concept_loss_curve"] = cl;
    ordered_json dl = ordered_json::array();
    for (double v : dynamics_loss_curve) dl.push_back(num(v));
    j["dynamics_loss_curve"] = dl;
    if (!notes.empty()) j["notes"] = notes;
    return j;
}

std::string MetricsReport::to_text() const {
    std::string s;
    char buf[160];
    s += "== question answering (per question) ==\n";
    for (const auto& [k, v] : qa_per_type) {
        std::snprintf(buf, sizeof(buf), "  %-16s %.4f\n", k.c_str(), v);
        s += buf;
    }
    std::snprintf(buf, sizeof(buf), "  %-16s %.4f\n", "average", qa_average);
    s += buf;
    if (!qa_per_option.empty()) {
        s += "== multiple choice (per option) ==\n";
        for (const auto& [k, v] : qa_per_option) {
            std::snprintf(buf, sizeof(buf), "  %-16s %.4f\n", k.c_str(), v);
            s += buf;
        }
    }
    s += "== concept accuracy ==\n";
    for (const auto& [k, v] : concept_acc) {
        std::snprintf(buf, sizeof(buf), "  %-16s %.4f\n", k.c_str(), v);
        s += buf;
    }
    if (dynamic_eval_excluded) {
        std::snprintf(buf, sizeof(buf), "  (%d objects lacked a moment anchor)\n",
                      dynamic_eval_excluded);
        s += buf;
    }
    if (ground_obj_acc50 > 0 || !ground_frame_diff_median.empty()) {
        s += "== grounding ==\n";
        std::snprintf(buf, sizeof(buf), "  object acc@0.5   %.4f\n  object mIoU      %.4f\n",
                      ground_obj_acc50, ground_obj_miou);
        s += buf;
        std::snprintf(buf, sizeof(buf), "  collision uIoU   %.4f\n", ground_col_union_iou);
        s += buf;
        for (const auto& [k, v] : ground_frame_diff_median) {
            std::snprintf(buf, sizeof(buf), "  frame diff (%s)  %.2f\n", k.c_str(), v);
            s += buf;
        }
    }
    if (!retrieval_map.empty()) {
        s += "== retrieval mAP ==\n";
        for (const auto& [k, v] : retrieval_map) {
            std::snprintf(buf, sizeof(buf), "  %-16s %.4f\n", k.c_str(), v);
            s += buf;
        }
        if (retrieval_skipped) {
            std::snprintf(buf, sizeof(buf), "  (%d queries had no positives)\n",
                          retrieval_skipped);
            s += buf;
        }
    }
    s += "== tracker (refined / base precision) ==\n";
    for (size_t i = 0; i < tracker_refined.size(); ++i) {
        const auto& r = tracker_refined[i];
        std::snprintf(buf, sizeof(buf), "  iou %.1f  p=%.4f r=%.4f  base p=%.4f\n", r.threshold,
                      r.precision, r.recall.value_or(0.0),
                      i < tracker_base.size() ? tracker_base[i].precision : 0.0);
        s += buf;
    }
    return s;
}

// ---- auxiliary commands ---------------------------------------------------------

void cmd_track(const RunConfig& cfg, const std::string& split, track::LinkMode mode) {
    std::vector<VideoData> videos = load_split(cfg, split);
    std::string dir = cfg.run_dir() + "/tracks_" + split;
    fs::create_directories(dir);
    std::optional<concepts::ConceptSpace> space;
    track::Quantizer quantizer;
    if (mode == track::LinkMode::Refined) {
        std::string ckpt = cfg.run_dir() + "/ckpt_final.bin";
        if (fs::exists(ckpt)) {
            space = concepts::space_from_bytes(read_file(ckpt));
            quantizer = concepts::concept_quantizer(*space);
        } else {
            quantizer = track::oracle_quantizer();
        }
    }
    std::vector<double> thresholds = {0.5, 0.6, 0.7, 0.8, 0.9};
    for (const auto& v : videos) {
        auto trajs = track::extract_trajectories(
            v.proposals, cfg.tracker.params, mode,
            mode == track::LinkMode::Refined ? &quantizer : nullptr);
        if (cfg.tracker.kalman)
            for (auto& t : trajs) t = track::kalman_smooth(t);
        write_file(dir + "/" + v.scene.video_id + ".json",
                   dump_json(track::trajectories_to_json(trajs)));
        auto rows = track::eval_trajectories(trajs, track::gt_trajectories(v.scene), thresholds);
        write_file(dir + "/" + v.scene.video_id + ".csv", track::eval_to_csv(rows));
    }
    std::printf("tracked %zu videos into %s\n", videos.size(), dir.c_str());
}

TrainedModel load_model(const RunConfig& cfg) {
    TrainedModel m;
    std::string dir = cfg.run_dir();
    m.space = concepts::space_from_bytes(read_file(dir + "/ckpt_final.bin"));
    std::string dpath = dir + "/ckpt_dynamics.bin";
    if (fs::exists(dpath)) m.nets = dyn::nets_from_bytes(read_file(dpath));
    return m;
}

nlohmann::ordered_json cmd_answer(const RunConfig& cfg, const std::string& video_id,
                                  const std::string& question, bool want_trace) {
    TrainedModel model = load_model(cfg);
    std::string path = cfg.run_dir() + "/data/" + video_id + ".json";
    VideoData v = video_from_json(json::parse(read_file(path)));
    prog::ParsedQuestion q = prog::parse_question(question, cfg.templates());

    VideoWork w;
    w.data = &v;
    track::Quantizer quantizer = concepts::concept_quantizer(model.space);
    w.trajs = run_tracker(cfg, v, track::LinkMode::Refined, &quantizer);
    build_bundle(cfg, w);

    if (q.qtype == QType::Predictive || q.qtype == QType::Counterfactual)
        throw ConfigError(
            "answer: predictive/counterfactual questions need the full pipeline path; ask a "
            "descriptive, explanatory, count, or query question");

    std::vector<exec::TraceEntry> trace;
    exec::ExecOptions opts;
    if (want_trace) opts.trace = &trace;
    exec::AnswerOut out = exec::execute(q.program, w.bundle, model.space, opts);

    ordered_json j;
    j["video_id"] = video_id;
    j["question"] = question;
    j["program"] = prog::pretty_print(q.program);
    j["answer"] = out.presented;
    j["confidence"] = num(out.kind == exec::AnswerOut::Kind::BooleanProb ? out.prob
                          : out.kind == exec::AnswerOut::Kind::ConceptDist
                              ? [&] {
                                    double best = 0;
                                    for (auto& [n2, p] : out.dist) best = std::max(best, p);
                                    return best;
                                }()
                              : 1.0);
    if (want_trace) j["trace"] = exec::trace_to_json(trace);
    return j;
}

}  // namespace dcl::run
