#include "dcl/concepts.hpp"

#include "dcl/worldsim.hpp"

#include <cmath>
#include <cstring>
#include <map>

namespace dcl::concepts {

namespace {

// embedding subspace layout for the oracle-initialized space
constexpr int kColorBase = 0;    // 8 dims
constexpr int kMaterialDim = 8;  // 1 dim, +/-
constexpr int kShapeBase = 10;   // 3 dims
constexpr int kDynBase = 13;     // in, out, moving, stationary, falling
constexpr int kColDim = 18;

const std::vector<std::string>& dynamic_concept_order() {
    static const std::vector<std::string> v = {"in", "out", "moving", "stationary", "falling"};
    return v;
}

std::vector<std::string> all_concept_names() {
    std::vector<std::string> names;
    for (const auto& c : prog::Vocab::instance().statics()) names.push_back(c.name);
    for (const auto& n : dynamic_concept_order()) names.push_back(n);
    names.push_back("collision");
    return names;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa < 1e-24 || bb < 1e-24) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace

ConceptSpace::ConceptSpace(const ConceptConfig& config, const feat::BackboneConfig& bb, int frames,
                           Rng& rng)
    : cfg(config), backbone(bb), T(frames), delta(config.delta), lambda_s(config.lambda_s) {
    auto init_map = [&](ad::Param& p, ad::Param& bias, const std::string& name, int rows,
                        int cols) {
        p = ad::Param(name, rows, cols);
        double s = 1.0 / std::sqrt(double(cols));
        for (auto& w : p.w) w = rng.gauss(0.0, s);
        bias = ad::Param(name + "_bias", rows, 1);
    };
    for (int a = 0; a < 3; ++a) {
        m_sa.emplace_back();
        m_sa_bias.emplace_back();
    }
    init_map(m_sa[0], m_sa_bias[0], "m_color", cfg.d_c, bb.d1());
    init_map(m_sa[1], m_sa_bias[1], "m_material", cfg.d_c, bb.d1());
    init_map(m_sa[2], m_sa_bias[2], "m_shape", cfg.d_c, bb.d1());
    init_map(m_da, m_da_bias, "m_da", cfg.d_c, dyn_in());
    init_map(m_col, m_col_bias, "m_col", cfg.d_c, bb.d2());

    for (const auto& name : all_concept_names()) {
        ad::Param e("s_" + name, cfg.d_c, 1);
        double norm = 0.0;
        for (auto& w : e.w) {
            w = rng.gauss(0.0, 1.0);
            norm += w * w;
        }
        norm = std::sqrt(norm);
        for (auto& w : e.w) w /= norm;
        embeddings.emplace(name, std::move(e));
        const prog::ConceptInfo* ci = prog::Vocab::instance().find(name);
        std::array<double, 3> ind = {0, 0, 0};
        if (ci && ci->is_static) ind[size_t(ci->attribute)] = 1.0;
        indicators.emplace(name, ind);
    }

    // Weak structured seed: tilt the collision map's overlap columns toward
    // the collision embedding. Pure random init leaves max-based credit
    // assignment pointing at arbitrary frames and training never localizes.
    {
        const auto& s_col = embeddings.at("collision").w;
        int frames = 2 * bb.loc_window + 1;
        int base = bb.d_app + 1;
        for (int r = 0; r < cfg.d_c; ++r)
            for (int pos = 0; pos < frames; ++pos)
                for (int d = 0; d < 4; ++d)
                    m_col.w[size_t(r) * size_t(bb.d2()) + size_t(base + pos * 4 + d)] +=
                        0.1 * s_col[size_t(r)];
    }
}

std::vector<ad::Param*> ConceptSpace::parameters() {
    std::vector<ad::Param*> ps;
    for (int a = 0; a < 3; ++a) {
        ps.push_back(&m_sa[size_t(a)]);
        ps.push_back(&m_sa_bias[size_t(a)]);
    }
    ps.push_back(&m_da);
    ps.push_back(&m_da_bias);
    ps.push_back(&m_col);
    ps.push_back(&m_col_bias);
    for (auto& [name, p] : embeddings) ps.push_back(&p);
    return ps;
}

std::vector<const ad::Param*> ConceptSpace::parameters() const {
    std::vector<const ad::Param*> ps;
    for (ad::Param* p : const_cast<ConceptSpace*>(this)->parameters()) ps.push_back(p);
    return ps;
}

int ConceptSpace::tau_raw() const {
    int stride = std::max(1, T / std::max(1, backbone.K));
    return cfg.tau_strides * stride;
}

std::vector<double> ConceptSpace::dynamic_lift(std::span<const double> fs_row) {
    std::vector<double> out(fs_row.begin(), fs_row.end());
    int T = int(fs_row.size()) / 4;
    double energy[4] = {0, 0, 0, 0};
    int support = 0;
    int prev = -1;
    auto present = [&](int t) {
        return fs_row[size_t(4 * t + 2)] > 0.0;  // nonzero width marks a live frame
    };
    for (int t = 0; t < T; ++t) {
        if (!present(t)) continue;
        ++support;
        if (prev >= 0 && prev == t - 1) {
            for (int d = 0; d < 4; ++d) {
                double diff = fs_row[size_t(4 * t + d)] - fs_row[size_t(4 * prev + d)];
                energy[size_t(d)] += diff * diff;
            }
        }
        prev = t;
    }
    // scaled so a moving object's energy lands at unit order
    for (int d = 0; d < 4; ++d) out.push_back(energy[size_t(d)] * 100.0);
    out.push_back(double(support) / double(std::max(T, 1)));
    return out;
}

std::vector<double> ConceptSpace::apply_map(Family family, int attribute,
                                            std::span<const double> feature) const {
    const ad::Param* W = nullptr;
    const ad::Param* b = nullptr;
    switch (family) {
        case Family::StaticAttr:
            W = &m_sa[size_t(attribute)];
            b = &m_sa_bias[size_t(attribute)];
            break;
        case Family::Dynamic: {
            std::vector<double> lifted = dynamic_lift(feature);
            W = &m_da;
            b = &m_da_bias;
            std::vector<double> out(size_t(W->rows), 0.0);
            for (int r = 0; r < W->rows; ++r) {
                const double* wr = W->w.data() + size_t(r) * size_t(W->cols);
                double s = b->w[size_t(r)];
                for (int col = 0; col < W->cols; ++col) s += wr[col] * lifted[size_t(col)];
                out[size_t(r)] = s;
            }
            return out;
        }
        case Family::Collision:
            W = &m_col;
            b = &m_col_bias;
            break;
    }
    if (int(feature.size()) != W->cols) throw ConfigError("apply_map: feature width mismatch");
    std::vector<double> out(size_t(W->rows), 0.0);
    for (int r = 0; r < W->rows; ++r) {
        const double* wr = W->w.data() + size_t(r) * size_t(W->cols);
        double s = b->w[size_t(r)];
        for (int c = 0; c < W->cols; ++c) s += wr[c] * feature[size_t(c)];
        out[size_t(r)] = s;
    }
    return out;
}

ad::Var ConceptSpace::apply_map_t(ad::Tape& tape, Family family, int attribute,
                                  std::span<const double> feature) {
    switch (family) {
        case Family::StaticAttr:
            return tape.affine_const(m_sa[size_t(attribute)], &m_sa_bias[size_t(attribute)],
                                     feature);
        case Family::Dynamic:
            return tape.affine_const(m_da, &m_da_bias, dynamic_lift(feature));
        case Family::Collision:
            return tape.affine_const(m_col, &m_col_bias, feature);
    }
    throw ConfigError("apply_map_t: bad family");
}

double ConceptSpace::score_mapped(const std::string& concept_name,
                                  std::span<const double> mapped) const {
    auto it = embeddings.find(concept_name);
    if (it == embeddings.end()) throw DataError("unknown concept: " + concept_name);
    double c = cosine({it->second.w.data(), it->second.w.size()}, mapped);
    return (c - delta) / lambda_s;
}

ad::Var ConceptSpace::score_mapped_t(ad::Tape& tape, const std::string& concept_name,
                                     ad::Var mapped) {
    auto it = embeddings.find(concept_name);
    if (it == embeddings.end()) throw DataError("unknown concept: " + concept_name);
    // zero feature: fixed score, no gradient
    double nn = 0.0;
    for (double v : tape.values(mapped)) nn += v * v;
    if (nn < 1e-24) return tape.scalar(-delta / lambda_s);
    ad::Var e = tape.param(it->second);
    ad::Var cos = tape.div(tape.dot(e, mapped),
                           tape.mul(tape.sqrt(tape.dot(e, e)), tape.sqrt(tape.dot(mapped, mapped))));
    return tape.scale(tape.offset(cos, -delta), 1.0 / lambda_s);
}

double concept_score(std::span<const double> feature, const std::string& concept_name,
                     Family family, const ConceptSpace& space) {
    if (family == Family::StaticAttr) {
        auto it = space.indicators.find(concept_name);
        if (it == space.indicators.end()) throw DataError("unknown concept: " + concept_name);
        double s = 0.0;
        for (int a = 0; a < 3; ++a) {
            if (it->second[size_t(a)] == 0.0) continue;
            std::vector<double> mapped = space.apply_map(family, a, feature);
            s += it->second[size_t(a)] * space.score_mapped(concept_name, mapped);
        }
        return s;
    }
    std::vector<double> mapped = space.apply_map(family, -1, feature);
    return space.score_mapped(concept_name, mapped);
}

ad::Var concept_score_t(ad::Tape& tape, std::span<const double> feature,
                        const std::string& concept_name, Family family, ConceptSpace& space) {
    if (family == Family::StaticAttr) {
        auto it = space.indicators.find(concept_name);
        if (it == space.indicators.end()) throw DataError("unknown concept: " + concept_name);
        ad::Var acc;
        for (int a = 0; a < 3; ++a) {
            if (it->second[size_t(a)] == 0.0) continue;
            ad::Var mapped = space.apply_map_t(tape, family, a, feature);
            ad::Var s = tape.scale(space.score_mapped_t(tape, concept_name, mapped),
                                   it->second[size_t(a)]);
            acc = acc.valid() ? tape.add(acc, s) : s;
        }
        return acc.valid() ? acc : tape.scalar(-space.delta / space.lambda_s);
    }
    ad::Var mapped = space.apply_map_t(tape, family, -1, feature);
    return space.score_mapped_t(tape, concept_name, mapped);
}

double score_to_prob(double score) { return 1.0 / (1.0 + std::exp(-score)); }

std::vector<double> obj_filter(const std::string& concept_name, const feat::FeatureBundle& bundle,
                               const ConceptSpace& space, const std::vector<uint8_t>* mask,
                               int t_star) {
    const prog::ConceptInfo* ci = prog::Vocab::instance().find(concept_name);
    std::vector<double> scores(size_t(bundle.N), 0.0);
    if (ci && ci->is_static) {
        if (t_star >= 0)
            throw ConfigError("obj_filter: static concept does not take a frame argument");
        for (int n = 0; n < bundle.N; ++n)
            scores[size_t(n)] =
                concept_score(bundle.fv_row(n), concept_name, Family::StaticAttr, space);
        return scores;
    }
    bool moment = ci && ci->moment_specific;
    if (moment && t_star < 0)
        throw ConfigError("obj_filter: moment-specific concept needs a frame argument");
    for (int n = 0; n < bundle.N; ++n) {
        std::vector<double> row(bundle.fs_row(n).begin(), bundle.fs_row(n).end());
        if (mask) row = feat::apply_time_mask(row, *mask);
        if (moment)
            row = feat::frame_specific_feature(row, bundle.T, t_star, space.tau_raw());
        scores[size_t(n)] = concept_score(row, concept_name, Family::Dynamic, space);
    }
    return scores;
}

int AttrDist::argmax() const {
    int best = 0;
    for (size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = int(i);
    return best;
}

AttrDist query_attribute(const std::map<std::string, double>& concept_scores, int attribute,
                         const ConceptSpace& space) {
    AttrDist out;
    double total = 0.0;
    for (const auto& [name, score] : concept_scores) {
        auto it = space.indicators.find(name);
        double w = it == space.indicators.end() ? 0.0 : it->second[size_t(attribute)];
        if (w <= 0.0) continue;
        out.names.push_back(name);
        double p = w * score_to_prob(score);
        out.p.push_back(p);
        total += p;
    }
    if (out.names.empty() || total <= 0.0) {
        out.degenerate = true;
        out.names = prog::Vocab::instance().attribute_concepts(attribute);
        out.p.assign(out.names.size(), 1.0 / double(out.names.size()));
        return out;
    }
    for (auto& p : out.p) p /= total;
    return out;
}

std::array<int, 3> quantize_static(std::span<const double> fv_row, const ConceptSpace& space) {
    std::array<int, 3> out = {0, 0, 0};
    for (int a = 0; a < 3; ++a) {
        std::vector<std::string> names = prog::Vocab::instance().attribute_concepts(a);
        std::vector<double> mapped = space.apply_map(Family::StaticAttr, a, fv_row);
        int best = 0;
        double best_score = -1e300;
        for (size_t i = 0; i < names.size(); ++i) {
            double s = space.score_mapped(names[i], mapped);
            if (s > best_score) {
                best_score = s;
                best = int(i);
            }
        }
        out[size_t(a)] = best;
    }
    return out;
}

track::Quantizer concept_quantizer(const ConceptSpace& space) {
    return [&space](const Proposal& p, const ProposalFrame& frame) {
        // per-proposal static feature: appearance plus frame-context mean
        std::vector<double> f(size_t(space.backbone.d1()), 0.0);
        int d = space.backbone.d_app;
        for (int i = 0; i < d && i < int(p.appearance.size()); ++i) f[size_t(i)] = p.appearance[size_t(i)];
        if (!frame.proposals.empty()) {
            for (const auto& q : frame.proposals)
                for (int i = 0; i < d && i < int(q.appearance.size()); ++i)
                    f[size_t(d + i)] += q.appearance[size_t(i)];
            for (int i = 0; i < d; ++i) f[size_t(d + i)] /= double(frame.proposals.size());
        }
        return quantize_static(f, space);
    };
}

// ---- oracle initialization --------------------------------------------------

namespace {

std::vector<double> simplex_vector(int k, int i, int base, int d_c) {
    // k points with pairwise cosine -1/(k-1), embedded at `base`
    std::vector<double> v(size_t(d_c), 0.0);
    double mean = 1.0 / double(k);
    double norm = 0.0;
    for (int j = 0; j < k; ++j) {
        double x = (j == i ? 1.0 : 0.0) - mean;
        v[size_t(base + j)] = x;
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (int j = 0; j < k; ++j) v[size_t(base + j)] /= norm;
    return v;
}

}  // namespace

ConceptSpace init_from_oracle(const SceneRecord& scene, const feat::BackboneConfig& backbone,
                              const ConceptConfig& cfg_in) {
    ConceptConfig cfg = cfg_in;
    Rng rng(0);
    ConceptSpace space(cfg, backbone, scene.T, rng);
    // sharper scoring scalars: match cosines sit far above delta, mismatches
    // far below, so sigmoid probabilities saturate and counts round exactly
    space.delta = 0.2;
    space.lambda_s = 0.05;

    int d_c = cfg.d_c;
    if (d_c < 19) throw ConfigError("init_from_oracle: d_c must be at least 19");

    // embeddings
    auto set_emb = [&](const std::string& name, const std::vector<double>& v) {
        auto& p = space.embeddings.at(name);
        p.w = v;
    };
    for (int c = 0; c < kNumColors; ++c)
        set_emb(color_names()[size_t(c)], simplex_vector(kNumColors, c, kColorBase, d_c));
    {
        std::vector<double> metal(size_t(d_c), 0.0), rubber(size_t(d_c), 0.0);
        metal[kMaterialDim] = 1.0;
        rubber[kMaterialDim] = -1.0;
        set_emb("metal", metal);
        set_emb("rubber", rubber);
    }
    for (int s = 0; s < kNumShapes; ++s)
        set_emb(shape_names()[size_t(s)], simplex_vector(kNumShapes, s, kShapeBase, d_c));
    for (size_t i = 0; i < dynamic_concept_order().size(); ++i) {
        std::vector<double> v(size_t(d_c), 0.0);
        v[size_t(kDynBase + int(i))] = 1.0;
        set_emb(dynamic_concept_order()[i], v);
    }
    {
        std::vector<double> v(size_t(d_c), 0.0);
        v[kColDim] = 1.0;
        set_emb("collision", v);
    }

    // static maps: the appearance one-hot slice routes straight to the
    // matching embedding; context columns are zero
    auto fill_static = [&](int attr, int slice_off, int k, int emb_base) {
        ad::Param& W = space.m_sa[size_t(attr)];
        std::fill(W.w.begin(), W.w.end(), 0.0);
        std::fill(space.m_sa_bias[size_t(attr)].w.begin(),
                  space.m_sa_bias[size_t(attr)].w.end(), 0.0);
        for (int i = 0; i < k; ++i) {
            std::vector<double> target;
            if (attr == 1) {
                target.assign(size_t(d_c), 0.0);
                target[kMaterialDim] = i == 0 ? 1.0 : -1.0;
            } else {
                target = simplex_vector(k, i, emb_base, d_c);
            }
            for (int r = 0; r < d_c; ++r)
                W.w[size_t(r) * size_t(W.cols) + size_t(slice_off + i)] = target[size_t(r)];
        }
    };
    fill_static(0, 0, kNumColors, kColorBase);
    fill_static(1, kNumColors, kNumMaterials, kMaterialDim);
    fill_static(2, kNumColors + kNumMaterials, kNumShapes, kShapeBase);

    // dynamic map: least-squares fit of sequence and frame-window features to
    // +-1 targets in the dynamic embedding subspace
    // rows align with scene.objects (never-present objects give zero rows,
    // which the constraint builder skips)
    auto trajs = track::gt_trajectories(scene);
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> targets;
    std::map<std::vector<double>, size_t> dedup;
    auto add_constraint = [&](const std::vector<double>& in, const std::vector<double>& tgt) {
        double nn = 0.0;
        for (double v : in) nn += v * v;
        if (nn < 1e-24) return;  // zero features score low by convention
        auto it = dedup.find(in);
        if (it != dedup.end()) return;
        dedup[in] = inputs.size();
        inputs.push_back(in);
        targets.push_back(tgt);
    };

    // Moment anchors are the frames the templates actually reference (video
    // start and end). Event-frame anchors make the constraint set rank
    // deficient on scenes with several static objects.
    int tau = space.tau_raw();
    std::vector<int> anchors = {0, scene.T - 1};

    for (size_t ti = 0; ti < trajs.size(); ++ti) {
        const ObjectGT& o = scene.objects[ti];
        std::vector<double> row = feat::temporal_sequence_feature(trajs[ti], scene.T);
        std::vector<double> tgt(size_t(d_c), 0.0);
        bool has_in = o.first_present() > 0;
        bool has_out = o.first_present() >= 0 && o.last_present() < scene.T - 1;
        bool moving = world::gt_moving_video(o);
        tgt[kDynBase + 0] = has_in ? 1.0 : -1.0;
        tgt[kDynBase + 1] = has_out ? 1.0 : -1.0;
        tgt[kDynBase + 2] = moving ? 1.0 : -1.0;
        tgt[kDynBase + 3] = moving ? -1.0 : 1.0;
        tgt[kDynBase + 4] = o.falling ? 1.0 : -1.0;
        add_constraint(row, tgt);

        for (int a : anchors) {
            std::vector<double> win = feat::frame_specific_feature(row, scene.T, a, tau);
            std::vector<double> wt(size_t(d_c), 0.0);
            bool mov = world::gt_moving_at(o, a);
            bool stat = a < int(o.present.size()) && o.present[size_t(a)] && !mov;
            wt[kDynBase + 2] = mov ? 1.0 : -1.0;
            wt[kDynBase + 3] = stat ? 1.0 : -1.0;
            add_constraint(win, wt);
        }
    }
    if (!inputs.empty()) {
        // fit over the lifted inputs the dynamic map actually consumes
        std::vector<std::vector<double>> lifted;
        for (const auto& in : inputs) lifted.push_back(ConceptSpace::dynamic_lift(in));
        Mat M = fit_linear_map(lifted, targets, 1e-12);
        for (size_t i = 0; i < space.m_da.w.size(); ++i) space.m_da.w[i] = M.a[i];
        std::fill(space.m_da_bias.w.begin(), space.m_da_bias.w.end(), 0.0);
        // the fit must be exact; dependent constraint sets would break the
        // crisp-score contract
        // deviations up to 0.01 on the +-1 targets shift scores by well under
        // the sigmoid saturation margin
        for (size_t i = 0; i < inputs.size(); ++i) {
            std::vector<double> got = space.apply_map(Family::Dynamic, -1, inputs[i]);
            for (int r = 0; r < d_c; ++r)
                if (std::abs(got[size_t(r)] - targets[i][size_t(r)]) > 1e-2)
                    throw DataError("init_from_oracle: dynamic map fit is not exact for " +
                                    scene.video_id);
        }
    }

    // collision map: sign of windowed IoU mass. Window positions -2..+1 carry
    // weight so each collision frame fires exactly one sampled slot.
    {
        ad::Param& W = space.m_col;
        std::fill(W.w.begin(), W.w.end(), 0.0);
        std::fill(space.m_col_bias.w.begin(), space.m_col_bias.w.end(), 0.0);
        int frames = 2 * backbone.loc_window + 1;
        int base = backbone.d_app + 1;
        for (int pos = 0; pos < frames - 1; ++pos)
            for (int d = 0; d < 4; ++d)
                W.w[size_t(kColDim) * size_t(W.cols) + size_t(base + pos * 4 + d)] = 0.25;
        space.m_col_bias.w[kColDim] = -0.005 * backbone.iou_gain;
    }
    return space;
}

// ---- checkpoints -------------------------------------------------------------

namespace {
constexpr char kMagic[9] = "DCLCKPT1";
}

std::string checkpoint_to_bytes(const nlohmann::ordered_json& header,
                                const std::vector<const ad::Param*>& params) {
    std::string s(kMagic, 8);
    std::string h = header.dump();
    uint32_t len = uint32_t(h.size());
    s.append(reinterpret_cast<const char*>(&len), 4);
    s += h;
    for (const ad::Param* p : params)
        for (double v : p->w) {
            float f = float(v);
            s.append(reinterpret_cast<const char*>(&f), 4);
        }
    return s;
}

nlohmann::json checkpoint_from_bytes(const std::string& bytes,
                                     const std::vector<ad::Param*>& params) {
    if (bytes.size() < 12 || bytes.compare(0, 8, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic");
    uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    if (bytes.size() < 12 + len) throw DataError("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(bytes.substr(12, len));
    size_t off = 12 + len;
    for (ad::Param* p : params) {
        for (double& v : p->w) {
            if (off + 4 > bytes.size()) throw DataError("checkpoint: truncated payload");
            float f;
            std::memcpy(&f, bytes.data() + off, 4);
            v = double(f);
            off += 4;
        }
    }
    if (off != bytes.size()) throw DataError("checkpoint: trailing payload");
    return header;
}

std::string space_to_bytes(const ConceptSpace& space) {
    nlohmann::ordered_json h;
    h["kind"] = "concept_space";
    h["d_c"] = space.cfg.d_c;
    h["tau_strides"] = space.cfg.tau_strides;
    h["delta"] = num(space.delta);
    h["lambda_s"] = num(space.lambda_s);
    h["t"] = space.T;
    h["d_app"] = space.backbone.d_app;
    h["k"] = space.backbone.K;
    h["patch"] = space.backbone.patch;
    h["loc_window"] = space.backbone.loc_window;
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (const auto& [name, p] : space.embeddings) names.push_back(name);
    h["concepts"] = names;
    return checkpoint_to_bytes(h, space.parameters());
}

ConceptSpace space_from_bytes(const std::string& bytes) {
    // parse header first to size the space
    if (bytes.size() < 12) throw DataError("checkpoint: too short");
    uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    nlohmann::json h = nlohmann::json::parse(bytes.substr(12, len));
    if (h.at("kind") != "concept_space") throw DataError("checkpoint: wrong kind");
    ConceptConfig cfg;
    cfg.d_c = h.at("d_c").get<int>();
    cfg.tau_strides = h.at("tau_strides").get<int>();
    feat::BackboneConfig bb;
    bb.d_app = h.at("d_app").get<int>();
    bb.K = h.at("k").get<int>();
    bb.patch = h.at("patch").get<int>();
    bb.loc_window = h.at("loc_window").get<int>();
    Rng rng(0);
    ConceptSpace space(cfg, bb, h.at("t").get<int>(), rng);
    space.delta = h.at("delta").get<double>();
    space.lambda_s = h.at("lambda_s").get<double>();
    checkpoint_from_bytes(bytes, space.parameters());
    return space;
}

}  // namespace dcl::concepts
