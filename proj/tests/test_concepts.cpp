#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dcl/concepts.hpp"
#include "dcl/qa_gen.hpp"
#include "dcl/worldsim.hpp"

using namespace dcl;
using namespace dcl::concepts;

namespace {
feat::FeatureBundle gt_bundle(const SceneRecord& scene, const feat::BackboneConfig& cfg) {
    feat::SceneBackbone backbone(scene);
    return feat::build_bundle(track::gt_trajectories(scene), backbone, cfg, scene.T);
}
}  // namespace

TEST_CASE("concept_score with paper constants") {
    // cos = 1 against a space whose map is identity on a known embedding
    Rng rng(1);
    feat::BackboneConfig bb;
    ConceptConfig cc;
    ConceptSpace space(cc, bb, 64, rng);
    // craft: embedding e, map output equal to e for a chosen feature
    auto& emb = space.embeddings.at("red");
    std::fill(space.m_sa[0].w.begin(), space.m_sa[0].w.end(), 0.0);
    std::fill(space.m_sa_bias[0].w.begin(), space.m_sa_bias[0].w.end(), 0.0);
    for (int r = 0; r < cc.d_c; ++r) space.m_sa[0].w[size_t(r) * size_t(bb.d1())] = emb.w[size_t(r)];
    std::vector<double> f(size_t(bb.d1()), 0.0);
    f[0] = 1.0;
    double s = concept_score(f, "red", Family::StaticAttr, space);
    CHECK(s == doctest::Approx((1.0 - 0.15) / 0.2).epsilon(1e-9));  // 4.25
    // cos == delta cancels
    space.delta = 1.0;
    CHECK(concept_score(f, "red", Family::StaticAttr, space) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("score_to_prob is the logistic map") {
    CHECK(score_to_prob(0.0) == doctest::Approx(0.5));
    CHECK(score_to_prob(4.25) == doctest::Approx(0.98587).epsilon(1e-4));
    CHECK(score_to_prob(50.0) > 0.999999);
    double prev = -1.0;
    for (double s = -6; s <= 6; s += 0.25) {
        double p = score_to_prob(s);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("oracle-initialized space scores ground truth crisply") {
    world::WorldConfig wc;
    wc.traveler_frac = 0.5;
    feat::BackboneConfig bb;
    for (uint64_t seed = 0; seed < 8; ++seed) {
        SceneRecord scene = world::gen_video(wc, seed);
        ConceptSpace space = init_from_oracle(scene, bb);
        feat::FeatureBundle bundle = gt_bundle(scene, bb);
        for (int n = 0; n < bundle.N; ++n) {
            const auto& o = scene.objects[size_t(n)];
            for (const auto& ci : prog::Vocab::instance().statics()) {
                bool holds = (ci.attribute == 0 && o.color == ci.index_in_attribute) ||
                             (ci.attribute == 1 && o.material == ci.index_in_attribute) ||
                             (ci.attribute == 2 && o.shape == ci.index_in_attribute);
                double p = score_to_prob(
                    concept_score(bundle.fv_row(n), ci.name, Family::StaticAttr, space));
                if (holds)
                    CHECK(p > 0.99);
                else
                    CHECK(p < 0.01);
            }
            bool has_in = o.first_present() > 0;
            double p_in = score_to_prob(
                concept_score(bundle.fs_row(n), "in", Family::Dynamic, space));
            CHECK((p_in > 0.95) == has_in);
            bool has_out = o.first_present() >= 0 && o.last_present() < scene.T - 1;
            double p_out = score_to_prob(
                concept_score(bundle.fs_row(n), "out", Family::Dynamic, space));
            CHECK((p_out > 0.95) == has_out);
            bool moving = world::gt_moving_video(o);
            double p_mov = score_to_prob(
                concept_score(bundle.fs_row(n), "moving", Family::Dynamic, space));
            CHECK((p_mov > 0.95) == moving);
        }
        // collision tensor: every ground-truth collision fires exactly one
        // sampled slot of its pair, and nothing else fires
        std::map<std::pair<int, int>, std::vector<int>> fired;
        for (int k = 0; k < bundle.K; ++k)
            for (int i = 0; i < bundle.N; ++i)
                for (int j = i + 1; j < bundle.N; ++j) {
                    double p = score_to_prob(concept_score(bundle.fc_entry(k, i, j), "collision",
                                                           Family::Collision, space));
                    if (p > 0.5) fired[{i, j}].push_back(k);
                }
        std::map<std::pair<int, int>, int> expected;
        for (const auto& e : scene.events) {
            if (e.kind != EventKind::Collision) continue;
            int a = std::min(e.participants[0], e.participants[1]);
            int b = std::max(e.participants[0], e.participants[1]);
            expected[{a, b}] += 1;
        }
        size_t fired_total = 0;
        for (auto& [pair, ks] : fired) fired_total += ks.size();
        size_t expected_total = 0;
        for (auto& [pair, c] : expected) expected_total += size_t(c);
        CHECK(fired_total == expected_total);
        for (auto& [pair, c] : expected) CHECK(fired[pair].size() == size_t(c));
    }
}

TEST_CASE("quantize_static matches ground truth on clean features") {
    world::WorldConfig wc;
    SceneRecord scene = world::gen_video(wc, 17);
    feat::BackboneConfig bb;
    ConceptSpace space = init_from_oracle(scene, bb);
    feat::FeatureBundle bundle = gt_bundle(scene, bb);
    for (int n = 0; n < bundle.N; ++n) {
        auto [c, m, s] = quantize_static(bundle.fv_row(n), space);
        CHECK(c == scene.objects[size_t(n)].color);
        CHECK(m == scene.objects[size_t(n)].material);
        CHECK(s == scene.objects[size_t(n)].shape);
    }
    // cosine scale invariance: doubling an embedding changes no argmax
    for (auto& [name, p] : space.embeddings)
        for (auto& w : p.w) w *= 2.0;
    for (int n = 0; n < bundle.N; ++n) {
        auto [c, m, s] = quantize_static(bundle.fv_row(n), space);
        CHECK(c == scene.objects[size_t(n)].color);
        CHECK(m == scene.objects[size_t(n)].material);
        CHECK(s == scene.objects[size_t(n)].shape);
    }
}

TEST_CASE("query_attribute normalizes and breaks ties sensibly") {
    Rng rng(2);
    feat::BackboneConfig bb;
    ConceptConfig cc;
    ConceptSpace space(cc, bb, 64, rng);
    std::map<std::string, double> scores;
    // one dominant color
    for (const auto& name : prog::Vocab::instance().attribute_concepts(0))
        scores[name] = score_to_prob(0.01) < 1 ? -4.6 : 0.0;  // sigma ~= 0.01
    scores["red"] = 4.6;  // sigma ~= 0.99
    AttrDist d = query_attribute(scores, 0, space);
    double sum = 0;
    for (double p : d.p) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.names[size_t(d.argmax())] == "red");
    CHECK(d.p[size_t(d.argmax())] == doctest::Approx(0.99 / (0.99 + 7 * 0.01)).epsilon(1e-2));

    // all equal scores give the uniform distribution
    std::map<std::string, double> flat;
    for (const auto& name : prog::Vocab::instance().attribute_concepts(2)) flat[name] = 0.7;
    AttrDist u = query_attribute(flat, 2, space);
    for (double p : u.p) CHECK(p == doctest::Approx(1.0 / 3));
}

TEST_CASE("concept space checkpoints round-trip bit-exactly") {
    Rng rng(4);
    feat::BackboneConfig bb;
    ConceptConfig cc;
    ConceptSpace space(cc, bb, 64, rng);
    std::string bytes = space_to_bytes(space);
    ConceptSpace loaded = space_from_bytes(bytes);
    CHECK(space_to_bytes(loaded) == bytes);
    CHECK(loaded.delta == space.delta);
    CHECK(loaded.T == space.T);
}
