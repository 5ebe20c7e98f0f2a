#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dcl/features.hpp"
#include "dcl/proglang.hpp"
#include "dcl/tape.hpp"

namespace dcl::concepts {

struct ConceptConfig {
    int d_c = 32;          // embedding width
    double delta = 0.15;   // shift
    double lambda_s = 0.2; // scale
    int tau_strides = 2;   // moment window, in sampled-frame strides
};

enum class Family { StaticAttr, Dynamic, Collision };

// Trainable state: concept embeddings, fixed one-hot attribute indicators,
// one linear map per feature family, and the (delta, lambda) scoring scalars.
class ConceptSpace {
public:
    ConceptSpace() = default;
    ConceptSpace(const ConceptConfig& cfg, const feat::BackboneConfig& backbone, int T,
                 Rng& rng);

    ConceptConfig cfg;
    feat::BackboneConfig backbone;
    int T = 0;
    double delta = 0.15;
    double lambda_s = 0.2;

    // static attribute maps (color, material, shape): d_c x D1 + bias
    std::vector<ad::Param> m_sa, m_sa_bias;
    ad::Param m_da, m_da_bias;    // dynamic map: d_c x 4T
    ad::Param m_col, m_col_bias;  // collision map: d_c x D2
    std::map<std::string, ad::Param> embeddings;
    // L1-normalized indicator over (color, material, shape); one-hot here
    std::map<std::string, std::array<double, 3>> indicators;

    std::vector<ad::Param*> parameters();
    std::vector<const ad::Param*> parameters() const;

    int tau_raw() const;  // moment window in raw frames

    // The dynamic map runs on the sequence feature plus fixed motion-energy
    // channels (squared consecutive differences and a support count). A
    // purely linear map over raw coordinates cannot separate moving from
    // stationary: displacement direction is sign-symmetric, so every linear
    // image of it straddles any concept embedding.
    static std::vector<double> dynamic_lift(std::span<const double> fs_row);
    int dyn_in() const { return 4 * T + 5; }

    // family map application (plain / taped)
    std::vector<double> apply_map(Family family, int attribute,
                                  std::span<const double> feature) const;
    ad::Var apply_map_t(ad::Tape& tape, Family family, int attribute,
                        std::span<const double> feature);

    // shifted, scaled cosine against one concept embedding
    double score_mapped(const std::string& concept_name, std::span<const double> mapped) const;
    ad::Var score_mapped_t(ad::Tape& tape, const std::string& concept_name, ad::Var mapped);
};

// score = sum_attr indicator * (cos(embedding, map(feature)) - delta) / lambda
double concept_score(std::span<const double> feature, const std::string& concept_name,
                     Family family, const ConceptSpace& space);
ad::Var concept_score_t(ad::Tape& tape, std::span<const double> feature,
                        const std::string& concept_name, Family family, ConceptSpace& space);

double score_to_prob(double score);

// Per-object scores for one concept over a bundle. Dynamic moment-specific
// concepts need t_star; video-level ones score the (optionally masked) rows.
std::vector<double> obj_filter(const std::string& concept_name, const feat::FeatureBundle& bundle,
                               const ConceptSpace& space,
                               const std::vector<uint8_t>* mask = nullptr, int t_star = -1);

struct AttrDist {
    std::vector<std::string> names;
    std::vector<double> p;
    bool degenerate = false;  // zero indicator mass; uniform fallback
    int argmax() const;
};

// Logistic-normalized distribution over one attribute's concepts.
AttrDist query_attribute(const std::map<std::string, double>& concept_scores, int attribute,
                         const ConceptSpace& space);

// argmax concept per attribute for one static feature row
std::array<int, 3> quantize_static(std::span<const double> fv_row, const ConceptSpace& space);

// Proposal-level quantizer for refined tracking: appearance + frame context.
track::Quantizer concept_quantizer(const ConceptSpace& space);

// Scene-exact space: crisp scores on noiseless features. Static maps are
// closed-form; dynamic and collision maps are fitted per scene. Uses a
// sharper (delta, lambda) pair than the trained default so that probabilities
// saturate and accumulated counts round exactly.
ConceptSpace init_from_oracle(const SceneRecord& scene, const feat::BackboneConfig& backbone,
                              const ConceptConfig& cfg = {});

// checkpoint container shared with the dynamics nets: magic, JSON header,
// float32 payload
std::string checkpoint_to_bytes(const nlohmann::ordered_json& header,
                                const std::vector<const ad::Param*>& params);
nlohmann::json checkpoint_from_bytes(const std::string& bytes,
                                     const std::vector<ad::Param*>& params);

std::string space_to_bytes(const ConceptSpace& space);
ConceptSpace space_from_bytes(const std::string& bytes);

}  // namespace dcl::concepts
