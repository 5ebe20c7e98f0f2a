#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dcl/geometry.hpp"

#include "json.hpp"

namespace dcl {

// Closed attribute vocabulary. Appearance vectors are the concatenated
// one-hots in this order: color(8) | material(2) | shape(3).
inline constexpr int kNumColors = 8;
inline constexpr int kNumMaterials = 2;
inline constexpr int kNumShapes = 3;
inline constexpr int kAppearanceDim = kNumColors + kNumMaterials + kNumShapes;

const std::vector<std::string>& color_names();
const std::vector<std::string>& material_names();
const std::vector<std::string>& shape_names();

// Solid RGB used for synthetic patches, one entry per color name.
std::array<double, 3> color_rgb(int color);

struct ObjectGT {
    int obj_id = 0;
    int color = 0;     // index into color_names()
    int material = 0;  // index into material_names()
    int shape = 0;     // index into shape_names()
    std::vector<Box> boxes;            // length T; meaningful where present
    std::vector<bool> present;         // length T
    std::vector<double> vx, vy;        // length T, normalized units / frame
    bool falling = false;              // tower worlds only

    std::vector<double> appearance() const;  // clean one-hot triple
    int first_present() const;
    int last_present() const;
};

enum class EventKind { In, Out, Collision };
std::string event_kind_name(EventKind k);

struct EventGT {
    int event_id = 0;
    EventKind kind = EventKind::Collision;
    std::vector<int> participants;  // 1 obj for in/out, 2 for collision
    int frame = 0;
};

enum class WorldKind { Bounce, Tower, Predicted };
std::string world_kind_name(WorldKind k);

struct SceneRecord {
    std::string video_id;
    int T = 64;
    WorldKind world_kind = WorldKind::Bounce;
    std::vector<ObjectGT> objects;
    std::vector<EventGT> events;
    // Direct causal links: cause is a collision, effect a later event of one
    // of its participants. Ancestor queries take the transitive closure.
    std::vector<std::pair<int, int>> causal_edges;

    const EventGT* find_event(int event_id) const;
    // event ids of all causal ancestors of `event_id` (transitive closure)
    std::vector<int> ancestor_ids(int event_id) const;
};

struct Proposal {
    Box box;
    double score = 1.0;               // detector confidence s_c in (0,1]
    std::vector<double> appearance;   // length kAppearanceDim
};

struct ProposalFrame {
    int frame = 0;
    std::vector<Proposal> proposals;
};

enum class QType { Query, Exist, Count, Explanatory, Predictive, Counterfactual };
std::string qtype_name(QType t);
QType qtype_from_name(const std::string& s);

struct QAPair {
    std::string question;
    std::string program;  // stem program; selector for MC question types
    QType qtype = QType::Query;
    std::string answer;   // open-ended label, or joined per-choice labels
    std::vector<std::pair<std::string, bool>> choices;  // MC options
};

enum class ExprKind { GroundObject, GroundEvent, Retrieval };

struct Expression {
    std::string text;
    std::string program;
    ExprKind kind = ExprKind::GroundObject;
    // grounding targets
    int target_object = -1;  // GroundObject
    int target_event = -1;   // GroundEvent
    // retrieval metadata: one of obj|in|out|collision
    std::string query_type;
};

// JSON serialization (snake_case keys, floats at 9 significant digits).
nlohmann::ordered_json scene_to_json(const SceneRecord& s);
SceneRecord scene_from_json(const nlohmann::json& j);
nlohmann::ordered_json proposals_to_json(const std::vector<ProposalFrame>& frames);
std::vector<ProposalFrame> proposals_from_json(const nlohmann::json& j);
nlohmann::ordered_json qa_to_json(const std::vector<QAPair>& qa);
std::vector<QAPair> qa_from_json(const nlohmann::json& j);
nlohmann::ordered_json expressions_to_json(const std::vector<Expression>& ex);
std::vector<Expression> expressions_from_json(const nlohmann::json& j);

// Round-trippable number formatting: every double passes through format_g9
// before landing in a JSON document.
nlohmann::ordered_json num(double v);

std::string dump_json(const nlohmann::ordered_json& j);

}  // namespace dcl
