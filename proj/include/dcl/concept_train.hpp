#pragma once

#include "dcl/concepts.hpp"
#include "dcl/executor.hpp"

namespace dcl::concepts {

// One supervised question: a stem program for open-ended answers, or a set
// of boolean choice programs for multiple-choice types.
struct TrainItem {
    const feat::FeatureBundle* bundle = nullptr;
    const exec::PredictedScene* predicted = nullptr;  // predictive/counterfactual
    QType qtype = QType::Query;
    prog::Program program;                 // open-ended stem
    std::string answer;
    std::vector<prog::Program> choice_programs;
    std::vector<bool> choice_labels;
};

TrainItem make_train_item(const QAPair& qa, const feat::FeatureBundle& bundle,
                          const exec::PredictedScene* predicted = nullptr);

// Cross-entropy for open-ended answers, squared error on the accumulated
// count for counting, binary cross-entropy per choice.
ad::Var qa_loss_t(ad::Tape& tape, const exec::AnswerOut& out, const std::string& label);

// taped loss of one item (executes the programs)
ad::Var item_loss_t(ad::Tape& tape, const TrainItem& item, ConceptSpace& space);

struct FitSchedule {
    double lr = 1e-2;
    double momentum = 0.9;
    bool adam = false;
    int batch = 16;
    int epochs = 20;
    double clip = 5.0;
    bool include_pred_cf = false;  // stage 1 trains descriptive+explanatory only
    uint64_t seed = 0;
};

struct FitStats {
    std::vector<double> epoch_loss;
    bool halted = false;
    std::string note;
};

// SGD with momentum over tape gradients. Halts with a diagnostics note when
// the epoch-mean loss stops improving over a 5-epoch window.
FitStats fit(const std::vector<TrainItem>& dataset, ConceptSpace& space,
             const FitSchedule& schedule);

}  // namespace dcl::concepts
