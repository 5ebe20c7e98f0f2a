#include "dcl/concept_train.hpp"

#include <algorithm>
#include <cmath>

namespace dcl::concepts {

namespace {
constexpr double kProbFloor = 1e-7;

ad::Var clamp_prob(ad::Tape& tape, ad::Var p) {
    // keep logs finite; saturated sigmoids can round to exactly 0 or 1
    ad::Var lo = tape.vmax(p, tape.scalar(kProbFloor));
    return tape.vmin(lo, tape.scalar(1.0 - kProbFloor));
}

ad::Var bce(ad::Tape& tape, ad::Var p, bool label) {
    ad::Var q = clamp_prob(tape, p);
    if (label) return tape.scale(tape.log(q), -1.0);
    return tape.scale(tape.log(tape.offset(tape.scale(q, -1.0), 1.0)), -1.0);
}
}  // namespace

TrainItem make_train_item(const QAPair& qa, const feat::FeatureBundle& bundle,
                          const exec::PredictedScene* predicted) {
    TrainItem item;
    item.bundle = &bundle;
    item.predicted = predicted;
    item.qtype = qa.qtype;
    item.answer = qa.answer;
    if (qa.choices.empty()) {
        item.program = prog::parse_typed(qa.program);
    } else {
        for (const auto& [text, label] : qa.choices) {
            item.choice_programs.push_back(prog::parse_typed(text));
            item.choice_labels.push_back(label);
        }
    }
    return item;
}

ad::Var qa_loss_t(ad::Tape& tape, const exec::AnswerOut& out, const std::string& label) {
    switch (out.kind) {
        case exec::AnswerOut::Kind::Integer: {
            // squared error near the target; linear tails keep event-count
            // items from drowning a batch while scores are uncalibrated
            int y = std::stoi(label);
            ad::Var diff = tape.offset(out.count_var, -double(y));
            double e = std::abs(tape.value(diff));
            constexpr double kHuber = 2.0;
            if (e <= kHuber) return tape.mul(diff, diff);
            ad::Var mag = tape.vmax(diff, tape.scale(diff, -1.0));
            return tape.offset(tape.scale(mag, 2.0 * kHuber), -kHuber * kHuber);
        }
        case exec::AnswerOut::Kind::BooleanProb: {
            if (label != "yes" && label != "no")
                throw DataError("qa_loss: boolean answer expected, got '" + label + "'");
            return bce(tape, out.prob_var, label == "yes");
        }
        case exec::AnswerOut::Kind::ConceptDist: {
            for (const auto& [name, v] : out.dist_vars)
                if (name == label) return tape.scale(tape.log(clamp_prob(tape, v)), -1.0);
            throw DataError("qa_loss: label '" + label + "' outside the answer vocabulary");
        }
        case exec::AnswerOut::Kind::Invalid:
            break;
    }
    // semantic dead end during training: no gradient, fixed penalty
    return tape.scalar(2.0);
}

ad::Var item_loss_t(ad::Tape& tape, const TrainItem& item, ConceptSpace& space) {
    if (!item.choice_programs.empty()) {
        std::vector<exec::AnswerOut> outs = exec::execute_many_t(
            tape, item.choice_programs, *item.bundle, space, item.predicted);
        ad::Var total = tape.scalar(0.0);
        for (size_t i = 0; i < outs.size(); ++i) {
            if (outs[i].kind != exec::AnswerOut::Kind::BooleanProb) {
                total = tape.add(total, tape.scalar(2.0));
                continue;
            }
            total = tape.add(total, bce(tape, outs[i].prob_var, item.choice_labels[i]));
        }
        return tape.scale(total, 1.0 / double(outs.size()));
    }
    exec::AnswerOut out = exec::execute_t(tape, item.program, *item.bundle, space,
                                          item.predicted);
    return qa_loss_t(tape, out, item.answer);
}

FitStats fit(const std::vector<TrainItem>& dataset, ConceptSpace& space,
             const FitSchedule& schedule) {
    FitStats stats;
    std::vector<size_t> order;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const TrainItem& item = dataset[i];
        bool pred_cf =
            item.qtype == QType::Predictive || item.qtype == QType::Counterfactual;
        if (pred_cf && !schedule.include_pred_cf) continue;
        order.push_back(i);
    }
    if (order.empty()) {
        stats.note = "no trainable items";
        return stats;
    }

    ad::SgdMomentum opt;
    opt.lr = schedule.lr;
    opt.momentum = schedule.momentum;
    ad::Adam adam;
    adam.lr = schedule.lr;
    auto params = space.parameters();
    Rng rng(schedule.seed ^ 0xC0FFEEULL);
    ad::Tape tape;

    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t base = 0; base < order.size(); base += size_t(schedule.batch)) {
            ad::zero_grads(params);
            size_t hi = std::min(order.size(), base + size_t(schedule.batch));
            for (size_t oi = base; oi < hi; ++oi) {
                tape.reset();
                ad::Var loss = item_loss_t(tape, dataset[order[oi]], space);
                double lv = tape.value(loss);
                if (!std::isfinite(lv))
                    throw StageError("fit: non-finite loss in batch " +
                                     std::to_string(base / size_t(schedule.batch)) +
                                     " of epoch " + std::to_string(epoch));
                epoch_loss += lv;
                tape.backward(loss);
            }
            double inv = 1.0 / double(hi - base);
            for (ad::Param* p : params)
                for (double& g : p->g) g *= inv;
            ad::clip_grad_norm(params, schedule.clip);
            if (schedule.adam)
                adam.step(params);
            else
                opt.step(params);
        }
        stats.epoch_loss.push_back(epoch_loss / double(order.size()));
        if (epoch >= 5 &&
            stats.epoch_loss[size_t(epoch)] > stats.epoch_loss[size_t(epoch - 5)]) {
            stats.halted = true;
            stats.note = "loss stopped improving at epoch " + std::to_string(epoch) + " (" +
                         format_g9(stats.epoch_loss[size_t(epoch - 5)]) + " -> " +
                         format_g9(stats.epoch_loss[size_t(epoch)]) + ")";
            break;
        }
    }
    return stats;
}

}  // namespace dcl::concepts
