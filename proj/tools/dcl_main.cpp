// Command-line front end: dataset generation, tracking, the four-stage
// training pipeline, and evaluation utilities.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcl/pipeline.hpp"

using namespace dcl;

namespace {

run::RunConfig make_config(const std::string& path, const std::vector<std::string>& sets) {
    return run::load_config(path, sets);
}

int dispatch(int argc, char** argv) {
    CLI::App app{"dynamic concept learner: synthetic videos, tracking, grounding, reasoning"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("-c,--config", config_path, "run configuration JSON");
    app.add_option("--set", sets, "override config keys, e.g. --set dataset.n_train=50");

    auto* gen = app.add_subcommand("gen", "generate scenes, proposals, QA, and expressions");

    auto* track_cmd = app.add_subcommand("track", "link proposals into trajectories");
    std::string split = "test";
    std::string mode = "refined";
    track_cmd->add_option("--split", split, "train|test");
    track_cmd->add_option("--mode", mode, "base|refined");

    auto* pipeline = app.add_subcommand("pipeline", "run the four training stages + evaluation");

    auto* answer = app.add_subcommand("answer", "answer one question against a video");
    std::string video_id, question;
    bool trace = false;
    answer->add_option("--video", video_id, "video id from the dataset")->required();
    answer->add_option("--question", question, "templated question text")->required();
    answer->add_flag("--trace", trace, "dump the per-node execution trace");

    auto* ground = app.add_subcommand("ground", "object/event grounding metrics");
    auto* retrieve = app.add_subcommand("retrieve", "expression-to-video retrieval mAP");
    auto* eval = app.add_subcommand("eval", "full evaluation report on the test split");
    for (CLI::App* sub : {gen, track_cmd, pipeline, answer, ground, retrieve, eval})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    run::RunConfig cfg = make_config(config_path, sets);

    if (gen->parsed()) {
        run::cmd_gen(cfg);
        return 0;
    }
    if (track_cmd->parsed()) {
        run::cmd_track(cfg, split,
                       mode == "base" ? track::LinkMode::Base : track::LinkMode::Refined);
        return 0;
    }
    if (pipeline->parsed()) {
        run::cmd_pipeline(cfg);
        return 0;
    }
    if (answer->parsed()) {
        auto j = run::cmd_answer(cfg, video_id, question, trace);
        std::printf("%s", dump_json(j).c_str());
        return 0;
    }
    if (ground->parsed() || retrieve->parsed() || eval->parsed()) {
        run::TrainedModel model = run::load_model(cfg);
        std::vector<run::VideoData> test = run::load_split(cfg, "test");
        run::MetricsReport rep = run::evaluate(cfg, test, model.space,
                                               model.nets ? &*model.nets : nullptr);
        if (ground->parsed()) {
            std::printf("object acc@0.5 %.4f  mIoU %.4f  collision uIoU %.4f\n",
                        rep.ground_obj_acc50, rep.ground_obj_miou, rep.ground_col_union_iou);
            for (const auto& [k, v] : rep.ground_frame_diff_median)
                std::printf("frame diff median (%s): %.2f\n", k.c_str(), v);
        } else if (retrieve->parsed()) {
            for (const auto& [k, v] : rep.retrieval_map)
                std::printf("mAP %-10s %.4f\n", k.c_str(), v);
            if (rep.retrieval_skipped)
                std::printf("skipped %d queries with no positives\n", rep.retrieval_skipped);
        } else {
            std::printf("%s", rep.to_text().c_str());
            write_file(cfg.run_dir() + "/report.json", dump_json(rep.to_json()));
        }
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const StageError& e) {
        std::fprintf(stderr, "stage failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
