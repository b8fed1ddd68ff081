#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "icpipe/config.hpp"
#include "icpipe/datagen.hpp"
#include "icpipe/errors.hpp"
#include "icpipe/hybrid.hpp"
#include "icpipe/pipeline.hpp"
#include "icpipe/png_io.hpp"
#include "icpipe/workflows.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tracks files created by one command so a failure leaves no partial output.
class OutputGuard {
public:
    fs::path track(fs::path p) {
        paths_.push_back(p);
        return p;
    }
    void commit() { committed_ = true; }
    ~OutputGuard() {
        if (committed_) return;
        std::error_code ec;
        for (const fs::path& p : paths_) fs::remove_all(p, ec);
    }

private:
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::int64_t seed = -1;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "JSON config file");
    cmd->add_option("--set", args.overrides, "override a config key, e.g. train.batch_size=16");
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed, "global seed (overrides config)");
    cmd->add_option("--workers", args.workers, "worker count (overrides config)");
}

icpipe::config::RunConfig make_config(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (args.seed >= 0) overrides.push_back("seed=" + std::to_string(args.seed));
    if (args.workers > 0) overrides.push_back("workers=" + std::to_string(args.workers));
    return icpipe::config::load_config(
        args.config_file.empty() ? fs::path() : fs::path(args.config_file), overrides);
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

json metrics_to_json(const icpipe::evaluation::MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    return json{{"level", r.level},
                {"center", r.center},
                {"accuracy", opt(r.accuracy)},
                {"precision", opt(r.precision)},
                {"recall", opt(r.recall)},
                {"f1", opt(r.f1)},
                {"confusion",
                 {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}}};
}

json train_log_to_json(const icpipe::model::TrainOutcome& outcome) {
    json epochs = json::array();
    for (const auto& e : outcome.log.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
    return json{{"epochs", epochs},
                {"best_epoch", outcome.log.best_epoch},
                {"best_val_loss", outcome.log.best_val_loss},
                {"stopped_early", outcome.log.stopped_early},
                {"warnings", outcome.warnings},
                {"p0", outcome.model.p0},
                {"slide_threshold", outcome.model.slide_threshold},
                {"train_patch_count", outcome.model.train_patch_count}};
}

int cmd_gen(const CommonArgs& args) {
    const auto cfg = make_config(args);
    OutputGuard guard;
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    icpipe::config::write_run_config(cfg, "gen", guard.track(out / "run-config.json"));

    icpipe::datagen::CenterProfile reference;
    reference.center_id = "reference";
    reference.seed = icpipe::mix_seed(cfg.seed, 0xCE47E2ULL);
    icpipe::datagen::CenterProfile target =
        icpipe::datagen::apply_center_shift(reference, cfg.gen.shift);
    target.center_id = "target";

    icpipe::datagen::generate_dataset(reference, cfg.gen.reference,
                                      guard.track(out / "reference"), cfg.workers);
    icpipe::datagen::generate_dataset(target, cfg.gen.target, guard.track(out / "target"),
                                      cfg.workers);
    guard.commit();
    std::cout << "generated reference and target datasets under " << out << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset) {
    const auto cfg = make_config(args);
    OutputGuard guard;
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    icpipe::config::write_run_config(cfg, "train", guard.track(out / "run-config.json"));

    const icpipe::model::TrainOutcome outcome = icpipe::workflows::run_train(cfg, dataset);
    icpipe::model::save_model(outcome.model, guard.track(out / "model.icm"));
    write_json(train_log_to_json(outcome), guard.track(out / "train-log.json"));
    for (const std::string& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    guard.commit();
    std::cout << "master model written to " << (out / "model.icm") << "\n";
    return 0;
}

int cmd_calibrate(const CommonArgs& args, const std::string& dataset,
                  const std::string& model_path) {
    const auto cfg = make_config(args);
    OutputGuard guard;
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    icpipe::config::write_run_config(cfg, "calibrate", guard.track(out / "run-config.json"));

    const icpipe::model::HybridModel master = icpipe::model::load_model(model_path);
    const icpipe::model::TrainOutcome outcome =
        icpipe::workflows::run_calibrate(cfg, master, dataset);
    icpipe::model::save_model(outcome.model, guard.track(out / "model.icm"));
    write_json(train_log_to_json(outcome), guard.track(out / "train-log.json"));
    for (const std::string& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    guard.commit();
    std::cout << "calibrated model written to " << (out / "model.icm") << "\n";
    return 0;
}

int cmd_infer(const CommonArgs& args, const std::string& pyramid_dir,
              const std::string& model_path) {
    const auto cfg = make_config(args);
    OutputGuard guard;
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    icpipe::config::write_run_config(cfg, "infer", guard.track(out / "run-config.json"));

    const icpipe::model::HybridModel model = icpipe::model::load_model(model_path);
    const icpipe::pyramid::PyramidImage pyr = icpipe::pyramid::PyramidImage::load(pyramid_dir);
    const std::string slide_id = fs::path(pyramid_dir).filename().string();

    const icpipe::pipeline::SlideResult result =
        icpipe::pipeline::score_slide(pyr, model, icpipe::workflows::pipeline_config(cfg), slide_id);
    icpipe::pipeline::write_result_json(result, model, guard.track(out / "result.json"));
    icpipe::filtering::write_filter_report(result.filter_report,
                                           guard.track(out / "filter-report.json"));
    icpipe::write_png(guard.track(out / "heatmap.png"),
                      icpipe::pipeline::render_heatmap(result, pyr));
    guard.commit();
    std::cout << "slide " << slide_id << ": S_IC=" << result.s_ic << " class="
              << (result.predicted == icpipe::evaluation::SlideClass::IC ? "IC" : "Rest")
              << " retained=" << result.n_retained << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& dataset, const std::string& model_path,
             const std::string& center) {
    const auto cfg = make_config(args);
    OutputGuard guard;
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    icpipe::config::write_run_config(cfg, "eval", guard.track(out / "run-config.json"));

    const icpipe::model::HybridModel model = icpipe::model::load_model(model_path);
    const icpipe::datagen::DatasetManifest manifest =
        icpipe::datagen::load_manifest(fs::path(dataset) / "manifest.json");

    const icpipe::evaluation::MetricsReport patch_report =
        icpipe::workflows::eval_patch_level(cfg, model, manifest, dataset);
    const icpipe::workflows::SlideEvalResult slide_eval =
        icpipe::workflows::eval_slide_level(cfg, model, manifest, dataset);

    json j;
    j["center"] = center.empty() ? manifest.center_id : center;
    j["patch"] = metrics_to_json(patch_report);
    j["slide"] = metrics_to_json(slide_eval.report);
    write_json(j, guard.track(out / "metrics.json"));
    guard.commit();
    std::cout << "patch accuracy: "
              << (patch_report.accuracy ? std::to_string(*patch_report.accuracy) : "n/a")
              << ", slide accuracy: "
              << (slide_eval.report.accuracy ? std::to_string(*slide_eval.report.accuracy) : "n/a")
              << "\n";
    return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& dataset, const std::string& model_path,
              std::size_t limit) {
    const auto cfg = make_config(args);
    OutputGuard guard;
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    icpipe::config::write_run_config(cfg, "bench", guard.track(out / "run-config.json"));

    const icpipe::model::HybridModel model = icpipe::model::load_model(model_path);
    const icpipe::datagen::DatasetManifest manifest =
        icpipe::datagen::load_manifest(fs::path(dataset) / "manifest.json");
    const icpipe::workflows::SlideEvalResult run =
        icpipe::workflows::eval_slide_level(cfg, model, manifest, dataset, limit);

    json slides = json::array();
    double filter_ms = 0, inference_ms = 0, total_ms = 0;
    for (const auto& r : run.slides) {
        slides.push_back({{"slide_id", r.slide_id},
                          {"filter_ms", r.timings.filter_ms},
                          {"inference_ms", r.timings.inference_ms},
                          {"total_ms", r.timings.total_ms},
                          {"retained", r.n_retained},
                          {"inference_patch_reads", r.inference_patch_reads}});
        filter_ms += r.timings.filter_ms;
        inference_ms += r.timings.inference_ms;
        total_ms += r.timings.total_ms;
    }
    const double n = run.slides.empty() ? 1.0 : static_cast<double>(run.slides.size());
    json j;
    j["slides"] = slides;
    j["mean_ms"] = {{"filter", filter_ms / n}, {"inference", inference_ms / n}, {"total", total_ms / n}};
    write_json(j, guard.track(out / "bench.json"));
    guard.commit();
    std::cout << "benchmarked " << run.slides.size() << " slides; mean total "
              << total_ms / n << " ms\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"invasive-carcinoma detection pipeline for whole-slide images"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    auto* gen = app.add_subcommand("gen", "generate synthetic reference and target datasets");
    add_common(gen, gen_args);

    CommonArgs train_args;
    std::string train_dataset;
    auto* train = app.add_subcommand("train", "train the master model on a dataset");
    add_common(train, train_args);
    train->add_option("--dataset", train_dataset, "dataset directory")->required();

    CommonArgs cal_args;
    std::string cal_dataset, cal_model;
    auto* cal = app.add_subcommand("calibrate", "calibrate a master model to a target center");
    add_common(cal, cal_args);
    cal->add_option("--dataset", cal_dataset, "target dataset directory")->required();
    cal->add_option("--model", cal_model, "master model file")->required();

    CommonArgs infer_args;
    std::string infer_pyramid, infer_model;
    auto* infer = app.add_subcommand("infer", "score one slide and render its heatmap");
    add_common(infer, infer_args);
    infer->add_option("--pyramid", infer_pyramid, "slide pyramid directory")->required();
    infer->add_option("--model", infer_model, "model file")->required();

    CommonArgs eval_args;
    std::string eval_dataset, eval_model, eval_center;
    auto* eval = app.add_subcommand("eval", "evaluate a model on a dataset's test split");
    add_common(eval, eval_args);
    eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
    eval->add_option("--model", eval_model, "model file")->required();
    eval->add_option("--center", eval_center, "center tag for the report");

    CommonArgs bench_args;
    std::string bench_dataset, bench_model;
    std::size_t bench_limit = 5;
    auto* bench = app.add_subcommand("bench", "timed multi-slide run with stage breakdown");
    add_common(bench, bench_args);
    bench->add_option("--dataset", bench_dataset, "dataset directory")->required();
    bench->add_option("--model", bench_model, "model file")->required();
    bench->add_option("--slides", bench_limit, "number of test slides to run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_args);
        if (train->parsed()) return cmd_train(train_args, train_dataset);
        if (cal->parsed()) return cmd_calibrate(cal_args, cal_dataset, cal_model);
        if (infer->parsed()) return cmd_infer(infer_args, infer_pyramid, infer_model);
        if (eval->parsed()) return cmd_eval(eval_args, eval_dataset, eval_model, eval_center);
        if (bench->parsed()) return cmd_bench(bench_args, bench_dataset, bench_model, bench_limit);
    } catch (const icpipe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const icpipe::ModelVersionError& e) {
        std::cerr << "model version error: " << e.what() << "\n";
        return 4;
    } catch (const icpipe::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
