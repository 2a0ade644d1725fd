// resmamba: data generation, two-phase training, evaluation and benchmarks.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.
// Randomness comes from --seed (default 0), which overrides the config's seed.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "resmamba/autoencoder.hpp"
#include "resmamba/bench.hpp"
#include "resmamba/checkpoint.hpp"
#include "resmamba/classifier.hpp"
#include "resmamba/config.hpp"
#include "resmamba/dataset.hpp"
#include "resmamba/metrics.hpp"
#include "resmamba/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rmb;

namespace {

struct RunOptions {
    std::string config_path;
    std::string data;
    std::optional<std::uint64_t> seed;
};

PipelineConfig resolve_config(const RunOptions& o)
{
    PipelineConfig config = o.config_path.empty() ? PipelineConfig::for_profile("desk") : load_config(o.config_path);
    config.seed = o.seed.value_or(0);
    config.validate();
    return config;
}

std::pair<Dataset, Dataset> load_split(const RunOptions& o, const PipelineConfig& config)
{
    const Dataset all = load_dataset(o.data, config.image_size, config.channels);
    return split(all, SplitSpec{config.train_fraction, config.seed});
}

void print_epoch(const std::string& phase, std::size_t epoch, double train, double val)
{
    std::cout << phase << " epoch " << epoch << " train " << format_double(train) << " val " << format_double(val)
              << '\n'
              << std::flush;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix)
{
    return fs::path(path.string() + suffix);
}

void add_run_options(CLI::App* cmd, RunOptions& o)
{
    cmd->add_option("--config", o.config_path, "Config file (flat key = value)");
    cmd->add_option("--data", o.data, "Dataset root laid out as <root>/<class>/*.png")->required();
    cmd->add_option("--seed", o.seed, "Seed for every random choice (default 0)");
}

int run_gen_data(const fs::path& out, std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size)
{
    gen_synthetic(out, SyntheticSpec{seed, n, classes, size});
    std::cout << "wrote " << n * classes << " images in " << classes << " classes to " << out.string() << '\n';
    return 0;
}

int run_train_ae(const RunOptions& o, const fs::path& out)
{
    const auto config = resolve_config(o);
    const auto [train, val] = load_split(o, config);
    const auto result = train_phase1(train, val, config, print_epoch);
    const double final_loss = result.loss.train.empty() ? std::nan("") : result.loss.train.back();
    save_checkpoint(out, autoencoder_checkpoint(result.model, config, config.epochs_ae, final_loss));
    write_text_atomic(with_suffix(out, ".loss.csv"), curve_csv(result.loss));
    std::cout << "saved autoencoder to " << out.string() << '\n';
    return 0;
}

int run_train_clf(const RunOptions& o, const fs::path& ae_path, const fs::path& out)
{
    const auto config = resolve_config(o);
    const auto [train, val] = load_split(o, config);
    const AEModel ae = load_autoencoder(load_checkpoint(ae_path), config);
    const auto result = train_phase2(ae, train, val, config, print_epoch);
    const double final_loss = result.loss.train.empty() ? std::nan("") : result.loss.train.back();
    save_checkpoint(out, classifier_checkpoint(result.classifier, config, config.epochs_clf, final_loss));
    write_text_atomic(with_suffix(out, ".loss.csv"), curve_csv(result.loss));
    write_text_atomic(with_suffix(out, ".accuracy.csv"), curve_csv(result.accuracy));
    std::cout << "saved classifier to " << out.string() << '\n';
    return 0;
}

int run_eval(const RunOptions& o, const fs::path& ae_path, const fs::path& clf_path, const fs::path& out,
             const std::string& which)
{
    const auto config = resolve_config(o);
    const Dataset all = load_dataset(o.data, config.image_size, config.channels);
    Dataset subset = all;
    if (which != "all") {
        auto [train, val] = split(all, SplitSpec{config.train_fraction, config.seed});
        subset = which == "train" ? std::move(train) : std::move(val);
    }
    const AEModel ae = load_autoencoder(load_checkpoint(ae_path), config);
    const TrainedClassifier clf = load_classifier(load_checkpoint(clf_path), config);
    const Evaluation ev = evaluate(ae, clf, subset, config);

    fs::create_directories(out);
    const std::string table = format_confusion(ev.confusion) + '\n' + format_report_table(ev.report);
    write_text_atomic(out / "report.txt", table);
    write_text_atomic(out / "report.csv", format_report_csv(ev.report));
    std::cout << table;
    return 0;
}

int run_bench(std::size_t n_min, std::size_t n_max, std::size_t d, std::size_t repeats, std::uint64_t seed,
              const fs::path& out)
{
    ScalingOptions options;
    options.n_list = geometric_sizes(n_min, n_max);
    options.d = d;
    options.repeats = repeats;
    options.seed = seed;
    const auto report = scaling_run(options);
    write_text_atomic(out, bench_csv(report.records));
    const std::string summary = bench_summary(report);
    write_text_atomic(with_suffix(out, ".summary.txt"), summary);
    std::cout << summary;
    return 0;
}

NamedParameters parameters_of(const Checkpoint& ckpt)
{
    NamedParameters out;
    for (const auto& t : ckpt.tensors) out.emplace_back(t.name, Tensor(t.shape, t.values));
    return out;
}

int run_info(const fs::path& path, bool layers)
{
    const Checkpoint ckpt = load_checkpoint(path);
    std::cout << "checkpoint: " << path.string() << '\n'
              << "version: " << ckpt.version << '\n'
              << "kind: " << ckpt.meta("kind").value_or("unknown") << '\n'
              << "epoch: " << ckpt.meta("epoch").value_or("unknown") << '\n'
              << "loss: " << ckpt.meta("loss").value_or("unknown") << '\n'
              << "tensors: " << ckpt.tensors.size() << '\n'
              << "param_count: " << ckpt.parameter_count() << '\n';
    if (const auto names = ckpt.meta("class_names")) std::cout << "classes: " << *names << '\n';
    if (layers) std::cout << '\n' << format_param_count(param_count(parameters_of(ckpt)));

    // Scale comparison against the published sizes, for information only.
    const auto full = PipelineConfig::for_profile("full");
    const std::size_t ae = autoencoder_parameter_count(full.ae_config());
    const std::size_t clf = classifier_parameter_count(full.classifier_config());
    std::cout << "\nreference sizes (informational):\n"
              << "  full-profile autoencoder:   " << ae << '\n'
              << "  full-profile classifier:    " << clf << '\n'
              << "  full-profile total:         " << ae + clf << " (published model: 11.4M)\n"
              << "  transformer baseline:       82M (published)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Selective-scan autoencoder residuals for anomaly classification"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Write the seeded synthetic texture dataset");
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    std::size_t gen_n = 200, gen_classes = 2, gen_size = 64;
    gen->add_option("--out", gen_out, "Output root directory")->required();
    gen->add_option("--seed", gen_seed, "Seed (default 0)");
    gen->add_option("--n", gen_n, "Images per class")->check(CLI::PositiveNumber);
    gen->add_option("--classes", gen_classes, "2 (target vs other) or 5")->check(CLI::IsMember({2, 5}));
    gen->add_option("--size", gen_size, "Image side length in pixels")->check(CLI::PositiveNumber);

    RunOptions ae_opts;
    std::string ae_out;
    auto* train_ae = app.add_subcommand("train-ae", "Phase 1: train the autoencoder on the target class");
    add_run_options(train_ae, ae_opts);
    train_ae->add_option("--out", ae_out, "Output checkpoint")->required();

    RunOptions clf_opts;
    std::string clf_ae, clf_out;
    auto* train_clf = app.add_subcommand("train-clf", "Phase 2: train the residual classifier");
    add_run_options(train_clf, clf_opts);
    train_clf->add_option("--ae", clf_ae, "Autoencoder checkpoint")->required();
    train_clf->add_option("--out", clf_out, "Output checkpoint")->required();

    RunOptions eval_opts;
    std::string eval_ae, eval_clf, eval_out, eval_split = "val";
    auto* eval = app.add_subcommand("eval", "Confusion matrix and per-class report");
    add_run_options(eval, eval_opts);
    eval->add_option("--ae", eval_ae, "Autoencoder checkpoint")->required();
    eval->add_option("--clf", eval_clf, "Classifier checkpoint")->required();
    eval->add_option("--out", eval_out, "Report directory (report.txt, report.csv)")->required();
    eval->add_option("--split", eval_split, "Which images to evaluate")->check(CLI::IsMember({"val", "train", "all"}));

    std::size_t n_min = 256, n_max = 8192, bench_d = 32, repeats = 5;
    std::uint64_t bench_seed = 0;
    std::string bench_out;
    auto* bench = app.add_subcommand("bench", "Runtime scaling of scan vs attention");
    bench->add_option("--n-min", n_min, "Smallest sequence length")->check(CLI::PositiveNumber);
    bench->add_option("--n-max", n_max, "Largest sequence length")->check(CLI::PositiveNumber);
    bench->add_option("--d", bench_d, "Model dimension")->check(CLI::PositiveNumber);
    bench->add_option("--repeats", repeats, "Timed samples per point (median)")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bench_seed, "Input seed (default 0)");
    bench->add_option("--out", bench_out, "CSV output (summary goes to <out>.summary.txt)")->required();

    std::string info_path;
    bool info_layers = false;
    auto* info = app.add_subcommand("info", "Print checkpoint metadata and parameter counts");
    info->add_option("checkpoint", info_path, "Checkpoint file")->required();
    info->add_flag("--layers", info_layers, "Per-layer parameter breakdown");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) return run_gen_data(gen_out, gen_seed, gen_n, gen_classes, gen_size);
        if (*train_ae) return run_train_ae(ae_opts, ae_out);
        if (*train_clf) return run_train_clf(clf_opts, clf_ae, clf_out);
        if (*eval) return run_eval(eval_opts, eval_ae, eval_clf, eval_out, eval_split);
        if (*bench) {
            if (n_max < n_min) {
                std::cerr << "error: --n-max must be >= --n-min\n";
                return 2;
            }
            return run_bench(n_min, n_max, bench_d, repeats, bench_seed, bench_out);
        }
        if (*info) return run_info(info_path, info_layers);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
