// Command-line front end for the sexism identification pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sexid/corpus.hpp"
#include "sexid/errors.hpp"
#include "sexid/fixture.hpp"
#include "sexid/fusion.hpp"
#include "sexid/metrics.hpp"
#include "sexid/pipeline.hpp"
#include "sexid/text_util.hpp"

namespace fs = std::filesystem;
using namespace sexid;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

struct Common {
    std::string config;
    std::string task;
    std::string models;
    std::string out;
    std::string source;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
    auto* cfg = sub->add_option("--config", c.config, "Run configuration file");
    if (config_required) cfg->required();
    cfg->check(CLI::ExistingFile);
    sub->add_option("--task", c.task, "Override run.task")->check(CLI::IsMember({"task1", "task2", "both"}));
    sub->add_option("--models", c.models, "Override the strategies to run, e.g. M1,M2,M3");
    c.seed_opt = sub->add_option("--seed", c.seed, "Override the global seed");
    sub->add_option("--out", c.out, "Override the run directory");
}

RunConfig load_config(const Common& c) {
    auto cfg = load_run_config(c.config);
    Overrides o;
    if (!c.task.empty()) o.task = parse_run_task(c.task);
    if (!c.models.empty()) {
        std::vector<std::string> models;
        for (const auto& m : split(c.models, ','))
            if (auto t = trim(m); !t.empty()) models.emplace_back(t);
        o.models = models;
    }
    if (c.seed_opt && c.seed_opt->count() > 0) o.seed = c.seed;
    if (!c.out.empty()) o.out = c.out;
    apply_overrides(cfg, o);
    return cfg;
}

std::optional<Source> source_of(const Common& c) {
    if (c.source.empty()) return std::nullopt;
    return parse_source(c.source);
}

void print_file(const fs::path& p) {
    if (fs::exists(p)) std::cout << read_file(p);
}

void print_summary(const RunSummary& s) {
    fmt::print("run {}: {} stage(s) run, {} cache hit(s)\n", s.run_dir.string(), s.stages_run, s.cache_hits);
}

int run_stage(const Common& c, StageLevel until) {
    RunOptions options;
    options.until = until;
    options.source_filter = source_of(c);
    const auto summary = run_pipeline(load_config(c), options);
    print_summary(summary);
    if (until == StageLevel::evaluate) {
        const auto suffix = options.source_filter ? fmt::format(".{}", to_string(*options.source_filter)) : "";
        print_file(summary.run_dir / "reports" / ("comparison" + suffix + ".txt"));
    }
    return 0;
}

int evaluate_files(const std::vector<std::string>& prediction_files, const std::string& gold_path,
                   const std::string& source) {
    const auto gold = load_dataset(gold_path, DatasetRole::test);
    std::optional<Source> filter;
    if (!source.empty()) filter = parse_source(source);
    ReportSet reports;
    std::optional<Task> task;
    for (const auto& path : prediction_files) {
        const auto records = read_predictions(path);
        if (records.empty()) throw ArgumentError(path + ": no predictions");
        const auto& space = records.front().scores.space;
        const Task t = space.kind() == LabelKind::identification ? Task::task1 : Task::task2;
        if (task && *task != t) throw ArgumentError("prediction files mix task-1 and task-2 label spaces");
        task = t;
        const auto subset = space.kind() == LabelKind::categorization
                                ? gold.filter([](const Example& ex) { return ex.task1 && *ex.task1 == kSexist; }, "[sexist]")
                                : gold;
        auto id = records.front().model_id.empty() ? fs::path(path).stem().string() : records.front().model_id;
        reports[id] = evaluate_predictions(records, subset, space, t, filter);
    }
    std::cout << render_comparison_table(reports, *task);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bilingual sexism identification and categorization pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log stage progress");

    Common c;
    auto* validate = app.add_subcommand("validate-config", "Check a run configuration without doing any work");
    add_common(validate, c, true);

    auto* prepare = app.add_subcommand("prepare-data", "Generate the synthetic fixture and/or pre-cache translations");
    add_common(prepare, c, false);
    std::string fixture_dir;
    std::uint64_t fixture_seed = FixtureSpec{}.seed;
    prepare->add_option("--fixture", fixture_dir, "Write the synthetic fixture corpus into this directory");
    prepare->add_option("--fixture-seed", fixture_seed, "Seed for the synthetic corpus");

    struct StageCommand {
        const char* name;
        const char* help;
        StageLevel until;
        CLI::App* app = nullptr;
    };
    std::vector<StageCommand> stages{
        {"search", "Grid search with cross-validation", StageLevel::search},
        {"train-final", "Search, then train final models", StageLevel::train},
        {"predict", "Train and predict the test set with M1..M7", StageLevel::predict},
        {"ensemble", "Predict, then fuse E1..E6 and write submissions", StageLevel::ensemble},
        {"run-all", "Run every stage and write the reports", StageLevel::evaluate},
    };
    for (auto& s : stages) {
        s.app = app.add_subcommand(s.name, s.help);
        add_common(s.app, c, true);
        s.app->add_option("--source", c.source, "Restrict evaluation to one source")
            ->check(CLI::IsMember({"twitter", "gab"}));
    }

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a run, or score prediction files against gold labels");
    add_common(evaluate, c, false);
    std::vector<std::string> prediction_files;
    std::string gold;
    evaluate->add_option("--predictions", prediction_files, "Prediction TSV files")->check(CLI::ExistingFile);
    evaluate->add_option("--gold", gold, "Labeled dataset TSV")->check(CLI::ExistingFile);
    evaluate->add_option("--source", c.source, "Restrict evaluation to one source")
        ->check(CLI::IsMember({"twitter", "gab"}));

    auto* report = app.add_subcommand("report", "Re-render reports from the predictions of an existing run");
    add_common(report, c, true);
    report->add_option("--source", c.source, "Restrict evaluation to one source")
        ->check(CLI::IsMember({"twitter", "gab"}));

    try {
        app.parse(argc, argv);
        if (evaluate->parsed()) {
            const bool standalone = !prediction_files.empty() || !gold.empty();
            if (standalone && (prediction_files.empty() || gold.empty()))
                throw CLI::ValidationError("--predictions and --gold must be given together");
            if (!standalone && c.config.empty())
                throw CLI::RequiredError("evaluate needs --config, or --predictions with --gold");
        }
        if (prepare->parsed() && fixture_dir.empty() && c.config.empty())
            throw CLI::RequiredError("prepare-data needs --fixture and/or --config");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        fmt::print(stderr, "error: category=usage {}\n", msg);
        return kUsageExit;
    }

    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
    spdlog::set_pattern("[%l] %v");

    try {
        if (validate->parsed()) {
            const auto cfg = load_config(c);
            cfg.validate();
            fmt::print("config ok: {} (task {}, backend {}, models {})\n", c.config, to_string(cfg.task),
                       to_string(cfg.backend.kind), join(cfg.models, ","));
            return 0;
        }
        if (prepare->parsed()) {
            if (!fixture_dir.empty()) {
                FixtureSpec spec;
                spec.seed = fixture_seed;
                write_fixture(fixture_dir, spec);
                fmt::print("fixture written to {}\n", fixture_dir);
            }
            if (!c.config.empty())
                fmt::print("{} translation(s) added to the cache\n", precache_translations(load_config(c)));
            return 0;
        }
        for (const auto& s : stages)
            if (s.app->parsed()) return run_stage(c, s.until);
        if (evaluate->parsed()) {
            if (!prediction_files.empty()) return evaluate_files(prediction_files, gold, c.source);
            return run_stage(c, StageLevel::evaluate);
        }
        if (report->parsed()) {
            const auto summary = rebuild_reports(load_config(c), source_of(c));
            const auto suffix = c.source.empty() ? "" : "." + c.source;
            print_file(summary.run_dir / "reports" / ("comparison" + suffix + ".txt"));
            print_file(summary.run_dir / "reports" / ("delta" + suffix + ".txt"));
            return 0;
        }
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        fmt::print(stderr, "error: category={} {}\n", to_string(e.category()), msg);
        return kRuntimeExit;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        fmt::print(stderr, "error: category=internal {}\n", msg);
        return kRuntimeExit;
    }
    return 0;
}
