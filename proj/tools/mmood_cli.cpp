// Command-line front end for the outlier-envisioning OOD pipeline.

#include "mmood/error.hpp"
#include "mmood/harness.hpp"
#include "mmood/text.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string cache_dir;
    std::string output;
    bool mock = false;
    bool print_config = false;
};

mmood::RunConfig effective_config(GlobalOptions const& g)
{
    mmood::RunConfig cfg = g.config.empty() ? mmood::RunConfig{} : mmood::load_config(g.config);
    if (g.seed) {
        cfg.envision.seed = *g.seed;
    }
    if (!g.cache_dir.empty()) {
        cfg.cache_dir = g.cache_dir;
    }
    if (!g.output.empty()) {
        cfg.output = g.output;
    }
    if (g.mock) {
        cfg.use_mocks = true;
    }
    return cfg;
}

void log_line(std::string const& msg)
{
    std::cerr << "mmood: " << msg << "\n";
}

struct Prepared {
    mmood::RunConfig cfg;
    mmood::Providers providers;
    mmood::Datasets data;
    mmood::ImageEmbeddings images;
};

template <typename F>
auto staged(char const* stage, F&& f)
{
    try {
        return f();
    }
    catch (mmood::Error const& e) {
        throw e.with_stage(stage);
    }
}

Prepared prepare(GlobalOptions const& g)
{
    Prepared p{effective_config(g), {}, {}, {}};
    staged("config", [&] {
        p.cfg.validate(true);
        return 0;
    });
    p.providers = staged("config", [&] { return mmood::make_providers(p.cfg); });
    p.data = staged("manifest", [&] { return mmood::load_datasets(p.cfg); });
    p.images = staged("embed", [&] { return mmood::embed_dataset_images(p.data, p.providers, p.cfg.parallelism); });
    return p;
}

mmood::LabelSet read_labels(std::string const& path)
{
    return staged("labels", [&] { return mmood::parse_labels(mmood::read_file(path)); });
}

std::vector<mmood::Embedding> embed_labels(Prepared& p, mmood::LabelSet const& labels)
{
    return staged("embed", [&] {
        std::vector<std::string> texts;
        for (auto const& l : labels.all()) {
            texts.push_back(mmood::label_prompt(l));
        }
        return p.providers.encoder->embed_text(texts);
    });
}

void print_tsv(mmood::EvalReport const& report)
{
    std::cout << mmood::render_tsv(report);
}

int cmd_run(GlobalOptions const& g)
{
    auto const cfg = effective_config(g);
    auto const result = mmood::run_experiment(cfg, log_line);
    print_tsv(result.report);
    log_line("wall clock " + std::to_string(result.wall_clock.count()) + " ms");
    return 0;
}

int cmd_envision(GlobalOptions const& g)
{
    auto p = prepare(g);
    mmood::StageCalls calls;
    auto const outcome = staged("envision", [&] { return mmood::envision_labels(p.cfg, p.data, p.providers, p.images, calls); });
    for (auto const& w : outcome.warnings) {
        log_line("warning: " + w);
    }
    auto const path = fs::path(p.cfg.output) / "labels.tsv";
    mmood::write_file_atomic(path.string(), mmood::render_labels(outcome.labels));
    std::cout << mmood::render_labels(outcome.labels);
    log_line("labels written to " + path.string());
    return 0;
}

int cmd_embed(GlobalOptions const& g, std::string const& labels_path)
{
    auto p = prepare(g);
    json doc{{"dim", 0}, {"images", json::object()}, {"labels", json::object()}};
    auto dump = [](mmood::Embedding const& e) { return std::vector<double>(e.values().begin(), e.values().end()); };
    for (auto const& [ref, e] : p.images) {
        doc["dim"] = e.dim();
        doc["images"][ref] = dump(e);
    }
    if (!labels_path.empty()) {
        auto const labels = read_labels(labels_path);
        auto const all = labels.all();
        auto const embs = embed_labels(p, labels);
        for (std::size_t i = 0; i < all.size(); ++i) {
            doc["labels"][all[i]] = dump(embs[i]);
        }
    }
    auto const path = fs::path(p.cfg.output) / "embeddings.json";
    mmood::write_file_atomic(path.string(), doc.dump() + "\n");
    log_line("embeddings written to " + path.string());
    return 0;
}

int cmd_eval(GlobalOptions const& g, std::string const& labels_path)
{
    auto p = prepare(g);
    auto const labels = read_labels(labels_path);
    auto const label_embs = embed_labels(p, labels);
    auto const table = staged("score", [&] { return mmood::score_datasets(p.cfg, p.data, labels, p.images, label_embs); });
    auto const report = staged("evaluate", [&] { return mmood::evaluate(table, p.cfg.tpr); });
    fs::path const dir(p.cfg.output);
    staged("report", [&] {
        mmood::write_file_atomic((dir / "scores.json").string(), mmood::score_table_json(table, p.cfg.tpr).dump(2) + "\n");
        mmood::emit_report(report, dir);
        return 0;
    });
    print_tsv(report);
    return 0;
}

int cmd_report(GlobalOptions const& g, std::string const& scores_path, std::optional<double> tpr)
{
    auto const table = staged("report", [&] {
        return mmood::score_table_from_json(json::parse(mmood::read_file(scores_path)));
    });
    double effective_tpr = mmood::kDefaultTpr;
    if (tpr) {
        effective_tpr = *tpr;
    }
    auto const report = staged("evaluate", [&] { return mmood::evaluate(table, effective_tpr); });
    auto const dir = g.output.empty() ? fs::path(scores_path).parent_path() : fs::path(g.output);
    staged("report", [&] {
        mmood::emit_report(report, dir);
        return 0;
    });
    print_tsv(report);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Zero-shot OOD detection with envisioned outlier labels"};
    app.require_subcommand(0, 1);
    GlobalOptions g;
    app.add_option("--config", g.config, "JSON run configuration");
    app.add_option("--seed", g.seed, "Seed for envisioning and mock providers");
    app.add_option("--cache-dir", g.cache_dir, "Content-addressed cache directory");
    app.add_option("--output", g.output, "Output directory for artifacts");
    app.add_flag("--mock", g.mock, "Replace every provider with its seeded mock");
    app.add_flag("--print-config", g.print_config, "Print the effective configuration and exit");

    auto* run = app.add_subcommand("run", "Full pipeline: envision, embed, score, evaluate, report");
    auto* envision = app.add_subcommand("envision", "Envision outlier labels and write labels.tsv");
    std::string labels_path;
    auto* embed = app.add_subcommand("embed", "Embed manifest images (and labels) into embeddings.json");
    embed->add_option("--labels", labels_path, "labels.tsv to embed as well")->check(CLI::ExistingFile);
    auto* eval = app.add_subcommand("eval", "Score manifests against a label file and write scores and report");
    eval->add_option("--labels", labels_path, "labels.tsv from 'envision'")->required()->check(CLI::ExistingFile);
    std::string scores_path;
    std::optional<double> tpr;
    auto* report = app.add_subcommand("report", "Recompute FPR95/AUROC from scores.json and write the report");
    report->add_option("--scores", scores_path, "scores.json from 'eval' or 'run'")->required()->check(CLI::ExistingFile);
    report->add_option("--tpr", tpr, "ID true-positive rate for the FPR threshold");

    CLI11_PARSE(app, argc, argv);

    try {
        if (g.print_config) {
            std::cout << mmood::effective_config_json(effective_config(g)).dump(2) << "\n";
            return 0;
        }
        if (run->parsed()) {
            return cmd_run(g);
        }
        if (envision->parsed()) {
            return cmd_envision(g);
        }
        if (embed->parsed()) {
            return cmd_embed(g, labels_path);
        }
        if (eval->parsed()) {
            return cmd_eval(g, labels_path);
        }
        if (report->parsed()) {
            return cmd_report(g, scores_path, tpr);
        }
        std::cerr << app.help();
        return 2;
    }
    catch (mmood::Error const& e) {
        std::cerr << "mmood: error: " << e.what() << "\n";
        return 1;
    }
    catch (std::exception const& e) {
        std::cerr << "mmood: error: " << e.what() << "\n";
        return 1;
    }
}
