// Command-line entry point: ingest / run / evaluate / ablate / report /
// casestudy over a flat key-value config file.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llmmob/llmmob.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string output_dir;
    std::string predictor;
    std::string template_id;
    int k = 0;
    long long limit = -1;
};

llmmob::ExperimentConfig assemble_config(const GlobalOpts& g) {
    llmmob::KeyValueConfig kv;
    if (!g.config_path.empty()) kv = llmmob::KeyValueConfig::from_file(g.config_path);
    if (!g.output_dir.empty()) kv.set("output_dir", g.output_dir);
    if (!g.predictor.empty()) kv.set("predictor", g.predictor);
    if (!g.template_id.empty()) kv.set("prompt.template_id", g.template_id);
    if (g.k > 0) kv.set("prompt.k", std::to_string(g.k));
    if (g.limit >= 0) kv.set("sample_limit", std::to_string(g.limit));
    return llmmob::experiment_from_kv(kv);
}

int cmd_ingest(const llmmob::ExperimentConfig& cfg, const std::string& out_path) {
    using namespace llmmob;
    std::vector<UserSequence> seqs;
    LoadDiagnostics diag;
    if (!cfg.data.points_path.empty()) {
        const auto points = load_track_points(cfg.data.points_path, &diag);
        std::map<std::string, std::vector<TrackPoint>> by_user;
        for (const auto& p : points) by_user[p.user_id].push_back(p);
        PlaceRegistry registry(cfg.ingest.place_cluster_radius_m);
        for (const auto& [user, pts] : by_user) {
            const auto candidates = detect_stays(pts, cfg.ingest);
            UserSequence seq;
            seq.user_id = user;
            for (const auto& c : candidates) {
                const LocalTime lt = local_time_at(c.start_ts, cfg.ingest.utc_offset_minutes);
                seq.stays.push_back(
                    Stay{lt.minutes_of_day, lt.day_of_week, c.duration_min, registry.assign(c.lat, c.lon)});
                seq.absolute_seconds.push_back(c.start_ts);
            }
            if (!seq.stays.empty()) seqs.push_back(std::move(seq));
        }
    } else if (!cfg.data.stays_path.empty()) {
        seqs = load_stays(cfg.data.stays_path, cfg.data.format, cfg.ingest.utc_offset_minutes, &diag);
    } else {
        std::cerr << "ingest: set data.points_path or data.stays_path\n";
        return 2;
    }
    if (diag.skipped_rows > 0) {
        std::cerr << "skipped " << diag.skipped_rows << " malformed rows\n";
        for (const auto& msg : diag.row_errors) std::cerr << "  " << msg << "\n";
    }
    std::filesystem::create_directories(cfg.output_dir);
    const std::string out =
        out_path.empty() ? (std::filesystem::path(cfg.output_dir) / "stays.jsonl").string() : out_path;
    write_stays_jsonl(out, seqs, cfg.ingest.utc_offset_minutes);
    std::cout << "stay table written to " << out << "\n\n";
    std::cout << render_stats(compute_stats(seqs, cfg.ingest.test_fraction, cfg.ingest.min_stays_per_user));
    return 0;
}

int cmd_run(const llmmob::ExperimentConfig& cfg, const std::string& name) {
    const auto summary = llmmob::run_experiment(cfg, name);
    std::cout << llmmob::summary_line(summary) << "\n";
    const auto eval = llmmob::evaluate(summary.results_path);
    std::cout << llmmob::serialize_report(eval.report) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& results_path) {
    const auto eval = llmmob::evaluate(results_path);
    if (eval.corrupt_lines > 0) {
        std::cerr << "skipped " << eval.corrupt_lines << " corrupt lines\n";
        for (const auto& m : eval.corrupt_messages) std::cerr << "  " << m << "\n";
    }
    std::cout << llmmob::serialize_report(eval.report) << "\n";
    return 0;
}

int cmd_ablate(const llmmob::ExperimentConfig& cfg) {
    const auto rows = llmmob::ablate(cfg);
    std::vector<llmmob::ReportRow> ok_rows;
    for (const auto& row : rows) {
        if (row.report)
            ok_rows.push_back({row.name, *row.report});
        else
            std::cerr << "variant " << row.name << " failed: " << row.error << "\n";
    }
    std::cout << llmmob::render_report_text(ok_rows);
    const auto csv_path = (std::filesystem::path(cfg.output_dir) / "ablation_report.csv").string();
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    csv << llmmob::render_report_csv(ok_rows);
    std::cout << "\ncomparison table written to " << csv_path << "\n";
    return ok_rows.size() == rows.size() ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& results_paths, const std::string& csv_path) {
    std::vector<llmmob::ReportRow> rows;
    for (const auto& path : results_paths) {
        const auto eval = llmmob::evaluate(path);
        rows.push_back({std::filesystem::path(path).stem().string(), eval.report});
    }
    std::cout << llmmob::render_report_text(rows);
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
        csv << llmmob::render_report_csv(rows);
        std::cout << "\nCSV written to " << csv_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-driven next-location prediction harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config_path, "flat key=value config file");
    app.add_option("--output-dir", g.output_dir, "override output_dir");
    app.add_option("--predictor", g.predictor, "llm|mock|1mmc|topfreq");
    app.add_option("--k", g.k, "ranked places to request");
    app.add_option("--template", g.template_id, "prompt template id");
    app.add_option("--limit", g.limit, "cap the number of test samples");

    auto* ingest = app.add_subcommand("ingest", "detect stays / normalize a stay table, report stats");
    std::string ingest_out;
    ingest->add_option("--out", ingest_out, "output stay JSONL path");

    auto* run = app.add_subcommand("run", "run one experiment (resumable)");
    std::string run_name;
    run->add_option("--name", run_name, "results file name (without .jsonl)");

    auto* evaluate = app.add_subcommand("evaluate", "recompute metrics from a results file");
    std::string eval_path;
    evaluate->add_option("results", eval_path, "results .jsonl path")->required();

    auto* ablate = app.add_subcommand("ablate", "run Full plus the five prompt ablations");

    auto* report = app.add_subcommand("report", "tabulate one or more results files");
    std::vector<std::string> report_paths;
    std::string report_csv;
    report->add_option("results", report_paths, "results .jsonl paths")->required();
    report->add_option("--csv", report_csv, "also write a CSV table");

    auto* casestudy = app.add_subcommand("casestudy", "show a sample's prompt/response/parse side by side");
    std::string cs_sample, cs_results;
    casestudy->add_option("sample_id", cs_sample, "sample id, e.g. u01#00042")->required();
    casestudy->add_option("--results", cs_results, "results file to pull the response from");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(assemble_config(g), ingest_out);
        if (*run) return cmd_run(assemble_config(g), run_name);
        if (*evaluate) return cmd_evaluate(eval_path);
        if (*ablate) return cmd_ablate(assemble_config(g));
        if (*report) return cmd_report(report_paths, report_csv);
        if (*casestudy) {
            std::cout << llmmob::casestudy_text(assemble_config(g), cs_sample, cs_results);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
