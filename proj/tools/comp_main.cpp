// comp: hybrid-granularity post-training pruning workbench for a small
// byte-level transformer. Subcommands: train, score-layers, prune, eval,
// compare, ablate.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "comp/checkpoint.hpp"
#include "comp/errors.hpp"
#include "comp/eval.hpp"
#include "comp/report.hpp"
#include "comp/scheduler.hpp"
#include "comp/tokenizer.hpp"
#include "comp/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Exit codes: 0 ok, 2 I/O, 3 training divergence, 4 bad checkpoint,
// 5 infeasible config, 6 solver failure.
int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const comp::DivergenceError*>(&e)) return 3;
    if (dynamic_cast<const comp::CheckpointError*>(&e)) return 4;
    if (dynamic_cast<const comp::InfeasibleError*>(&e)) return 5;
    if (dynamic_cast<const comp::SolverError*>(&e)) return 6;
    if (dynamic_cast<const comp::IoError*>(&e)) return 2;
    return 1;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string(buf);
}

/// Wall-clock data lives in a sidecar so the reports themselves stay
/// byte-reproducible across identical invocations.
void write_timing_sidecar(const fs::path& report_path, const ordered_json& timing) {
    ordered_json j = timing;
    j["written_at"] = iso_timestamp();
    fs::path p = report_path;
    p += ".timing.json";
    comp::write_text_file(p, j.dump(2) + "\n");
}

struct Options {
    std::string config_path;
    std::string corpus = "data/corpus.txt";
    std::string model_dir;
    std::string out;
    std::string report_path = "prune_report.json";
    std::string baseline;
    std::size_t steps = 2000;
    std::size_t batch_size = 4;
    std::size_t train_seq = 128;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    std::size_t n_layers = 8, d_model = 64, n_heads = 4, d_ff = 176;
    std::string ffn = "gated";
    double ratio = 0.2, epsilon = 1e-6, var_step = 1e-3;
    long layers = -1;
    std::size_t neuron_step = 0;
    std::string strategy = "comp", solver = "direct", policy = "identical";
    std::size_t samples = 10, seq_len = 128, n_seeds = 5, iterative = 0, jobs = 1;
    std::vector<double> ratios{0.1, 0.2, 0.3};
    std::vector<std::string> strategies{"comp", "layer", "neuron"};
    std::string which = "iterative-order";
};

/// JSON config file: every flag has a same-named key (dashes become
/// underscores); explicit flags win over file values.
void apply_config_file(int argc, char** argv, Options& o) {
    std::string path;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") path = argv[i + 1];
    }
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw comp::IoError("cannot read config file " + path);
    ordered_json cfg;
    try {
        in >> cfg;
    } catch (const std::exception& e) {
        throw comp::Error("config file is not valid JSON: " + std::string(e.what()));
    }
    auto overlay = [&cfg](const char* key, auto& value) {
        if (cfg.contains(key)) value = cfg.at(key).get<std::decay_t<decltype(value)>>();
    };
    overlay("corpus", o.corpus);
    overlay("model", o.model_dir);
    overlay("out", o.out);
    overlay("report", o.report_path);
    overlay("baseline", o.baseline);
    overlay("steps", o.steps);
    overlay("batch_size", o.batch_size);
    overlay("train_seq_len", o.train_seq);
    overlay("lr", o.lr);
    overlay("seed", o.seed);
    overlay("n_layers", o.n_layers);
    overlay("d_model", o.d_model);
    overlay("n_heads", o.n_heads);
    overlay("d_ff", o.d_ff);
    overlay("ffn", o.ffn);
    overlay("ratio", o.ratio);
    overlay("layers", o.layers);
    overlay("epsilon", o.epsilon);
    overlay("var_step", o.var_step);
    overlay("neuron_step", o.neuron_step);
    overlay("strategy", o.strategy);
    overlay("solver", o.solver);
    overlay("input_policy", o.policy);
    overlay("samples", o.samples);
    overlay("seq_len", o.seq_len);
    overlay("seeds", o.n_seeds);
    overlay("iterative", o.iterative);
    overlay("jobs", o.jobs);
    overlay("ratios", o.ratios);
    overlay("strategies", o.strategies);
    overlay("which", o.which);
}

comp::PruneConfig prune_config_from(const Options& o, double ratio, std::uint64_t seed) {
    comp::PruneConfig cfg;
    cfg.target_ratio = ratio;
    cfg.removed_layers = o.layers;
    cfg.eps_rel = o.epsilon;
    cfg.var_step = o.var_step;
    cfg.neuron_step = o.neuron_step;
    cfg.solver =
        (o.solver == "iterative") ? comp::TuneSolver::Iterative : comp::TuneSolver::Direct;
    cfg.seed = seed;
    cfg.calib = {o.samples, o.seq_len};
    cfg.input_policy = (o.policy == "propagated") ? comp::InputPolicy::Propagated
                                                  : comp::InputPolicy::Identical;
    return cfg;
}

ordered_json prune_config_json(const comp::PruneConfig& cfg) {
    ordered_json j;
    j["ratio"] = cfg.target_ratio;
    j["layers"] = cfg.removed_layers;
    j["epsilon"] = cfg.eps_rel;
    j["var_step"] = cfg.var_step;
    j["neuron_step"] = cfg.neuron_step;
    j["exempt_head"] = cfg.exempt_head;
    j["exempt_tail"] = cfg.exempt_tail;
    j["dense_cap"] = cfg.dense_cap;
    j["solver"] = to_string(cfg.solver);
    j["seed"] = cfg.seed;
    j["calib_samples"] = cfg.calib.n_samples;
    j["calib_seq_len"] = cfg.calib.seq_len;
    j["eval_samples"] = cfg.eval.n_samples;
    j["eval_seq_len"] = cfg.eval.seq_len;
    j["input_policy"] = to_string(cfg.input_policy);
    j["recompute_importance"] = cfg.recompute_importance;
    return j;
}

std::string dense_csv(const comp::PruneReport& r) {
    std::ostringstream out;
    out << "schema_version,layer,dense,in_dim,out_dim,pruned,cap,variance,"
           "reconstruction_rms,kappa0,importance_fallback,tune_kept_binary,tune_calls\n";
    for (const auto& rec : r.neuron_phase) {
        for (const auto& d : rec.denses) {
            out << comp::kReportSchemaVersion << ',' << d.layer_original << ',' << d.dense << ','
                << d.in_dim << ',' << d.out_dim << ',' << d.pruned << ',' << d.cap << ','
                << comp::csv_double(d.variance) << ',' << comp::csv_double(d.reconstruction_rms)
                << ',' << comp::csv_double(d.kappa0) << ',' << (d.importance_fallback ? 1 : 0)
                << ',' << (d.tune_kept_binary ? 1 : 0) << ',' << d.tune_calls << '\n';
        }
    }
    return out.str();
}

int cmd_train(const Options& o) {
    comp::ModelConfig mc;
    mc.n_layers = o.n_layers;
    mc.d_model = o.d_model;
    mc.n_heads = o.n_heads;
    mc.d_ff = o.d_ff;
    mc.ffn_kind = comp::ffn_kind_from_string(o.ffn);
    mc.validate();

    comp::TrainConfig tc;
    tc.steps = o.steps;
    tc.lr = o.lr;
    tc.seed = o.seed;
    tc.batch_size = o.batch_size;
    tc.seq_len = o.train_seq;

    Timer timer;
    auto corpus = comp::read_file_bytes(o.corpus);
    comp::TrainResult result = comp::train_toy(mc, corpus, tc);
    comp::save_checkpoint(result.model, o.out);

    std::ostringstream curve;
    curve << "schema_version,step,loss\n";
    for (const auto& pt : result.curve)
        curve << comp::kReportSchemaVersion << ',' << pt.step << ','
              << comp::csv_double(pt.loss) << '\n';
    comp::write_text_file(fs::path(o.out) / "train_curve.csv", curve.str());

    comp::RunManifest manifest;
    manifest.command = "train";
    manifest.seed = o.seed;
    manifest.resolved_config = {{"steps", o.steps},       {"lr", o.lr},
                                {"batch_size", o.batch_size}, {"seq_len", o.train_seq},
                                {"n_layers", o.n_layers}, {"d_model", o.d_model},
                                {"n_heads", o.n_heads},   {"d_ff", o.d_ff},
                                {"ffn", o.ffn},           {"seed", o.seed}};
    manifest.input_digests = {{"corpus", comp::file_digest(o.corpus)}};
    ordered_json report;
    report["schema_version"] = comp::kReportSchemaVersion;
    report["manifest"] = manifest.to_json();
    report["final_loss"] = result.final_loss;
    report["holdout_cross_entropy"] = result.holdout_cross_entropy;
    report["holdout_bits_per_byte"] = result.holdout_bits_per_byte;
    report["params"] = result.model.param_count();
    comp::write_text_file(fs::path(o.out) / "train_report.json", report.dump(2) + "\n");
    write_timing_sidecar(fs::path(o.out) / "train_report.json",
                         {{"train_seconds", timer.seconds()}});

    std::printf("trained %zu steps: final loss %.4f, holdout ce %.4f (%.3f bits/byte)\n",
                o.steps, result.final_loss, result.holdout_cross_entropy,
                result.holdout_bits_per_byte);
    std::printf("checkpoint written to %s\n", o.out.c_str());
    return 0;
}

int cmd_score_layers(const Options& o) {
    comp::Model model = comp::load_checkpoint(o.model_dir);
    auto corpus = comp::read_file_bytes(o.corpus);
    comp::Batch calib = comp::byte_tokenize(corpus, o.seq_len, o.samples, o.seed);

    std::ostringstream csv;
    csv << "schema_version,iteration,layer,redundancy,importance,tokens_used\n";
    auto emit = [&](std::size_t iteration, const std::vector<comp::LayerScore>& scores) {
        for (const auto& s : scores)
            csv << comp::kReportSchemaVersion << ',' << iteration << ',' << s.layer << ','
                << comp::csv_double(s.redundancy) << ',' << comp::csv_double(s.importance) << ','
                << s.tokens_used << '\n';
    };

    if (o.iterative == 0) {
        emit(0, comp::score_all_layers(model, calib));
    } else {
        comp::PruneConfig cfg;
        cfg.seed = o.seed;
        comp::Model work = model;
        comp::LayerPhaseRecord rec =
            comp::iterative_layer_prune(work, calib, o.iterative, cfg, model.layers.size());
        for (std::size_t i = 0; i < rec.history.size(); ++i) emit(i, rec.history[i]);
    }
    comp::write_text_file(o.out, csv.str());
    std::printf("layer scores written to %s\n", o.out.c_str());
    return 0;
}

int cmd_prune(const Options& o) {
    comp::Strategy strategy = comp::strategy_from_string(o.strategy);
    comp::Model model = comp::load_checkpoint(o.model_dir);
    auto corpus = comp::read_file_bytes(o.corpus);
    comp::PruneConfig cfg = prune_config_from(o, o.ratio, o.seed);

    Timer timer;
    int code = 0;
    comp::PruneReport report;
    std::optional<comp::Model> pruned;
    try {
        comp::PruneOutcome out = comp::run_strategy(strategy, model, corpus, cfg);
        report = std::move(out.report);
        pruned = std::move(out.model);
    } catch (const comp::SolverError& e) {
        // Partial report: record what we know and still write it out.
        report.strategy = o.strategy;
        report.target_ratio = o.ratio;
        report.params_total = model.param_count();
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        code = 6;
    }

    comp::RunManifest manifest;
    manifest.command = "prune";
    manifest.seed = o.seed;
    manifest.resolved_config = prune_config_json(cfg);
    manifest.resolved_config["strategy"] = o.strategy;
    manifest.input_digests = {{"model", comp::checkpoint_digest(o.model_dir)},
                              {"corpus", comp::file_digest(o.corpus)}};

    ordered_json j = comp::to_json(report, manifest);
    j["partial"] = (code != 0);
    comp::write_text_file(o.report_path, j.dump(2) + "\n");
    fs::path csv_path = o.report_path;
    csv_path += ".denses.csv";
    comp::write_text_file(csv_path, dense_csv(report));
    write_timing_sidecar(o.report_path, {{"prune_seconds", timer.seconds()}});

    if (pruned) {
        comp::save_checkpoint(*pruned, o.out);
        std::printf("pruned checkpoint written to %s\n", o.out.c_str());
    }
    std::printf("strategy %s ratio %.4f: achieved %.4f, perplexity %.4f -> %.4f\n",
                report.strategy.c_str(), report.target_ratio, report.achieved_ratio,
                report.perplexity_before, report.perplexity_after);
    std::printf("report written to %s\n", o.report_path.c_str());
    return code;
}

int cmd_eval(const Options& o) {
    comp::Model model = comp::load_checkpoint(o.model_dir);
    auto corpus = comp::read_file_bytes(o.corpus);
    comp::Batch batch = comp::byte_tokenize(corpus, o.seq_len, o.samples, o.seed);

    const double ppl = comp::perplexity(model, batch);
    std::printf("perplexity %.17g\n", ppl);

    ordered_json j;
    j["schema_version"] = comp::kReportSchemaVersion;
    comp::RunManifest manifest;
    manifest.command = "eval";
    manifest.seed = o.seed;
    manifest.resolved_config = {{"samples", o.samples}, {"seq_len", o.seq_len}, {"seed", o.seed}};
    manifest.input_digests = {{"model", comp::checkpoint_digest(o.model_dir)},
                              {"corpus", comp::file_digest(o.corpus)}};
    j["perplexity"] = ppl;

    if (!o.baseline.empty()) {
        comp::Model baseline = comp::load_checkpoint(o.baseline);
        comp::Fidelity f = comp::fidelity(baseline, model, batch);
        std::printf("fidelity_kl %.17g\n", f.mean_kl);
        std::printf("fidelity_logit_mse %.17g\n", f.mean_logit_mse);
        j["fidelity_kl"] = f.mean_kl;
        j["fidelity_logit_mse"] = f.mean_logit_mse;
        manifest.input_digests["baseline"] = comp::checkpoint_digest(o.baseline);
    }
    j["manifest"] = manifest.to_json();
    if (!o.out.empty()) comp::write_text_file(o.out, j.dump(2) + "\n");
    return 0;
}

struct CompareCell {
    std::string strategy;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    int error_code = 0;
    comp::PruneReport report;
};

int cmd_compare(const Options& o) {
    comp::Model model = comp::load_checkpoint(o.model_dir);
    auto corpus = comp::read_file_bytes(o.corpus);
    for (const auto& s : o.strategies) comp::strategy_from_string(s);  // validate early

    std::vector<CompareCell> cells;
    for (const auto& strategy : o.strategies)
        for (double ratio : o.ratios)
            for (std::uint64_t seed = 1; seed <= o.n_seeds; ++seed)
                cells.push_back(CompareCell{strategy, ratio, seed, false, 0, {}});

    Timer timer;
    auto run_cell = [&](CompareCell& cell) {
        Options cell_opts = o;
        cell_opts.layers = -1;  // derived per ratio
        comp::PruneConfig cfg = prune_config_from(cell_opts, cell.ratio, cell.seed);
        try {
            cell.report =
                comp::run_strategy(comp::strategy_from_string(cell.strategy), model, corpus, cfg)
                    .report;
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error_code = exit_code_for(e);
        }
    };
    if (o.jobs <= 1) {
        for (auto& cell : cells) run_cell(cell);
    } else {
        std::vector<std::thread> workers;
        std::size_t next = 0;
        std::mutex mu;
        for (std::size_t w = 0; w < o.jobs; ++w) {
            workers.emplace_back([&] {
                while (true) {
                    std::size_t idx;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        if (next >= cells.size()) return;
                        idx = next++;
                    }
                    run_cell(cells[idx]);
                }
            });
        }
        for (auto& t : workers) t.join();
    }

    std::ostringstream csv;
    csv << "schema_version,row_type,strategy,ratio,seed,status,achieved_ratio,removed_layers,"
           "neuron_pruned,shortfall,perplexity_before,perplexity_after,fidelity_kl,"
           "fidelity_logit_mse\n";
    for (const auto& cell : cells) {
        csv << comp::kReportSchemaVersion << ",cell," << cell.strategy << ','
            << comp::csv_double(cell.ratio) << ',' << cell.seed << ','
            << (cell.ok ? "ok" : ("error" + std::to_string(cell.error_code))) << ',';
        if (cell.ok) {
            csv << comp::csv_double(cell.report.achieved_ratio) << ','
                << cell.report.removed_layers << ',' << cell.report.neuron_pruned_total << ','
                << (cell.report.shortfall ? 1 : 0) << ','
                << comp::csv_double(cell.report.perplexity_before) << ','
                << comp::csv_double(cell.report.perplexity_after) << ','
                << comp::csv_double(cell.report.fidelity_kl) << ','
                << comp::csv_double(cell.report.fidelity_logit_mse) << '\n';
        } else {
            csv << ",,,,,,,\n";
        }
    }
    // Per-strategy, per-ratio summary rows: means over the seeds that succeeded.
    for (const auto& strategy : o.strategies) {
        for (double ratio : o.ratios) {
            double ppl = 0.0, kl = 0.0, achieved = 0.0;
            std::size_t ok_count = 0;
            bool any_short = false;
            for (const auto& cell : cells) {
                if (cell.strategy != strategy || cell.ratio != ratio || !cell.ok) continue;
                ppl += cell.report.perplexity_after;
                kl += cell.report.fidelity_kl;
                achieved += cell.report.achieved_ratio;
                any_short |= cell.report.shortfall;
                ++ok_count;
            }
            csv << comp::kReportSchemaVersion << ",summary," << strategy << ','
                << comp::csv_double(ratio) << ',' << ok_count << ','
                << (ok_count ? "ok" : "empty") << ',';
            if (ok_count) {
                const double n = static_cast<double>(ok_count);
                csv << comp::csv_double(achieved / n) << ",,," << (any_short ? 1 : 0) << ",,"
                    << comp::csv_double(ppl / n) << ',' << comp::csv_double(kl / n) << ",\n";
            } else {
                csv << ",,,,,,,\n";
            }
        }
    }
    comp::write_text_file(o.out, csv.str());

    comp::RunManifest manifest;
    manifest.command = "compare";
    manifest.seed = o.n_seeds;
    manifest.resolved_config = {{"ratios", o.ratios},     {"strategies", o.strategies},
                                {"seeds", o.n_seeds},     {"epsilon", o.epsilon},
                                {"var_step", o.var_step}, {"solver", o.solver},
                                {"samples", o.samples},   {"seq_len", o.seq_len},
                                {"jobs", o.jobs}};
    manifest.input_digests = {{"model", comp::checkpoint_digest(o.model_dir)},
                              {"corpus", comp::file_digest(o.corpus)}};
    ordered_json mj;
    mj["schema_version"] = comp::kReportSchemaVersion;
    mj["manifest"] = manifest.to_json();
    fs::path mpath = o.out;
    mpath += ".json";
    comp::write_text_file(mpath, mj.dump(2) + "\n");
    write_timing_sidecar(o.out, {{"compare_seconds", timer.seconds()}});

    std::printf("comparison grid (%zu cells) written to %s\n", cells.size(), o.out.c_str());
    return 0;
}

int cmd_ablate(const Options& o) {
    comp::Model model = comp::load_checkpoint(o.model_dir);
    auto corpus = comp::read_file_bytes(o.corpus);

    comp::RunManifest manifest;
    manifest.command = "ablate";
    manifest.seed = o.seed;
    manifest.resolved_config = {{"which", o.which},   {"ratio", o.ratio},
                                {"layers", o.layers}, {"seeds", o.n_seeds},
                                {"samples", o.samples}, {"seq_len", o.seq_len}};
    manifest.input_digests = {{"model", comp::checkpoint_digest(o.model_dir)},
                              {"corpus", comp::file_digest(o.corpus)}};

    Timer timer;
    std::ostringstream csv;
    ordered_json sidecar;
    sidecar["schema_version"] = comp::kReportSchemaVersion;

    if (o.which == "iterative-order") {
        const std::size_t n = o.layers < 0 ? 4 : static_cast<std::size_t>(o.layers);
        csv << "schema_version,seed,method,order,perplexity,orders_identical\n";
        ordered_json runs = ordered_json::array();
        for (std::uint64_t seed = 1; seed <= o.n_seeds; ++seed) {
            comp::PruneConfig cfg;
            cfg.seed = seed;
            cfg.calib = {o.samples, o.seq_len};
            comp::LayerOrderAblation ab = comp::ablation_layer_order(model, corpus, n, cfg);
            auto order_str = [](const std::vector<std::size_t>& v) {
                std::string s;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (i) s += ';';
                    s += std::to_string(v[i]);
                }
                return s;
            };
            csv << comp::kReportSchemaVersion << ',' << seed << ",iterative,"
                << order_str(ab.iterative_order) << ','
                << comp::csv_double(ab.iterative_perplexity) << ','
                << (ab.orders_identical ? 1 : 0) << '\n';
            csv << comp::kReportSchemaVersion << ',' << seed << ",one-shot,"
                << order_str(ab.one_shot_order) << ','
                << comp::csv_double(ab.one_shot_perplexity) << ','
                << (ab.orders_identical ? 1 : 0) << '\n';
            ordered_json entry;
            entry["seed"] = seed;
            entry["iterative_order"] = ab.iterative_order;
            entry["one_shot_order"] = ab.one_shot_order;
            entry["orders_identical"] = ab.orders_identical;
            entry["iterative_perplexity"] = ab.iterative_perplexity;
            entry["one_shot_perplexity"] = ab.one_shot_perplexity;
            runs.push_back(entry);
        }
        sidecar["runs"] = runs;
        ordered_json m_iter = manifest.to_json(), m_once = manifest.to_json();
        m_iter["resolved_config"]["method"] = "iterative";
        m_once["resolved_config"]["method"] = "one-shot";
        sidecar["manifests"] = ordered_json::array({m_iter, m_once});
    } else if (o.which == "identical-input") {
        csv << "schema_version,seed,policy,achieved_ratio,perplexity_after,fidelity_kl\n";
        ordered_json runs = ordered_json::array();
        double mean_identical = 0.0, mean_propagated = 0.0;
        for (std::uint64_t seed = 1; seed <= o.n_seeds; ++seed) {
            comp::PruneConfig cfg = prune_config_from(o, o.ratio, seed);
            comp::IdenticalInputAblation ab = comp::ablation_identical_input(model, corpus, cfg);
            for (const comp::PruneReport* r : {&ab.identical, &ab.propagated}) {
                csv << comp::kReportSchemaVersion << ',' << seed << ',' << r->input_policy << ','
                    << comp::csv_double(r->achieved_ratio) << ','
                    << comp::csv_double(r->perplexity_after) << ','
                    << comp::csv_double(r->fidelity_kl) << '\n';
            }
            mean_identical += ab.identical.perplexity_after / static_cast<double>(o.n_seeds);
            mean_propagated += ab.propagated.perplexity_after / static_cast<double>(o.n_seeds);
            comp::RunManifest m_id = manifest, m_prop = manifest;
            m_id.resolved_config["input_policy"] = "identical";
            m_id.seed = seed;
            m_prop.resolved_config["input_policy"] = "propagated";
            m_prop.seed = seed;
            ordered_json entry;
            entry["seed"] = seed;
            entry["identical"] = comp::to_json(ab.identical, m_id);
            entry["propagated"] = comp::to_json(ab.propagated, m_prop);
            runs.push_back(entry);
        }
        csv << comp::kReportSchemaVersion << ",mean,identical,,"
            << comp::csv_double(mean_identical) << ",\n";
        csv << comp::kReportSchemaVersion << ",mean,propagated,,"
            << comp::csv_double(mean_propagated) << ",\n";
        sidecar["runs"] = runs;
        ordered_json m_id = manifest.to_json(), m_prop = manifest.to_json();
        m_id["resolved_config"]["input_policy"] = "identical";
        m_prop["resolved_config"]["input_policy"] = "propagated";
        sidecar["manifests"] = ordered_json::array({m_id, m_prop});
    } else {
        throw comp::Error("unknown ablation: " + o.which +
                          " (expected iterative-order or identical-input)");
    }

    comp::write_text_file(o.out, csv.str());
    fs::path jpath = o.out;
    jpath += ".json";
    comp::write_text_file(jpath, sidecar.dump(2) + "\n");
    write_timing_sidecar(o.out, {{"ablate_seconds", timer.seconds()}});
    std::printf("ablation written to %s\n", o.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid-granularity post-training pruning workbench"};
    app.require_subcommand(1);

    Options o;
    try {
        apply_config_file(argc, argv, o);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path,
                        "JSON config file; explicit flags override its values");
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--corpus", o.corpus, "byte corpus file");
    };

    CLI::App* train = app.add_subcommand("train", "train the toy byte-level model");
    add_common(train);
    train->add_option("--steps", o.steps);
    train->add_option("--lr", o.lr);
    train->add_option("--batch-size", o.batch_size);
    train->add_option("--seq-len", o.train_seq);
    train->add_option("--n-layers", o.n_layers);
    train->add_option("--d-model", o.d_model);
    train->add_option("--n-heads", o.n_heads);
    train->add_option("--d-ff", o.d_ff);
    train->add_option("--ffn", o.ffn)->check(CLI::IsMember({"gated", "plain"}));
    train->add_option("--out", o.out)->required();

    CLI::App* score = app.add_subcommand("score-layers", "per-layer redundancy and importance");
    add_common(score);
    score->add_option("--model", o.model_dir)->required();
    score->add_option("--samples", o.samples);
    score->add_option("--seq-len", o.seq_len);
    score->add_option("--iterative", o.iterative, "score iteratively while removing n layers");
    score->add_option("--out", o.out)->required();

    CLI::App* prune = app.add_subcommand("prune", "prune a checkpoint");
    add_common(prune);
    prune->add_option("--model", o.model_dir)->required();
    prune->add_option("--ratio", o.ratio);
    prune->add_option("--layers", o.layers, "removed-layer count; negative derives it");
    prune->add_option("--strategy", o.strategy)
        ->check(CLI::IsMember({"comp", "layer", "neuron"}));
    prune->add_option("--epsilon", o.epsilon);
    prune->add_option("--var-step", o.var_step);
    prune->add_option("--neuron-step", o.neuron_step);
    prune->add_option("--solver", o.solver)->check(CLI::IsMember({"direct", "iterative"}));
    prune->add_option("--input-policy", o.policy)
        ->check(CLI::IsMember({"identical", "propagated"}));
    prune->add_option("--samples", o.samples);
    prune->add_option("--seq-len", o.seq_len);
    prune->add_option("--out", o.out)->required();
    prune->add_option("--report", o.report_path);

    CLI::App* eval_cmd = app.add_subcommand("eval", "perplexity and fidelity");
    add_common(eval_cmd);
    eval_cmd->add_option("--text", o.corpus, "alias for --corpus: any byte file works");
    eval_cmd->add_option("--model", o.model_dir)->required();
    eval_cmd->add_option("--baseline", o.baseline);
    eval_cmd->add_option("--samples", o.samples);
    eval_cmd->add_option("--seq-len", o.seq_len);
    eval_cmd->add_option("--out", o.out);

    CLI::App* compare = app.add_subcommand("compare", "strategy comparison grid");
    add_common(compare);
    compare->add_option("--model", o.model_dir)->required();
    compare->add_option("--ratios", o.ratios)->delimiter(',');
    compare->add_option("--strategies", o.strategies)->delimiter(',');
    compare->add_option("--seeds", o.n_seeds);
    compare->add_option("--epsilon", o.epsilon);
    compare->add_option("--var-step", o.var_step);
    compare->add_option("--solver", o.solver)->check(CLI::IsMember({"direct", "iterative"}));
    compare->add_option("--samples", o.samples);
    compare->add_option("--seq-len", o.seq_len);
    compare->add_option("--jobs", o.jobs);
    compare->add_option("--out", o.out)->required();

    CLI::App* ablate = app.add_subcommand("ablate", "paired ablation experiments");
    add_common(ablate);
    ablate->add_option("--which", o.which)
        ->check(CLI::IsMember({"iterative-order", "identical-input"}));
    ablate->add_option("--model", o.model_dir)->required();
    ablate->add_option("--ratio", o.ratio);
    ablate->add_option("--layers", o.layers);
    ablate->add_option("--seeds", o.n_seeds);
    ablate->add_option("--samples", o.samples);
    ablate->add_option("--seq-len", o.seq_len);
    ablate->add_option("--out", o.out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train)) return cmd_train(o);
        if (app.got_subcommand(score)) return cmd_score_layers(o);
        if (app.got_subcommand(prune)) return cmd_prune(o);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(o);
        if (app.got_subcommand(compare)) return cmd_compare(o);
        if (app.got_subcommand(ablate)) return cmd_ablate(o);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
    return 0;
}
