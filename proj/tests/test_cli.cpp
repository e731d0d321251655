#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comp/checkpoint.hpp"
#include "comp/eval.hpp"
#include "comp/tokenizer.hpp"

namespace fs = std::filesystem;

#ifndef COMP_CLI_PATH
#error "COMP_CLI_PATH must point at the comp binary"
#endif
#ifndef COMP_SOURCE_DIR
#error "COMP_SOURCE_DIR must point at the repository root"
#endif

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path& work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "comp_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_file = work_dir() / ("stdout_" + std::to_string(counter));
    const fs::path err_file = work_dir() / ("stderr_" + std::to_string(counter));
    ++counter;
    const std::string cmd = std::string(COMP_CLI_PATH) + " " + args + " > " + out_file.string() +
                            " 2> " + err_file.string();
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

std::string corpus_path() {
    return (fs::path(COMP_SOURCE_DIR) / "data" / "corpus.txt").string();
}

/// Small checkpoint shared by every CLI test, trained once.
std::string fixture_model() {
    static std::string dir = [] {
        const fs::path d = work_dir() / "model";
        CliResult r = run_cli("train --corpus " + corpus_path() +
                              " --steps 200 --n-layers 6 --d-model 32 --n-heads 4 --d-ff 48"
                              " --batch-size 4 --seq-len 32 --seed 1 --out " +
                              d.string());
        REQUIRE(r.exit_code == 0);
        return d.string();
    }();
    return dir;
}

std::string common_data_flags() {
    return " --corpus " + corpus_path() + " --samples 6 --seq-len 48";
}

}  // namespace

TEST_CASE("train is deterministic and emits the training curve") {
    const std::string base = fixture_model();
    const fs::path again = work_dir() / "model_again";
    CliResult r = run_cli("train --corpus " + corpus_path() +
                          " --steps 200 --n-layers 6 --d-model 32 --n-heads 4 --d-ff 48"
                          " --batch-size 4 --seq-len 32 --seed 1 --out " +
                          again.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(slurp(fs::path(base) / "weights.bin") == slurp(again / "weights.bin"));
    REQUIRE(slurp(fs::path(base) / "manifest.json") == slurp(again / "manifest.json"));

    const std::string curve = slurp(fs::path(base) / "train_curve.csv");
    REQUIRE(curve.rfind("schema_version,step,loss\n", 0) == 0);
    // Loadable by eval.
    CliResult ev = run_cli("eval --model " + base + common_data_flags());
    REQUIRE(ev.exit_code == 0);
    REQUIRE(ev.out.find("perplexity") != std::string::npos);
}

TEST_CASE("missing corpus exits 2 and names the path") {
    CliResult r = run_cli("train --corpus /nonexistent/corpus.bin --steps 1 --out " +
                          (work_dir() / "nope").string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("/nonexistent/corpus.bin") != std::string::npos);
}

TEST_CASE("score-layers emits one row per layer with the frozen header") {
    CliResult r = run_cli("score-layers --model " + fixture_model() + common_data_flags() +
                          " --out " + (work_dir() / "scores.csv").string());
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(work_dir() / "scores.csv"));
    std::string line;
    std::getline(csv, line);
    REQUIRE(line == "schema_version,iteration,layer,redundancy,importance,tokens_used");
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 6);

    // Iterative mode: one block per removal iteration.
    CliResult ri = run_cli("score-layers --model " + fixture_model() + common_data_flags() +
                           " --iterative 2 --out " + (work_dir() / "scores_iter.csv").string());
    REQUIRE(ri.exit_code == 0);
    std::istringstream csv2(slurp(work_dir() / "scores_iter.csv"));
    std::getline(csv2, line);
    rows = 0;
    while (std::getline(csv2, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 6 + 5);  // 6 layers scored, then 5 after one removal
}

TEST_CASE("prune is byte-deterministic and respects the budget") {
    const std::string report1 = (work_dir() / "r1.json").string();
    const std::string report2 = (work_dir() / "r2.json").string();
    const std::string args = "prune --model " + fixture_model() + common_data_flags() +
                             " --ratio 0.25 --layers 1 --strategy comp --seed 3";
    CliResult a = run_cli(args + " --out " + (work_dir() / "p1").string() + " --report " + report1);
    REQUIRE(a.exit_code == 0);
    CliResult b = run_cli(args + " --out " + (work_dir() / "p2").string() + " --report " + report2);
    REQUIRE(b.exit_code == 0);
    REQUIRE(slurp(report1) == slurp(report2));
    REQUIRE(slurp(work_dir() / "p1" / "weights.bin") == slurp(work_dir() / "p2" / "weights.bin"));

    nlohmann::json rep = nlohmann::json::parse(slurp(report1));
    REQUIRE(rep.at("schema_version").get<int>() == 1);
    REQUIRE(rep.contains("manifest"));
    const double achieved = rep.at("achieved_ratio").get<double>();
    const bool shortfall = rep.at("shortfall").get<bool>();
    REQUIRE((shortfall || std::abs(achieved - 0.25) < 0.01));

    // Per-dense CSV exists with the frozen header.
    const std::string dense_csv = slurp(fs::path(report1 + ".denses.csv"));
    REQUIRE(dense_csv.rfind("schema_version,layer,dense,in_dim,out_dim,pruned,cap,variance,"
                            "reconstruction_rms,kappa0,importance_fallback,tune_kept_binary,"
                            "tune_calls\n",
                            0) == 0);
}

TEST_CASE("infeasible prune configurations exit 5") {
    CliResult r = run_cli("prune --model " + fixture_model() + common_data_flags() +
                          " --ratio 0.9 --layers 0 --strategy comp --out " +
                          (work_dir() / "x").string() + " --report " +
                          (work_dir() / "x.json").string());
    REQUIRE(r.exit_code == 5);
}

TEST_CASE("corrupt checkpoints exit 4") {
    const fs::path broken = work_dir() / "broken";
    fs::create_directories(broken);
    std::ofstream(broken / "manifest.json") << "{}";
    std::ofstream(broken / "weights.bin") << "";
    CliResult r = run_cli("eval --model " + broken.string() + common_data_flags());
    REQUIRE(r.exit_code == 4);
}

TEST_CASE("eval against itself reports zero divergence and matches the library") {
    CliResult r = run_cli("eval --model " + fixture_model() + " --baseline " + fixture_model() +
                          common_data_flags() + " --seed 9 --out " +
                          (work_dir() / "eval.json").string());
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(slurp(work_dir() / "eval.json"));
    REQUIRE(j.at("fidelity_kl").get<double>() == 0.0);
    REQUIRE(j.at("fidelity_logit_mse").get<double>() == 0.0);

    comp::Model model = comp::load_checkpoint(fixture_model());
    auto corpus = comp::read_file_bytes(corpus_path());
    comp::Batch batch = comp::byte_tokenize(corpus, 48, 6, 9);
    const double want = comp::perplexity(model, batch);
    REQUIRE(j.at("perplexity").get<double>() == Approx(want).epsilon(1e-9));
}

TEST_CASE("compare emits the frozen header, cell rows and summaries") {
    const std::string out = (work_dir() / "cmp.csv").string();
    CliResult r = run_cli("compare --model " + fixture_model() + common_data_flags() +
                          " --ratios 0.25 --strategies comp --seeds 1 --out " + out);
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(out));
    std::string line;
    std::getline(csv, line);
    REQUIRE(line ==
            "schema_version,row_type,strategy,ratio,seed,status,achieved_ratio,removed_layers,"
            "neuron_pruned,shortfall,perplexity_before,perplexity_after,fidelity_kl,"
            "fidelity_logit_mse");
    std::size_t cells = 0, summaries = 0;
    while (std::getline(csv, line)) {
        if (line.find(",cell,") != std::string::npos) ++cells;
        if (line.find(",summary,") != std::string::npos) ++summaries;
    }
    REQUIRE(cells == 1);
    REQUIRE(summaries == 1);
    REQUIRE(fs::exists(out + ".json"));  // manifest sidecar
}

TEST_CASE("compare output is identical across --jobs settings") {
    const std::string out1 = (work_dir() / "cmp_j1.csv").string();
    const std::string out2 = (work_dir() / "cmp_j2.csv").string();
    const std::string base = "compare --model " + fixture_model() + common_data_flags() +
                             " --ratios 0.22,0.3 --strategies comp,neuron --seeds 1 ";
    REQUIRE(run_cli(base + "--jobs 1 --out " + out1).exit_code == 0);
    REQUIRE(run_cli(base + "--jobs 2 --out " + out2).exit_code == 0);
    REQUIRE(slurp(out1) == slurp(out2));
}

TEST_CASE("config file supplies defaults and flags override it") {
    const fs::path cfg_path = work_dir() / "cfg.json";
    std::ofstream(cfg_path) << R"({"ratio": 0.22, "layers": 1, "seed": 4})";
    const std::string report = (work_dir() / "cfg_report.json").string();
    CliResult r = run_cli("prune --config " + cfg_path.string() + " --model " + fixture_model() +
                          common_data_flags() + " --strategy comp --out " +
                          (work_dir() / "cfg_out").string() + " --report " + report);
    REQUIRE(r.exit_code == 0);
    nlohmann::json rep = nlohmann::json::parse(slurp(report));
    REQUIRE(rep.at("target_ratio").get<double>() == Approx(0.22));
    REQUIRE(rep.at("manifest").at("seed").get<int>() == 4);

    // Explicit flag wins over the file.
    const std::string report_b = (work_dir() / "cfg_report_b.json").string();
    CliResult rb = run_cli("prune --config " + cfg_path.string() + " --model " + fixture_model() +
                           common_data_flags() + " --strategy comp --ratio 0.18 --out " +
                           (work_dir() / "cfg_out_b").string() + " --report " + report_b);
    REQUIRE(rb.exit_code == 0);
    nlohmann::json rep_b = nlohmann::json::parse(slurp(report_b));
    REQUIRE(rep_b.at("target_ratio").get<double>() == Approx(0.18));
}

TEST_CASE("ablate iterative-order records the order-coincidence flag") {
    const std::string out = (work_dir() / "abl.csv").string();
    CliResult r = run_cli("ablate --which iterative-order --model " + fixture_model() +
                          common_data_flags() + " --layers 2 --seeds 1 --out " + out);
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(out));
    std::string line;
    std::getline(csv, line);
    REQUIRE(line == "schema_version,seed,method,order,perplexity,orders_identical");
    std::getline(csv, line);
    REQUIRE((line.back() == '0' || line.back() == '1'));
    REQUIRE(fs::exists(out + ".json"));
    nlohmann::json j = nlohmann::json::parse(slurp(out + ".json"));
    REQUIRE(j.at("manifests").size() == 2);
}

TEST_CASE("ablate identical-input emits both policies per seed") {
    const std::string out = (work_dir() / "abl_id.csv").string();
    CliResult r = run_cli("ablate --which identical-input --model " + fixture_model() +
                          common_data_flags() + " --ratio 0.22 --layers 1 --seeds 1 --out " + out);
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(out);
    REQUIRE(csv.find(",identical,") != std::string::npos);
    REQUIRE(csv.find(",propagated,") != std::string::npos);
    nlohmann::json j = nlohmann::json::parse(slurp(out + ".json"));
    REQUIRE(j.at("manifests").size() == 2);
    REQUIRE(j.at("runs").size() == 1);
}
