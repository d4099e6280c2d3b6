#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pricer/baselines.hpp"
#include "pricer/config.hpp"
#include "pricer/cql.hpp"
#include "pricer/csv.hpp"
#include "pricer/evaluation.hpp"
#include "pricer/hash.hpp"
#include "pricer/logging.hpp"
#include "pricer/market.hpp"
#include "pricer/response.hpp"
#include "pricer/svg.hpp"

namespace pricer::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

/// Every stage writes a manifest: the verbatim config, the effective seed,
/// and content hashes of inputs and outputs. No timestamps, so reruns with
/// identical inputs produce identical manifests.
class ManifestWriter {
public:
    ManifestWriter(std::string command, const RunConfig& cfg, std::uint64_t seed)
        : command_(std::move(command)), config_echo_(cfg.to_json()), seed_(seed) {}

    void add_input(const std::string& path) { inputs_[path] = "sha1:" + sha1_file(path); }
    void add_output(const fs::path& dir, const std::string& name) {
        outputs_[name] = "sha1:" + sha1_file((dir / name).string());
    }

    void write(const fs::path& dir) const {
        nlohmann::json j{{"command", command_},
                         {"config", config_echo_},
                         {"seed", seed_},
                         {"inputs", inputs_},
                         {"outputs", outputs_}};
        save_json(j, (dir / "manifest.json").string());
    }

private:
    std::string command_;
    nlohmann::json config_echo_;
    std::uint64_t seed_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir.string());
}

// ---------------------------------------------------------------------------
// Artifact IO
// ---------------------------------------------------------------------------

inline RunConfig load_config(const std::string& path) {
    return RunConfig::from_json(load_json(path));
}

inline nlohmann::json truth_file_json(const MarketConfig& mc, const DemandTruth& truth) {
    return {{"format", "credit-pricer/truth-v1"},
            {"market", market_config_to_json(mc)},
            {"truth", demand_truth_to_json(truth)}};
}

inline DemandTruth load_truth(const std::string& path) {
    const nlohmann::json j = load_json(path);
    if (j.at("format").get<std::string>() != "credit-pricer/truth-v1")
        throw std::invalid_argument("load_truth: unknown format in " + path);
    return demand_truth_from_json(j.at("truth"));
}

inline void write_prices_csv(const std::string& kind, const std::vector<const DatasetRow*>& rows,
                             const std::vector<double>& prices, std::ostream& os) {
    os << "app_index,price,policy_kind\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        os << rows[i]->app.app_index << ',' << format_double(prices[i]) << ',' << kind << '\n';
}

/// Accepts "behavioral", a policy.json checkpoint, or a prices.csv table.
inline std::unique_ptr<PricingPolicy> load_policy(const std::string& spec, const Dataset& ds) {
    if (spec == "behavioral") return std::make_unique<BehavioralPolicy>(ds);
    if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".json") {
        return std::make_unique<CqlPolicy>(CqlPolicy::from_json(load_json(spec)));
    }
    if (spec.size() > 4 && spec.substr(spec.size() - 4) == ".csv") {
        std::ifstream f(spec, std::ios::binary);
        if (!f) throw std::invalid_argument("load_policy: cannot open " + spec);
        std::vector<std::string> row;
        if (!csv::read_row(f, row) || row != std::vector<std::string>{"app_index", "price", "policy_kind"})
            throw std::invalid_argument("load_policy: unexpected prices header in " + spec);
        std::unordered_map<long, double> prices;
        std::string kind = "opt";
        while (csv::read_row(f, row)) {
            if (row.size() == 1 && row[0].empty()) continue;
            if (row.size() != 3) throw std::invalid_argument("load_policy: bad prices row in " + spec);
            prices[parse_long(row[0])] = parse_double(row[1]);
            kind = row[2];
        }
        return std::make_unique<PriceTablePolicy>(kind, std::move(prices));
    }
    throw std::invalid_argument("load_policy: unrecognized policy spec '" + spec + "'");
}

inline std::uint64_t policy_seed_from_json(const std::string& path) {
    const nlohmann::json j = load_json(path);
    return j.value("seed", std::uint64_t{0});
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void run_gen_data(const RunConfig& cfg, const std::string& config_path, const fs::path& out) {
    ensure_dir(out);
    logs::info("gen-data: " + std::to_string(cfg.market.n_applications) + " applications, family " +
               demand_family_name(cfg.market.demand_family));
    const MarketData m = build_market(cfg.market, cfg.reward, cfg.split);
    write_dataset_csv(m.dataset, (out / "dataset.csv").string());
    save_json(truth_file_json(cfg.market, m.truth), (out / "truth.json").string());
    ManifestWriter mw("gen-data", cfg, cfg.market.seed);
    mw.add_input(config_path);
    mw.add_output(out, "dataset.csv");
    mw.add_output(out, "truth.json");
    mw.write(out);
}

inline std::unique_ptr<PriceResponse> fit_variant(const RunConfig& cfg, const Dataset& ds,
                                                  const std::string& variant, double l2_override,
                                                  std::uint64_t seed) {
    if (variant == "logistic")
        return std::make_unique<LogisticModel>(
            fit_logistic(ds, Split::train, FeatureSpec::standard(), 0.0));
    if (variant == "logistic-l2") {
        const double l2 = l2_override >= 0.0 ? l2_override : cfg.response.l2_lambda;
        return std::make_unique<LogisticModel>(
            fit_logistic(ds, Split::train, FeatureSpec::standard(), l2 > 0.0 ? l2 : 0.1));
    }
    if (variant == "fdpe")
        return std::make_unique<LogisticModel>(
            fit_logistic(ds, Split::train, FeatureSpec::standard(true), cfg.response.l2_lambda));
    if (variant == "neural") {
        NeuralResponseConfig ncfg = cfg.response.neural;
        ncfg.seed = seed;
        return std::make_unique<NeuralResponseModel>(fit_neural_response(ds, ncfg));
    }
    throw std::invalid_argument("fit-response: unknown variant '" + variant + "'");
}

inline nlohmann::json response_to_json(const PriceResponse& model) {
    if (const auto* lg = dynamic_cast<const LogisticModel*>(&model)) return lg->to_json();
    if (const auto* nn = dynamic_cast<const NeuralResponseModel*>(&model)) return nn->to_json();
    throw std::invalid_argument("response_to_json: unsupported model type");
}

inline void run_fit_response(const RunConfig& cfg, const std::string& config_path,
                             const std::string& data_path, const std::string& variant,
                             const fs::path& out) {
    ensure_dir(out);
    const Dataset ds = read_dataset_csv(data_path);
    logs::info("fit-response: variant " + variant + " on " +
               std::to_string(ds.split_count(Split::train)) + " train rows");
    const auto model = fit_variant(cfg, ds, variant, -1.0, cfg.seeds.front());
    save_json(response_to_json(*model), (out / "model.json").string());
    ManifestWriter mw("fit-response", cfg, cfg.seeds.front());
    mw.add_input(config_path);
    mw.add_input(data_path);
    mw.add_output(out, "model.json");
    mw.write(out);
}

inline void run_train(const RunConfig& cfg, const std::string& config_path,
                      const std::string& data_path, std::uint64_t seed,
                      std::optional<double> fixed_alpha, const fs::path& out) {
    ensure_dir(out);
    const Dataset ds = read_dataset_csv(data_path);
    const MinMaxScaler scaler = fit_state_scaler(ds, Split::train);
    auto transitions = to_transitions(ds, Split::train, scaler);
    CqlConfig ccfg = cfg.cql;
    ccfg.seed = seed;
    if (fixed_alpha) ccfg.fixed_alpha = fixed_alpha;
    logs::info("train: " + std::to_string(transitions.size()) + " transitions, " +
               std::to_string(ccfg.n_epochs) + " epochs, seed " + std::to_string(seed));

    CqlTrainer trainer(std::move(transitions), ccfg, scaler);
    const fs::path epochs_dir = out / "epochs";
    ensure_dir(epochs_dir);
    const auto metrics = trainer.train([&](int epoch, const CqlTrainer& t) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%02d", epoch);
        const fs::path dir = epochs_dir / name;
        ensure_dir(dir);
        save_json(t.actor().to_json(), (dir / "actor.json").string());
        save_json(t.critic1().to_json(), (dir / "critic1.json").string());
        save_json(t.critic2().to_json(), (dir / "critic2.json").string());
        logs::debug("train: checkpointed " + dir.string());
    });

    nlohmann::json policy_json = trainer.policy().to_json();
    policy_json["seed"] = seed;
    save_json(policy_json, (out / "policy.json").string());
    {
        std::ofstream f(out / "metrics.csv", std::ios::binary);
        write_metrics_csv(metrics, f);
    }
    ManifestWriter mw("train", cfg, seed);
    mw.add_input(config_path);
    mw.add_input(data_path);
    mw.add_output(out, "policy.json");
    mw.add_output(out, "metrics.csv");
    mw.write(out);
}

inline void run_optimize(const RunConfig& cfg, const std::string& config_path,
                         const std::string& data_path, const std::string& model_path,
                         const fs::path& out, int jobs) {
    ensure_dir(out);
    const Dataset ds = read_dataset_csv(data_path);
    auto model = std::shared_ptr<const PriceResponse>(response_from_json(load_json(model_path)));
    const bool fdpe = [&] {
        const auto* lg = dynamic_cast<const LogisticModel*>(model.get());
        return lg != nullptr && lg->spec().interactions;
    }();
    OptPolicy policy(model, cfg.reward, fdpe);
    std::vector<const DatasetRow*> rows;
    for (const auto& r : ds.rows) rows.push_back(&r);
    logs::info("optimize: pricing " + std::to_string(rows.size()) + " rows with " + policy.id());
    const auto prices = policy_prices(policy, rows, jobs);
    {
        std::ofstream f(out / "prices.csv", std::ios::binary);
        write_prices_csv(policy.kind(), rows, prices, f);
    }
    ManifestWriter mw("optimize", cfg, cfg.market.seed);
    mw.add_input(config_path);
    mw.add_input(data_path);
    mw.add_input(model_path);
    mw.add_output(out, "prices.csv");
    mw.write(out);
}

inline void run_evaluate(const RunConfig& cfg, const std::string& config_path,
                         const std::string& data_path, const std::vector<std::string>& policy_specs,
                         const std::vector<std::string>& evaluator_paths,
                         const std::string& truth_path, const fs::path& out, int jobs) {
    ensure_dir(out);
    const Dataset ds = read_dataset_csv(data_path);
    const auto test_rows = ds.split_rows(Split::test);
    if (test_rows.empty()) throw std::invalid_argument("evaluate: dataset has no test rows");

    std::vector<std::unique_ptr<PriceResponse>> evaluators;
    for (const auto& p : evaluator_paths) {
        if (p == "truth") {
            if (truth_path.empty())
                throw std::invalid_argument("evaluate: 'truth' evaluator requires --truth");
            evaluators.push_back(std::make_unique<TruthResponse>(load_truth(truth_path)));
        } else {
            evaluators.push_back(response_from_json(load_json(p)));
        }
    }
    if (evaluators.empty()) throw std::invalid_argument("evaluate: no evaluators given");

    const PriceResponse* truth_eval = nullptr;
    for (const auto& e : evaluators)
        if (dynamic_cast<const TruthResponse*>(e.get())) truth_eval = e.get();
    std::vector<double> opt_prices_cache;
    if (truth_eval) opt_prices_cache = optimal_prices(test_rows, *truth_eval, cfg.reward, jobs);

    std::vector<EvalReport> reports;
    for (const auto& spec : policy_specs) {
        const auto policy = load_policy(spec, ds);
        const std::uint64_t seed =
            spec.size() > 5 && spec.substr(spec.size() - 5) == ".json" ? policy_seed_from_json(spec) : 0;
        logs::info("evaluate: " + policy->id() + " on " + std::to_string(test_rows.size()) + " rows");
        for (const auto& ev : evaluators) {
            EvalReport rep = evaluate(*policy, test_rows, *ev, cfg.reward, jobs);
            rep.seed = seed;
            if (ev.get() == truth_eval) {
                rep.pct_of_optimal = percent_of_optimal(*policy, test_rows, *truth_eval, cfg.reward,
                                                        jobs, &opt_prices_cache);
            }
            reports.push_back(std::move(rep));
        }
    }

    {
        std::ofstream f(out / "report.csv", std::ios::binary);
        write_report_csv(reports, f);
    }
    {
        std::ofstream f(out / "summary.md", std::ios::binary);
        write_summary_markdown(reports, f);
    }
    // one curve per policy under the first evaluator (the truth when present)
    std::vector<EvalReport> curve_reports;
    const std::string curve_eval = truth_eval ? truth_eval->id() : evaluators.front()->id();
    for (const auto& r : reports)
        if (r.evaluator_id == curve_eval) curve_reports.push_back(r);
    write_cumulative_svg(curve_reports, (out / "cumulative_reward.svg").string());

    ManifestWriter mw("evaluate", cfg, cfg.market.seed);
    mw.add_input(config_path);
    mw.add_input(data_path);
    for (const auto& p : evaluator_paths)
        if (p != "truth") mw.add_input(p);
    if (!truth_path.empty()) mw.add_input(truth_path);
    for (const auto& s : policy_specs)
        if (s != "behavioral") mw.add_input(s);
    mw.add_output(out, "report.csv");
    mw.add_output(out, "summary.md");
    mw.add_output(out, "cumulative_reward.svg");
    mw.write(out);
}

inline void run_explain(const RunConfig& cfg, const std::string& config_path,
                        const std::string& data_path, long row_index,
                        const std::string& model_path, const fs::path& out) {
    ensure_dir(out);
    const Dataset ds = read_dataset_csv(data_path);
    if (row_index < 0 || static_cast<std::size_t>(row_index) >= ds.rows.size())
        throw std::invalid_argument("explain: row index out of range");
    const DatasetRow& row = ds.rows[static_cast<std::size_t>(row_index)];
    const auto model = response_from_json(load_json(model_path));
    const double optimal = optimize_price(row.app, *model, cfg.reward);

    std::vector<double> rates, probs, rewards;
    for (double r = kRateLow; r <= kRateHigh + 1e-9; r += 0.05) {
        const double p = model->predict(row.app, r);
        rates.push_back(r);
        probs.push_back(p);
        rewards.push_back(expected_reward(row.app, r, p, cfg.reward));
    }
    {
        std::ofstream f(out / "explain.csv", std::ios::binary);
        f << "rate,p_accept,expected_reward\n";
        for (std::size_t i = 0; i < rates.size(); ++i)
            f << format_double(rates[i]) << ',' << format_double(probs[i]) << ','
              << format_double(rewards[i]) << '\n';
    }
    {
        LinePlot plot("Price-response curve", "rate (APR %)", "p(accept)");
        plot.add_series("p(accept)", rates, probs);
        plot.mark_point("offered", row.offered_rate, model->predict(row.app, row.offered_rate));
        plot.mark_point("optimal", optimal, model->predict(row.app, optimal));
        plot.write((out / "explain_response.svg").string());
    }
    {
        LinePlot plot("Expected reward", "rate (APR %)", "expected reward ($)");
        plot.add_series("expected reward", rates, rewards);
        plot.mark_point("offered", row.offered_rate,
                        expected_reward(row.app, row.offered_rate,
                                        model->predict(row.app, row.offered_rate), cfg.reward));
        plot.mark_point("optimal", optimal,
                        expected_reward(row.app, optimal, model->predict(row.app, optimal), cfg.reward));
        plot.write((out / "explain_reward.svg").string());
    }
    ManifestWriter mw("explain", cfg, cfg.market.seed);
    mw.add_input(config_path);
    mw.add_input(data_path);
    mw.add_input(model_path);
    mw.add_output(out, "explain.csv");
    mw.add_output(out, "explain_response.svg");
    mw.add_output(out, "explain_reward.svg");
    mw.write(out);
}

/// gen-data -> fit-response (all evaluator variants) -> train (all seeds) ->
/// optimize (plain + FDPE) -> evaluate, all under one output directory.
inline void run_pipeline(const RunConfig& cfg, const std::string& config_path, const fs::path& out,
                         int jobs) {
    ensure_dir(out);
    run_gen_data(cfg, config_path, out / "data");
    const std::string data_path = (out / "data" / "dataset.csv").string();

    std::vector<std::pair<std::string, std::string>> model_files;
    for (const auto& name : cfg.evaluators) {
        if (name == "truth") continue;
        const fs::path dir = out / "models" / name;
        ensure_dir(dir);
        const Dataset ds = read_dataset_csv(data_path);
        std::unique_ptr<PriceResponse> model;
        if (name == "logistic") {
            model = fit_variant(cfg, ds, "logistic", -1.0, cfg.seeds.front());
        } else if (name == "logistic-l2-0.1") {
            model = fit_variant(cfg, ds, "logistic-l2", 0.1, cfg.seeds.front());
        } else if (name == "logistic-l2-1") {
            model = fit_variant(cfg, ds, "logistic-l2", 1.0, cfg.seeds.front());
        } else if (name == "fdpe") {
            model = fit_variant(cfg, ds, "fdpe", -1.0, cfg.seeds.front());
        } else if (name == "neural") {
            model = fit_variant(cfg, ds, "neural", -1.0, cfg.seeds.front());
        } else {
            throw std::invalid_argument("pipeline: unknown evaluator '" + name + "'");
        }
        save_json(response_to_json(*model), (dir / "model.json").string());
        model_files.emplace_back(name, (dir / "model.json").string());
        logs::info("pipeline: fitted " + name);
    }

    std::vector<std::string> policy_specs = {"behavioral"};
    for (const auto seed : cfg.seeds) {
        const fs::path dir = out / "train" / ("seed_" + std::to_string(seed));
        run_train(cfg, config_path, data_path, seed, std::nullopt, dir);
        policy_specs.push_back((dir / "policy.json").string());
    }

    for (const auto& [name, path] : model_files) {
        if (name != "logistic" && name != "fdpe") continue;
        const fs::path dir = out / (name == "fdpe" ? "opt-fdpe" : "opt");
        run_optimize(cfg, config_path, data_path, path, dir, jobs);
        policy_specs.push_back((dir / "prices.csv").string());
    }

    std::vector<std::string> evaluator_paths;
    for (const auto& [name, path] : model_files) evaluator_paths.push_back(path);
    bool want_truth = false;
    for (const auto& e : cfg.evaluators) want_truth = want_truth || e == "truth";
    if (want_truth) evaluator_paths.push_back("truth");
    run_evaluate(cfg, config_path, data_path, policy_specs, evaluator_paths,
                 (out / "data" / "truth.json").string(), out / "eval", jobs);
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"Offline credit-pricing pipeline: synthetic markets, a conservative "
                 "offline-RL pricing agent, profit-based baselines, and model-based "
                 "offline evaluation."};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_path, model_path, truth_path, variant = "logistic";
    std::vector<std::string> policy_specs, evaluator_paths;
    long row_index = 0;
    std::optional<std::uint64_t> seed_override;
    std::optional<double> alpha_override;
    std::optional<int> jobs_override;
    std::optional<std::string> family_override;

    auto add_common = [&](CLI::App* cmd, bool needs_out = true) {
        cmd->add_option("--config", config_path, "Run configuration JSON")->required();
        if (needs_out) cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_option("--seed", seed_override, "Override the market/base seed");
        cmd->add_option("--jobs", jobs_override, "Row-level parallelism");
        cmd->add_option("--family", family_override, "Override the demand family");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic market dataset");
    add_common(gen);

    auto* fit = app.add_subcommand("fit-response", "Fit a price-response model");
    add_common(fit);
    fit->add_option("--data", data_path, "dataset.csv")->required();
    fit->add_option("--variant", variant, "logistic | logistic-l2 | fdpe | neural");

    auto* train = app.add_subcommand("train", "Train the offline pricing agent");
    add_common(train);
    train->add_option("--data", data_path, "dataset.csv")->required();
    train->add_option("--alpha", alpha_override, "Fix the conservatism trade-off (ablation)");

    auto* opt = app.add_subcommand("optimize", "Greedy profit-based prices for every row");
    add_common(opt);
    opt->add_option("--data", data_path, "dataset.csv")->required();
    opt->add_option("--model", model_path, "response model.json")->required();

    auto* ev = app.add_subcommand("evaluate", "Offline policy evaluation reports");
    add_common(ev);
    ev->add_option("--data", data_path, "dataset.csv")->required();
    ev->add_option("--policies", policy_specs,
                   "behavioral | policy.json | prices.csv (repeatable)")
        ->required();
    ev->add_option("--evaluators", evaluator_paths, "model.json paths or 'truth' (repeatable)")
        ->required();
    ev->add_option("--truth", truth_path, "truth.json (required for the 'truth' evaluator)");

    auto* ex = app.add_subcommand("explain", "Response and reward curves for one application");
    add_common(ex);
    ex->add_option("--data", data_path, "dataset.csv")->required();
    ex->add_option("--model", model_path, "response model.json")->required();
    ex->add_option("--row", row_index, "Dataset row index")->required();

    auto* pipe = app.add_subcommand("pipeline", "Run every stage from one config");
    add_common(pipe);

    std::vector<const char*> argv;
    argv.push_back("credit_pricer");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (seed_override) {
            cfg.market.seed = *seed_override;
            cfg.cql.seed = *seed_override;
            cfg.seeds = {*seed_override};
        }
        if (family_override) cfg.market.demand_family = demand_family_from_name(*family_override);
        const int jobs = jobs_override.value_or(cfg.jobs);

        if (gen->parsed()) {
            run_gen_data(cfg, config_path, out_dir);
        } else if (fit->parsed()) {
            run_fit_response(cfg, config_path, data_path, variant, out_dir);
        } else if (train->parsed()) {
            run_train(cfg, config_path, data_path, seed_override.value_or(cfg.seeds.front()),
                      alpha_override, out_dir);
        } else if (opt->parsed()) {
            run_optimize(cfg, config_path, data_path, model_path, out_dir, jobs);
        } else if (ev->parsed()) {
            run_evaluate(cfg, config_path, data_path, policy_specs, evaluator_paths, truth_path,
                         out_dir, jobs);
        } else if (ex->parsed()) {
            run_explain(cfg, config_path, data_path, row_index, model_path, out_dir);
        } else if (pipe->parsed()) {
            run_pipeline(cfg, config_path, out_dir, jobs);
        }
    } catch (const nlohmann::json::exception& e) {
        logs::error(std::string("invalid input: ") + e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        logs::error(std::string("invalid input: ") + e.what());
        return 1;
    } catch (const std::runtime_error& e) {
        logs::error(std::string("numerical failure: ") + e.what());
        return 2;
    }
    return 0;
}

}  // namespace pricer::cli
