// Command-line front end: train, sample, impute, evaluate, bench-gen.
//
// Exit codes: 0 ok, 2 config or schema error, 3 training abort, 4 sampling
// budget exhausted. JSON-lines logs go to stdout, diagnostics to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "great/bench.hpp"
#include "great/checkpoint.hpp"
#include "great/error.hpp"
#include "great/eval.hpp"
#include "great/sampler.hpp"
#include "great/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitBudget = 4;

[[noreturn]] void config_error(const std::string& msg) { throw great::Error(great::ErrorCode::ConfigError, msg); }

// Values from a JSON config file fill every option not given on the command
// line. Keys are long option names without the leading dashes.
void apply_config_file(CLI::App& app, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) config_error("cannot open config file '" + path + "'");
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        config_error("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) config_error("config file must hold a JSON object");
    for (const auto& [key, value] : cfg.items()) {
        CLI::Option* opt = key == "config" ? nullptr : app.get_option_no_throw("--" + key);
        if (!opt) config_error("unknown config key '" + key + "' for '" + app.get_name() + "'");
        if (opt->count() > 0) continue;
        auto scalar = [&](const json& v) -> std::string {
            if (v.is_string()) return v.get<std::string>();
            if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
            if (v.is_number()) return v.dump();
            config_error("config key '" + key + "' must hold a string, number or boolean");
        };
        if (value.is_array()) {
            for (const auto& v : value) opt->add_result(scalar(v));
        } else {
            opt->add_result(scalar(value));
        }
        try {
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            config_error("config key '" + key + "': " + e.what());
        }
    }
}

void require_set(const std::string& value, const std::string& flag) {
    if (value.empty()) config_error("missing required option --" + flag);
}

void require_file(const std::string& path, const std::string& flag) {
    require_set(path, flag);
    if (!fs::is_regular_file(path)) config_error("--" + flag + " '" + path + "' does not exist");
}

void emit(const json& j) { std::cout << j.dump() << '\n' << std::flush; }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw great::Error(great::ErrorCode::IoError, "cannot write '" + path + "'");
    out << text;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw great::Error(great::ErrorCode::IoError, "cannot open '" + path + "'");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<great::Clause> parse_conditions(const std::vector<std::string>& raw) {
    std::vector<great::Clause> out;
    for (const auto& c : raw) {
        const auto eq = c.find('=');
        if (eq == std::string::npos || eq == 0) config_error("condition '" + c + "' is not of the form feature=value");
        out.push_back({c.substr(0, eq), c.substr(eq + 1)});
    }
    return out;
}

std::optional<std::string> opt_string(const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config, data, target, out, log, pretrain;
    great::LmConfig lm;
    great::TrainConfig train;
    std::string schedule = "constant";
    double grad_clip = 1.0;
    bool no_permute = false;
    std::size_t log_every = 50;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* c = app.add_subcommand("train", "Fit the tokenizer and language model on a CSV table");
    c->add_option("--config", a.config, "JSON config file (command-line flags take precedence)");
    c->add_option("--data", a.data, "Training CSV with a header row");
    c->add_option("--target", a.target, "Target column recorded in the checkpoint");
    c->add_option("--out", a.out, "Checkpoint path");
    c->add_option("--log", a.log, "JSON-lines loss log path (default <out>.log.jsonl)");
    c->add_option("--pretrain-corpus", a.pretrain, "Plain-text file for an optional warm-start phase");
    c->add_option("--pretrain-epochs", a.train.pretrain_epochs, "Epochs over the warm-start corpus")->capture_default_str();
    c->add_option("--seed", a.train.seed, "Master seed")->capture_default_str();
    c->add_option("--epochs", a.train.epochs, "Training epochs")->capture_default_str();
    c->add_option("--batch-size", a.train.batch_size, "Records per step")->capture_default_str();
    c->add_option("--lr", a.train.learning_rate, "AdamW learning rate")->capture_default_str();
    c->add_option("--weight-decay", a.train.weight_decay, "Decoupled weight decay")->capture_default_str();
    c->add_option("--grad-clip", a.grad_clip, "Global gradient-norm clip (0 disables)")->capture_default_str();
    c->add_option("--schedule", a.schedule, "Learning-rate schedule")
        ->check(CLI::IsMember({"constant", "cosine"}))
        ->capture_default_str();
    c->add_option("--warmup", a.train.warmup_steps, "Linear warm-up steps")->capture_default_str();
    c->add_flag("--no-permute", a.no_permute, "Keep schema clause order instead of permuting per record");
    c->add_option("--val-fraction", a.train.val_fraction, "Held-out share for early stopping (0 disables)")
        ->capture_default_str();
    c->add_option("--patience", a.train.patience, "Epochs without validation improvement before stopping")
        ->capture_default_str();
    c->add_option("--vocab-size", a.lm.vocab_size, "BPE vocabulary target size")->capture_default_str();
    c->add_option("--context-len", a.lm.context_len, "Maximum tokens per sequence")->capture_default_str();
    c->add_option("--layers", a.lm.n_layers, "Transformer blocks")->capture_default_str();
    c->add_option("--heads", a.lm.n_heads, "Attention heads")->capture_default_str();
    c->add_option("--d-model", a.lm.d_model, "Model width")->capture_default_str();
    c->add_option("--d-ff", a.lm.d_ff, "Feed-forward width")->capture_default_str();
    c->add_option("--dropout", a.lm.dropout, "Dropout rate")->capture_default_str();
    c->add_flag("--tie-embeddings", a.lm.tie_embeddings, "Share the output projection with the token embedding");
    c->add_option("--log-every", a.log_every, "Print a loss line every N steps (0: only validation lines)")->capture_default_str();
}

int run_train(CLI::App& cmd, TrainArgs& a) {
    apply_config_file(cmd, a.config);
    require_file(a.data, "data");
    require_set(a.out, "out");
    if (!a.pretrain.empty()) require_file(a.pretrain, "pretrain-corpus");
    a.lm.seed = a.train.seed;
    a.train.permute = !a.no_permute;
    a.train.schedule = a.schedule == "cosine" ? great::LrSchedule::Cosine : great::LrSchedule::Constant;
    a.train.grad_clip = a.grad_clip > 0.0 ? std::optional<double>(a.grad_clip) : std::nullopt;
    if (a.log.empty()) a.log = a.out + ".log.jsonl";
    a.lm.validate();
    a.train.validate();

    emit({{"event", "config"},
          {"command", "train"},
          {"data", a.data},
          {"target", a.target.empty() ? json(nullptr) : json(a.target)},
          {"out", a.out},
          {"log", a.log},
          {"pretrain_corpus", a.pretrain.empty() ? json(nullptr) : json(a.pretrain)},
          {"model", great::to_json(a.lm)},
          {"train", great::to_json(a.train)}});

    auto table = great::load_csv(a.data);
    if (!a.target.empty()) table = table.with_target(a.target);
    const auto corpus = a.pretrain.empty() ? std::vector<std::string>{} : read_lines(a.pretrain);

    std::ofstream log(a.log, std::ios::trunc);
    if (!log) throw great::Error(great::ErrorCode::IoError, "cannot write '" + a.log + "'");
    const auto ckpt = great::train(table, a.lm, a.train, corpus, [&](const great::TrainEvent& e) {
        const json line = {{"event", e.phase}, {"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}};
        log << line.dump() << '\n';
        if (e.phase == "val" || (a.log_every > 0 && e.step % a.log_every == 0)) emit(line);
    });
    great::save_checkpoint(ckpt, a.out);
    const double final_loss = ckpt.train_log.empty() ? 0.0 : ckpt.train_log.back().loss;
    emit({{"event", "done"}, {"steps", ckpt.train_log.size()}, {"final_loss", final_loss}, {"checkpoint", a.out}});
    std::cerr << "final loss " << final_loss << '\n';
    return 0;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
    std::string config, ckpt, out, report, data, mode, start_feature;
    std::vector<std::string> conditions;
    great::SampleSpec spec;
};

void add_sample(CLI::App& app, SampleArgs& a) {
    auto* c = app.add_subcommand("sample", "Generate synthetic rows from a checkpoint");
    c->add_option("--config", a.config, "JSON config file (command-line flags take precedence)");
    c->add_option("--ckpt", a.ckpt, "Checkpoint path");
    c->add_option("--out", a.out, "Output CSV path");
    c->add_option("--report", a.report, "Sample report JSON path (default <out>.report.json)");
    c->add_option("--n", a.spec.count, "Number of valid rows")->capture_default_str();
    c->add_option("--temperature", a.spec.temperature, "Softmax temperature")->capture_default_str();
    c->add_option("--condition", a.conditions, "Constraint feature=value (repeatable)");
    c->add_option("--mode", a.mode,
                  "Preconditioning: feature-name, name-value or multi-name-value (default: multi-name-value "
                  "with conditions, feature-name without)")
        ->check(CLI::IsMember({"feature-name", "name-value", "multi-name-value"}));
    c->add_option("--data", a.data, "Training CSV used to fit feature densities (name-value mode)");
    c->add_option("--start-feature", a.start_feature, "Pin the first feature instead of rotating");
    c->add_option("--max-new-tokens", a.spec.max_new_tokens, "Token cap per attempt (0: context length)")
        ->capture_default_str();
    c->add_option("--max-attempts-factor", a.spec.max_attempts_factor, "Attempt budget as a multiple of --n")
        ->capture_default_str();
    c->add_option("--seed", a.spec.seed, "Master seed")->capture_default_str();
    c->add_option("--workers", a.spec.workers, "Sampling threads")->capture_default_str();
}

int run_sample(CLI::App& cmd, SampleArgs& a) {
    apply_config_file(cmd, a.config);
    require_file(a.ckpt, "ckpt");
    require_set(a.out, "out");
    if (!a.data.empty()) require_file(a.data, "data");
    if (a.report.empty()) a.report = a.out + ".report.json";
    a.spec.constraints = parse_conditions(a.conditions);
    a.spec.mode = a.mode.empty() ? (a.spec.constraints.empty() ? great::Preconditioning::FeatureName
                                                               : great::Preconditioning::MultiNameValue)
                                 : great::preconditioning_from_string(a.mode);
    a.spec.start_feature = opt_string(a.start_feature);
    const auto sample_seed = great::derive_seed(a.spec.seed, "sample");

    json constraints = json::array();
    for (const auto& c : a.spec.constraints) constraints.push_back({{"feature", c.feature}, {"value", c.value}});
    emit({{"event", "config"},
          {"command", "sample"},
          {"ckpt", a.ckpt},
          {"out", a.out},
          {"report", a.report},
          {"data", a.data.empty() ? json(nullptr) : json(a.data)},
          {"n", a.spec.count},
          {"temperature", a.spec.temperature},
          {"mode", std::string(great::to_string(a.spec.mode))},
          {"constraints", constraints},
          {"start_feature", a.start_feature.empty() ? json(nullptr) : json(a.start_feature)},
          {"max_new_tokens", a.spec.max_new_tokens},
          {"max_attempts_factor", a.spec.max_attempts_factor},
          {"seed", a.spec.seed},
          {"workers", a.spec.workers}});

    const auto ckpt = great::load_checkpoint(a.ckpt);
    std::optional<great::FeatureDensity> density;
    if (a.spec.mode == great::Preconditioning::NameValue && a.spec.constraints.empty()) {
        if (a.data.empty()) config_error("name-value mode without a condition needs --data to fit feature densities");
        density = great::fit_feature_densities(great::load_csv(a.data, ckpt.schema),
                                               great::derive_seed(a.spec.seed, "density"));
    }
    auto spec = a.spec;
    spec.seed = sample_seed;
    auto write_report = [&](const great::SampleReport& r, const std::string& status) {
        json j = r.to_json();
        j["status"] = status;
        write_text(a.report, j.dump(2) + "\n");
        json line = j;
        line["event"] = "report";
        emit(line);
    };
    try {
        const auto report = great::sample(ckpt, spec, density ? &*density : nullptr);
        great::write_csv(report.rows, a.out);
        write_report(report, "ok");
    } catch (const great::SamplingBudgetError& e) {
        write_report(e.report(), "budget_exhausted");
        throw;
    }
    return 0;
}

// ---------------------------------------------------------------- impute

struct ImputeArgs {
    std::string config, ckpt, data, out;
    great::ImputeOptions options;
};

void add_impute(CLI::App& app, ImputeArgs& a) {
    auto* c = app.add_subcommand("impute", "Fill the empty cells of a CSV from a checkpoint");
    c->add_option("--config", a.config, "JSON config file (command-line flags take precedence)");
    c->add_option("--ckpt", a.ckpt, "Checkpoint path");
    c->add_option("--data", a.data, "CSV with empty cells, columns as in training");
    c->add_option("--out", a.out, "Completed CSV path");
    c->add_option("--temperature", a.options.temperature, "Softmax temperature")->capture_default_str();
    c->add_option("--max-new-tokens", a.options.max_new_tokens, "Token cap per attempt (0: context length)")
        ->capture_default_str();
    c->add_option("--max-attempts-factor", a.options.max_attempts_factor, "Attempts allowed per row")
        ->capture_default_str();
    c->add_option("--seed", a.options.seed, "Master seed")->capture_default_str();
    c->add_option("--workers", a.options.workers, "Threads (rows are independent)")->capture_default_str();
}

int run_impute(CLI::App& cmd, ImputeArgs& a) {
    apply_config_file(cmd, a.config);
    require_file(a.ckpt, "ckpt");
    require_file(a.data, "data");
    require_set(a.out, "out");
    emit({{"event", "config"},
          {"command", "impute"},
          {"ckpt", a.ckpt},
          {"data", a.data},
          {"out", a.out},
          {"temperature", a.options.temperature},
          {"max_new_tokens", a.options.max_new_tokens},
          {"max_attempts_factor", a.options.max_attempts_factor},
          {"seed", a.options.seed},
          {"workers", a.options.workers}});
    const auto ckpt = great::load_checkpoint(a.ckpt);
    const auto partial = great::load_csv(a.data, ckpt.schema, ckpt.target);
    std::size_t missing = 0;
    for (const auto& r : partial.rows())
        for (const auto& c : r.cells) missing += great::is_missing(c);
    const auto completed = great::impute(ckpt, partial, a.options);
    great::write_csv(completed, a.out);
    emit({{"event", "done"}, {"rows", completed.num_rows()}, {"filled_cells", missing}, {"out", a.out}});
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string config, real_train, real_test, synthetic, synthetic_test, target, out, metrics, histogram;
    std::string joint, joint_out;
    std::size_t seeds = 5;
    std::uint64_t seed = 0;
    std::size_t gmm_components = 5;
    std::size_t bins = 20;
    bool dcr_normalized = false;
    std::size_t workers = 1;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
    auto* c = app.add_subcommand("evaluate", "Score a synthetic table against real train/test tables");
    c->add_option("--config", a.config, "JSON config file (command-line flags take precedence)");
    c->add_option("--real-train", a.real_train, "Real training CSV");
    c->add_option("--real-test", a.real_test, "Real held-out CSV");
    c->add_option("--synthetic", a.synthetic, "Synthetic CSV");
    c->add_option("--synthetic-test", a.synthetic_test,
                  "Synthetic held-out CSV for the discriminator (default: split off --synthetic)");
    c->add_option("--target", a.target, "Target column for machine-learning efficiency");
    c->add_option("--metrics", a.metrics,
                  "Comma list of mle, dcr, discriminator, likelihood (default: every applicable metric)");
    c->add_option("--out", a.out, "Report JSON path");
    c->add_option("--seeds", a.seeds, "Number of seeds for mean and std")->capture_default_str();
    c->add_option("--seed", a.seed, "Master seed")->capture_default_str();
    c->add_option("--gmm-components", a.gmm_components, "Mixture components for likelihood fitness")
        ->capture_default_str();
    c->add_flag("--dcr-normalized", a.dcr_normalized, "Scale numeric DCR differences by the train range");
    c->add_option("--histogram", a.histogram, "Write the DCR distance histogram CSV here");
    c->add_option("--joint", a.joint, "Two numeric features x,y for a joint histogram of real and synthetic data");
    c->add_option("--joint-out", a.joint_out, "Prefix for joint histogram CSVs (<prefix>.real.csv, <prefix>.synthetic.csv)");
    c->add_option("--bins", a.bins, "Histogram bins")->capture_default_str();
    c->add_option("--workers", a.workers, "Threads for the DCR loop")->capture_default_str();
}

std::string stat_cell(const great::Stat& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", s.mean, s.std);
    return buf;
}

int run_evaluate(CLI::App& cmd, EvaluateArgs& a) {
    apply_config_file(cmd, a.config);
    require_file(a.real_train, "real-train");
    require_file(a.real_test, "real-test");
    require_file(a.synthetic, "synthetic");
    if (!a.synthetic_test.empty()) require_file(a.synthetic_test, "synthetic-test");
    require_set(a.out, "out");

    const auto real_train = great::load_csv(a.real_train);
    const auto& schema = real_train.schema();
    const auto real_test = great::load_csv(a.real_test, schema);
    const auto synthetic = great::load_csv(a.synthetic, schema);
    bool all_numeric = true;
    for (std::size_t j = 0; j < schema.size(); ++j) all_numeric = all_numeric && schema.is_numeric(j);

    std::set<std::string> metrics;
    if (a.metrics.empty()) {
        metrics = {"dcr", "discriminator"};
        if (!a.target.empty()) metrics.insert("mle");
        if (all_numeric) metrics.insert("likelihood");
    } else {
        std::stringstream ss(a.metrics);
        for (std::string m; std::getline(ss, m, ',');) {
            if (m != "mle" && m != "dcr" && m != "discriminator" && m != "likelihood")
                config_error("unknown metric '" + m + "'");
            metrics.insert(m);
        }
    }
    if (metrics.count("mle") && a.target.empty()) config_error("metric mle needs --target");
    if (a.seeds < 1) config_error("--seeds must be at least 1");
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(great::derive_seed(a.seed, static_cast<std::uint64_t>(i)));

    const json effective = {{"real_train", a.real_train},
                            {"real_test", a.real_test},
                            {"synthetic", a.synthetic},
                            {"synthetic_test", a.synthetic_test.empty() ? json(nullptr) : json(a.synthetic_test)},
                            {"target", a.target.empty() ? json(nullptr) : json(a.target)},
                            {"metrics", std::vector<std::string>(metrics.begin(), metrics.end())},
                            {"seeds", a.seeds},
                            {"seed", a.seed},
                            {"gmm_components", a.gmm_components},
                            {"dcr_normalized", a.dcr_normalized},
                            {"out", a.out}};
    json header = effective;
    header["event"] = "config";
    header["command"] = "evaluate";
    emit(header);

    json report = {{"mle", nullptr}, {"dcr", nullptr}, {"discriminator", nullptr}, {"likelihood", nullptr}};
    std::ostringstream summary;
    if (metrics.count("mle")) {
        const auto [syn, real] = great::mle(real_train, synthetic, real_test, a.target, seeds);
        report["mle"] = {{"synthetic", syn.to_json()}, {"real", real.to_json()}};
        for (const auto& [name, s] : syn.models) {
            const auto& r = real.models.at(name);
            if (syn.classification)
                summary << "mle " << name << " accuracy synthetic " << stat_cell(s.accuracy) << " real "
                        << stat_cell(r.accuracy) << '\n';
            else
                summary << "mle " << name << " mse synthetic " << stat_cell(s.mse) << " real " << stat_cell(r.mse)
                        << '\n';
        }
    }
    if (metrics.count("dcr")) {
        const auto d = great::dcr(synthetic, real_train, a.dcr_normalized, a.workers);
        report["dcr"] = d.to_json();
        report["dcr"]["normalized"] = a.dcr_normalized;
        if (!a.histogram.empty()) write_text(a.histogram, great::dcr_histogram_csv(d, a.bins));
        summary << "dcr median " << d.median << " mean " << d.mean << " zero_fraction " << d.zero_fraction << '\n';
    }
    if (metrics.count("discriminator")) {
        great::Table synth_train = synthetic, synth_test;
        if (!a.synthetic_test.empty()) {
            synth_test = great::load_csv(a.synthetic_test, schema);
        } else {
            const double frac = static_cast<double>(real_test.num_rows()) /
                                static_cast<double>(real_train.num_rows() + real_test.num_rows());
            std::tie(synth_train, synth_test) = great::split(synthetic, frac, great::derive_seed(a.seed, "synthetic-split"));
        }
        const auto d = great::discriminator(real_train, synth_train, real_test, synth_test, seeds);
        report["discriminator"] = d.to_json();
        summary << "discriminator accuracy " << stat_cell(d.accuracy) << '\n';
    }
    if (metrics.count("likelihood")) {
        const auto l = great::likelihood_fitness(real_train, real_test, synthetic, a.gmm_components, a.seed);
        report["likelihood"] = l.to_json();
        summary << "likelihood l_syn " << l.l_syn << " l_test " << l.l_test << '\n';
    }
    if (!a.joint.empty()) {
        const auto comma = a.joint.find(',');
        if (comma == std::string::npos) config_error("--joint expects x,y");
        const auto fx = a.joint.substr(0, comma), fy = a.joint.substr(comma + 1);
        const auto prefix = a.joint_out.empty() ? a.out : a.joint_out;
        const auto range = great::joint_range({&real_train, &synthetic}, fx, fy);
        write_text(prefix + ".real.csv", great::joint_histogram(real_train, fx, fy, a.bins, range).to_csv());
        write_text(prefix + ".synthetic.csv", great::joint_histogram(synthetic, fx, fy, a.bins, range).to_csv());
    }
    report["meta"] = {{"seeds", seeds}, {"config_hash", great::fnv1a64(effective.dump())}, {"config", effective}};
    write_text(a.out, report.dump(2) + "\n");
    json done = {{"event", "done"}, {"report", a.out}};
    emit(done);
    std::cerr << summary.str();
    return 0;
}

// ---------------------------------------------------------------- bench-gen

struct BenchArgs {
    std::string config, spec, builtin, out, spec_out;
    std::size_t n_rows = 0;
    std::uint64_t seed = 0;
};

void add_bench(CLI::App& app, BenchArgs& a) {
    auto* c = app.add_subcommand("bench-gen", "Generate a benchmark table from a generator spec");
    c->add_option("--config", a.config, "JSON config file (command-line flags take precedence)");
    c->add_option("--spec", a.spec, "Generator spec JSON");
    c->add_option("--builtin", a.builtin, "Bundled spec instead of --spec")
        ->check(CLI::IsMember({"gmm", "markov", "toy"}));
    c->add_option("--out", a.out, "Output CSV path");
    c->add_option("--spec-out", a.spec_out, "Also write the effective spec JSON here");
    c->add_option("--n-rows", a.n_rows, "Override the spec's row count");
    c->add_option("--seed", a.seed, "Override the spec's seed");
}

int run_bench(CLI::App& cmd, BenchArgs& a) {
    apply_config_file(cmd, a.config);
    if (a.spec.empty() == a.builtin.empty()) config_error("give exactly one of --spec and --builtin");
    if (!a.spec.empty()) require_file(a.spec, "spec");
    require_set(a.out, "out");
    great::GeneratorSpec spec = !a.spec.empty()          ? great::load_generator_spec(a.spec)
                                : a.builtin == "gmm"    ? great::gmm_benchmark_spec()
                                : a.builtin == "markov" ? great::markov_benchmark_spec()
                                                        : great::dependent_toy_spec();
    if (cmd.get_option("--n-rows")->count() > 0) spec.n_rows = a.n_rows;
    if (cmd.get_option("--seed")->count() > 0) spec.seed = a.seed;
    spec.validate();
    emit({{"event", "config"}, {"command", "bench-gen"}, {"out", a.out}, {"spec", great::to_json(spec)}});
    const auto table = great::generate(spec);
    great::write_csv(table, a.out);
    if (!a.spec_out.empty()) write_text(a.spec_out, great::to_json(spec).dump(2) + "\n");
    emit({{"event", "done"}, {"rows", table.num_rows()}, {"out", a.out}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular data synthesis with a small autoregressive language model"};
    app.require_subcommand(1);
    TrainArgs train;
    SampleArgs sample;
    ImputeArgs impute;
    EvaluateArgs evaluate;
    BenchArgs bench;
    add_train(app, train);
    add_sample(app, sample);
    add_impute(app, impute);
    add_evaluate(app, evaluate);
    add_bench(app, bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        auto* cmd = app.get_subcommands().front();
        const auto name = cmd->get_name();
        if (name == "train") return run_train(*cmd, train);
        if (name == "sample") return run_sample(*cmd, sample);
        if (name == "impute") return run_impute(*cmd, impute);
        if (name == "evaluate") return run_evaluate(*cmd, evaluate);
        return run_bench(*cmd, bench);
    } catch (const great::Error& e) {
        std::cerr << "error [" << great::to_string(e.code()) << "]: " << e.what() << '\n';
        if (e.code() == great::ErrorCode::NonFiniteLoss) return kExitTraining;
        if (e.code() == great::ErrorCode::AttemptBudgetExhausted) return kExitBudget;
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
