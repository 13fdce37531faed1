#include "great/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <set>
#include <thread>

namespace great {

TokenId next_token(const Eigen::VectorXf& logits, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidValue, "temperature must be positive");
    if (logits.size() == 0) throw Error(ErrorCode::NonFiniteLogits, "empty logits");
    if (!logits.allFinite()) throw Error(ErrorCode::NonFiniteLogits, "logits contain NaN or infinity");
    const double top = logits.maxCoeff();
    std::vector<double> weights(static_cast<std::size_t>(logits.size()));
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        weights[static_cast<std::size_t>(i)] = std::exp((static_cast<double>(logits(i)) - top) / temperature);
    return static_cast<TokenId>(rng.categorical(weights));
}

namespace {

int fraction_digits(std::string_view s) {
    const auto dot = s.find('.');
    if (dot == std::string_view::npos) return 0;
    std::size_t end = dot + 1;
    while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
    return static_cast<int>(end - dot - 1);
}

std::string format_fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

}  // namespace

std::string FeatureDensityEntry::draw(Rng& rng) const {
    if (!numeric) return values[rng.categorical(probabilities)];
    return format_fixed(gmm.sample(rng)(0), decimals);
}

const FeatureDensityEntry& FeatureDensity::at(std::string_view feature) const {
    for (const auto& e : entries)
        if (e.feature == feature) return e;
    throw Error(ErrorCode::UnknownFeature, "no density for feature '" + std::string(feature) + "'");
}

FeatureDensityEntry fit_feature_density(const Table& table, std::string_view feature, std::size_t n_components,
                                        std::uint64_t seed) {
    const std::size_t j = table.schema().require(feature);
    FeatureDensityEntry e;
    e.feature = std::string(feature);
    e.numeric = table.schema().is_numeric(j);
    const auto column = table.column(j);
    if (column.empty()) throw Error(ErrorCode::EmptyTable, "feature '" + e.feature + "' has no observed values");

    if (!e.numeric) {
        std::map<std::string, std::size_t> counts;
        for (const auto& v : column) ++counts[v];
        for (const auto& [v, c] : counts) {
            e.values.push_back(v);
            e.probabilities.push_back(static_cast<double>(c) / static_cast<double>(column.size()));
        }
        return e;
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(column.size()), 1);
    std::set<double> distinct;
    for (std::size_t i = 0; i < column.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = *parse_decimal(column[i]);
        distinct.insert(x(static_cast<Eigen::Index>(i), 0));
        e.decimals = std::max(e.decimals, fraction_digits(column[i]));
    }
    e.decimals = std::min(e.decimals, 9);
    const double range = *distinct.rbegin() - *distinct.begin();
    if (distinct.size() == 1) {
        e.gmm.weights = {1.0};
        e.gmm.means = {Eigen::VectorXd::Constant(1, *distinct.begin())};
        e.gmm.covariances = {Eigen::MatrixXd::Constant(1, 1, 1e-9 * std::max(range * range, 1.0))};
        return e;
    }
    const std::size_t k = n_components == 0 ? std::min<std::size_t>(5, distinct.size()) : n_components;
    if (k > distinct.size())
        throw Error(ErrorCode::InvalidValue, "feature '" + e.feature + "' has fewer distinct values than components");
    GmmOptions opts;
    opts.n_components = k;
    opts.variance_floor = 1e-9 * range * range;
    e.gmm = fit_gmm(x, opts, derive_seed(seed, e.feature));
    return e;
}

FeatureDensity fit_feature_densities(const Table& table, std::uint64_t seed) {
    FeatureDensity d;
    for (const auto& f : table.schema().features) d.entries.push_back(fit_feature_density(table, f.name, 0, seed));
    return d;
}

std::string_view to_string(Preconditioning mode) {
    switch (mode) {
        case Preconditioning::FeatureName: return "feature-name";
        case Preconditioning::NameValue: return "name-value";
        case Preconditioning::MultiNameValue: return "multi-name-value";
    }
    return "?";
}

Preconditioning preconditioning_from_string(std::string_view s) {
    for (auto m : {Preconditioning::FeatureName, Preconditioning::NameValue, Preconditioning::MultiNameValue})
        if (to_string(m) == s) return m;
    throw Error(ErrorCode::ConfigError, "unknown preconditioning mode '" + std::string(s) + "'");
}

void SampleSpec::validate(const Schema& schema) const {
    if (count < 1) throw Error(ErrorCode::InvalidValue, "count must be at least 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw Error(ErrorCode::InvalidValue, "temperature must be positive");
    if (max_attempts_factor < 1) throw Error(ErrorCode::InvalidValue, "max_attempts_factor must be at least 1");
    if (workers < 1) throw Error(ErrorCode::InvalidValue, "workers must be at least 1");
    if (start_feature) schema.require(*start_feature);
    if (mode == Preconditioning::FeatureName && !constraints.empty())
        throw Error(ErrorCode::InvalidValue, "feature-name preconditioning takes no constraints");
    if (mode == Preconditioning::NameValue && constraints.size() > 1)
        throw Error(ErrorCode::InvalidValue, "name-value preconditioning takes at most one constraint");
    std::set<std::string_view> seen;
    for (const auto& c : constraints) {
        const auto j = schema.require(c.feature);
        if (!seen.insert(c.feature).second)
            throw Error(ErrorCode::DuplicateFeature, "feature '" + c.feature + "' constrained twice");
        check_value(c.feature, c.value);
        const bool ok = schema.is_numeric(j) ? parse_decimal(c.value).has_value() : schema.in_support(j, c.value);
        if (!ok)
            throw Error(ErrorCode::ConstraintUnsatisfiable,
                        "value '" + c.value + "' is outside the support of feature '" + c.feature + "'");
    }
}

nlohmann::json SampleReport::to_json() const {
    nlohmann::json reasons = nlohmann::json::object();
    for (std::size_t r = 0; r < kInvalidReasonCount; ++r)
        reasons[std::string(to_string(static_cast<InvalidReason>(r)))] = invalid_reasons[r];
    return {{"rows", rows.num_rows()},
            {"attempts", attempts},
            {"invalid", invalid},
            {"invalid_rate", invalid_rate},
            {"invalid_reasons", reasons}};
}

std::string prompt_text(const std::vector<Clause>& constraints, const std::optional<std::string>& trailing,
                        const Schema& schema) {
    auto text = render_condition(constraints, trailing, schema);
    if (!text.empty() && text.back() == ' ') text.pop_back();
    return text;
}

std::string complete(const Checkpoint& ckpt, const std::string& prompt, double temperature, std::size_t max_new_tokens,
                     Rng& rng) {
    const std::size_t context = ckpt.config.context_len;
    auto ids = tokenize(prompt, ckpt.vocab);
    if (ids.empty()) throw Error(ErrorCode::InvalidValue, "empty prompt");
    if (ids.size() >= context)
        throw Error(ErrorCode::ContextOverflow, "prompt of " + std::to_string(ids.size()) + " tokens fills the context");
    const std::size_t cap = max_new_tokens == 0 ? context : max_new_tokens;
    Decoder decoder(ckpt.params, ckpt.config);
    Eigen::VectorXf logits;
    for (TokenId t : ids) logits = decoder.step(t);
    for (std::size_t n = 0; n < cap; ++n) {
        const TokenId t = next_token(logits, temperature, rng);
        if (t == Vocabulary::kEor) break;
        ids.push_back(t);
        if (decoder.position() >= context) break;
        logits = decoder.step(t);
    }
    return detokenize(ids, ckpt.vocab);
}

namespace {

struct Attempt {
    std::optional<Row> row;
    InvalidReason reason = InvalidReason::MalformedClause;
};

Attempt run_attempt(const Checkpoint& ckpt, const SampleSpec& spec, const FeatureDensity* density,
                    std::uint64_t index) {
    const Schema& schema = ckpt.schema;
    Rng rng(derive_seed(spec.seed, index));
    auto pick_feature = [&] {
        return spec.start_feature ? *spec.start_feature : schema.features[rng.below(schema.size())].name;
    };

    std::vector<Clause> conditions = spec.constraints;
    std::optional<std::string> trailing;
    switch (spec.mode) {
        case Preconditioning::FeatureName:
            trailing = pick_feature();
            break;
        case Preconditioning::NameValue:
            if (conditions.empty()) {
                if (!density) throw Error(ErrorCode::InvalidValue, "name-value preconditioning needs a feature density");
                const auto f = pick_feature();
                conditions.push_back({f, density->at(f).draw(rng)});
            }
            break;
        case Preconditioning::MultiNameValue:
            if (conditions.empty()) trailing = pick_feature();
            break;
    }

    const auto text = complete(ckpt, prompt_text(conditions, trailing, schema), spec.temperature,
                               spec.max_new_tokens, rng);
    auto outcome = decode(text, schema);
    Attempt a;
    if (!outcome.valid()) {
        a.reason = outcome.reason();
        return a;
    }
    for (const auto& c : conditions)
        if (outcome.row().cells[schema.require(c.feature)] != c.value) return a;
    a.row = outcome.row();
    return a;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w)
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

SampleReport sample(const Checkpoint& ckpt, const SampleSpec& spec, const FeatureDensity* density) {
    spec.validate(ckpt.schema);
    const std::size_t budget = spec.count * spec.max_attempts_factor;
    SampleReport report;
    std::vector<Row> rows;
    std::size_t next = 0;
    while (rows.size() < spec.count && next < budget) {
        const std::size_t need = spec.count - rows.size();
        const std::size_t batch = std::min(budget - next, std::max(need, spec.workers));
        std::vector<Attempt> results(batch);
        parallel_for(batch, spec.workers,
                     [&](std::size_t j) { results[j] = run_attempt(ckpt, spec, density, next + j); });
        for (auto& a : results) {
            ++report.attempts;
            if (a.row) {
                rows.push_back(std::move(*a.row));
                if (rows.size() == spec.count) break;
            } else {
                ++report.invalid;
                ++report.invalid_reasons[static_cast<std::size_t>(a.reason)];
            }
        }
        next += batch;
    }
    report.invalid_rate =
        report.attempts == 0 ? 0.0 : static_cast<double>(report.invalid) / static_cast<double>(report.attempts);
    report.rows = Table(ckpt.schema, std::move(rows), ckpt.target);
    if (report.rows.num_rows() < spec.count) {
        std::string msg = "attempt budget of " + std::to_string(budget) + " exhausted with " +
                          std::to_string(report.rows.num_rows()) + " of " + std::to_string(spec.count) +
                          " valid rows; invalid reasons:";
        for (std::size_t r = 0; r < kInvalidReasonCount; ++r)
            if (report.invalid_reasons[r] > 0)
                msg += " " + std::string(to_string(static_cast<InvalidReason>(r))) + "=" +
                       std::to_string(report.invalid_reasons[r]);
        throw SamplingBudgetError(std::move(report), msg);
    }
    return report;
}

Table impute(const Checkpoint& ckpt, const Table& partial, const ImputeOptions& options) {
    const Schema& schema = ckpt.schema;
    if (!partial.schema().same_layout(schema))
        throw Error(ErrorCode::SchemaMismatch, "table columns do not match the checkpoint schema");
    std::vector<Row> out(partial.num_rows());
    parallel_for(partial.num_rows(), options.workers, [&](std::size_t i) {
        const Row& row = partial.row(i);
        const auto observed = observed_features(row);
        if (observed.size() == schema.size()) {
            out[i] = row;
            return;
        }
        if (observed.empty())
            throw Error(ErrorCode::InvalidValue, "row " + std::to_string(i) + " has no observed cell to condition on");
        Rng rng(derive_seed(derive_seed(options.seed, "impute-order"), i));
        const auto perm = sample_permutation(observed.size(), rng);
        SampleSpec spec;
        spec.mode = Preconditioning::MultiNameValue;
        spec.temperature = options.temperature;
        spec.max_new_tokens = options.max_new_tokens;
        spec.max_attempts_factor = options.max_attempts_factor;
        spec.seed = derive_seed(derive_seed(options.seed, "impute"), i);
        for (std::size_t k : perm.indices) spec.constraints.push_back({schema.features[observed[k]].name, row.cells[observed[k]]});
        const auto report = sample(ckpt, spec);
        out[i] = row;
        for (std::size_t j = 0; j < schema.size(); ++j)
            if (is_missing(row.cells[j])) out[i].cells[j] = report.rows.row(0).cells[j];
    });
    return Table(schema, std::move(out), partial.target());
}

}  // namespace great
