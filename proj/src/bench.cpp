#include "great/bench.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "great/error.hpp"
#include "great/gmm.hpp"
#include "great/rng.hpp"

namespace great {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); }

void check_distribution(const std::vector<double>& p, std::size_t size, const std::string& what) {
    if (p.size() != size) invalid(what + " has " + std::to_string(p.size()) + " entries, expected " + std::to_string(size));
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) invalid(what + " has a negative probability");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) invalid(what + " does not sum to 1");
}

std::string format_fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

const NodeSpec* find_node(const GeneratorSpec& spec, const std::string& name) {
    for (const auto& n : spec.nodes)
        if (n.name == name) return &n;
    return nullptr;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

Gmm mixture_of(const GeneratorSpec& spec) {
    Gmm g;
    for (const auto& c : spec.components) {
        g.weights.push_back(c.weight);
        g.means.push_back(Eigen::Map<const Eigen::VectorXd>(c.mean.data(), static_cast<Eigen::Index>(c.mean.size())));
        g.covariances.push_back(to_matrix(c.covariance));
    }
    return g;
}

Schema declared_schema(const GeneratorSpec& spec) {
    Schema s;
    if (spec.kind == GeneratorKind::Gmm2D) {
        for (const auto& f : spec.features) {
            s.features.push_back({f, FeatureKind::Numeric});
            s.support.emplace_back();
            s.range.emplace_back(0.0, 0.0);
        }
        return s;
    }
    for (const auto& n : spec.nodes) {
        s.features.push_back({n.name, n.numeric ? FeatureKind::Numeric : FeatureKind::Categorical});
        auto support = n.values;
        std::sort(support.begin(), support.end());
        s.support.push_back(n.numeric ? std::vector<std::string>{} : support);
        s.range.emplace_back(0.0, 0.0);
    }
    return s;
}

std::size_t index_in(const std::vector<std::string>& values, const std::string& v) {
    const auto it = std::find(values.begin(), values.end(), v);
    return it == values.end() ? values.size() : static_cast<std::size_t>(it - values.begin());
}

}  // namespace

void GeneratorSpec::validate() const {
    if (n_rows < 1) invalid("n_rows must be at least 1");
    if (kind == GeneratorKind::Gmm2D) {
        const std::size_t d = features.size();
        if (d < 1) invalid("mixture needs at least one feature");
        std::set<std::string> names;
        for (const auto& f : features) {
            check_name(f);
            if (!names.insert(f).second) invalid("duplicate feature '" + f + "'");
        }
        if (components.empty()) invalid("mixture needs at least one component");
        if (decimals < 0 || decimals > 9) invalid("decimals must lie in [0, 9]");
        double total = 0.0;
        for (std::size_t k = 0; k < components.size(); ++k) {
            const auto& c = components[k];
            const std::string what = "component " + std::to_string(k);
            if (!(c.weight >= 0.0)) invalid(what + " has a negative weight");
            total += c.weight;
            if (c.mean.size() != d) invalid(what + " mean has the wrong dimension");
            if (c.covariance.size() != d) invalid(what + " covariance has the wrong dimension");
            for (const auto& row : c.covariance)
                if (row.size() != d) invalid(what + " covariance has the wrong dimension");
            const Eigen::MatrixXd cov = to_matrix(c.covariance);
            if (!cov.isApprox(cov.transpose(), 1e-12)) invalid(what + " covariance is not symmetric");
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() != Eigen::Success) invalid(what + " covariance is not positive definite");
        }
        if (std::abs(total - 1.0) > 1e-9) invalid("mixture weights do not sum to 1");
        return;
    }

    if (nodes.empty()) invalid("generator needs at least one feature");
    std::set<std::string> names;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        check_name(n.name);
        if (!names.insert(n.name).second) invalid("duplicate feature '" + n.name + "'");
        std::vector<std::string> keys{""};
        if (n.parent) {
            const NodeSpec* p = find_node(*this, *n.parent);
            if (!p || p >= &n) invalid("parent of '" + n.name + "' must be an earlier feature");
            if (p->numeric) invalid("parent of '" + n.name + "' must be categorical");
            keys = p->values;
        }
        if (kind == GeneratorKind::MarkovCategorical) {
            if (n.numeric) invalid("Markov features are categorical");
            if (i == 0 ? n.parent.has_value() : n.parent != nodes[i - 1].name)
                invalid("Markov feature '" + n.name + "' must depend on the previous feature");
        }
        if (n.numeric) {
            if (n.decimals < 0 || n.decimals > 9) invalid("decimals must lie in [0, 9]");
            if (n.normal.size() != keys.size()) invalid("feature '" + n.name + "' needs one normal per parent value");
            for (const auto& k : keys) {
                const auto it = n.normal.find(k);
                if (it == n.normal.end()) invalid("feature '" + n.name + "' lacks a normal for '" + k + "'");
                if (!(it->second.second > 0.0) || !std::isfinite(it->second.first))
                    invalid("feature '" + n.name + "' has a non-positive standard deviation");
            }
        } else {
            if (n.values.empty()) invalid("feature '" + n.name + "' has no values");
            std::set<std::string> distinct;
            for (const auto& v : n.values) {
                if (v.empty()) invalid("feature '" + n.name + "' has an empty value");
                check_value(n.name, v);
                if (!distinct.insert(v).second) invalid("feature '" + n.name + "' repeats value '" + v + "'");
            }
            if (n.probabilities.size() != keys.size())
                invalid("feature '" + n.name + "' needs one distribution per parent value");
            for (const auto& k : keys) {
                const auto it = n.probabilities.find(k);
                if (it == n.probabilities.end()) invalid("feature '" + n.name + "' lacks a distribution for '" + k + "'");
                check_distribution(it->second, n.values.size(), "distribution of '" + n.name + "'");
            }
        }
    }
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    try {
        const auto kind = j.at("kind").get<std::string>();
        s.n_rows = j.at("n_rows").get<std::size_t>();
        s.seed = j.value("seed", std::uint64_t{0});
        if (kind == "gmm2d") {
            s.kind = GeneratorKind::Gmm2D;
            s.features = j.at("features").get<std::vector<std::string>>();
            s.decimals = j.value("decimals", 2);
            for (const auto& c : j.at("components"))
                s.components.push_back({c.at("weight").get<double>(), c.at("mean").get<std::vector<double>>(),
                                        c.at("covariance").get<std::vector<std::vector<double>>>()});
        } else if (kind == "markov_categorical") {
            s.kind = GeneratorKind::MarkovCategorical;
            const auto& fs = j.at("features");
            for (std::size_t i = 0; i < fs.size(); ++i) {
                NodeSpec n;
                n.name = fs[i].at("name").get<std::string>();
                n.values = fs[i].at("values").get<std::vector<std::string>>();
                if (i == 0) {
                    n.probabilities[""] = fs[i].at("initial").get<std::vector<double>>();
                } else {
                    n.parent = s.nodes[i - 1].name;
                    n.probabilities = fs[i].at("transitions").get<std::map<std::string, std::vector<double>>>();
                }
                s.nodes.push_back(std::move(n));
            }
        } else if (kind == "dependent_toy") {
            s.kind = GeneratorKind::DependentToy;
            for (const auto& f : j.at("features")) {
                NodeSpec n;
                n.name = f.at("name").get<std::string>();
                const auto type = f.value("type", std::string("categorical"));
                if (type != "categorical" && type != "numeric") invalid("unknown feature type '" + type + "'");
                n.numeric = type == "numeric";
                if (f.contains("parent") && !f.at("parent").is_null()) n.parent = f.at("parent").get<std::string>();
                if (n.numeric) {
                    n.decimals = f.value("decimals", 2);
                    const auto& nm = f.at("normal");
                    if (nm.is_array()) {
                        n.normal[""] = {nm.at(0).get<double>(), nm.at(1).get<double>()};
                    } else {
                        for (const auto& [k, v] : nm.items()) n.normal[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
                    }
                } else {
                    n.values = f.at("values").get<std::vector<std::string>>();
                    const auto& p = f.at("probabilities");
                    if (p.is_array())
                        n.probabilities[""] = p.get<std::vector<double>>();
                    else
                        n.probabilities = p.get<std::map<std::string, std::vector<double>>>();
                }
                s.nodes.push_back(std::move(n));
            }
        } else {
            invalid("unknown generator kind '" + kind + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        invalid(std::string("malformed generator spec: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json to_json(const GeneratorSpec& s) {
    nlohmann::json j = {{"n_rows", s.n_rows}, {"seed", s.seed}};
    if (s.kind == GeneratorKind::Gmm2D) {
        j["kind"] = "gmm2d";
        j["features"] = s.features;
        j["decimals"] = s.decimals;
        j["components"] = nlohmann::json::array();
        for (const auto& c : s.components)
            j["components"].push_back({{"weight", c.weight}, {"mean", c.mean}, {"covariance", c.covariance}});
        return j;
    }
    j["kind"] = s.kind == GeneratorKind::MarkovCategorical ? "markov_categorical" : "dependent_toy";
    j["features"] = nlohmann::json::array();
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
        const auto& n = s.nodes[i];
        nlohmann::json f = {{"name", n.name}};
        if (s.kind == GeneratorKind::MarkovCategorical) {
            f["values"] = n.values;
            if (i == 0)
                f["initial"] = n.probabilities.at("");
            else
                f["transitions"] = n.probabilities;
        } else {
            f["type"] = n.numeric ? "numeric" : "categorical";
            if (n.parent) f["parent"] = *n.parent;
            if (n.numeric) {
                f["decimals"] = n.decimals;
                if (!n.parent) {
                    f["normal"] = {n.normal.at("").first, n.normal.at("").second};
                } else {
                    f["normal"] = nlohmann::json::object();
                    for (const auto& [k, v] : n.normal) f["normal"][k] = {v.first, v.second};
                }
            } else {
                f["values"] = n.values;
                if (!n.parent)
                    f["probabilities"] = n.probabilities.at("");
                else
                    f["probabilities"] = n.probabilities;
            }
        }
        j["features"].push_back(std::move(f));
    }
    return j;
}

GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    try {
        return generator_spec_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidSpec, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

Table generate(const GeneratorSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, "generate"));
    std::vector<Row> rows;
    rows.reserve(spec.n_rows);
    if (spec.kind == GeneratorKind::Gmm2D) {
        const Gmm g = mixture_of(spec);
        for (std::size_t i = 0; i < spec.n_rows; ++i) {
            const Eigen::VectorXd x = g.sample(rng);
            Row r;
            for (Eigen::Index k = 0; k < x.size(); ++k) r.cells.push_back(format_fixed(x(k), spec.decimals));
            rows.push_back(std::move(r));
        }
    } else {
        for (std::size_t i = 0; i < spec.n_rows; ++i) {
            Row r;
            for (const auto& n : spec.nodes) {
                const std::string key =
                    n.parent ? r.cells[static_cast<std::size_t>(find_node(spec, *n.parent) - spec.nodes.data())] : "";
                if (n.numeric) {
                    const auto [mean, sd] = n.normal.at(key);
                    r.cells.push_back(format_fixed(rng.normal(mean, sd), n.decimals));
                } else {
                    r.cells.push_back(n.values[rng.categorical(n.probabilities.at(key))]);
                }
            }
            rows.push_back(std::move(r));
        }
    }
    return Table(declared_schema(spec), std::move(rows)).refit();
}

double true_loglik(const GeneratorSpec& spec, const Table& table) {
    spec.validate();
    const Schema expected = declared_schema(spec);
    if (!table.schema().same_layout(expected))
        throw Error(ErrorCode::SchemaMismatch, "table columns do not match the generator's features");
    if (table.num_rows() == 0) throw Error(ErrorCode::EmptyTable, "no rows to score");
    for (const auto& r : table.rows())
        for (const auto& c : r.cells)
            if (is_missing(c)) throw Error(ErrorCode::InvalidValue, "true log-likelihood needs complete rows");

    double total = 0.0;
    if (spec.kind == GeneratorKind::Gmm2D) {
        const Gmm g = mixture_of(spec);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(table.num_rows()), static_cast<Eigen::Index>(spec.features.size()));
        for (std::size_t i = 0; i < table.num_rows(); ++i)
            for (std::size_t j = 0; j < spec.features.size(); ++j)
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.numeric(i, j);
        return g.mean_log_density(x);
    }
    for (std::size_t i = 0; i < table.num_rows(); ++i) {
        const auto& cells = table.row(i).cells;
        for (std::size_t j = 0; j < spec.nodes.size(); ++j) {
            const auto& n = spec.nodes[j];
            const std::string key =
                n.parent ? cells[static_cast<std::size_t>(find_node(spec, *n.parent) - spec.nodes.data())] : "";
            if (n.numeric) {
                const auto it = n.normal.find(key);
                if (it == n.normal.end()) return -INFINITY;
                const auto [mean, sd] = it->second;
                const double z = (table.numeric(i, j) - mean) / sd;
                total += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
            } else {
                const auto it = n.probabilities.find(key);
                const std::size_t v = index_in(n.values, cells[j]);
                if (it == n.probabilities.end() || v == n.values.size()) return -INFINITY;
                total += std::log(it->second[v]);
            }
        }
    }
    return total / static_cast<double>(table.num_rows());
}

std::map<std::vector<std::string>, double> categorical_joint(const GeneratorSpec& spec) {
    spec.validate();
    if (spec.kind == GeneratorKind::Gmm2D) invalid("joint table needs an all-categorical generator");
    for (const auto& n : spec.nodes)
        if (n.numeric) invalid("joint table needs an all-categorical generator");
    std::map<std::vector<std::string>, double> joint;
    std::vector<std::string> cells;
    auto recurse = [&](auto&& self, std::size_t j, double p) -> void {
        if (j == spec.nodes.size()) {
            if (p > 0.0) joint[cells] += p;
            return;
        }
        const auto& n = spec.nodes[j];
        const std::string key =
            n.parent ? cells[static_cast<std::size_t>(find_node(spec, *n.parent) - spec.nodes.data())] : "";
        const auto& probs = n.probabilities.at(key);
        for (std::size_t v = 0; v < n.values.size(); ++v) {
            cells.push_back(n.values[v]);
            self(self, j + 1, p * probs[v]);
            cells.pop_back();
        }
    };
    recurse(recurse, 0, 1.0);
    return joint;
}

GeneratorSpec gmm_benchmark_spec() {
    GeneratorSpec s;
    s.kind = GeneratorKind::Gmm2D;
    s.n_rows = 6000;
    s.seed = 2022;
    s.features = {"x", "y"};
    s.decimals = 2;
    s.components = {
        {0.3, {-4.0, -3.0}, {{1.0, 0.5}, {0.5, 1.0}}},
        {0.3, {4.0, 3.0}, {{1.0, -0.4}, {-0.4, 0.8}}},
        {0.2, {-3.0, 4.0}, {{0.6, 0.0}, {0.0, 0.6}}},
        {0.2, {3.5, -4.0}, {{0.8, 0.3}, {0.3, 0.5}}},
    };
    return s;
}

GeneratorSpec markov_benchmark_spec() {
    GeneratorSpec s;
    s.kind = GeneratorKind::MarkovCategorical;
    s.n_rows = 5000;
    s.seed = 7;
    NodeSpec season{"season", false, std::nullopt, {"spring", "summer", "winter"}, {{"", {0.5, 0.3, 0.2}}}, {}, 2};
    NodeSpec weather{"weather", false, "season", {"sunny", "rainy", "snowy"},
                     {{"spring", {0.6, 0.35, 0.05}}, {"summer", {0.8, 0.2, 0.0}}, {"winter", {0.2, 0.3, 0.5}}},
                     {}, 2};
    NodeSpec activity{"activity", false, "weather", {"hiking", "reading", "skiing"},
                      {{"sunny", {0.7, 0.25, 0.05}}, {"rainy", {0.1, 0.85, 0.05}}, {"snowy", {0.05, 0.25, 0.7}}},
                      {}, 2};
    s.nodes = {season, weather, activity};
    return s;
}

GeneratorSpec dependent_toy_spec() {
    GeneratorSpec s;
    s.kind = GeneratorKind::DependentToy;
    s.n_rows = 2000;
    s.seed = 3;
    NodeSpec color{"color", false, std::nullopt, {"red", "green", "blue"}, {{"", {0.5, 0.3, 0.2}}}, {}, 2};
    NodeSpec size{"size", false, "color", {"small", "large"},
                  {{"red", {0.9, 0.1}}, {"green", {0.5, 0.5}}, {"blue", {0.2, 0.8}}}, {}, 2};
    NodeSpec weight{"weight", true, "color", {}, {},
                    {{"red", {10.0, 1.0}}, {"green", {20.0, 2.0}}, {"blue", {30.0, 1.5}}}, 1};
    s.nodes = {color, size, weight};
    return s;
}

}  // namespace great
