#pragma once

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "great/error.hpp"
#include "great/model.hpp"
#include "great/rng.hpp"
#include "great/table.hpp"

namespace great::testing {

/// Upper-tail p-value of Pearson's statistic for `counts` against `probs`.
/// Cells with zero expected probability must have zero counts.
inline double chi_square_p(const std::vector<std::size_t>& counts, const std::vector<double>& probs) {
    double n = 0.0;
    for (auto c : counts) n += static_cast<double>(c);
    double stat = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (probs[i] <= 0.0) {
            if (counts[i] > 0) return 0.0;
            continue;
        }
        const double e = n * probs[i];
        stat += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
        ++cells;
    }
    if (cells < 2) return 1.0;
    boost::math::chi_squared dist(static_cast<double>(cells - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Exact softmax(logits / T) in double precision.
inline std::vector<double> softmax(const std::vector<double>& logits, double t) {
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp((logits[i] - mx) / t));
    for (double& v : p) v /= z;
    return p;
}

inline LmConfig tiny_config() {
    LmConfig c;
    c.vocab_size = 262;
    c.context_len = 12;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.seed = 11;
    return c;
}

inline Table make_table(std::vector<std::string> names, const std::vector<std::vector<std::string>>& cells,
                        std::optional<std::string> target = std::nullopt) {
    std::vector<Row> rows;
    for (const auto& r : cells) rows.push_back(Row{r});
    return Table::infer(std::move(names), std::move(rows), std::move(target));
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("great-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace great::testing

#define EXPECT_GREAT_ERROR(stmt, error_code)                                                \
    do {                                                                                    \
        try {                                                                               \
            stmt;                                                                           \
            ADD_FAILURE() << "expected " << ::great::to_string(error_code) << ", no throw"; \
        } catch (const ::great::Error& e) {                                                 \
            EXPECT_EQ(e.code(), error_code) << e.what();                                    \
        }                                                                                   \
    } while (0)
