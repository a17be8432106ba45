// Shared test helpers: the central finite-difference oracle used by every
// gradient check, and small filesystem utilities.
#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"

namespace testsupport {

// Central finite differences of a scalar function with respect to one
// parameter buffer. Independent of any backward-pass code by construction:
// it only re-evaluates `f` with perturbed values.
inline std::vector<double> central_differences(std::vector<double>& values,
                                               const std::function<double()>& f,
                                               double h = 1e-5) {
    std::vector<double> grad(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = f();
        values[i] = saved - h;
        const double down = f();
        values[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Relative error with an absolute floor so that tiny FD noise on true-zero
// gradients does not fail the check.
inline GradCheckResult compare_gradients(const std::vector<double>& analytic,
                                         const std::vector<double>& numeric,
                                         double abs_floor = 1e-7) {
    REQUIRE(analytic.size() == numeric.size());
    GradCheckResult result;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double diff = std::fabs(analytic[i] - numeric[i]);
        const double scale = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), abs_floor});
        const double rel = diff / scale;
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = i;
            result.analytic_at_worst = analytic[i];
            result.numeric_at_worst = numeric[i];
        }
    }
    return result;
}

class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tinyembed_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

}  // namespace testsupport
