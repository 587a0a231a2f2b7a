#ifndef MORPHO_INFER_HPP
#define MORPHO_INFER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morpho/fem.hpp"

namespace morpho {
namespace infer {

/// How to measure the distance between a simulated and a target field.
///
/// - sse: mass-matrix-weighted integral of the squared nodal difference,
///   for quantitative data.
/// - normalized_correlation: one minus the Pearson correlation of the
///   nodal values (all species pooled). Invariant under affine rescaling
///   of either field, for semi-quantitative data.
/// - threshold_overlap: one minus the Jaccard index of the supra-threshold
///   regions (exact areas of the piecewise-linear superlevel sets, summed
///   over species), for qualitative presence/absence data.
///
/// Field values are divided by `scale` before comparison, so a per-dataset
/// intensity normalization can be folded into the metric.
struct Metric {
    enum class Kind { sse, normalized_correlation, threshold_overlap };
    Kind kind = Kind::sse;
    double scale = 1.0;     // divides both fields' values; must be > 0
    double threshold = 0.5; // superlevel cut for threshold_overlap
    std::string notes;

    void validate() const;
};

/// Distance between two fields under the metric. The fields must have the
/// same species count. When the meshes differ, the target is interpolated
/// onto the simulation mesh first (piecewise-linear; query points outside
/// the target mesh take clamped values from the nearest element).
double evaluate_metric(const fem::FieldState& sim,
                       const fem::FieldState& target, const Metric& metric);

/// A weighted sum of metric distances against reference datasets, driven
/// by a user-supplied simulation runner mapping a parameter vector to the
/// field it produces.
struct Objective {
    struct Dataset {
        fem::FieldState target;
        Metric metric;
        double weight = 1.0; // must be finite and > 0
    };
    std::vector<Dataset> datasets;
    std::function<fem::FieldState(const std::vector<double>&)> run;

    void validate() const;
};

/// Runs the objective's simulation at `params` and returns the weighted
/// metric sum. Exceptions from the runner propagate; screening catches
/// them and records the sample as failed.
double evaluate_objective(const Objective& objective,
                          const std::vector<double>& params);

/// Inclusive search range for one parameter. Log-scaled parameters are
/// sampled and refined uniformly in log space; both bounds must then be
/// positive.
struct ParamBounds {
    std::string name;
    double lo = 0;
    double hi = 1;
    enum class Scale { linear, log } scale = Scale::linear;

    void validate() const;
};

struct ScreenOptions {
    std::size_t budget = 10000; // switch to Latin hypercube above this
    std::uint64_t seed = 0;     // drives the Latin-hypercube permutations
    int n_threads = 1;          // samples are independent; results are
                                // index-ordered, so the thread count never
                                // changes the outcome
};

struct ScreenResult {
    struct Sample {
        std::vector<double> params;
        double value = 0; // +infinity marks a failed simulation
    };
    std::vector<Sample> samples;
    std::size_t best = 0; // index of the minimum over samples
    std::vector<ParamBounds> bounds;
};

/// Evaluates the objective on a full factorial grid with n_per_dim nodes
/// per axis (endpoints included; a single node sits at the range middle).
/// If the factorial count exceeds options.budget, a seeded Latin-hypercube
/// design with `budget` samples (stratum centers) is used instead. Failed
/// evaluations are kept with value +infinity; if every sample fails, a
/// ComputeError is thrown.
ScreenResult grid_screen(const Objective& objective,
                         const std::vector<ParamBounds>& bounds,
                         int n_per_dim, const ScreenOptions& options = {});

struct RefineOptions {
    double tol = 1e-6;           // simplex diameter in scaled coordinates
    std::size_t max_evals = 2000;
    double step = 0.05;          // initial simplex size, scaled coordinates
};

struct RefineResult {
    std::vector<double> params;
    double value = 0;
    std::vector<double> trace; // best value seen, one entry per iteration
    bool converged = false;    // false when the budget ran out first
    std::size_t n_evals = 0;
};

/// Derivative-free simplex descent (reflection 1, expansion 2, contraction
/// 0.5, shrink 0.5) from `start`, working in bound-scaled coordinates with
/// every candidate clipped into the box. Returns the best point ever
/// evaluated, so the result never exceeds the start value. Evaluations
/// that throw count as +infinity.
RefineResult local_refine(const Objective& objective,
                          const std::vector<double>& start,
                          const std::vector<ParamBounds>& bounds,
                          const RefineOptions& options = {});

/// One fitted model entering a comparison: its best objective value, its
/// parameter count, and the effective data size (by convention the number
/// of mesh vertices compared). All entries must share the sse metric; the
/// score rests on a Gaussian-error likelihood.
struct ModelFit {
    std::string tag;
    double objective = 0;
    int n_params = 0;
    std::size_t n_data = 0;
    Metric::Kind metric = Metric::Kind::sse;
};

struct ModelScore {
    std::string tag;
    double score = 0;          // n ln(objective / n) + penalty
    double delta = 0;          // score minus the best score
    double rel_likelihood = 0; // exp(-delta / 2)
};

/// Ranks models by an information criterion: score = n ln(obj/n) + 2k,
/// or with use_bic the penalty k ln(n) instead of 2k. Returns the models
/// sorted by ascending score with delta and relative likelihood filled in.
std::vector<ModelScore> compare_models(const std::vector<ModelFit>& fits,
                                       bool use_bic = false);

} // namespace infer
} // namespace morpho

#endif
