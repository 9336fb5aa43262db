#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardiorecon/models.hpp"
#include "cardiorecon/phantom.hpp"
#include "cardiorecon/volume.hpp"

namespace cardiorecon {

/// One evaluated test subject under one model.
struct SubjectMetrics {
    std::string subject_id;
    std::string model;
    double dsc = 0.0;                 // in [0,1]
    double hausdorff_mm = 0.0;
    double massdiff_signed_pct = 0.0;
    double massdiff_abs_pct = 0.0;
};

/// Maps a ground-truth volume to a binary prediction. Used for the identity
/// oracle (predictor returning gt gives dsc = 1, hausdorff = 0, massdiff = 0)
/// and to evaluate checkpoints.
using Predictor = std::function<Volume3D(const std::string& id, const Volume3D& gt)>;

/// Runs a predictor over a manifest split and computes the three metrics per
/// subject. Deterministic; rows come back in manifest id order.
std::vector<SubjectMetrics> evaluate_with_predictor(const std::string& model_name,
                                                    const DatasetManifest& manifest, Split split,
                                                    const Predictor& predictor);

/// Loads a checkpoint and evaluates it on a split: views are extracted from
/// the ground truth, reconstructed with forward_test (latent mean, z = 0),
/// thresholded at 0.5 and scored. AE checkpoints are scored on their
/// encode-decode of the ground truth itself. File problems name the subject.
std::vector<SubjectMetrics> evaluate_model(const std::filesystem::path& checkpoint,
                                           const DatasetManifest& manifest, Split split);

/// Two-sided Wilcoxon signed-rank p-value for paired scores. Throws
/// DegenerateInputError when the lengths differ or every difference is zero
/// (callers emitting tables report the all-tied case as p = 1).
double paired_compare(const std::vector<double>& scores_a, const std::vector<double>& scores_b);

struct ComparisonRow {
    std::string model_a;
    std::string model_b;
    std::string metric;
    double p_value = 1.0;
    std::string test_name = "wilcoxon_signed_rank";
    int n = 0;
};

/// Pairwise comparisons of one metric ("dsc", "hausdorff_mm",
/// "massdiff_signed_pct" or "massdiff_abs_pct") across every unordered model
/// pair in the rows, paired by subject id. All-tied pairs get p = 1.
std::vector<ComparisonRow> compare_models(const std::vector<SubjectMetrics>& rows,
                                          const std::string& metric = "dsc");

struct AggregateCell {
    double mean = 0.0;
    double sem = 0.0;
};

struct MetricsReport {
    std::vector<SubjectMetrics> per_subject;
    /// model -> metric -> (mean, sem); natural units (dsc in [0,1])
    std::map<std::string, std::map<std::string, AggregateCell>> aggregate;
    std::vector<ComparisonRow> comparisons;
};

/// Aggregates per-subject rows (mean and sem per model per metric) and
/// attaches comparisons. Every model must cover the same subjects.
MetricsReport build_report(std::vector<SubjectMetrics> rows,
                           std::vector<ComparisonRow> comparisons = {});

/// Writes per_subject.csv (full precision), aggregate.csv (one row per model:
/// Model, DSC, Hausd. [mm], MassDiff [%], MassDiffSigned [%], each cell
/// "mean ± sem" at two decimals with DSC scaled to percent), comparisons.csv
/// and summary.json. Byte-stable for identical inputs.
void emit_report(const MetricsReport& report, const std::filesystem::path& out_dir);

/// summary.json content: {"models": {model: {metric: {mean, sem}}},
/// "comparisons": [...]} in natural units.
nlohmann::ordered_json report_to_json(const MetricsReport& report);

/// Helper for assembling comparison inputs: the metric column of one model's
/// rows ordered by subject id.
std::vector<double> metric_values(const std::vector<SubjectMetrics>& rows,
                                  const std::string& model, const std::string& metric);

/// Parses a per_subject.csv previously written by emit_report.
std::vector<SubjectMetrics> load_per_subject_csv(const std::filesystem::path& path);

}  // namespace cardiorecon
