#include "cardiorecon/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cardiorecon/geometry.hpp"
#include "cardiorecon/metrics.hpp"
#include "cardiorecon/stats.hpp"

namespace cardiorecon {

namespace {

constexpr const char* kMetricNames[] = {"dsc", "hausdorff_mm", "massdiff_signed_pct",
                                        "massdiff_abs_pct"};

double metric_field(const SubjectMetrics& row, const std::string& metric) {
    if (metric == "dsc") return row.dsc;
    if (metric == "hausdorff_mm") return row.hausdorff_mm;
    if (metric == "massdiff_signed_pct") return row.massdiff_signed_pct;
    if (metric == "massdiff_abs_pct") return row.massdiff_abs_pct;
    throw ParamError("unknown metric: " + metric);
}

/// Shortest round-trippable decimal form; stable across runs.
std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string pm_cell(const AggregateCell& c, double scale) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", c.mean * scale, c.sem * scale);
    return buf;
}

}  // namespace

std::vector<SubjectMetrics> evaluate_with_predictor(const std::string& model_name,
                                                    const DatasetManifest& manifest, Split split,
                                                    const Predictor& predictor) {
    const auto& ids = manifest.ids(split);
    if (ids.empty()) throw ConfigError("evaluation split " + to_string(split) + " is empty");

    std::vector<SubjectMetrics> rows;
    rows.reserve(ids.size());
    for (const auto& id : ids) {
        Volume3D gt = [&] {
            try {
                return manifest.load_volume(id);
            } catch (const FileError& e) {
                throw FileError("subject " + id + ": " + e.what());
            }
        }();
        const Volume3D pred = predictor(id, gt);

        SubjectMetrics row;
        row.subject_id = id;
        row.model = model_name;
        row.dsc = dice3d(pred, gt);
        row.hausdorff_mm = slice_hausdorff_mm(pred, gt);
        const MassDiff md = mass_pct_diff(pred, gt);
        row.massdiff_signed_pct = md.signed_pct;
        row.massdiff_abs_pct = md.abs_pct;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<SubjectMetrics> evaluate_model(const std::filesystem::path& checkpoint,
                                           const DatasetManifest& manifest, Split split) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    const bool is_ae = ck.config.variant == Variant::AE;
    const Vec3 spacing = manifest.spacing_mm;

    Predictor predictor = [&, is_ae, spacing](const std::string&, const Volume3D& gt) {
        ProbabilityVolume prob =
            is_ae ? ae_forward(ck.model, gt) : forward_test(ck.model, extract_views(gt), spacing);
        return threshold(prob, 0.5);
    };
    return evaluate_with_predictor(ck.config.display_name(), manifest, split, predictor);
}

double paired_compare(const std::vector<double>& scores_a, const std::vector<double>& scores_b) {
    if (scores_a.size() != scores_b.size()) {
        throw DegenerateInputError("paired comparison needs equal-length score lists");
    }
    return wilcoxon_signed_rank(scores_a, scores_b).p_value;
}

std::vector<double> metric_values(const std::vector<SubjectMetrics>& rows,
                                  const std::string& model, const std::string& metric) {
    std::vector<std::pair<std::string, double>> keyed;
    for (const auto& r : rows) {
        if (r.model == model) keyed.emplace_back(r.subject_id, metric_field(r, metric));
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<double> values;
    values.reserve(keyed.size());
    for (const auto& [id, v] : keyed) values.push_back(v);
    return values;
}

std::vector<ComparisonRow> compare_models(const std::vector<SubjectMetrics>& rows,
                                          const std::string& metric) {
    std::set<std::string> model_set;
    for (const auto& r : rows) model_set.insert(r.model);
    const std::vector<std::string> models(model_set.begin(), model_set.end());

    std::vector<ComparisonRow> out;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            const auto a = metric_values(rows, models[i], metric);
            const auto b = metric_values(rows, models[j], metric);
            ComparisonRow row;
            row.model_a = models[i];
            row.model_b = models[j];
            row.metric = metric;
            row.n = static_cast<int>(a.size());
            try {
                row.p_value = paired_compare(a, b);
            } catch (const DegenerateInputError&) {
                row.p_value = 1.0;  // all-tied convention
            }
            out.push_back(std::move(row));
        }
    }
    return out;
}

MetricsReport build_report(std::vector<SubjectMetrics> rows,
                           std::vector<ComparisonRow> comparisons) {
    if (rows.empty()) throw ParamError("cannot build a report from zero rows");

    MetricsReport report;
    std::map<std::string, std::set<std::string>> subjects_by_model;
    for (const auto& r : rows) subjects_by_model[r.model].insert(r.subject_id);
    const auto& first = subjects_by_model.begin()->second;
    for (const auto& [model, subjects] : subjects_by_model) {
        if (subjects != first) {
            throw ParamError("model " + model + " does not cover the same subjects");
        }
    }

    for (const auto& [model, subjects] : subjects_by_model) {
        for (const char* metric : kMetricNames) {
            std::vector<double> values;
            values.reserve(rows.size());
            for (const auto& r : rows) {
                if (r.model == model) values.push_back(metric_field(r, metric));
            }
            AggregateCell cell;
            cell.mean = mean(values);
            cell.sem = sem(values);
            report.aggregate[model][metric] = cell;
        }
    }

    std::sort(rows.begin(), rows.end(), [](const SubjectMetrics& a, const SubjectMetrics& b) {
        return std::tie(a.model, a.subject_id) < std::tie(b.model, b.subject_id);
    });
    report.per_subject = std::move(rows);
    report.comparisons = std::move(comparisons);
    return report;
}

nlohmann::ordered_json report_to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["models"] = nlohmann::ordered_json::object();
    for (const auto& [model, metrics] : report.aggregate) {
        for (const auto& [metric, cell] : metrics) {
            j["models"][model][metric] = {{"mean", cell.mean}, {"sem", cell.sem}};
        }
    }
    j["comparisons"] = nlohmann::ordered_json::array();
    for (const auto& c : report.comparisons) {
        j["comparisons"].push_back({{"model_a", c.model_a},
                                    {"model_b", c.model_b},
                                    {"metric", c.metric},
                                    {"p_value", c.p_value},
                                    {"test_name", c.test_name},
                                    {"n", c.n}});
    }
    return j;
}

std::vector<SubjectMetrics> load_per_subject_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot read " + path.string());
    std::string line;
    if (!std::getline(f, line) ||
        line != "subject_id,model,dsc,hausdorff_mm,massdiff_signed_pct,massdiff_abs_pct") {
        throw FileError("not a per-subject metrics file: " + path.string());
    }
    std::vector<SubjectMetrics> rows;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string field;
        SubjectMetrics r;
        try {
            std::getline(cells, r.subject_id, ',');
            std::getline(cells, r.model, ',');
            std::getline(cells, field, ',');
            r.dsc = std::stod(field);
            std::getline(cells, field, ',');
            r.hausdorff_mm = std::stod(field);
            std::getline(cells, field, ',');
            r.massdiff_signed_pct = std::stod(field);
            std::getline(cells, field, ',');
            r.massdiff_abs_pct = std::stod(field);
        } catch (const std::exception&) {
            throw FileError(path.string() + ": malformed row at line " + std::to_string(line_no));
        }
        if (r.subject_id.empty() || r.model.empty() || !cells.eof()) {
            throw FileError(path.string() + ": malformed row at line " + std::to_string(line_no));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void emit_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
    if (report.per_subject.empty()) throw ParamError("refusing to emit an empty report");
    std::filesystem::create_directories(out_dir);

    const auto open_out = [&](const char* name) {
        std::ofstream f(out_dir / name, std::ios::trunc);
        if (!f) throw FileError(std::string("cannot write ") + (out_dir / name).string());
        return f;
    };

    {
        auto f = open_out("per_subject.csv");
        f << "subject_id,model,dsc,hausdorff_mm,massdiff_signed_pct,massdiff_abs_pct\n";
        for (const auto& r : report.per_subject) {
            f << r.subject_id << ',' << r.model << ',' << num(r.dsc) << ',' << num(r.hausdorff_mm)
              << ',' << num(r.massdiff_signed_pct) << ',' << num(r.massdiff_abs_pct) << '\n';
        }
    }
    {
        auto f = open_out("aggregate.csv");
        f << "Model,DSC,Hausd. [mm],MassDiff [%],MassDiffSigned [%]\n";
        for (const auto& [model, metrics] : report.aggregate) {
            f << model << ',' << pm_cell(metrics.at("dsc"), 100.0) << ','
              << pm_cell(metrics.at("hausdorff_mm"), 1.0) << ','
              << pm_cell(metrics.at("massdiff_abs_pct"), 1.0) << ','
              << pm_cell(metrics.at("massdiff_signed_pct"), 1.0) << '\n';
        }
    }
    {
        auto f = open_out("comparisons.csv");
        f << "model_a,model_b,metric,p_value,test_name,n\n";
        for (const auto& c : report.comparisons) {
            f << c.model_a << ',' << c.model_b << ',' << c.metric << ',' << num(c.p_value) << ','
              << c.test_name << ',' << c.n << '\n';
        }
    }
    {
        auto f = open_out("summary.json");
        f << report_to_json(report).dump(2) << '\n';
    }
}

}  // namespace cardiorecon
