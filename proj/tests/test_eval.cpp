#include "cardiorecon/evaluate.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"

#include "cardiorecon/geometry.hpp"
#include "cardiorecon/metrics.hpp"
#include "cardiorecon/rng.hpp"
#include "cardiorecon/train.hpp"
#include "test_support.hpp"

using namespace cardiorecon;
using cardiorecon::testing::make_tiny_manifest;
using cardiorecon::testing::scratch_dir;
using cardiorecon::testing::slurp;

namespace {

/// Synthetic rows: two models over shared subjects with a fixed dice gap.
std::vector<SubjectMetrics> synthetic_rows(int n, double gap) {
    Rng rng(17);
    std::vector<SubjectMetrics> rows;
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "s%03d", i);
        const double base = 0.70 + 0.2 * rng.uniform();
        for (const char* model : {"alpha", "beta"}) {
            SubjectMetrics r;
            r.subject_id = id;
            r.model = model;
            r.dsc = model == std::string("alpha") ? base + gap : base;
            r.hausdorff_mm = 5.0 - r.dsc;
            r.massdiff_signed_pct = (model == std::string("alpha") ? 1.0 : -2.0) + rng.normal();
            r.massdiff_abs_pct = std::abs(r.massdiff_signed_pct);
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace

TEST_CASE("identity predictor scores perfectly") {
    const auto dir = scratch_dir("eval_identity");
    const auto manifest = make_tiny_manifest(dir, 16, 2, 1, 3);
    const auto rows = evaluate_with_predictor(
        "oracle", manifest, Split::Test,
        [](const std::string&, const Volume3D& gt) { return gt; });
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(r.model == "oracle");
        CHECK(r.dsc == 1.0);
        CHECK(r.hausdorff_mm == 0.0);
        CHECK(r.massdiff_signed_pct == 0.0);
        CHECK(r.massdiff_abs_pct == 0.0);
    }
    CHECK(rows[0].subject_id < rows[1].subject_id);  // manifest order
}

TEST_CASE("predictor rows carry real metric values") {
    const auto dir = scratch_dir("eval_dilate");
    const auto manifest = make_tiny_manifest(dir, 16, 2, 1, 2);
    // a predictor that over-segments by one dilation: positive mass bias
    const auto rows = evaluate_with_predictor(
        "fat", manifest, Split::Test,
        [](const std::string&, const Volume3D& gt) { return dilate6(gt); });
    for (const auto& r : rows) {
        CHECK(r.dsc > 0.5);
        CHECK(r.dsc < 1.0);
        CHECK(r.hausdorff_mm > 0.0);
        CHECK(r.massdiff_signed_pct > 0.0);
        CHECK(r.massdiff_abs_pct == doctest::Approx(r.massdiff_signed_pct));
    }
}

TEST_CASE("evaluating a fresh checkpoint end to end") {
    const auto dir = scratch_dir("eval_ckpt");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 3, 1, 2);
    ModelConfig mcfg;
    mcfg.variant = Variant::CVAE;
    mcfg.views = {ViewLabel::LA1};
    mcfg.latent_dim = 6;
    mcfg.view_embed_dim = 5;
    mcfg.volume_dim = 16;
    mcfg.volume_embed_dim = 24;
    mcfg.channels = {8, 16};
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.max_iterations = 30;
    tcfg.val_interval = 10;
    tcfg.learning_rate = 2e-3;
    tcfg.augment = false;
    tcfg.seed = 9;
    const auto result = train(mcfg, tcfg, manifest, dir / "run", {.quiet = true});

    const auto rows = evaluate_model(result.best_checkpoint, manifest, Split::Test);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.model == "CVAE_1");
        CHECK(r.dsc >= 0.0);
        CHECK(r.dsc <= 1.0);
        CHECK(std::isfinite(r.hausdorff_mm));
    }
    // determinism
    const auto again = evaluate_model(result.best_checkpoint, manifest, Split::Test);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].dsc == again[i].dsc);
        CHECK(rows[i].hausdorff_mm == again[i].hausdorff_mm);
        CHECK(rows[i].massdiff_signed_pct == again[i].massdiff_signed_pct);
    }
}

TEST_CASE("paired_compare matches the underlying rank test") {
    std::vector<double> a(30), b(30);
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        b[i] = rng.uniform();
        a[i] = b[i] + 1.0;
    }
    CHECK(paired_compare(a, b) < 1e-5);
    CHECK(paired_compare(a, b) == paired_compare(b, a));

    CHECK_THROWS_AS((void)paired_compare(a, a), DegenerateInputError);
    CHECK_THROWS_AS((void)paired_compare(a, std::vector<double>(29, 0.0)),
                    DegenerateInputError);
}

TEST_CASE("compare_models pairs by subject and applies the tie convention") {
    auto rows = synthetic_rows(25, 0.05);
    const auto comps = compare_models(rows, "dsc");
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].model_a == "alpha");
    CHECK(comps[0].model_b == "beta");
    CHECK(comps[0].metric == "dsc");
    CHECK(comps[0].test_name == "wilcoxon_signed_rank");
    CHECK(comps[0].n == 25);
    CHECK(comps[0].p_value < 1e-4);

    // identical scores: reported as p = 1 instead of an error
    for (auto& r : rows) {
        if (r.model == "alpha") r.dsc = 0.5;
    }
    for (auto& r : rows) {
        if (r.model == "beta") r.dsc = 0.5;
    }
    const auto tied = compare_models(rows, "dsc");
    CHECK(tied[0].p_value == 1.0);
}

TEST_CASE("build_report aggregates match an independent recomputation") {
    const auto rows = synthetic_rows(40, 0.03);
    const auto report = build_report(rows, compare_models(rows, "dsc"));

    REQUIRE(report.aggregate.count("alpha") == 1);
    REQUIRE(report.aggregate.count("beta") == 1);

    // recompute mean and sem for alpha's dice by hand
    std::vector<double> alpha_dsc;
    for (const auto& r : rows) {
        if (r.model == "alpha") alpha_dsc.push_back(r.dsc);
    }
    double m = 0.0;
    for (double v : alpha_dsc) m += v;
    m /= alpha_dsc.size();
    double var = 0.0;
    for (double v : alpha_dsc) var += (v - m) * (v - m);
    var /= (alpha_dsc.size() - 1);
    const double s = std::sqrt(var / alpha_dsc.size());

    const auto& cell = report.aggregate.at("alpha").at("dsc");
    CHECK(std::abs(cell.mean - m) <= 1e-9);
    CHECK(std::abs(cell.sem - s) <= 1e-9);
    CHECK(report.per_subject.size() == 80);  // 2 models x 40 subjects

    // subject coverage must be identical across models
    auto broken = rows;
    broken.back().model = "gamma";
    CHECK_THROWS_AS((void)build_report(broken, {}), ParamError);
    CHECK_THROWS_AS((void)build_report({}, {}), ParamError);
}

TEST_CASE("emitted reports are byte-stable and parse back") {
    const auto rows = synthetic_rows(12, 0.04);
    const auto report = build_report(rows, compare_models(rows, "dsc"));

    const auto out_a = scratch_dir("eval_emit_a");
    const auto out_b = scratch_dir("eval_emit_b");
    emit_report(report, out_a);
    emit_report(report, out_b);

    for (const char* name : {"per_subject.csv", "aggregate.csv", "comparisons.csv",
                             "summary.json"}) {
        const auto bytes_a = slurp(out_a / name);
        const auto bytes_b = slurp(out_b / name);
        CHECK(!bytes_a.empty());
        CHECK(bytes_a == bytes_b);
    }

    // per_subject.csv round-trips at full precision
    std::istringstream ps(slurp(out_a / "per_subject.csv"));
    std::string line;
    std::getline(ps, line);
    CHECK(line == "subject_id,model,dsc,hausdorff_mm,massdiff_signed_pct,massdiff_abs_pct");
    std::size_t parsed = 0;
    while (std::getline(ps, line)) {
        std::istringstream cells(line);
        std::string id, model, dsc;
        std::getline(cells, id, ',');
        std::getline(cells, model, ',');
        std::getline(cells, dsc, ',');
        const auto& row = report.per_subject[parsed];
        CHECK(id == row.subject_id);
        CHECK(model == row.model);
        CHECK(std::stod(dsc) == row.dsc);
        ++parsed;
    }
    CHECK(parsed == report.per_subject.size());

    // aggregate.csv: one row per model, cells recover the scaled means
    std::istringstream ag(slurp(out_a / "aggregate.csv"));
    std::getline(ag, line);
    CHECK(line == "Model,DSC,Hausd. [mm],MassDiff [%],MassDiffSigned [%]");
    std::size_t model_rows = 0;
    while (std::getline(ag, line)) {
        std::istringstream cells(line);
        std::string model, dsc_cell;
        std::getline(cells, model, ',');
        std::getline(cells, dsc_cell, ',');
        const double printed = std::stod(dsc_cell.substr(0, dsc_cell.find(' ')));
        CHECK(std::abs(printed - report.aggregate.at(model).at("dsc").mean * 100.0) <= 0.005);
        ++model_rows;
    }
    CHECK(model_rows == 2);

    // summary.json structure
    const auto summary = nlohmann::json::parse(slurp(out_a / "summary.json"));
    CHECK(summary.at("models").at("alpha").at("dsc").contains("mean"));
    CHECK(summary.at("models").at("alpha").at("dsc").contains("sem"));
    CHECK(summary.at("comparisons").size() == 1);
    CHECK(summary.at("comparisons")[0].at("test_name") == "wilcoxon_signed_rank");
}
