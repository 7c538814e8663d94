// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Expected values come from independent computations here, never
// from the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "openrgbt/fusion.hpp"
#include "openrgbt/metrics.hpp"
#include "openrgbt/mock.hpp"
#include "openrgbt/pipeline.hpp"
#include "openrgbt/sccm.hpp"
#include "protocol_gen.hpp"
#include "support.hpp"

using namespace openrgbt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

std::vector<EmbeddingVector> random_embeddings(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<EmbeddingVector> out(n);
    for (auto& e : out) {
        e.values.resize(dim);
        for (auto& v : e.values) {
            v = g(rng);
        }
        // Avoid the degenerate zero vector.
        e.values[0] += 1e-3;
    }
    return out;
}

Outcome row_mass() {
    std::mt19937_64 rng(1001);
    const SccmConfig cfg;
    double worst = 0.0;
    std::size_t rows = 0;
    const auto start = Clock::now();
    for (int set = 0; set < 1000; ++set) {
        const std::size_t n = 1 + rng() % 20;
        const std::size_t k = 1 + rng() % 30;
        const std::size_t dim = 1 + rng() % 16;
        const auto visual = random_embeddings(rng, n, dim);
        const auto text = random_embeddings(rng, k, dim);
        const ConfidenceMatrix f = confidence_matrix(visual, text, cfg);
        for (std::size_t i = 0; i < n; ++i) {
            long double s_total = 0.0L;
            long double nv = 0.0L;
            for (double v : visual[i].values) {
                nv += static_cast<long double>(v) * v;
            }
            for (std::size_t j = 0; j < k; ++j) {
                long double dot = 0.0L;
                long double nt = 0.0L;
                for (std::size_t d = 0; d < dim; ++d) {
                    dot += static_cast<long double>(visual[i].values[d]) * text[j].values[d];
                    nt += static_cast<long double>(text[j].values[d]) * text[j].values[d];
                }
                s_total += std::exp(static_cast<long double>(cfg.temperature) * dot / std::sqrt(nv * nt));
            }
            const long double expected = s_total / (1.0L + s_total);
            double sum = 0.0;
            for (double v : f.row(i)) {
                sum += v;
            }
            if (!(sum < 1.0)) {
                return {false, "row mass reached 1"};
            }
            worst = std::max(worst, static_cast<double>(std::fabs(sum - expected)));
            ++rows;
        }
    }
    const double elapsed = seconds_since(start);
    return {worst <= 1e-9 && elapsed < 5.0, std::to_string(rows) + " rows, max |err| " + fmt(worst) + ", " +
                                                fmt(elapsed) + " s (limits 1e-9, 5 s)"};
}

Outcome sigmoid_equivalence() {
    std::mt19937_64 rng(1002);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    SccmConfig cfg;
    cfg.normalize_embeddings = false;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng);
        const double b = u(rng);
        const EmbeddingVector v{{a}, false};
        const EmbeddingVector t{{b}, false};
        const double f = confidence_matrix(std::span(&v, 1), std::span(&t, 1), cfg).at(0, 0);
        const double s = cfg.temperature * a * b;
        const double expected = 1.0 / (1.0 + std::exp(-s));
        worst = std::max(worst, std::fabs(f - expected));
    }
    return {worst <= 1e-12, "1000 scalars, max |err| " + fmt(worst) + " (limit 1e-12)"};
}

std::size_t naive_argmax(const std::vector<double>& s) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        if (s[k] > s[best]) {
            best = k;
        }
    }
    return best;
}

std::vector<double> random_similarities(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::vector<double> s(n);
    for (auto& v : s) {
        // Coarse values so ties occur.
        v = std::round(u(rng) * 4.0) / 4.0;
    }
    return s;
}

std::vector<std::size_t> iota_ids(std::size_t k) {
    std::vector<std::size_t> ids(k);
    for (std::size_t i = 0; i < k; ++i) {
        ids[i] = i;
    }
    return ids;
}

Outcome shift_invariance() {
    std::mt19937_64 rng(1003);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    for (int i = 0; i < 500; ++i) {
        const std::size_t k = 1 + rng() % 30;
        const auto s = random_similarities(rng, k);
        auto shifted = s;
        const double c = std::round(shift(rng));
        for (auto& v : shifted) {
            v += c;
        }
        const auto f = confidence_from_similarities(s, 1, k, iota_ids(k), 10.0);
        const auto g = confidence_from_similarities(shifted, 1, k, iota_ids(k), 10.0);
        const std::size_t a = predicted_label(f.row(0)).column;
        if (a != predicted_label(g.row(0)).column || a != naive_argmax(s)) {
            return {false, "instance " + std::to_string(i) + " changed its argmax"};
        }
    }
    return {true, "500 instances"};
}

std::vector<bool> relabelled(const std::vector<DetectionProposal>& props, const ConfidenceMatrix& f, double th1,
                             double th2) {
    SccmConfig cfg;
    cfg.th1 = th1;
    cfg.th2 = th2;
    const auto result = correct_labels(props, f, cfg);
    std::vector<bool> out;
    for (const auto& p : result.proposals) {
        out.push_back(p.corrected());
    }
    return out;
}

Outcome threshold_monotonicity() {
    std::mt19937_64 rng(1004);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t relabels = 0;
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = 1 + rng() % 10;
        const std::size_t k = 2 + rng() % 6;
        std::vector<double> s;
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = random_similarities(rng, k);
            s.insert(s.end(), row.begin(), row.end());
        }
        const auto f = confidence_from_similarities(s, n, k, iota_ids(k), 1.0);
        std::vector<DetectionProposal> props(n);
        for (std::size_t r = 0; r < n; ++r) {
            props[r].class_id = props[r].initial_class_id = rng() % k;
            props[r].serial = static_cast<std::uint32_t>(r);
        }
        const double th1 = u(rng) * 0.8;
        const double th2 = 0.01 + u(rng) * 0.8;
        const auto base = relabelled(props, f, th1, th2);
        const auto tighter1 = relabelled(props, f, th1 + u(rng) * 0.2, th2);
        const auto tighter2 = relabelled(props, f, th1, std::min(0.99, th2 + u(rng) * 0.2));
        for (std::size_t r = 0; r < n; ++r) {
            if ((tighter1[r] && !base[r]) || (tighter2[r] && !base[r])) {
                return {false, "instance " + std::to_string(i) + " gained a relabel under a stricter threshold"};
            }
            relabels += base[r] ? 1 : 0;
        }
    }
    return {relabels > 0, "500 instances, " + std::to_string(relabels) + " relabels at the base thresholds"};
}

Outcome branch_table() {
    SccmConfig cfg;
    cfg.th1 = 0.25;
    cfg.th2 = 0.5;
    struct Cell {
        double f_pr;
        double f_in;
        bool expected;
    };
    // Margin >= th1 x F_pr >= th2, with the boundary values included.
    const std::vector<Cell> cells{{0.75, 0.5, true},  {0.5, 0.125, true},  {0.5, 0.375, false},
                                  {0.375, 0.0, false}, {0.25, 0.125, false}, {0.625, 0.5, false}};
    int ok = 0;
    for (const auto& c : cells) {
        // Two columns: initial label 0, predicted label 1.
        const ConfidenceMatrix f(1, 2, {c.f_in, c.f_pr}, {3, 4}, 10.0);
        DetectionProposal p;
        p.class_id = p.initial_class_id = 3;
        const auto r = correct_labels({p}, f, cfg);
        const bool did = r.proposals[0].class_id == 4;
        ok += (did == c.expected && should_relabel(c.f_pr, c.f_in, cfg) == c.expected) ? 1 : 0;
    }
    return {ok == static_cast<int>(cells.size()),
            std::to_string(ok) + "/" + std::to_string(cells.size()) + " cells as expected"};
}

Outcome metrics_oracle() {
    // Pinned 2x2 example: GT [[1,1],[0,0]], prediction [[1,0],[0,0]].
    const Raster gt2(2, 2, 1, std::vector<std::uint8_t>{1, 1, 0, 0});
    const Raster pr2(2, 2, 1, std::vector<std::uint8_t>{1, 0, 0, 0});
    const auto cm2 = confusion(pr2, gt2, 2, -1);
    const double m2 = *miou(cm2).mean;
    const double a2 = *macc(cm2).mean;
    if (std::fabs(m2 - 175.0 / 3.0) > 1e-9 || std::fabs(a2 - 75.0) > 1e-9) {
        return {false, "2x2 example gave mIoU " + fmt(m2) + ", mAcc " + fmt(a2)};
    }

    std::mt19937_64 rng(1005);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = 1 + rng() % 5;
        const int ignore = rng() % 3 == 0 ? -1 : static_cast<int>(rng() % k);
        Raster gt(16, 16, 1);
        Raster pred(16, 16, 1);
        for (auto& v : gt.samples()) {
            v = static_cast<std::uint8_t>(rng() % k);
        }
        for (auto& v : pred.samples()) {
            const std::size_t x = rng() % (k + 1);
            v = static_cast<std::uint8_t>(x == k ? kUnlabeled : x);
        }
        std::vector<std::uint64_t> tally((k + 1) * k, 0);
        for (std::size_t p = 0; p < gt.samples().size(); ++p) {
            const int g = gt.samples()[p];
            if (g == ignore) {
                continue;
            }
            const int q = pred.samples()[p];
            ++tally[g * (k + 1) + (q == kUnlabeled ? k : static_cast<std::size_t>(q))];
        }
        const auto cm = confusion(pred, gt, k, ignore);
        for (std::size_t g = 0; g < k; ++g) {
            for (std::size_t q = 0; q <= k; ++q) {
                if (cm.at(g, q) != tally[g * (k + 1) + q]) {
                    return {false, "count mismatch in pair " + std::to_string(i)};
                }
            }
        }
        const auto iou = miou(cm);
        const auto acc = macc(cm);
        double iou_sum = 0.0;
        double acc_sum = 0.0;
        std::size_t present = 0;
        for (std::size_t c = 0; c < k; ++c) {
            std::uint64_t tp = tally[c * (k + 1) + c];
            std::uint64_t row = 0;
            std::uint64_t col = 0;
            for (std::size_t j = 0; j <= k; ++j) {
                row += tally[c * (k + 1) + j];
            }
            for (std::size_t j = 0; j < k; ++j) {
                col += tally[j * (k + 1) + c];
            }
            if (row == 0) {
                if (iou.per_class[c] || acc.per_class[c]) {
                    return {false, "absent class scored in pair " + std::to_string(i)};
                }
                continue;
            }
            const double ei = 100.0 * static_cast<double>(tp) / static_cast<double>(row + col - tp);
            const double ea = 100.0 * static_cast<double>(tp) / static_cast<double>(row);
            worst = std::max({worst, std::fabs(*iou.per_class[c] - ei), std::fabs(*acc.per_class[c] - ea)});
            iou_sum += ei;
            acc_sum += ea;
            ++present;
        }
        if (present > 0) {
            worst = std::max({worst, std::fabs(*iou.mean - iou_sum / present), std::fabs(*acc.mean - acc_sum / present)});
        } else if (iou.mean) {
            return {false, "mean without evaluated classes in pair " + std::to_string(i)};
        }
    }
    return {worst <= 1e-9, "2x2 mIoU " + fmt(m2) + " mAcc " + fmt(a2) + "; 200 pairs exact counts, max ratio err " +
                               fmt(worst)};
}

Outcome fusion_convexity() {
    std::mt19937_64 rng(1006);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const int w = 1 + static_cast<int>(rng() % 24);
        const int h = 1 + static_cast<int>(rng() % 24);
        const ImagePair pair(testing::random_raster(rng, w, h, 3), testing::random_raster(rng, w, h, 1));
        WeightMap weights;
        if (i % 2 == 0) {
            weights = reference_weights(pair);
        } else {
            std::vector<double> v(static_cast<std::size_t>(w) * h);
            for (auto& x : v) {
                x = u(rng);
            }
            weights = WeightMap(w, h, v);
        }
        const Raster fused = fuse(pair, weights);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int t = pair.thermal().at(x, y);
                for (int c = 0; c < 3; ++c) {
                    const int r = pair.rgb().at(x, y, c);
                    const int f = fused.at(x, y, c);
                    if (f < std::min(r, t) - 1 || f > std::max(r, t) + 1) {
                        return {false, "pair " + std::to_string(i) + " leaves the modality range"};
                    }
                }
            }
        }
    }
    return {true, "100 pairs (half reference weights, half random) within +-1"};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

PipelineConfig suite_config(const testing::TempDir& dir, std::size_t count, double flip) {
    MockSuiteOptions opts;
    opts.out_dir = dir.path();
    opts.count = count;
    opts.label_flip_rate = flip;
    return PipelineConfig::load(generate_mock_suite(opts));
}

Outcome end_to_end() {
    testing::TempDir dir("accept_e2e");
    PipelineConfig cfg = suite_config(dir, 25, 0.0);
    const auto start = Clock::now();
    std::vector<std::string> reports;
    std::vector<double> mious;
    for (int workers : {1, 1, 8}) {
        cfg.workers = workers;
        cfg.output_dir = dir / ("out" + std::to_string(reports.size()));
        const RunSummary s = Pipeline(cfg).run();
        if (s.exit_code() != 0 || !s.report || !s.report->overall.iou.mean || s.processed != 25) {
            return {false, "run " + std::to_string(reports.size()) + " did not complete"};
        }
        mious.push_back(*s.report->overall.iou.mean);
        reports.push_back(slurp(cfg.output_dir / "report.json"));
    }
    const double elapsed = seconds_since(start);
    const bool exact = std::all_of(mious.begin(), mious.end(), [](double m) { return m == 100.0; });
    const bool same = reports[0] == reports[1] && reports[0] == reports[2];
    return {exact && same && elapsed < 60.0,
            "25 scenes, mIoU " + fmt(mious[0]) + "/" + fmt(mious[1]) + "/" + fmt(mious[2]) +
                (same ? ", reports identical" : ", reports differ") + " (workers 1,1,8), " + fmt(elapsed) +
                " s (limit 60 s)"};
}

Outcome sccm_recovery() {
    testing::TempDir dir("accept_sccm");
    PipelineConfig cfg = suite_config(dir, 25, 0.3);
    cfg.mock_margin = 0.3;
    cfg.sccm.th1 = 0.1;
    cfg.sccm.th2 = 0.3;
    const Pipeline pipeline(cfg);
    const MockSceneSet scenes = MockSceneSet::load_dir(dir / "scenes");

    // +SCCM configuration: text proposals only.
    TraceOptions options;
    options.visual_prompts = false;
    options.segment = false;
    std::size_t flipped = 0;
    std::size_t recovered = 0;
    std::size_t broken = 0;
    for (const SampleTrace& t : pipeline.trace_all(options)) {
        if (t.proposals.empty()) {
            continue;
        }
        const MockScene& scene = *scenes.find(t.id);
        const auto result = correct_labels(t.proposals, *t.confidences, cfg.sccm);
        for (const auto& p : result.proposals) {
            const auto obj = scene.majority_object(to_pixel_rect(p.box, scene.width, scene.height));
            const std::size_t truth = *cfg.vocabulary.find(scene.objects.at(obj.value()).class_name);
            if (p.initial_class_id != truth) {
                ++flipped;
                recovered += p.class_id == truth ? 1 : 0;
            } else if (p.class_id != truth) {
                ++broken;
            }
        }
    }

    const auto rows = pipeline.ablate();
    const auto m = [&](std::size_t i) { return *rows.at(i).report.overall.iou.mean; };
    const bool order = m(3) >= m(2) && m(2) >= m(0) && m(3) >= m(1) && m(1) >= m(0);
    return {flipped > 0 && recovered == flipped && order,
            std::to_string(recovered) + "/" + std::to_string(flipped) + " flipped proposals relabelled, " +
                std::to_string(broken) + " correct ones changed; mIoU baseline " + fmt(m(0)) + ", +visual " +
                fmt(m(1)) + ", +SCCM " + fmt(m(2)) + ", both " + fmt(m(3))};
}

Outcome visual_coverage() {
    testing::TempDir dir("accept_visual");
    PipelineConfig cfg = suite_config(dir, 10, 0.0);
    const std::size_t cone = *cfg.vocabulary.find("cone");
    cfg.visual_prompts_enabled = false;
    cfg.output_dir = dir / "off";
    const RunSummary off = Pipeline(cfg).run();
    cfg.visual_prompts_enabled = true;
    cfg.output_dir = dir / "on";
    const RunSummary on = Pipeline(cfg).run();
    const auto& off_iou = off.report.value().overall.iou.per_class.at(cone);
    const auto& on_iou = on.report.value().overall.iou.per_class.at(cone);
    if (!off_iou || !on_iou) {
        return {false, "cone has no ground truth pixels"};
    }
    return {*off_iou == 0.0 && *on_iou == 100.0,
            "exemplar-only class 'cone' IoU " + fmt(*off_iou) + " without visual prompts, " + fmt(*on_iou) + " with"};
}

Outcome protocol_round_trip() {
    std::mt19937_64 rng(1010);
    for (int i = 0; i < 1000; ++i) {
        const auto req = testing::random_request(rng);
        const auto resp = testing::random_response(rng);
        const std::string a = protocol::encode(req);
        const std::string b = protocol::encode(resp);
        if (a.find('\n') != std::string::npos || b.find('\n') != std::string::npos ||
            !(protocol::decode_request(a) == req) || !(protocol::decode_response(b) == resp)) {
            return {false, "message " + std::to_string(i) + " did not survive encode/decode"};
        }
    }
    return {true, "1000 requests and 1000 responses"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"row mass", row_mass},
        {"single-class sigmoid", sigmoid_equivalence},
        {"argmax shift invariance", shift_invariance},
        {"threshold monotonicity", threshold_monotonicity},
        {"relabel branch table", branch_table},
        {"metrics oracle", metrics_oracle},
        {"fusion convexity", fusion_convexity},
        {"end-to-end mock determinism", end_to_end},
        {"SCCM recovery", sccm_recovery},
        {"visual prompt coverage", visual_coverage},
        {"protocol round trip", protocol_round_trip},
    };
    int failed = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << std::endl;
    return failed == 0 ? 0 : 1;
}
