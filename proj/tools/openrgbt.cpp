#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"
#include "openrgbt/mock.hpp"
#include "openrgbt/pipeline.hpp"
#include "openrgbt/server.hpp"

namespace fs = std::filesystem;
using namespace openrgbt;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> output;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<double> th1;
    std::optional<double> th2;
    std::optional<double> dedup_iou;
    bool no_sccm = false;
    bool no_visual = false;
};

void add_pipeline_options(CLI::App& cmd, Overrides& o, bool config_required = true) {
    auto* opt = cmd.add_option("-c,--config", o.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
    if (config_required) {
        opt->required();
    }
    cmd.add_option("-o,--output", o.output, "Output directory (overrides output_dir)");
    cmd.add_option("-w,--workers", o.workers, "Worker threads (overrides workers)")->check(CLI::Range(1, 256));
    cmd.add_option("--seed", o.seed, "Seed for every randomized component (overrides seed)");
    cmd.add_option("--backend", o.backend, "Endpoint for every capability: mock:<dir>, process:<cmd> or http://...");
    cmd.add_option("--th1", o.th1, "SCCM margin threshold (overrides sccm.th1)");
    cmd.add_option("--th2", o.th2, "SCCM confidence threshold (overrides sccm.th2)");
    cmd.add_option("--dedup-iou", o.dedup_iou, "Same-class suppression IoU for the proposal union");
    cmd.add_flag("--no-sccm", o.no_sccm, "Disable semantic consistency correction");
    cmd.add_flag("--no-visual", o.no_visual, "Disable visual-prompt detection");
}

std::string absolute_endpoint(const std::string& spec) {
    if (spec.rfind("mock:", 0) == 0) {
        return "mock:" + fs::absolute(spec.substr(5)).string();
    }
    return spec;
}

Pipeline make_pipeline(const Overrides& o) {
    PipelineConfig c = PipelineConfig::load(o.config);
    if (o.output) {
        c.output_dir = fs::absolute(*o.output);
    }
    if (o.workers) {
        c.workers = *o.workers;
    }
    if (o.seed) {
        c.seed = *o.seed;
    }
    if (o.backend) {
        const std::string spec = absolute_endpoint(*o.backend);
        c.backends = {spec, spec, spec, spec, spec};
    }
    if (o.th1) {
        c.sccm.th1 = *o.th1;
    }
    if (o.th2) {
        c.sccm.th2 = *o.th2;
    }
    if (o.dedup_iou) {
        c.dedup_iou = *o.dedup_iou;
    }
    if (o.no_sccm) {
        c.sccm_enabled = false;
    }
    if (o.no_visual) {
        c.visual_prompts_enabled = false;
    }
    return Pipeline(std::move(c));
}

int report_failures(const std::vector<SampleFailure>& failures) {
    bool backend = false;
    for (const auto& f : failures) {
        std::cerr << "sample " << f.id << " failed: " << f.message << '\n';
        backend = backend || f.backend;
    }
    if (failures.empty()) {
        return 0;
    }
    return backend ? 3 : 1;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!normalize_label(item).empty()) {
            out.push_back(item);
        }
    }
    return out;
}

int run_summary(const RunSummary& summary, bool print_report) {
    if (print_report && summary.report) {
        std::cout << summary.report->to_table();
    }
    std::cout << "processed " << summary.processed << "/" << summary.samples << " samples, "
              << summary.failures.size() << " failed, " << summary.skipped << " skipped, " << summary.proposals
              << " proposals, " << summary.corrections << " corrections\n";
    for (const auto& f : summary.failures) {
        std::cerr << "sample " << f.id << " failed: " << f.message << '\n';
    }
    return summary.exit_code();
}

Raster single_channel(Raster r) {
    if (r.channels() == 1) {
        return r;
    }
    Raster gray(r.width(), r.height(), 1);
    for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < r.width(); ++x) {
            gray.at(x, y) = r.at(x, y, 0);
        }
    }
    return gray;
}

/// Backends for the single-image commands, built the same way as in a run.
BackendSet single_backends(const std::string& endpoint, const Vocabulary& vocab, std::uint64_t seed,
                           PipelineConfig& holder) {
    holder.vocabulary = vocab;
    holder.seed = seed;
    const std::string spec = absolute_endpoint(endpoint);
    holder.backends = {spec, spec, spec, spec, spec};
    return BackendFactory(holder).make();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot RGB-T open-vocabulary semantic segmentation pipeline"};
    app.require_subcommand(1);

    Overrides run_o, fuse_o, detect_o, segment_o, eval_o, calib_o, ablate_o;

    auto* run = app.add_subcommand("run", "Fuse, detect, correct, segment and evaluate every sample");
    add_pipeline_options(*run, run_o);

    auto* fuse_cmd = app.add_subcommand("fuse", "Write fused images for a dataset, or fuse a single pair");
    std::string fuse_rgb, fuse_thermal, fuse_out, fuse_backend;
    std::string fuse_weights = "reference";
    add_pipeline_options(*fuse_cmd, fuse_o, false);
    fuse_cmd->add_option("--rgb", fuse_rgb, "Visible image (single-pair mode)")->check(CLI::ExistingFile);
    fuse_cmd->add_option("--thermal", fuse_thermal, "Thermal image (single-pair mode)")->check(CLI::ExistingFile);
    fuse_cmd->add_option("--weights", fuse_weights, "reference, file:<png> or backend (single-pair mode)")
        ->capture_default_str();
    fuse_cmd->add_option("--out", fuse_out, "Fused PNG path (single-pair mode)");

    auto* detect = app.add_subcommand("detect", "Proposals after union and SCCM, for a dataset or one image");
    add_pipeline_options(*detect, detect_o, false);
    std::string detect_image, detect_vocab, detect_exemplars, detect_out;
    bool detect_sccm = false;
    detect->add_option("--image", detect_image, "Fused image (single-image mode; its stem is the image id)")
        ->check(CLI::ExistingFile);
    detect->add_option("--vocab", detect_vocab, "Vocabulary file (single-image mode)")->check(CLI::ExistingFile);
    detect->add_option("--exemplars", detect_exemplars, "Exemplar library JSON (single-image mode)")
        ->check(CLI::ExistingFile);
    detect->add_option("--out", detect_out, "Proposal JSON path (single-image mode; default stdout)");
    detect->add_flag("--sccm", detect_sccm, "Apply SCCM in single-image mode");

    auto* segment = app.add_subcommand("segment", "Write per-sample label maps and instances, no evaluation");
    add_pipeline_options(*segment, segment_o);

    auto* eval = app.add_subcommand("eval", "Score prediction maps against ground truth");
    add_pipeline_options(*eval, eval_o, false);
    std::string pred_dir, gt_dir, eval_vocab, eval_conditions, eval_report;
    int eval_ignore = 0;
    std::optional<std::size_t> eval_background;
    eval->add_option("-p,--pred-dir,--predictions", pred_dir, "Directory with <id>/label.png or <id>.png")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval->add_option("--gt-dir", gt_dir, "Ground-truth label maps (without --config)")->check(CLI::ExistingDirectory);
    eval->add_option("--vocab", eval_vocab, "Vocabulary file (without --config)")->check(CLI::ExistingFile);
    eval->add_option("--conditions", eval_conditions, "id,condition CSV (without --config)")->check(CLI::ExistingFile);
    eval->add_option("--ignore-index", eval_ignore, "Ground-truth value excluded from scoring (without --config)")
        ->capture_default_str()
        ->check(CLI::Range(0, 255));
    eval->add_option("--background-index", eval_background, "Background class of the vocabulary");
    eval->add_option("--report", eval_report, "Write the report JSON here");

    auto* calibrate = app.add_subcommand("calibrate", "Sweep SCCM thresholds and write a CSV of mIoU/mAcc");
    add_pipeline_options(*calibrate, calib_o);
    std::string th1_grid = "0:0.5:0.1";
    std::string th2_grid = "0.3:0.9:0.1";
    std::string csv_path;
    calibrate->add_option("--th1-grid", th1_grid, "th1 values: start:stop:step or a comma list")
        ->capture_default_str();
    calibrate->add_option("--th2-grid", th2_grid, "th2 values: start:stop:step or a comma list")
        ->capture_default_str();
    calibrate->add_option("--csv", csv_path, "CSV path; default <output>/calibration.csv");

    auto* ablate = app.add_subcommand("ablate", "Baseline / +visual / +SCCM / both table");
    add_pipeline_options(*ablate, ablate_o);

    auto* mock_scenes = app.add_subcommand("mock-scenes", "Generate a synthetic benchmark for the mock backend");
    MockSuiteOptions suite;
    std::string suite_out;
    std::string suite_classes;
    std::string suite_blind = "cone";
    mock_scenes->add_option("--out", suite_out, "Output directory")->required();
    mock_scenes->add_option("--count", suite.count, "Number of scenes")->capture_default_str();
    mock_scenes->add_option("--width", suite.width, "Scene width in pixels")->capture_default_str();
    mock_scenes->add_option("--height", suite.height, "Scene height in pixels")->capture_default_str();
    mock_scenes->add_option("--seed", suite.seed, "Generator seed")->capture_default_str();
    mock_scenes->add_option("--flip-rate", suite.label_flip_rate, "Text detector label flip rate")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    mock_scenes->add_option("--miss-rate", suite.miss_rate, "Text detector miss rate")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    mock_scenes->add_option("--classes", suite_classes,
                            "Comma-separated vocabulary, background first (default unlabeled,car,person,bike,cone)");
    mock_scenes->add_option("--text-blind", suite_blind, "Comma-separated classes only visual prompts can find")
        ->capture_default_str();

    auto* mock_serve = app.add_subcommand("mock-serve", "Serve the mock backend over JSON lines or HTTP");
    std::string serve_scenes, serve_vocab, serve_classes, http_address;
    MockOptions serve_options;
    mock_serve->add_option("--scenes", serve_scenes, "Mock scene directory")->required()->check(CLI::ExistingDirectory);
    mock_serve->add_option("--vocab", serve_vocab, "Vocabulary file")->check(CLI::ExistingFile);
    mock_serve->add_option("--classes", serve_classes, "Comma-separated vocabulary (alternative to --vocab)");
    mock_serve->add_option("--margin", serve_options.margin, "Text embedding margin")->capture_default_str();
    mock_serve->add_option("--seed", serve_options.seed, "Seed")->capture_default_str();
    mock_serve->add_option("--http", http_address, "Listen on host:port instead of stdin/stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || segment->parsed()) {
            const bool evaluate = run->parsed();
            const Pipeline pipeline = make_pipeline(evaluate ? run_o : segment_o);
            const auto start = std::chrono::steady_clock::now();
            const RunSummary summary = pipeline.run(evaluate);
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            std::cerr << "elapsed " << elapsed.count() << " s, output in " << pipeline.config().output_dir << '\n';
            return run_summary(summary, evaluate);
        }
        if (fuse_cmd->parsed()) {
            if (!fuse_o.config.empty()) {
                return report_failures(make_pipeline(fuse_o).fuse_all());
            }
            if (fuse_rgb.empty() || fuse_thermal.empty() || fuse_out.empty()) {
                std::cerr << "fuse needs --config, or --rgb, --thermal and --out\n";
                return 2;
            }
            const ImagePair pair(read_png(fuse_rgb), single_channel(read_png(fuse_thermal)),
                                 fs::path(fuse_rgb).stem().string());
            WeightMap w;
            if (fuse_weights == "reference") {
                w = reference_weights(pair);
            } else if (fuse_weights.rfind("file:", 0) == 0) {
                w = load_weight_map(fuse_weights.substr(5));
            } else if (fuse_weights == "backend") {
                if (!fuse_o.backend) {
                    std::cerr << "--weights backend needs --backend\n";
                    return 2;
                }
                PipelineConfig holder;
                BackendSet b = single_backends(*fuse_o.backend, Vocabulary({"object"}), fuse_o.seed.value_or(0), holder);
                w = b.fusion->fusion_weights(pair);
            } else {
                std::cerr << "--weights must be reference, file:<png> or backend\n";
                return 2;
            }
            write_png(fuse_out, fuse(pair, w));
            return 0;
        }
        if (detect->parsed()) {
            if (!detect_o.config.empty()) {
                return report_failures(make_pipeline(detect_o).detect_all());
            }
            if (detect_image.empty() || detect_vocab.empty() || !detect_o.backend) {
                std::cerr << "detect needs --config, or --image, --vocab and --backend\n";
                return 2;
            }
            const Vocabulary vocab = Vocabulary::load(detect_vocab);
            PipelineConfig holder;
            BackendSet b = single_backends(*detect_o.backend, vocab, detect_o.seed.value_or(0), holder);
            const Raster image = read_png(detect_image);
            const std::string id = fs::path(detect_image).stem().string();
            const auto text = detect_text(image, id, vocab, *b.text_detector);
            std::vector<DetectionProposal> visual;
            if (!detect_exemplars.empty() && !detect_o.no_visual) {
                const auto library = ExemplarLibrary::load(detect_exemplars);
                visual = detect_visual(image, id, vocab, library, *b.visual_detector);
            }
            auto proposals = union_proposals(text, visual, detect_o.dedup_iou.value_or(kDefaultDedupIou));
            if (detect_sccm && !proposals.empty()) {
                SccmConfig sccm;
                sccm.th1 = detect_o.th1.value_or(sccm.th1);
                sccm.th2 = detect_o.th2.value_or(sccm.th2);
                const auto classes = vocab.detectable();
                const auto crops = embed_proposals(image, id, proposals, *b.embedder);
                const auto texts = embed_class_texts(vocab, classes, *b.embedder, sccm);
                proposals = correct_labels(proposals, confidence_matrix(crops, texts, sccm, classes), sccm).proposals;
            }
            const std::string doc = proposals_to_json(proposals, vocab).dump(2) + "\n";
            if (detect_out.empty()) {
                std::cout << doc;
            } else {
                write_text(detect_out, doc);
            }
            return 0;
        }
        if (eval->parsed()) {
            EvalReport report;
            if (!eval_o.config.empty()) {
                report = evaluate_predictions(make_pipeline(eval_o), pred_dir);
            } else {
                if (gt_dir.empty() || eval_vocab.empty()) {
                    std::cerr << "eval needs --config, or --gt-dir and --vocab\n";
                    return 2;
                }
                const std::optional<fs::path> conditions =
                    eval_conditions.empty() ? std::nullopt : std::optional<fs::path>(eval_conditions);
                report = evaluate_directories(pred_dir, gt_dir, Vocabulary::load(eval_vocab, eval_background),
                                              eval_ignore, conditions);
            }
            std::cout << report.to_table();
            if (!eval_report.empty()) {
                write_text(eval_report, report.to_json().dump(2) + "\n");
            }
            return 0;
        }
        if (calibrate->parsed()) {
            const Pipeline pipeline = make_pipeline(calib_o);
            const auto points = pipeline.calibrate(parse_grid(th1_grid), parse_grid(th2_grid));
            const std::string csv = calibration_csv(points);
            write_text(csv_path.empty() ? pipeline.config().output_dir / "calibration.csv" : fs::path(csv_path), csv);
            std::cout << csv;
            return 0;
        }
        if (ablate->parsed()) {
            const Pipeline pipeline = make_pipeline(ablate_o);
            const auto rows = pipeline.ablate();
            const std::string table = ablation_table(rows);
            write_text(pipeline.config().output_dir / "ablation.txt", table);
            write_text(pipeline.config().output_dir / "ablation.json", ablation_json(rows).dump(2) + "\n");
            std::cout << table;
            return 0;
        }
        if (mock_scenes->parsed()) {
            suite.out_dir = suite_out;
            if (!suite_classes.empty()) {
                suite.classes = split_names(suite_classes);
            }
            suite.text_blind_classes = split_names(suite_blind);
            std::cout << generate_mock_suite(suite).string() << '\n';
            return 0;
        }
        if (mock_serve->parsed()) {
            const std::vector<std::string> classes =
                serve_vocab.empty() ? split_names(serve_classes) : Vocabulary::load(serve_vocab).names();
            if (classes.empty()) {
                std::cerr << "mock-serve needs --vocab or --classes\n";
                return 2;
            }
            auto scenes = std::make_shared<const MockSceneSet>(MockSceneSet::load_dir(serve_scenes));
            MockBackend backend(std::move(scenes), classes, serve_options);
            if (http_address.empty()) {
                std::ios::sync_with_stdio(false);
                serve_stream(backend, std::cin, std::cout);
                return 0;
            }
            const auto colon = http_address.rfind(':');
            if (colon == std::string::npos) {
                std::cerr << "--http expects host:port\n";
                return 2;
            }
            const std::string host = colon == 0 ? "127.0.0.1" : http_address.substr(0, colon);
            serve_http(backend, host, std::stoi(http_address.substr(colon + 1)));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
