#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stainer/image_io.hpp"
#include "stainer/inference.hpp"
#include "stainer/metrics.hpp"
#include "stainer/model.hpp"
#include "stainer/synthbench.hpp"
#include "stainer/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stainer;

namespace {

std::string fnv1a_hex(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << "\n";
}

// Provenance sidecar: config hash + seed, plus whatever extra fields apply
// (checkpoint hash, inputs). Identical inputs produce identical sidecars.
void write_provenance(const std::string& path, const std::string& command,
                      const json& config, uint64_t seed, const json& extra = json::object()) {
    json p = extra;
    p["command"] = command;
    p["config_hash"] = fnv1a_hex(config.dump());
    p["seed"] = seed;
    write_json_file(p, path);
}

bool is_image_file(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), ::tolower);
    return e == ".png" || e == ".tif" || e == ".tiff" || e == ".jpg" || e == ".jpeg";
}

std::vector<fs::path> list_images(const std::string& dir) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::string find_manifest(const std::string& data) {
    if (fs::is_directory(data)) {
        fs::path m = fs::path(data) / "manifest.json";
        if (!fs::exists(m))
            throw std::runtime_error("no manifest.json in " + data);
        return m.string();
    }
    return data;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"];
    if (j.contains("batch_size")) c.batch_size = j["batch_size"];
    if (j.contains("epochs")) c.epochs = j["epochs"];
    if (j.contains("steps")) c.steps = j["steps"];
    if (j.contains("fraction")) c.fraction = j["fraction"];
    if (j.contains("seed")) c.seed = j["seed"];
    if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"];
    if (j.contains("coord_sampling")) {
        std::string s = j["coord_sampling"];
        if (s == "full_grid") c.coord_sampling = CoordSampling::full_grid;
        else if (s == "random_fraction") c.coord_sampling = CoordSampling::random_fraction;
        else throw std::runtime_error("unknown coord_sampling '" + s + "'");
    }
    return c;
}

json seg_to_json(const SegmentationMetrics& s) {
    return json{{"dice", s.dice}, {"iou", s.iou}, {"hd", s.hd}, {"tpr", s.tpr}, {"tnr", s.tnr}};
}

void dump_mask(const BinaryMask& m, const std::string& path) {
    RasterImage img(m.height, m.width, 1);
    for (size_t i = 0; i < m.data.size(); ++i) img.data[i] = m.data[i] ? 1.0 : 0.0;
    save_image(img, path, 8);
}

struct GenerateArgs {
    std::string spec_file, out_dir;
    int n = 0;
    uint64_t seed = 0;
    bool seed_set = false;
    int size = 0;
    std::string mapping;
    int blobs = 0;
    double noise = -1.0;
};

int run_generate(const GenerateArgs& a) {
    SynthSpec spec;
    json cfg = json::object();
    if (!a.spec_file.empty()) {
        cfg = read_json_file(a.spec_file);
        if (cfg.contains("seed")) spec.seed = cfg["seed"];
        if (cfg.contains("size")) spec.size = cfg["size"];
        if (cfg.contains("blob_count")) spec.blob_count = cfg["blob_count"];
        if (cfg.contains("mapping"))
            spec.mapping = synth_mapping_from_string(cfg["mapping"]);
        if (cfg.contains("noise_std")) spec.noise_std = cfg["noise_std"];
    }
    if (a.seed_set) spec.seed = a.seed;
    if (a.size > 0) spec.size = a.size;
    if (!a.mapping.empty()) spec.mapping = synth_mapping_from_string(a.mapping);
    if (a.blobs > 0) spec.blob_count = a.blobs;
    if (a.noise >= 0.0) spec.noise_std = a.noise;

    generate_dataset(spec, a.n, a.out_dir);
    json effective = {{"seed", spec.seed},       {"size", spec.size},
                      {"blob_count", spec.blob_count}, {"mapping", to_string(spec.mapping)},
                      {"noise_std", spec.noise_std},   {"n", a.n}};
    write_provenance((fs::path(a.out_dir) / "provenance.json").string(), "generate-data",
                     effective, spec.seed);
    std::cout << "wrote " << a.n << " pairs to " << a.out_dir << "\n";
    return 0;
}

struct TrainArgs {
    std::string config_file, data, out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    int steps = 0;
};

int run_train(const TrainArgs& a) {
    json cfg = read_json_file(a.config_file);
    ModelConfig mc;
    if (cfg.contains("model")) mc = cfg["model"].get<ModelConfig>();
    TrainConfig tc = cfg.contains("train") ? train_config_from_json(cfg["train"]) : TrainConfig{};
    std::vector<double> lambdas = {1.0, 1.0, 0.0};
    if (cfg.contains("loss") && cfg["loss"].contains("lambdas"))
        lambdas = cfg["loss"]["lambdas"].get<std::vector<double>>();
    if (a.seed_set) {
        tc.seed = a.seed;
        mc.seed = a.seed;
    }
    if (a.steps > 0) tc.steps = a.steps;

    std::vector<PairedPatch> dataset = load_dataset(find_manifest(a.data));
    if (dataset.empty()) throw std::runtime_error("dataset at " + a.data + " is empty");
    mc.in_channels = dataset[0].source.channels;
    mc.out_channels = dataset[0].target.channels;
    mc.conv.in_channels = mc.in_channels;
    mc.attn.in_channels = mc.in_channels;

    fs::create_directories(a.out_dir);
    ImplicitModel model(mc);
    auto specs = default_perceptual_specs(lambdas, mc.out_channels);
    auto on_checkpoint = [&](int step, const ImplicitModel& m) {
        m.save((fs::path(a.out_dir) / ("checkpoint_step_" + std::to_string(step) + ".json"))
                   .string());
    };
    TrainResult result = train_model(model, dataset, tc, specs, on_checkpoint);

    std::string ckpt = (fs::path(a.out_dir) / "checkpoint.json").string();
    model.save(ckpt);
    write_loss_history_csv(result, (fs::path(a.out_dir) / "loss_history.csv").string());
    json extra = {{"checkpoint_hash", model.weight_hash()},
                  {"data", a.data},
                  {"steps_run", result.history.size()}};
    if (const char* wdir = std::getenv("STAINER_WEIGHTS_DIR")) extra["weights_dir"] = wdir;
    write_provenance((fs::path(a.out_dir) / "provenance.json").string(), "train", cfg,
                     tc.seed, extra);
    std::cout << "trained " << result.history.size() << " steps; final loss "
              << (result.history.empty() ? 0.0 : result.history.back().total) << "\n";
    return 0;
}

struct InferArgs {
    std::string checkpoint, input, out_dir;
    double scale = 1.0;
    int tile = 0;
    int overlap = 32;
    int bit_depth = 16;
};

int run_infer(const InferArgs& a) {
    ImplicitModel model = ImplicitModel::load(a.checkpoint);
    std::vector<fs::path> inputs;
    if (fs::is_directory(a.input)) {
        inputs = list_images(a.input);
        if (inputs.empty()) throw std::runtime_error("no images in " + a.input);
    } else {
        inputs.push_back(a.input);
    }
    fs::create_directories(a.out_dir);
    InferenceOptions opts;
    opts.scale = a.scale;
    opts.tile = a.tile;
    opts.overlap = a.overlap;
    json mcfg = model.config();
    for (const fs::path& in : inputs) {
        RasterImage img = load_image(in.string());
        RasterImage pred = translate(img, model, opts);
        std::string stem = in.stem().string();
        std::string out_img = (fs::path(a.out_dir) / (stem + "_pred.png")).string();
        save_image(pred, out_img, a.bit_depth);
        json sidecar = {{"command", "infer"},
                        {"input", in.string()},
                        {"checkpoint", a.checkpoint},
                        {"checkpoint_hash", model.weight_hash()},
                        {"scale", a.scale},
                        {"tile", a.tile},
                        {"overlap", a.overlap},
                        {"config", mcfg},
                        {"config_hash", fnv1a_hex(mcfg.dump())}};
        write_json_file(sidecar, out_img + ".json");
    }
    std::cout << "wrote " << inputs.size() << " predictions to " << a.out_dir << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string pred_dir, ref_dir, mode = "all", out_file, dump_masks;
};

int run_evaluate(const EvaluateArgs& a) {
    if (a.mode != "mif" && a.mode != "ihc" && a.mode != "texture" && a.mode != "all")
        throw std::runtime_error("--mode must be one of mif|ihc|texture|all");
    std::vector<fs::path> preds = list_images(a.pred_dir);
    std::vector<fs::path> refs = list_images(a.ref_dir);
    if (preds.empty()) throw std::runtime_error("no images in " + a.pred_dir);
    if (preds.size() != refs.size())
        throw std::runtime_error("pred/ref image counts differ (" +
                                 std::to_string(preds.size()) + " vs " +
                                 std::to_string(refs.size()) + ")");
    if (!a.dump_masks.empty()) fs::create_directories(a.dump_masks);

    bool do_texture = a.mode == "texture" || a.mode == "all";
    bool do_mif = a.mode == "mif" || a.mode == "all";
    bool do_ihc = a.mode == "ihc" || a.mode == "all";

    json pairs = json::array();
    std::vector<RasterImage> pred_set, ref_set;
    double sum_psnr = 0, sum_ssim = 0, sum_mse = 0;
    double sum_dice = 0, sum_iou = 0, sum_hd = 0;
    int seg_count = 0;

    for (size_t i = 0; i < preds.size(); ++i) {
        RasterImage p = load_image(preds[i].string());
        RasterImage r = load_image(refs[i].string());
        if (p.height != r.height || p.width != r.width || p.channels != r.channels)
            throw std::runtime_error("pair " + preds[i].filename().string() +
                                     ": pred/ref dims differ");
        std::string stem = preds[i].stem().string();
        json entry = {{"id", stem}};
        if (do_texture) {
            TextureMetrics t = texture_metrics(p, r);
            entry["texture"] = {{"psnr", t.psnr}, {"ssim", t.ssim}, {"mse", t.mse}};
            sum_psnr += t.psnr;
            sum_ssim += t.ssim;
            sum_mse += t.mse;
        }
        auto add_seg = [&](const std::string& name, const BinaryMask& mp,
                           const BinaryMask& mr, json& dst) {
            SegmentationMetrics s = segmentation_metrics(mp, mr);
            dst[name] = seg_to_json(s);
            sum_dice += s.dice;
            sum_iou += s.iou;
            sum_hd += s.hd;
            ++seg_count;
            if (!a.dump_masks.empty()) {
                dump_mask(mp, (fs::path(a.dump_masks) / (stem + "_" + name + "_pred.png")).string());
                dump_mask(mr, (fs::path(a.dump_masks) / (stem + "_" + name + "_ref.png")).string());
            }
        };
        if (do_mif && p.channels == 3) {
            MifMasks mp = mif_channel_masks(p);
            MifMasks mr = mif_channel_masks(r);
            json seg = json::object();
            add_seg("dapi", mp.dapi, mr.dapi, seg);
            add_seg("cd3", mp.cd3, mr.cd3, seg);
            add_seg("panck", mp.panck, mr.panck, seg);
            entry["mif_segmentation"] = seg;
        }
        if (do_ihc && p.channels == 3) {
            json seg = json::object();
            add_seg("dab", ihc_dab_mask(p), ihc_dab_mask(r), seg);
            entry["ihc_segmentation"] = seg;
        }
        pairs.push_back(std::move(entry));
        pred_set.push_back(std::move(p));
        ref_set.push_back(std::move(r));
    }

    json summary = json::object();
    double n = static_cast<double>(preds.size());
    if (do_texture) {
        summary["psnr"] = sum_psnr / n;
        summary["ssim"] = sum_ssim / n;
        summary["mse"] = sum_mse / n;
    }
    if (seg_count > 0) {
        summary["dice"] = sum_dice / seg_count;
        summary["iou"] = sum_iou / seg_count;
        summary["hd"] = sum_hd / seg_count;
    }
    if (do_texture && preds.size() >= 2) {
        auto embedder = make_tinyconv_embedder(pred_set[0].channels);
        DistributionMetrics dm = distribution_metrics(pred_set, ref_set, *embedder);
        summary["fid"] = dm.fid;
        summary["embedder_id"] = dm.embedder_id;
        summary["fid_regularized"] = dm.covariance_regularized;
    }

    json report = {{"version", 1},
                   {"mode", a.mode},
                   {"pred_dir", a.pred_dir},
                   {"ref_dir", a.ref_dir},
                   {"pairs", pairs},
                   {"summary", summary}};
    write_json_file(report, a.out_file);
    json args = {{"pred", a.pred_dir}, {"ref", a.ref_dir}, {"mode", a.mode}};
    write_provenance(a.out_file + ".provenance.json", "evaluate", args, 0);
    std::cout << "wrote " << a.out_file << "\n";
    return 0;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string out_file;
    std::string format = "md";
};

std::string fmt_cell(const json& summary, const char* key) {
    if (!summary.contains(key)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", summary[key].get<double>());
    return buf;
}

int run_report(const ReportArgs& a) {
    if (a.format != "md" && a.format != "csv")
        throw std::runtime_error("--format must be md or csv");
    static const char* cols[] = {"psnr", "ssim", "mse", "fid", "dice", "iou", "hd"};
    static const char* heads[] = {"PSNR", "SSIM", "MSE", "FID", "Dice", "IoU", "HD"};
    std::ostringstream out;
    if (a.format == "md") {
        out << "| Model |";
        for (const char* h : heads) out << " " << h << " |";
        out << "\n|---|";
        for (size_t i = 0; i < 7; ++i) out << "---|";
        out << "\n";
    } else {
        out << "model";
        for (const char* h : heads) out << "," << h;
        out << "\n";
    }
    for (const std::string& in : a.inputs) {
        json rep = read_json_file(in);
        if (!rep.contains("summary"))
            throw std::runtime_error(in + ": not an evaluate report (no summary)");
        const json& s = rep["summary"];
        std::string label = fs::path(in).stem().string();
        if (a.format == "md") {
            out << "| " << label << " |";
            for (const char* c : cols) out << " " << fmt_cell(s, c) << " |";
            out << "\n";
        } else {
            out << label;
            for (const char* c : cols) out << "," << fmt_cell(s, c);
            out << "\n";
        }
    }
    if (a.out_file.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream f(a.out_file);
        if (!f) throw std::runtime_error("cannot write " + a.out_file);
        f << out.str();
        json args = {{"inputs", a.inputs}, {"format", a.format}};
        write_provenance(a.out_file + ".provenance.json", "report", args, 0);
        std::cout << "wrote " << a.out_file << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coordinate-conditioned paired image translation toolkit"};
    app.require_subcommand(1);

    GenerateArgs ga;
    CLI::App* gen = app.add_subcommand("generate-data", "Generate a synthetic paired dataset");
    gen->add_option("--spec", ga.spec_file, "Spec JSON file");
    gen->add_option("--n", ga.n, "Number of pairs")->required();
    gen->add_option("--out", ga.out_dir, "Output directory")->required();
    auto* gseed = gen->add_option("--seed", ga.seed, "Base seed (overrides spec)");
    gen->add_option("--size", ga.size, "Image size (overrides spec)");
    gen->add_option("--mapping", ga.mapping, "pointwise|contextual|longrange");
    gen->add_option("--blobs", ga.blobs, "Blob count (overrides spec)");
    gen->add_option("--noise-std", ga.noise, "Source noise std (overrides spec)");

    TrainArgs ta;
    CLI::App* tr = app.add_subcommand("train", "Train a model on a paired dataset");
    tr->add_option("--config", ta.config_file, "Config JSON")->required();
    tr->add_option("--data", ta.data, "Dataset directory or manifest path")->required();
    tr->add_option("--out", ta.out_dir, "Output directory")->required();
    auto* tseed = tr->add_option("--seed", ta.seed, "Seed (overrides config)");
    tr->add_option("--steps", ta.steps, "Step count (overrides config)");

    InferArgs ia;
    CLI::App* inf = app.add_subcommand("infer", "Translate images with a checkpoint");
    inf->add_option("--checkpoint", ia.checkpoint, "Checkpoint JSON")->required();
    inf->add_option("--input", ia.input, "Input image or directory")->required();
    inf->add_option("--out", ia.out_dir, "Output directory")->required();
    inf->add_option("--scale", ia.scale, "Output scale factor");
    inf->add_option("--tile", ia.tile, "Tile size (0 = whole image)");
    inf->add_option("--overlap", ia.overlap, "Tile overlap in pixels");
    inf->add_option("--bit-depth", ia.bit_depth, "Output bit depth (8 or 16)");

    EvaluateArgs ea;
    CLI::App* ev = app.add_subcommand("evaluate", "Compute metrics on prediction/reference dirs");
    ev->add_option("--pred", ea.pred_dir, "Prediction directory")->required();
    ev->add_option("--ref", ea.ref_dir, "Reference directory")->required();
    ev->add_option("--mode", ea.mode, "mif|ihc|texture|all");
    ev->add_option("--out", ea.out_file, "Report JSON path")->required();
    ev->add_option("--dump-masks", ea.dump_masks, "Directory for audit mask PNGs");

    ReportArgs ra;
    CLI::App* rp = app.add_subcommand("report", "Render a metrics table from report JSONs");
    rp->add_option("reports", ra.inputs, "Evaluate report JSON files")->required();
    rp->add_option("--out", ra.out_file, "Output file (stdout if omitted)");
    rp->add_option("--format", ra.format, "md|csv");

    if (argc > 1 && argv[1][0] != '-') {
        static const char* known[] = {"generate-data", "train", "infer", "evaluate", "report"};
        bool found = false;
        for (const char* k : known)
            if (argv[1] == std::string(k)) found = true;
        if (!found) {
            std::cerr << app.help() << "error: unknown subcommand '" << argv[1] << "'\n";
            return 2;
        }
    }

    try {
        app.parse(argc, argv);
        ga.seed_set = gseed->count() > 0;
        ta.seed_set = tseed->count() > 0;
        if (gen->parsed()) return run_generate(ga);
        if (tr->parsed()) return run_train(ta);
        if (inf->parsed()) return run_infer(ia);
        if (ev->parsed()) return run_evaluate(ea);
        if (rp->parsed()) return run_report(ra);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::RequiredError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CLI::ConversionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
