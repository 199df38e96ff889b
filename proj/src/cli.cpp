#include "cardiomix/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "cardiomix/config.hpp"
#include "cardiomix/errors.hpp"
#include "cardiomix/eval.hpp"
#include "cardiomix/explain.hpp"
#include "cardiomix/manifest.hpp"
#include "cardiomix/pnm.hpp"
#include "cardiomix/preprocess.hpp"
#include "cardiomix/synthetic.hpp"

namespace fs = std::filesystem;

namespace cardiomix {

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw UsageError("write failed for '" + path.string() + "'");
}

fs::path prepare_out_dir(const std::string& out, const RunConfig& cfg) {
    fs::path dir(out);
    fs::create_directories(dir);
    write_text_file(dir / "config.resolved", serialize_config(cfg));
    return dir;
}

std::string sanitize_id(const std::string& id) {
    std::string s = id;
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_'))
            c = '_';
    return s;
}

Rect scale_box(const Rect& box, int src_w, int src_h, int dst_w, int dst_h) {
    const double sx = static_cast<double>(dst_w) / src_w;
    const double sy = static_cast<double>(dst_h) / src_h;
    Rect out;
    out.x0 = std::clamp(static_cast<int>(std::floor(box.x0 * sx)), 0, dst_w);
    out.y0 = std::clamp(static_cast<int>(std::floor(box.y0 * sy)), 0, dst_h);
    out.x1 = std::clamp(static_cast<int>(std::ceil(box.x1 * sx)), out.x0, dst_w);
    out.y1 = std::clamp(static_cast<int>(std::ceil(box.y1 * sy)), out.y0, dst_h);
    return out;
}

Dataset preprocess_dataset(const Dataset& ds, const PreprocessConfig& pc) {
    pc.validate();
    std::vector<Example> out;
    out.reserve(ds.size());
    for (const Example& ex : ds.examples()) {
        Example copy = ex;
        if (copy.lesion_box)
            copy.lesion_box = scale_box(*copy.lesion_box, ex.image.width(), ex.image.height(),
                                        pc.target_width, pc.target_height);
        copy.image = preprocess(ex.image, pc);
        out.push_back(std::move(copy));
    }
    return Dataset(std::move(out), ds.class_names());
}

// Optional boxes.csv next to the manifest: `path,x0,y0,x1,y1` rows keyed by
// the manifest's path column.
void attach_boxes(Dataset& ds, const std::string& manifest_path) {
    const fs::path boxes_path = fs::path(manifest_path).parent_path() / "boxes.csv";
    std::ifstream in(boxes_path);
    if (!in) return;
    std::map<std::string, Rect> boxes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;  // header
        std::istringstream ls(line);
        std::string path_part;
        if (!std::getline(ls, path_part, ',')) continue;
        Rect r;
        char comma;
        if (ls >> r.x0 >> comma >> r.y0 >> comma >> r.x1 >> comma >> r.y1)
            boxes[path_part] = r;
    }
    if (boxes.empty()) return;
    std::vector<Example> examples = ds.examples();
    for (Example& ex : examples) {
        const auto it = boxes.find(ex.id);
        if (it != boxes.end()) ex.lesion_box = it->second;
    }
    ds = Dataset(std::move(examples), ds.class_names());
}

int cmd_gen(const RunConfig& cfg, const std::string& out) {
    SyntheticSpec spec = cfg.gen;
    spec.seed = derive_seed(cfg.seed, kStageGen);
    const Dataset ds = generate_synthetic(spec);
    const fs::path dir = prepare_out_dir(out, cfg);

    std::ostringstream manifest, boxes;
    manifest << "path,label\n";
    boxes << "path,x0,y0,x1,y1\n";
    for (const Example& ex : ds.examples()) {
        const std::string file = ex.id + ".pgm";
        save_pgm(ex.image, (dir / file).string());
        manifest << file << "," << ex.label.argmax() << "\n";
        if (ex.lesion_box)
            boxes << file << "," << ex.lesion_box->x0 << "," << ex.lesion_box->y0 << ","
                  << ex.lesion_box->x1 << "," << ex.lesion_box->y1 << "\n";
    }
    write_text_file(dir / "manifest.csv", manifest.str());
    write_text_file(dir / "boxes.csv", boxes.str());
    std::cout << "wrote " << ds.size() << " images to " << dir.string() << "\n";
    return 0;
}

int cmd_augment(const RunConfig& cfg, const std::string& data, const std::string& out,
                int n_out) {
    Dataset ds = preprocess_dataset(load_manifest(data, cfg.num_classes), cfg.preprocess);
    const MixParams params = cfg.mix_params(derive_seed(cfg.seed, kStageAugment));
    const std::vector<MixedExample> mixed = augment_batch(ds, params, n_out);

    const fs::path dir = prepare_out_dir(out, cfg);
    std::ostringstream sidecar;
    sidecar << "path,lambda_eff,src_i,src_j\n";
    char buf[128];
    for (std::size_t i = 0; i < mixed.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "mix_%04zu.pgm", i);
        const std::string file = buf;
        save_pgm(mixed[i].image, (dir / file).string());
        std::snprintf(buf, sizeof(buf), "%.12g", mixed[i].lambda_eff);
        sidecar << file << "," << buf << "," << mixed[i].src_i << "," << mixed[i].src_j
                << "\n";
    }
    write_text_file(dir / "mixes.csv", sidecar.str());
    std::cout << "wrote " << mixed.size() << " mixed samples to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data, const std::string& out) {
    const Dataset ds =
        preprocess_dataset(load_manifest(data, cfg.num_classes), cfg.preprocess);
    const TrainResult result = train(ds, cfg.model_spec(), cfg.train_config());

    const fs::path dir = prepare_out_dir(out, cfg);
    save_checkpoint(result.params, (dir / "model.cmix").string());
    std::ostringstream history;
    history << "epoch,mean_loss\n";
    char buf[48];
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%.12g", result.loss_history[e]);
        history << e << "," << buf << "\n";
    }
    write_text_file(dir / "loss_history.csv", history.str());
    if (!result.loss_history.empty())
        std::cout << "final mean loss " << result.loss_history.back() << "\n";
    std::cout << "checkpoint written to " << (dir / "model.cmix").string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& data, const std::string& out) {
    const Dataset ds =
        preprocess_dataset(load_manifest(data, cfg.num_classes), cfg.preprocess);
    const CvResult cv =
        run_cv(ds, cfg.model_spec(), cfg.train_config(), cfg.folds, cfg.effective_threads());

    const fs::path dir = prepare_out_dir(out, cfg);
    const std::string report = render_report(cv.report, arch_name(cfg.arch));
    write_text_file(dir / "report.txt", report);
    write_text_file(dir / "folds.csv", folds_csv(cv.report));
    write_text_file(dir / "roc.csv", roc_csv(cv.pooled));
    std::cout << report;
    return 0;
}

int cmd_explain(const RunConfig& cfg, const std::string& data, const std::string& checkpoint,
                const std::string& out, const std::string& method,
                const std::vector<std::string>& images, bool want_csv) {
    const ModelParams params = load_checkpoint(checkpoint);
    if (params.spec().input_c != 1)
        throw UsageError("explain supports single-channel models");

    Dataset raw = load_manifest(data, params.spec().num_classes);
    attach_boxes(raw, data);
    PreprocessConfig pc = cfg.preprocess;
    pc.target_height = params.spec().input_h;  // model input wins
    pc.target_width = params.spec().input_w;
    const Dataset ds = preprocess_dataset(raw, pc);

    std::set<std::string> wanted(images.begin(), images.end());
    for (const std::string& id : wanted) {
        bool known = false;
        for (const Example& ex : ds.examples()) known = known || ex.id == id;
        if (!known) throw UsageError("--images: no example with id '" + id + "'");
    }

    const fs::path dir = prepare_out_dir(out, cfg);
    int hits = 0, scored = 0, rendered = 0;
    for (const Example& ex : ds.examples()) {
        if (!wanted.empty() && wanted.find(ex.id) == wanted.end()) continue;
        AttributionMap map;
        if (method == "occlusion")
            map = occlusion_map(params, ex.image, cfg.occlusion, cfg.effective_threads());
        else if (method == "saliency")
            map = saliency_grad(params, ex.image, cfg.occlusion.target_class);
        else if (method == "gradcam")
            map = gradcam(params, ex.image, cfg.occlusion.target_class);
        else
            throw UsageError("unknown explain method '" + method + "'");

        const std::string stem = "heat_" + sanitize_id(ex.id);
        render_heatmap(map, ex.image, (dir / (stem + ".ppm")).string());
        if (want_csv) write_text_file(dir / (stem + ".csv"), attribution_csv(map));
        ++rendered;
        if (ex.lesion_box) {
            ++scored;
            if (pointing_game(map, *ex.lesion_box)) ++hits;
        }
    }
    std::cout << "rendered " << rendered << " heatmaps to " << dir.string() << "\n";
    if (scored > 0) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "pointing game: %d/%d hits (rate %.4f)\n", hits,
                      scored, static_cast<double>(hits) / scored);
        std::cout << buf;
        std::ostringstream pointing;
        pointing << "hits,total,rate\n"
                 << hits << "," << scored << ",";
        std::snprintf(buf, sizeof(buf), "%.12g", static_cast<double>(hits) / scored);
        pointing << buf << "\n";
        write_text_file(dir / "pointing.csv", pointing.str());
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Lesion-classification experiment pipeline: synthetic data, CutMix/MixUp "
                 "augmentation, small trainable classifiers, k-fold evaluation, and "
                 "occlusion/Grad-CAM heatmaps."};
    app.name("cardiomix");
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    std::vector<std::string> overrides;

    struct SubState {
        CLI::App* sub = nullptr;
        std::string out;
        std::string data;
        // flag targets; applied only when counted
        std::uint64_t seed = 0;
        int threads = 0;
        std::string arch, method;
        double alpha = 0.0, lr = 0.0, fraction = 0.0, momentum = 0.0;
        int epochs = 0, batch = 0, folds = 0, per_class = 0, height = 0, width = 0;
        double radius_min = 0.0, radius_max = 0.0, contrast = 0.0, noise = 0.0;
        int window = 0, stride = 0;
        double baseline = 0.0;
        int target_class = 0;
        std::string target;
        bool augment_on = false;
    };

    auto add_common = [&](CLI::App* sub, SubState& st) {
        st.sub = sub;
        sub->add_option("--config", config_path, "config file (key = value lines)");
        sub->add_option("--set", overrides,
                        "extra config assignment key=value (repeatable, applied after the "
                        "config file, before other flags)");
        sub->add_option("--seed", st.seed, "global experiment seed");
        sub->add_option("--threads", st.threads, "worker threads (0 = all cores, 1 = serial)")
            ->envname("CARDIOMIX_THREADS");
        sub->add_option("--out", st.out, "output directory")->required();
    };

    SubState gen_st, aug_st, train_st, eval_st, explain_st;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic lesion dataset");
    add_common(gen, gen_st);
    gen->add_option("--per-class", gen_st.per_class, "examples per class");
    gen->add_option("--height", gen_st.height, "image height");
    gen->add_option("--width", gen_st.width, "image width");
    gen->add_option("--radius-min", gen_st.radius_min, "minimum lesion radius, pixels");
    gen->add_option("--radius-max", gen_st.radius_max, "maximum lesion radius, pixels");
    gen->add_option("--contrast", gen_st.contrast, "lesion brightness in [0,1]");
    gen->add_option("--noise", gen_st.noise, "background level in [0,1]");

    int n_out = 16;
    CLI::App* aug = app.add_subcommand("augment", "dump mixed samples for inspection");
    add_common(aug, aug_st);
    aug->add_option("--data", aug_st.data, "dataset manifest CSV")->required();
    aug->add_option("--n", n_out, "number of mixed samples");
    aug->add_option("--method", aug_st.method, "cutmix|mixup");
    aug->add_option("--alpha", aug_st.alpha, "Beta concentration");

    auto add_train_flags = [&](CLI::App* sub, SubState& st) {
        sub->add_option("--data", st.data, "dataset manifest CSV")->required();
        sub->add_option("--arch", st.arch, "logistic|smallcnn|tinyvit");
        sub->add_option("--epochs", st.epochs, "training epochs");
        sub->add_option("--batch", st.batch, "batch size");
        sub->add_option("--lr", st.lr, "learning rate");
        sub->add_option("--momentum", st.momentum, "SGD momentum");
        sub->add_flag("--augment", st.augment_on, "mix a share of every training batch");
        sub->add_option("--method", st.method, "cutmix|mixup");
        sub->add_option("--alpha", st.alpha, "Beta concentration");
        sub->add_option("--fraction", st.fraction, "mixed share of each batch in [0,1]");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "fit a model and write a checkpoint");
    add_common(train_cmd, train_st);
    add_train_flags(train_cmd, train_st);

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "stratified k-fold cross-validation report");
    add_common(eval_cmd, eval_st);
    add_train_flags(eval_cmd, eval_st);
    eval_cmd->add_option("--folds", eval_st.folds, "fold count");

    std::string checkpoint_path, explain_method = "occlusion";
    std::vector<std::string> explain_images;
    bool explain_csv = false;
    CLI::App* explain_cmd = app.add_subcommand("explain", "attribution heatmaps");
    add_common(explain_cmd, explain_st);
    explain_cmd->add_option("--data", explain_st.data, "dataset manifest CSV")->required();
    explain_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    explain_cmd->add_option("--method", explain_method, "occlusion|saliency|gradcam");
    explain_cmd->add_option("--images", explain_images,
                            "manifest paths to explain (default: all)");
    explain_cmd->add_flag("--csv", explain_csv, "also dump raw attribution grids as CSV");
    explain_cmd->add_option("--window", explain_st.window, "occlusion window, pixels");
    explain_cmd->add_option("--stride", explain_st.stride, "occlusion stride, pixels");
    explain_cmd->add_option("--baseline", explain_st.baseline, "occlusion fill value");
    explain_cmd->add_option("--target", explain_st.target, "logit|probability");
    explain_cmd->add_option("--class", explain_st.target_class, "attribution class index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const std::string& ov : overrides) {
            const std::size_t eq = ov.find('=');
            if (eq == std::string::npos)
                throw UsageError("--set expects key=value, got '" + ov + "'");
            apply_config_entry(cfg, ov.substr(0, eq), ov.substr(eq + 1), "--set " + ov);
        }

        SubState* st = nullptr;
        for (SubState* cand : {&gen_st, &aug_st, &train_st, &eval_st, &explain_st})
            if (cand->sub && cand->sub->parsed()) st = cand;
        CLI::App* sub = st->sub;

        auto counted = [&](const char* flag) { return sub->count(flag) > 0; };
        if (counted("--seed")) cfg.seed = st->seed;
        if (counted("--threads")) {
            if (st->threads < 0) throw UsageError("--threads must be >= 0");
            cfg.threads = st->threads;
        }
        if (sub->get_option_no_throw("--arch") && counted("--arch")) {
            const std::optional<Arch> a = arch_from_name(st->arch);
            if (!a) throw UsageError("unknown arch '" + st->arch + "'");
            cfg.arch = *a;
        }
        if (sub->get_option_no_throw("--method") && counted("--method") && sub != explain_cmd) {
            const std::optional<MixMethod> m = mix_method_from_name(st->method);
            if (!m) throw UsageError("unknown method '" + st->method + "' (cutmix|mixup)");
            cfg.mix_method = *m;
        }
        if (sub->get_option_no_throw("--alpha") && counted("--alpha")) {
            if (!(st->alpha > 0.0)) throw UsageError("--alpha must be > 0");
            cfg.mix_alpha = st->alpha;
        }
        if (sub->get_option_no_throw("--epochs") && counted("--epochs")) {
            if (st->epochs < 0) throw UsageError("--epochs must be >= 0");
            cfg.epochs = st->epochs;
        }
        if (sub->get_option_no_throw("--batch") && counted("--batch")) {
            if (st->batch < 1) throw UsageError("--batch must be >= 1");
            cfg.batch_size = st->batch;
        }
        if (sub->get_option_no_throw("--lr") && counted("--lr")) {
            if (st->lr < 0.0) throw UsageError("--lr must be >= 0");
            cfg.learning_rate = st->lr;
        }
        if (sub->get_option_no_throw("--momentum") && counted("--momentum")) {
            if (st->momentum < 0.0 || st->momentum >= 1.0)
                throw UsageError("--momentum must be in [0,1)");
            cfg.momentum = st->momentum;
        }
        if (sub->get_option_no_throw("--fraction") && counted("--fraction")) {
            if (st->fraction < 0.0 || st->fraction > 1.0)
                throw UsageError("--fraction must be in [0,1]");
            cfg.mix_fraction = st->fraction;
        }
        if (sub->get_option_no_throw("--augment") && st->augment_on) cfg.mix_enabled = true;
        if (sub->get_option_no_throw("--folds") && counted("--folds")) {
            if (st->folds < 2) throw UsageError("--folds must be >= 2");
            cfg.folds = st->folds;
        }

        if (sub == gen) {
            if (counted("--per-class")) {
                if (st->per_class < 1) throw UsageError("--per-class must be >= 1");
                cfg.gen.per_class = st->per_class;
            }
            if (counted("--height")) cfg.gen.height = st->height;
            if (counted("--width")) cfg.gen.width = st->width;
            if (counted("--radius-min")) cfg.gen.radius_min = st->radius_min;
            if (counted("--radius-max")) cfg.gen.radius_max = st->radius_max;
            if (counted("--contrast")) cfg.gen.contrast = st->contrast;
            if (counted("--noise")) cfg.gen.noise = st->noise;
        }
        if (sub == explain_cmd) {
            if (counted("--window")) cfg.occlusion.window = st->window;
            if (counted("--stride")) cfg.occlusion.stride = st->stride;
            if (counted("--baseline")) cfg.occlusion.baseline = st->baseline;
            if (counted("--class")) cfg.occlusion.target_class = st->target_class;
            if (counted("--target")) {
                const std::optional<AttributionTarget> t =
                    attribution_target_from_name(st->target);
                if (!t) throw UsageError("unknown target '" + st->target + "'");
                cfg.occlusion.target = *t;
            }
        }

        if (sub == gen) return cmd_gen(cfg, st->out);
        if (sub == aug) return cmd_augment(cfg, st->data, st->out, n_out);
        if (sub == train_cmd) return cmd_train(cfg, st->data, st->out);
        if (sub == eval_cmd) return cmd_eval(cfg, st->data, st->out);
        return cmd_explain(cfg, st->data, checkpoint_path, st->out, explain_method,
                           explain_images, explain_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace cardiomix
