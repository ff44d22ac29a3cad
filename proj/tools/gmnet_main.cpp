// gmnet command line: synthetic corpus generation, training, captioning,
// metric evaluation, gradient checking and the three-mode ablation.
//
// Exit codes: 0 success, 1 check failure, 2 usage/data error, 3 numeric
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmnet/checkpoint.hpp"
#include "gmnet/corpus.hpp"
#include "gmnet/features.hpp"
#include "gmnet/gradcheck.hpp"
#include "gmnet/manifest.hpp"
#include "gmnet/metrics.hpp"
#include "gmnet/model.hpp"
#include "gmnet/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gmnet;

namespace {

RunManifest begin_manifest(const std::string& command, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.seed = seed;
    m.git_describe = current_git_describe();
    return m;
}

void finish_manifest(RunManifest& m, const ManifestTimer& timer, const std::string& path) {
    m.started_at = timer.started_at();
    m.wall_seconds = timer.seconds();
    write_manifest(path, m);
}

// --- synth ---------------------------------------------------------------

struct SynthArgs {
    std::string out_dir;
    SyntheticSpec spec;
};

int run_synth(const SynthArgs& args) {
    ManifestTimer timer;
    const auto corpus = generate_synthetic(args.spec);
    fs::create_directories(args.out_dir);
    const std::string feat_path = (fs::path(args.out_dir) / "features.gmnf").string();
    const std::string cap_path = (fs::path(args.out_dir) / "captions.jsonl").string();
    save_features(feat_path, corpus.clips);
    save_caption_records(cap_path, corpus.records);

    RunManifest m = begin_manifest("synth", args.spec.seed);
    m.config = nlohmann::json{{"n_clips", args.spec.n_clips}, {"m", args.spec.m},
                              {"d", args.spec.d}, {"vocab_size", args.spec.vocab_size},
                              {"len_min", args.spec.len_min}, {"len_max", args.spec.len_max},
                              {"seed", args.spec.seed}};
    m.outputs = {feat_path, cap_path};
    finish_manifest(m, timer, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "wrote " << corpus.clips.size() << " clips to " << args.out_dir << "\n";
    return 0;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
    std::string mode = "GMNET";
    std::string features;
    std::string captions;
    std::string ckpt;
    std::string log_csv;
    ModelConfig cfg;
    TrainOptions opts;
};

TrainResult train_from_files(const TrainArgs& args, ModelConfig cfg) {
    const auto clips = load_features(args.features);
    const auto records = load_caption_records(args.captions);
    if (!clips.empty()) {
        cfg.m = clips[0].frames();
        cfg.d = clips[0].dims();
    }
    std::vector<CaptionRecord> train_recs;
    TrainOptions opts = args.opts;
    opts.val_records.clear();
    for (const auto& r : records) {
        if (r.split == Split::Train) train_recs.push_back(r);
        else if (r.split == Split::Val) opts.val_records.push_back(r);
    }
    if (train_recs.empty())
        throw UsageError("no records with split \"train\" in " + args.captions);
    return train(cfg, clips, train_recs, opts);
}

int run_train(const TrainArgs& args) {
    ManifestTimer timer;
    ModelConfig cfg = args.cfg;
    cfg.mode = parse_mode(args.mode);
    TrainResult result = train_from_files(args, cfg);

    save_checkpoint(args.ckpt, result.params, result.cfg, result.vocab);
    const std::string log_path = args.log_csv.empty() ? args.ckpt + ".loss.csv" : args.log_csv;
    write_loss_csv(log_path, result.log);

    RunManifest m = begin_manifest("train", result.cfg.seed);
    m.config = result.cfg;
    m.config["epochs"] = args.opts.epochs;
    m.config["batch_size"] = args.opts.batch_size;
    m.config["shuffle_fingerprint"] = result.log.shuffle_fingerprint;
    m.inputs = {args.features, args.captions};
    m.outputs = {args.ckpt, log_path};
    finish_manifest(m, timer, args.ckpt + ".manifest.json");

    const auto& last = result.log.epochs.back();
    std::cout << "trained " << mode_name(result.cfg.mode) << " for " << args.opts.epochs
              << " epochs; final L_all " << last.loss_all << " (L " << last.loss_main
              << ", L_e " << last.loss_guide << ")\n";
    return 0;
}

// --- caption ---------------------------------------------------------------

struct CaptionArgs {
    std::string ckpt;
    std::string features;
    std::string out;
};

int run_caption(const CaptionArgs& args) {
    ManifestTimer timer;
    Checkpoint ckpt = load_checkpoint(args.ckpt);
    const auto clips = load_features(args.features);
    std::vector<Prediction> preds;
    preds.reserve(clips.size());
    for (const auto& clip : clips) {
        const auto words = greedy_decode(ckpt.cfg, ckpt.params, clip);
#ifndef NDEBUG
        if (ckpt.cfg.has_guidance()) {
            // inference must not depend on the guidance branch
            ParamStore zeroed = ckpt.params;
            zero_guidance(zeroed);
            if (greedy_decode(ckpt.cfg, zeroed, clip) != words)
                throw ConfigError("guidance parameters influenced inference on clip " +
                                  clip.clip_id);
        }
#endif
        preds.push_back(Prediction{clip.clip_id, decode_caption(ckpt.vocab, words)});
    }
    save_predictions(args.out, preds);

    RunManifest m = begin_manifest("caption", ckpt.cfg.seed);
    m.config = ckpt.cfg;
    m.inputs = {args.ckpt, args.features};
    m.outputs = {args.out};
    finish_manifest(m, timer, args.out + ".manifest.json");
    std::cout << "wrote " << preds.size() << " captions to " << args.out << "\n";
    return 0;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
    std::string preds;
    std::string refs;
    std::string report;
};

MetricReport evaluate_files(const std::string& preds_path, const std::string& refs_path,
                            const std::set<std::string>* clip_filter = nullptr) {
    const auto preds = load_predictions(preds_path);
    const auto records = load_caption_records(refs_path);
    if (preds.empty()) throw UsageError("no predictions in " + preds_path);

    std::map<std::string, std::vector<std::string>> refs_by_id;
    for (const auto& r : records) refs_by_id[r.clip_id].push_back(r.caption);

    std::vector<EvalPair> pairs;
    std::vector<std::string> unmatched;
    for (const auto& p : preds) {
        if (clip_filter && !clip_filter->count(p.clip_id)) continue;
        auto it = refs_by_id.find(p.clip_id);
        if (it == refs_by_id.end()) {
            unmatched.push_back(p.clip_id);
            continue;
        }
        pairs.push_back(make_eval_pair(p.clip_id, p.caption, it->second));
    }
    if (!unmatched.empty()) {
        std::string msg = "predictions without references:";
        for (const auto& id : unmatched) msg += " " + id;
        throw DataError(msg);
    }
    if (pairs.empty()) throw UsageError("no prediction/reference pairs to evaluate");
    return evaluate_corpus(pairs);
}

void print_percent_table(const MetricReport& r) {
    std::printf("%-8s %10s %10s\n", "metric", "raw", "percent");
    std::printf("%-8s %10.4f %10.2f\n", "BLEU_4", r.bleu4, r.bleu4_percent());
    std::printf("%-8s %10.4f %10.2f\n", "ROUGE_L", r.rouge_l, r.rouge_l_percent());
    std::printf("%-8s %10.4f %10.2f\n", "CIDEr", r.cider, r.cider_percent());
}

int run_evaluate(const EvaluateArgs& args) {
    ManifestTimer timer;
    MetricReport report = evaluate_files(args.preds, args.refs);
    print_percent_table(report);
    nlohmann::json j = report;
    std::ofstream out(args.report);
    if (!out) throw IoError("cannot write report: " + args.report);
    out << j.dump(2) << "\n";
    out.close();

    RunManifest m = begin_manifest("evaluate", 0);
    m.config = nlohmann::json::object();
    m.inputs = {args.preds, args.refs};
    m.outputs = {args.report};
    finish_manifest(m, timer, args.report + ".manifest.json");
    return 0;
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
    std::string config = "tiny";
    std::string report = "gradcheck_report.json";
    double eps_model = 1e-4;
    bool inject_ln_fault = false;
};

struct ComponentResult {
    std::string name;
    double max_rel_err = 0.0;
};

// Per-layer composites probed at eps 1e-5, then the full joint loss of each
// mode at the tiny configuration (eps 1e-4: the joint loss is ~26 in
// magnitude, so smaller eps leaves central differences noise-bound).
std::vector<ComponentResult> run_gradcheck_components(double eps_model) {
    std::vector<ComponentResult> out;
    Rng rng(6);
    auto rnd = [&](std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
        return t;
    };

    auto check = [&](const std::string& name, const ScalarBuilder& f,
                     std::vector<std::pair<std::string, Tensor>> point, double eps) {
        out.push_back(ComponentResult{name, grad_check(f, std::move(point), eps).max_rel_err});
    };

    check("matmul", [](Graph&, const std::vector<Var>& l) {
        return sum_all(matmul(l[0], l[1]));
    }, {{"a", rnd({3, 4})}, {"b", rnd({4, 2})}}, 1e-5);

    check("elementwise", [](Graph&, const std::vector<Var>& l) {
        return sum_all(mul(tanh(l[0]), sigmoid(add(l[0], l[1]))));
    }, {{"a", rnd({6})}, {"b", rnd({6})}}, 1e-5);

    check("softmax", [](Graph&, const std::vector<Var>& l) {
        return sum_all(mul(softmax(l[0]), l[1]));
    }, {{"a", rnd({5})}, {"w", rnd({5})}}, 1e-5);

    check("layer_norm", [](Graph&, const std::vector<Var>& l) {
        return sum_all(mul(layer_norm(l[0], l[1], l[2], 1e-5), l[3]));
    }, {{"a", rnd({6})}, {"gain", rnd({6})}, {"bias", rnd({6})}, {"w", rnd({6})}}, 1e-5);

    check("reduce_time", [](Graph&, const std::vector<Var>& l) {
        return sum_all(mul(reduce_time(l[0]), l[1]));
    }, {{"a", rnd({3, 4})}, {"w", rnd({4})}}, 1e-5);

    check("cross_entropy", [](Graph&, const std::vector<Var>& l) {
        return cross_entropy(l[0], {2, 0, 3}, {1, 1, 1});
    }, {{"logits", rnd({3, 5})}}, 1e-5);

    check("embedding", [](Graph&, const std::vector<Var>& l) {
        return sum_all(mul(row_lookup(l[0], 1), l[1]));
    }, {{"table", rnd({4, 3})}, {"w", rnd({3})}}, 1e-5);

    check("attention", [](Graph&, const std::vector<Var>& l) {
        Var scores = matvec(tanh(add(matmul(l[0], l[1]), vecmat(l[4], l[2]))), l[3]);
        Var ctx = vecmat(softmax(scores), l[0]);
        return sum_all(mul(ctx, ctx));
    }, {{"features", rnd({4, 3})}, {"w", rnd({3, 5})}, {"u", rnd({2, 5})},
        {"v", rnd({5})}, {"h", rnd({2})}}, 1e-5);

    check("lstm_step", [](Graph&, const std::vector<Var>& l) {
        Var z = add(matvec(l[0], concat(l[2], l[3])), l[1]);
        Var c = add(mul(sigmoid(slice(z, 4, 4)), l[4]),
                    mul(sigmoid(slice(z, 0, 4)), tanh(slice(z, 8, 4))));
        Var h = mul(sigmoid(slice(z, 12, 4)), tanh(c));
        return sum_all(mul(h, h));
    }, {{"w", rnd({16, 7})}, {"b", rnd({16})}, {"x", rnd({3})}, {"h0", rnd({4})},
        {"c0", rnd({4})}}, 1e-5);

    // joint loss per mode at the tiny configuration
    for (Mode mode : {Mode::SA, Mode::SA_LN, Mode::GMNET}) {
        ModelConfig cfg;
        cfg.mode = mode;
        cfg.m = 3;
        cfg.d = 4;
        cfg.proj = 6;
        cfg.embed = 5;
        cfg.hidden = 5;
        cfg.vocab = 7;
        cfg.l_max = 8;
        cfg.seed = 6;
        ParamStore store = init_model(cfg);
        Rng clip_rng(17);
        FeatureClip clip;
        clip.clip_id = "tiny";
        clip.features = Tensor({cfg.m, cfg.d});
        for (std::size_t i = 0; i < clip.features.numel(); ++i)
            clip.features[i] = clip_rng.uniform(-1.0, 1.0);
        const VocabEncodedCaption gt{{kBos, 4, 5, 6, 4, kEos}};

        std::vector<std::pair<std::string, Tensor>> point;
        for (const auto& name : store.names()) point.emplace_back(name, store.value(name));
        ParamStore empty;
        auto f = [&](Graph& g, const std::vector<Var>& leaves) {
            ParamBinder binder(g, empty);
            for (std::size_t i = 0; i < point.size(); ++i)
                binder.bind(point[i].first, leaves[i]);
            return forward_train(cfg, binder, clip, gt).loss_all;
        };
        auto res = grad_check(f, point, eps_model);
        for (const auto& [leaf_name, err] : res.per_leaf)
            out.push_back(ComponentResult{mode_name(mode) + "/" + leaf_name, err});
    }
    return out;
}

int run_gradcheck(const GradcheckArgs& args) {
    ManifestTimer timer;
    if (args.config != "tiny")
        throw UsageError("unknown gradcheck config \"" + args.config + "\" (only: tiny)");
    testhook::corrupt_layer_norm_backward = args.inject_ln_fault;
    const auto components = run_gradcheck_components(args.eps_model);
    testhook::corrupt_layer_norm_backward = false;

    constexpr double threshold = 1e-4;
    std::vector<std::string> failures;
    std::printf("%-24s %14s  %s\n", "component", "max_rel_err", "status");
    for (const auto& c : components) {
        const bool ok = c.max_rel_err < threshold;
        std::printf("%-24s %14.3e  %s\n", c.name.c_str(), c.max_rel_err, ok ? "PASS" : "FAIL");
        if (!ok) failures.push_back(c.name);
    }
    if (!failures.empty()) {
        std::string joined;
        for (const auto& f : failures) joined += (joined.empty() ? "" : ", ") + f;
        std::printf("gradcheck FAILED: %s\n", joined.c_str());
    } else {
        std::printf("gradcheck passed: %zu components below %g\n", components.size(), threshold);
    }

    if (!args.report.empty()) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& c : components)
            rows.push_back({{"component", c.name}, {"max_rel_err", c.max_rel_err}});
        nlohmann::json j{{"threshold", threshold}, {"components", rows},
                         {"pass", failures.empty()}};
        std::ofstream out(args.report);
        if (!out) throw IoError("cannot write report: " + args.report);
        out << j.dump(2) << "\n";
        out.close();

        RunManifest m = begin_manifest("gradcheck", 6);
        m.config = nlohmann::json{{"config", args.config}, {"eps_model", args.eps_model},
                                  {"inject_ln_fault", args.inject_ln_fault}};
        m.outputs = {args.report};
        finish_manifest(m, timer, args.report + ".manifest.json");
    }
    return failures.empty() ? 0 : 1;
}

// --- ablate ---------------------------------------------------------------

struct AblateArgs {
    std::string features;
    std::string captions;
    std::string out_dir;
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    ModelConfig cfg;
};

int run_ablate(const AblateArgs& args) {
    ManifestTimer timer;
    const auto all_records = load_caption_records(args.captions);
    std::set<std::string> test_ids;
    for (const auto& r : all_records)
        if (r.split == Split::Test) test_ids.insert(r.clip_id);
    if (test_ids.empty()) throw UsageError("no records with split \"test\" in " + args.captions);
    fs::create_directories(args.out_dir);

    nlohmann::json rows = nlohmann::json::array();
    std::vector<std::uint64_t> fingerprints;
    for (Mode mode : {Mode::SA, Mode::SA_LN, Mode::GMNET}) {
        const fs::path mode_dir = fs::path(args.out_dir) / mode_name(mode);
        fs::create_directories(mode_dir);

        TrainArgs t;
        t.features = args.features;
        t.captions = args.captions;
        t.cfg = args.cfg;
        t.cfg.mode = mode;
        t.opts.epochs = args.epochs;
        t.opts.batch_size = args.batch_size;
        ManifestTimer mode_timer;
        TrainResult result = train_from_files(t, t.cfg);

        const std::string ckpt = (mode_dir / "model.gmck").string();
        const std::string loss_csv = (mode_dir / "loss.csv").string();
        save_checkpoint(ckpt, result.params, result.cfg, result.vocab);
        write_loss_csv(loss_csv, result.log);
        fingerprints.push_back(result.log.shuffle_fingerprint);

        // caption the test split and score it
        const auto clips = load_features(args.features);
        std::vector<Prediction> preds;
        for (const auto& clip : clips) {
            if (!test_ids.count(clip.clip_id)) continue;
            preds.push_back(Prediction{
                clip.clip_id,
                decode_caption(result.vocab, greedy_decode(result.cfg, result.params, clip))});
        }
        const std::string preds_path = (mode_dir / "preds.jsonl").string();
        save_predictions(preds_path, preds);
        MetricReport report = evaluate_files(preds_path, args.captions, &test_ids);

        RunManifest m = begin_manifest("ablate/" + mode_name(mode), result.cfg.seed);
        m.config = result.cfg;
        m.config["epochs"] = args.epochs;
        m.config["batch_size"] = args.batch_size;
        m.config["shuffle_fingerprint"] = result.log.shuffle_fingerprint;
        m.inputs = {args.features, args.captions};
        m.outputs = {ckpt, loss_csv, preds_path};
        finish_manifest(m, mode_timer, (mode_dir / "manifest.json").string());

        rows.push_back({{"mode", mode_name(mode)},
                        {"bleu4", report.bleu4_percent()},
                        {"rouge_l", report.rouge_l_percent()},
                        {"cider", report.cider_percent()},
                        {"final_L", result.log.epochs.back().loss_main},
                        {"final_L_e", result.log.epochs.back().loss_guide},
                        {"shuffle_fingerprint", result.log.shuffle_fingerprint}});
    }

    // identical seed and data order across the three runs
    const bool shared_stream = fingerprints[0] == fingerprints[1] &&
                               fingerprints[1] == fingerprints[2];

    std::printf("%-8s %10s %10s %10s\n", "model", "BLEU_4", "ROUGE_L", "CIDEr");
    for (const auto& row : rows)
        std::printf("%-8s %10.2f %10.2f %10.2f\n", row["mode"].get<std::string>().c_str(),
                    row["bleu4"].get<double>(), row["rouge_l"].get<double>(),
                    row["cider"].get<double>());
    std::printf("shuffle streams identical across modes: %s\n", shared_stream ? "yes" : "NO");

    nlohmann::json j{{"rows", rows}, {"shared_shuffle_stream", shared_stream},
                     {"epochs", args.epochs}, {"seed", args.cfg.seed}};
    const std::string report_path = (fs::path(args.out_dir) / "ablation_report.json").string();
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write report: " + report_path);
    out << j.dump(2) << "\n";
    out.close();

    RunManifest m = begin_manifest("ablate", args.cfg.seed);
    m.config = nlohmann::json{{"epochs", args.epochs}, {"batch_size", args.batch_size},
                              {"proj", args.cfg.proj}, {"embed", args.cfg.embed},
                              {"hidden", args.cfg.hidden}};
    m.inputs = {args.features, args.captions};
    m.outputs = {report_path};
    finish_manifest(m, timer, (fs::path(args.out_dir) / "manifest.json").string());
    return 0;
}

void add_model_flags(CLI::App* sub, ModelConfig& cfg) {
    sub->add_option("--proj", cfg.proj, "projected feature width D'");
    sub->add_option("--embed-dim", cfg.embed, "word embedding width");
    sub->add_option("--hidden", cfg.hidden, "LSTM hidden width");
    sub->add_option("--l-max", cfg.l_max, "max encoded caption length");
    sub->add_option("--eps-ln", cfg.eps_ln, "layer norm epsilon");
    sub->add_option("--lr", cfg.opt.lr, "Adam learning rate");
    sub->add_option("--clip-norm", cfg.clip_norm, "global gradient clip norm");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_flag("--guidance-past-teacher", cfg.guidance_past_teacher,
                  "feed groundtruth prefixes to the guidance past encoder");
    sub->add_flag("--guidance-share-decoder", cfg.guidance_share_decoder,
                  "share decoder weights with the guidance decoder");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"guidance-module captioning over precomputed frame features"};
    app.require_subcommand(1);
    app.fallthrough(true);
    app.set_config("--config", "",
                   "key=value config file; qualify keys by subcommand, e.g. train.epochs=200");

    SynthArgs synth_args;
    synth_args.spec.n_clips = 100;  // CLI default: exact 60/20/20 split sizes
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--out", synth_args.out_dir, "output directory")->required();
    synth->add_option("--n-clips", synth_args.spec.n_clips, "number of clips");
    synth->add_option("--frames", synth_args.spec.m, "frames per clip");
    synth->add_option("--dim", synth_args.spec.d, "feature width");
    synth->add_option("--vocab", synth_args.spec.vocab_size, "vocabulary size incl. reserved");
    synth->add_option("--len-min", synth_args.spec.len_min, "min caption words");
    synth->add_option("--len-max", synth_args.spec.len_max, "max caption words");
    synth->add_option("--seed", synth_args.spec.seed, "RNG seed");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a captioning model");
    train_cmd->add_option("--mode", train_args.mode, "SA, SA_LN or GMNET")->required();
    train_cmd->add_option("--features", train_args.features, "GMNF feature file")->required();
    train_cmd->add_option("--captions", train_args.captions, "caption JSONL")->required();
    train_cmd->add_option("--ckpt", train_args.ckpt, "checkpoint output path")->required();
    train_cmd->add_option("--epochs", train_args.opts.epochs, "training epochs");
    train_cmd->add_option("--batch", train_args.opts.batch_size, "batch size");
    train_cmd->add_option("--min-count", train_args.opts.min_count, "vocab min frequency");
    train_cmd->add_option("--log", train_args.log_csv,
                          "loss CSV path (default: <ckpt>.loss.csv)");
    add_model_flags(train_cmd, train_args.cfg);

    CaptionArgs caption_args;
    auto* caption_cmd = app.add_subcommand("caption", "greedy-decode captions for clips");
    caption_cmd->add_option("--ckpt", caption_args.ckpt, "checkpoint path")->required();
    caption_cmd->add_option("--features", caption_args.features, "GMNF feature file")->required();
    caption_cmd->add_option("--out", caption_args.out, "prediction JSONL path")->required();

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against references");
    eval_cmd->add_option("--preds", eval_args.preds, "prediction JSONL")->required();
    eval_cmd->add_option("--refs", eval_args.refs, "reference caption JSONL")->required();
    eval_cmd->add_option("--report", eval_args.report, "JSON report output path")->required();

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    grad_cmd->add_option("--config-name", grad_args.config, "probe configuration (tiny)");
    grad_cmd->add_option("--report", grad_args.report, "JSON report path (empty: stdout only)");
    grad_cmd->add_option("--eps-model", grad_args.eps_model, "eps for the joint-loss probes");
    grad_cmd->add_flag("--inject-ln-fault", grad_args.inject_ln_fault,
                       "corrupt the layer_norm backward rule (negative testing)")
        ->group("");  // hidden

    AblateArgs ablate_args;
    ablate_args.cfg.seed = 7;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and score SA, SA_LN and GMNET");
    ablate_cmd->add_option("--features", ablate_args.features, "GMNF feature file")->required();
    ablate_cmd->add_option("--captions", ablate_args.captions, "caption JSONL")->required();
    ablate_cmd->add_option("--out", ablate_args.out_dir, "output directory")->required();
    ablate_cmd->add_option("--epochs", ablate_args.epochs, "training epochs per mode");
    ablate_cmd->add_option("--batch", ablate_args.batch_size, "batch size");
    add_model_flags(ablate_cmd, ablate_args.cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (caption_cmd->parsed()) return run_caption(caption_args);
        if (eval_cmd->parsed()) return run_evaluate(eval_args);
        if (grad_cmd->parsed()) return run_gradcheck(grad_args);
        if (ablate_cmd->parsed()) return run_ablate(ablate_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
