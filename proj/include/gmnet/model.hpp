#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gmnet/config.hpp"
#include "gmnet/corpus.hpp"
#include "gmnet/features.hpp"
#include "gmnet/layers.hpp"
#include "gmnet/rng.hpp"

namespace gmnet {

inline constexpr const char* kGuidancePrefix = "gd.";

inline bool is_guidance_param(const std::string& name) {
    return name.rfind(kGuidancePrefix, 0) == 0;
}

// Parameter layout per mode. The SA entries come first and the guidance
// entries last, so with a shared seed every mode draws identical values for
// the parameters it shares with the smaller modes; the ablation then
// compares architectures from the same starting point.
inline std::vector<ParamSpec> build_param_specs(const ModelConfig& cfg) {
    validate(cfg);
    const std::size_t h = cfg.hidden;
    std::vector<ParamSpec> specs{
        {"enc.w", {cfg.d, cfg.proj}, InitKind::Xavier},
        {"enc.b", {cfg.proj}, InitKind::Zeros},
        {"dec.embed", {cfg.vocab, cfg.embed}, InitKind::Xavier},
        {"att.w", {cfg.proj, h}, InitKind::Xavier},
        {"att.u", {h, h}, InitKind::Xavier},
        {"att.v", {h}, InitKind::Xavier},
        {"dec.lstm.w", {4 * h, cfg.embed + cfg.proj + h}, InitKind::Xavier},
        {"dec.lstm.b", {4 * h}, InitKind::LstmBias},
        {"dec.out.w", {cfg.vocab, h}, InitKind::Xavier},
        {"dec.out.b", {cfg.vocab}, InitKind::Zeros},
    };
    if (cfg.normalizes()) {
        specs.push_back({"ln_enc.g", {cfg.proj}, InitKind::Ones});
        specs.push_back({"ln_enc.b", {cfg.proj}, InitKind::Zeros});
        specs.push_back({"ln_att.g", {cfg.proj}, InitKind::Ones});
        specs.push_back({"ln_att.b", {cfg.proj}, InitKind::Zeros});
    }
    if (cfg.has_guidance()) {
        specs.push_back({"gd.embed", {cfg.vocab, cfg.embed}, InitKind::Xavier});
        specs.push_back({"gd.past.w", {4 * h, cfg.embed + h}, InitKind::Xavier});
        specs.push_back({"gd.past.b", {4 * h}, InitKind::LstmBias});
        specs.push_back({"gd.future.w", {4 * h, cfg.embed + h}, InitKind::Xavier});
        specs.push_back({"gd.future.b", {4 * h}, InitKind::LstmBias});
        specs.push_back({"gd.fuse.wp", {h, h}, InitKind::Xavier});
        specs.push_back({"gd.fuse.wf", {h, h}, InitKind::Xavier});
        specs.push_back({"gd.proj_e.w", {h, h}, InitKind::Xavier});
        specs.push_back({"gd.proj_att.w", {h, cfg.proj}, InitKind::Xavier});
        for (const char* ln : {"gd.ln1", "gd.ln2", "gd.ln3"}) {
            specs.push_back({std::string(ln) + ".g", {h}, InitKind::Ones});
            specs.push_back({std::string(ln) + ".b", {h}, InitKind::Zeros});
        }
        if (!cfg.guidance_share_decoder) {
            specs.push_back({"gd.dec.lstm.w", {4 * h, cfg.embed + h + h}, InitKind::Xavier});
            specs.push_back({"gd.dec.lstm.b", {4 * h}, InitKind::LstmBias});
            specs.push_back({"gd.dec.out.w", {cfg.vocab, h}, InitKind::Xavier});
            specs.push_back({"gd.dec.out.b", {cfg.vocab}, InitKind::Zeros});
        }
    }
    return specs;
}

inline ParamStore init_model(const ModelConfig& cfg) {
    return init_params(build_param_specs(cfg), cfg.seed);
}

inline void zero_guidance(ParamStore& store) {
    for (const auto& name : store.names()) {
        if (!is_guidance_param(name)) continue;
        Tensor& t = store.mutable_value(name);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 0.0;
    }
}

// Per-frame projection D -> D', normalized per frame vector in SA_LN/GMNET.
inline Var encode_features(const ModelConfig& cfg, ParamBinder& p, const FeatureClip& clip) {
    if (clip.features.rank() != 2 || clip.frames() != cfg.m || clip.dims() != cfg.d)
        throw DataError("clip " + clip.clip_id + " has feature shape " +
                        clip.features.shape_string() + ", config expects [" +
                        std::to_string(cfg.m) + "x" + std::to_string(cfg.d) + "]");
    Var features = leaf(p.graph(), clip.features);
    Var proj = add(matmul(features, p["enc.w"]), p["enc.b"]);
    if (cfg.normalizes())
        proj = layer_norm_rows(proj, p["ln_enc.g"], p["ln_enc.b"], cfg.eps_ln);
    return proj;
}

struct DecodeStep {
    Var logits;       // [V]
    Var att;          // A_att: attention context, normalized when the mode says so
    Var att_weights;  // [m]
    LstmState state;
};

inline DecodeStep decode_step(const ModelConfig& cfg, ParamBinder& p, Var enc, int prev_token,
                              const LstmState& state) {
    if (prev_token < 0 || static_cast<std::size_t>(prev_token) >= cfg.vocab)
        throw DataError("decode_step: token id " + std::to_string(prev_token) +
                        " out of range for vocab " + std::to_string(cfg.vocab));
    auto [ctx, weights] = attention_step(p, "att", enc, state.h);
    Var att = cfg.normalizes() ? layer_norm(ctx, p["ln_att.g"], p["ln_att.b"], cfg.eps_ln) : ctx;
    Var x = concat(embed(p, "dec.embed", prev_token), att);
    LstmState next = lstm_step(p, "dec.lstm", x, state);
    Var logits = add(matvec(p["dec.out.w"], next.h), p["dec.out.b"]);
    return DecodeStep{logits, att, weights, next};
}

namespace detail {

// Run one guidance encoder over a token sequence and project+pool its
// hidden-state matrix: reduce_time(A W). Empty sequences pass a [0xH]
// matrix through, which reduce_time turns into the zero vector.
inline Var guidance_encode_pool(const ModelConfig& cfg, ParamBinder& p,
                                const std::string& lstm_prefix, const std::string& fuse_weight,
                                const std::vector<int>& token_ids) {
    Graph& g = p.graph();
    std::vector<Var> rows;
    LstmState state = lstm_zero_state(g, cfg.hidden);
    for (int id : token_ids) {
        state = lstm_step(p, lstm_prefix, embed(p, "gd.embed", id), state);
        rows.push_back(state.h);
    }
    Var hidden_matrix = rows.empty() ? leaf(g, Tensor({0, cfg.hidden})) : stack_rows(rows);
    return reduce_time(matmul(hidden_matrix, p[fuse_weight]));
}

} // namespace detail

// A_e = RD(W_p A_p) + RD(W_f A_f): two same-architecture LSTM encoders over
// past and future words, pooled over time and fused by addition.
inline Var guidance_fuse(const ModelConfig& cfg, ParamBinder& p,
                         const std::vector<int>& past_ids,
                         const std::vector<int>& future_ids) {
    Var past = detail::guidance_encode_pool(cfg, p, "gd.past", "gd.fuse.wp", past_ids);
    Var future = detail::guidance_encode_pool(cfg, p, "gd.future", "gd.fuse.wf", future_ids);
    return add(past, future);
}

// A_F = LN3(LN1(a_e) + LN2(a_att)) with three independent gain/bias pairs.
// Both inputs must already be projected to the common width F = H; see
// project_for_guidance.
inline Var guidance_feature(const ModelConfig& cfg, ParamBinder& p, Var a_e, Var a_att) {
    if (a_e.value().numel() != a_att.value().numel())
        throw ConfigError("guidance_feature: widths disagree after projection (" +
                          std::to_string(a_e.value().numel()) + " vs " +
                          std::to_string(a_att.value().numel()) + ")");
    Var ne = layer_norm(a_e, p["gd.ln1.g"], p["gd.ln1.b"], cfg.eps_ln);
    Var na = layer_norm(a_att, p["gd.ln2.g"], p["gd.ln2.b"], cfg.eps_ln);
    return layer_norm(add(ne, na), p["gd.ln3.g"], p["gd.ln3.b"], cfg.eps_ln);
}

struct ForwardResult {
    Var loss_main;            // L
    Var loss_guide;           // L_e; invalid in SA / SA_LN modes
    Var loss_all;             // L + L_e (the same node as L when no guidance)
    std::vector<int> predictions;  // argmax token per step, ties to the lowest id
    std::vector<Var> logits;       // per-step main decoder logits
    std::vector<Var> att_weights;  // per-step attention weights

    double main_value() const { return loss_main.value()[0]; }
    double guide_value() const { return loss_guide.valid() ? loss_guide.value()[0] : 0.0; }
    double all_value() const { return loss_all.value()[0]; }
};

namespace detail {

inline int argmax_lowest(const Tensor& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.numel(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

} // namespace detail

// Teacher-forced joint forward pass. The main decoder consumes groundtruth
// prefixes; the guidance branch sees the decoder's own argmax words as the
// past (detached integer ids) and the groundtruth suffix as the future, and
// is scored against the same targets.
inline ForwardResult forward_train(const ModelConfig& cfg, ParamBinder& p,
                                   const FeatureClip& clip, const VocabEncodedCaption& gt) {
    if (gt.ids.size() < 2 || gt.ids.front() != kBos || gt.ids.back() != kEos)
        throw DataError("forward_train: caption must be [BOS, words..., EOS]");
    if (gt.ids.size() > cfg.l_max)
        throw DataError("forward_train: caption length " + std::to_string(gt.ids.size()) +
                        " exceeds l_max " + std::to_string(cfg.l_max));
    Graph& g = p.graph();
    const std::size_t steps = gt.ids.size() - 1;

    Var enc = encode_features(cfg, p, clip);
    ForwardResult result;
    std::vector<Var> att_rows;
    std::vector<int> targets(gt.ids.begin() + 1, gt.ids.end());
    LstmState state = lstm_zero_state(g, cfg.hidden);
    for (std::size_t t = 0; t < steps; ++t) {
        DecodeStep step = decode_step(cfg, p, enc, gt.ids[t], state);
        result.logits.push_back(step.logits);
        att_rows.push_back(step.att);
        result.att_weights.push_back(step.att_weights);
        result.predictions.push_back(detail::argmax_lowest(step.logits.value()));
        state = step.state;
    }
    const std::vector<std::uint8_t> mask(steps, 1);
    result.loss_main = cross_entropy(stack_rows(result.logits), targets, mask);

    if (!cfg.has_guidance()) {
        result.loss_all = result.loss_main;
        return result;
    }

    const std::string dec_prefix = cfg.guidance_share_decoder ? "dec" : "gd.dec";
    std::vector<Var> guide_rows;
    LstmState gstate = lstm_zero_state(g, cfg.hidden);
    for (std::size_t i = 1; i <= steps; ++i) {
        std::vector<int> past_ids;
        if (cfg.guidance_past_teacher) {
            past_ids.assign(gt.ids.begin() + 1, gt.ids.begin() + static_cast<long>(i));
        } else {
            past_ids.assign(result.predictions.begin(),
                            result.predictions.begin() + static_cast<long>(i - 1));
        }
        const std::vector<int> future_ids(gt.ids.begin() + static_cast<long>(i) + 1,
                                          gt.ids.end());
        Var a_e = guidance_fuse(cfg, p, past_ids, future_ids);
        Var a_f = guidance_feature(cfg, p, matvec(p["gd.proj_e.w"], a_e),
                                   matvec(p["gd.proj_att.w"], att_rows[i - 1]));
        Var x = concat(embed(p, "gd.embed", gt.ids[i - 1]), a_f);
        gstate = lstm_step(p, dec_prefix + ".lstm", x, gstate);
        guide_rows.push_back(add(matvec(p[dec_prefix + ".out.w"], gstate.h),
                                 p[dec_prefix + ".out.b"]));
    }
    result.loss_guide = cross_entropy(stack_rows(guide_rows), targets, mask);
    result.loss_all = add(result.loss_main, result.loss_guide);
    return result;
}

// Greedy inference: BOS start, argmax continuation (ties to the lowest id),
// stop on EOS or when the caption would overflow l_max. Returns word ids
// without sentinels. Never touches a guidance parameter.
inline std::vector<int> greedy_decode(const ModelConfig& cfg, const ParamStore& store,
                                      const FeatureClip& clip, std::size_t l_max = 0) {
    if (l_max == 0) l_max = cfg.l_max;
    Graph g;
    ParamBinder p(g, store);
    Var enc = encode_features(cfg, p, clip);
    LstmState state = lstm_zero_state(g, cfg.hidden);
    std::vector<int> words;
    int prev = kBos;
    while (words.size() + 2 < l_max) {
        DecodeStep step = decode_step(cfg, p, enc, prev, state);
        const int next = detail::argmax_lowest(step.logits.value());
        if (next == kEos) break;
        words.push_back(next);
        prev = next;
        state = step.state;
    }
    for (const auto& [name, var] : p.bound()) {
        if (is_guidance_param(name))
            throw ConfigError("greedy_decode touched guidance parameter " + name);
    }
    return words;
}

// --- training loop -------------------------------------------------------

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    int min_count = 1;  // vocabulary threshold; 2 is the usual choice for real corpora
    // Optional held-out records: per-epoch losses are reported for them,
    // never used for model selection (the final checkpoint is the last epoch).
    std::vector<CaptionRecord> val_records;
};

struct StepRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;  // global optimizer step, 1-based
    double loss_main = 0.0;
    double loss_guide = 0.0;
    double loss_all = 0.0;
    double grad_norm = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 0 is the pre-training evaluation pass
    double loss_main = 0.0;
    double loss_guide = 0.0;
    double loss_all = 0.0;
    double val_main = 0.0;
    double val_guide = 0.0;
    double val_all = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;
    bool has_val = false;
    std::uint64_t shuffle_fingerprint = 0;  // hash of the epoch-1 permutation
};

struct TrainResult {
    ModelConfig cfg;  // effective config, vocab size filled in
    Vocabulary vocab;
    ParamStore params;
    TrainLog log;
};

struct TrainSample {
    const FeatureClip* clip;
    VocabEncodedCaption caption;
};

inline std::size_t gmnet_threads() {
    const char* env = std::getenv("GMNET_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v <= 1) return 1;
    return std::min<std::size_t>(static_cast<std::size_t>(v),
                                 std::max(1u, std::thread::hardware_concurrency()));
}

namespace detail {

struct SampleGrad {
    std::map<std::string, Tensor> grads;
    double loss_main = 0.0;
    double loss_guide = 0.0;
    double loss_all = 0.0;
};

inline SampleGrad sample_gradients(const ModelConfig& cfg, const ParamStore& params,
                                   const TrainSample& sample) {
    Graph g;
    ParamBinder binder(g, params);
    ForwardResult fwd = forward_train(cfg, binder, *sample.clip, sample.caption);
    g.backward(fwd.loss_all.id());
    SampleGrad out;
    out.loss_main = fwd.main_value();
    out.loss_guide = fwd.guide_value();
    out.loss_all = fwd.all_value();
    for (const auto& [name, var] : binder.bound()) out.grads.emplace(name, var.grad());
    return out;
}

inline std::uint64_t permutation_fingerprint(const std::vector<std::size_t>& perm) {
    std::string bytes;
    bytes.reserve(perm.size() * 8);
    for (std::size_t v : perm)
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    return fnv1a(bytes);
}

// Mean forward losses without touching the parameters.
inline EpochRecord evaluate_epoch(const ModelConfig& cfg, const ParamStore& params,
                                  const std::vector<TrainSample>& samples, std::size_t epoch) {
    double sum_main = 0.0, sum_guide = 0.0;
    for (const TrainSample& s : samples) {
        Graph g;
        ParamBinder binder(g, params);
        ForwardResult fwd = forward_train(cfg, binder, *s.clip, s.caption);
        sum_main += fwd.main_value();
        sum_guide += fwd.guide_value();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_main = sum_main / static_cast<double>(samples.size());
    rec.loss_guide = sum_guide / static_cast<double>(samples.size());
    rec.loss_all = rec.loss_main + rec.loss_guide;
    return rec;
}

} // namespace detail

// Minibatch Adam on L_all. Batch loss is the mean of per-sample losses;
// per-sample graphs are independent, so GMNET_THREADS > 1 may evaluate them
// in parallel, with gradients always merged in sample order.
inline TrainResult train(const ModelConfig& cfg, const std::vector<FeatureClip>& clips,
                         const std::vector<CaptionRecord>& records, const TrainOptions& opts) {
    if (records.empty()) throw UsageError("train: empty corpus");
    if (opts.batch_size == 0) throw UsageError("train: batch size must be positive");

    std::unordered_map<std::string, const FeatureClip*> by_id;
    for (const FeatureClip& c : clips) by_id[c.clip_id] = &c;

    Vocabulary vocab = build_vocab(records, opts.min_count);
    ModelConfig effective = cfg;
    if (effective.vocab == 0) effective.vocab = vocab.size();
    if (effective.vocab < vocab.size())
        throw ConfigError("train: configured vocab size " + std::to_string(effective.vocab) +
                          " is smaller than the corpus vocabulary " +
                          std::to_string(vocab.size()));

    auto make_samples = [&](const std::vector<CaptionRecord>& recs) {
        std::vector<TrainSample> out;
        for (const CaptionRecord& r : recs) {
            auto it = by_id.find(r.clip_id);
            if (it == by_id.end())
                throw DataError("train: no features for clip " + r.clip_id);
            out.push_back(TrainSample{it->second, encode_caption(vocab, r.caption,
                                                                 effective.l_max)});
        }
        return out;
    };
    std::vector<TrainSample> samples = make_samples(records);
    std::vector<TrainSample> val_samples = make_samples(opts.val_records);

    TrainResult result{effective, std::move(vocab), init_model(effective), {}};
    result.log.has_val = !val_samples.empty();
    auto epoch_entry = [&](std::size_t epoch, double main, double guide) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_main = main;
        rec.loss_guide = guide;
        rec.loss_all = main + guide;
        if (!val_samples.empty()) {
            EpochRecord v = detail::evaluate_epoch(effective, result.params, val_samples, epoch);
            rec.val_main = v.loss_main;
            rec.val_guide = v.loss_guide;
            rec.val_all = v.loss_all;
        }
        return rec;
    };
    {
        EpochRecord init = detail::evaluate_epoch(effective, result.params, samples, 0);
        result.log.epochs.push_back(epoch_entry(0, init.loss_main, init.loss_guide));
    }

    Rng shuffle_rng(effective.seed ^ 0x9e3779b97f4a7c15ull);
    const std::size_t n_threads = gmnet_threads();
    std::size_t global_step = 0;

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        if (epoch == 1) result.log.shuffle_fingerprint = detail::permutation_fingerprint(order);

        double epoch_main = 0.0, epoch_guide = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
            const std::size_t end = std::min(order.size(), begin + opts.batch_size);
            const std::size_t batch = end - begin;
            ++global_step;

            std::map<std::string, Tensor> total;
            double batch_main = 0.0, batch_guide = 0.0;
            auto merge_one = [&](detail::SampleGrad& sg) {
                if (!std::isfinite(sg.loss_all))
                    throw NumericError("train: non-finite loss at step " +
                                       std::to_string(global_step) + " (epoch " +
                                       std::to_string(epoch) + ")");
                batch_main += sg.loss_main;
                batch_guide += sg.loss_guide;
                for (auto& [name, g] : sg.grads) {
                    auto it = total.find(name);
                    if (it == total.end()) total.emplace(name, std::move(g));
                    else it->second += g;
                }
                sg.grads.clear();
            };

            if (n_threads <= 1 || batch == 1) {
                for (std::size_t i = 0; i < batch; ++i) {
                    detail::SampleGrad sg = detail::sample_gradients(effective, result.params,
                                                                     samples[order[begin + i]]);
                    merge_one(sg);
                }
            } else {
                std::vector<detail::SampleGrad> grads(batch);
                auto worker = [&](std::size_t first, std::size_t stride) {
                    for (std::size_t i = first; i < batch; i += stride)
                        grads[i] = detail::sample_gradients(effective, result.params,
                                                            samples[order[begin + i]]);
                };
                std::vector<std::thread> pool;
                const std::size_t used = std::min(n_threads, batch);
                for (std::size_t t = 0; t < used; ++t) pool.emplace_back(worker, t, used);
                for (auto& th : pool) th.join();
                // merge in sample order: results do not depend on thread count
                for (std::size_t i = 0; i < batch; ++i) merge_one(grads[i]);
            }

            const double inv = 1.0 / static_cast<double>(batch);
            for (auto& [name, g] : total)
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= inv;
            const double norm = clip_gradients(total, effective.clip_norm);
            if (!std::isfinite(norm))
                throw NumericError("train: non-finite gradient at step " +
                                   std::to_string(global_step) + " (epoch " +
                                   std::to_string(epoch) + ")");
            result.params.adam_step(total, effective.opt);

            StepRecord rec;
            rec.epoch = epoch;
            rec.step = global_step;
            rec.loss_main = batch_main * inv;
            rec.loss_guide = batch_guide * inv;
            rec.loss_all = rec.loss_main + rec.loss_guide;
            rec.grad_norm = norm;
            result.log.steps.push_back(rec);
            epoch_main += batch_main;
            epoch_guide += batch_guide;
        }

        result.log.epochs.push_back(
            epoch_entry(epoch, epoch_main / static_cast<double>(samples.size()),
                        epoch_guide / static_cast<double>(samples.size())));
    }
    return result;
}

inline void write_loss_csv(const std::string& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write loss log: " + path);
    out << "epoch,L,L_e,L_all";
    if (log.has_val) out << ",val_L,val_L_e,val_L_all";
    out << "\n";
    out.precision(17);
    for (const auto& e : log.epochs) {
        out << e.epoch << "," << e.loss_main << "," << e.loss_guide << "," << e.loss_all;
        if (log.has_val) out << "," << e.val_main << "," << e.val_guide << "," << e.val_all;
        out << "\n";
    }
    if (!out) throw IoError("loss log write failed: " + path);
}

} // namespace gmnet
