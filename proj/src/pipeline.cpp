// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <utility>

#include "m3kg/adamw.hpp"
#include "m3kg/errors.hpp"

namespace m3kg {
namespace {

constexpr int kPatchSize = 8;
constexpr int kDecoderBlocks = 2;
// Glorot token embeddings with the tied output head produce logit noise
// large enough to push the initial loss visibly above ln|V|; a quarter
// scale keeps the uniform-init loss within a percent of it.
constexpr double kEmbedInitScale = 0.25;

bool qform_active(const PipelineConfig& c) {
    return c.use_dvg && c.retrieval_query == "qformer";
}

} // namespace

StaticInputs prepare_static(const PipelineConfig& cfg, const Vocab& vocab,
                            const LoadedCorpus& corpus) {
    validate(cfg);
    if (corpus.pairs.empty()) fail(Err::EmptyCorpus, "prepare_static: corpus has no pairs");
    StaticInputs s;
    s.grid = corpus.grid;
    if (s.grid < kPatchSize || s.grid % kPatchSize != 0)
        fail(Err::BadDims, "prepare_static: grid " + std::to_string(s.grid) +
                               " is not a positive multiple of " + std::to_string(kPatchSize));
    for (const SynthPair& p : corpus.pairs)
        if (p.image.rows != s.grid || p.image.cols != s.grid)
            fail(Err::BadDims, "prepare_static: image " + p.id + " is not " +
                                   std::to_string(s.grid) + "x" + std::to_string(s.grid));
    const int side = s.grid / kPatchSize;
    s.n_patches = side * side;

    if (cfg.use_graph) {
        if (cfg.use_multiscale) {
            MultiScaleGraph ms = build_multiscale(corpus.kg, cfg.scale_budgets);
            for (auto& [budget, sg] : ms.scales) s.scales.push_back(std::move(sg));
            s.final_scale = cfg.final_scale_index;
        } else {
            // Single-scale fallback: prune straight to the decode budget.
            s.scales.push_back(prune_to_budget(corpus.kg, cfg.scale_budgets[cfg.final_scale_index]));
            s.final_scale = 0;
        }
        HashedEmbedder embedder;
        for (const Subgraph& sg : s.scales) {
            s.feats.push_back(encode_nodes(sg, corpus.kg.entities, embedder, cfg.d));
            auto [ei, et] = build_edge_tensors(sg);
            s.edge_index.push_back(std::move(ei));
            s.edge_type.push_back(std::move(et));
        }
        s.final_nodes = static_cast<int>(s.scales[s.final_scale].node_ids.size());
    }

    if (cfg.use_dvg && !corpus.kg.vision_tokens.empty()) {
        VisionMemory mem = build_memory(corpus.kg, cfg.n_visual);
        if (mem.K_V.cols != cfg.d)
            fail(Err::BadDims, "prepare_static: vision token width " + std::to_string(mem.K_V.cols) +
                                   " does not match d = " + std::to_string(cfg.d));
        s.memory = std::move(mem.K_V);
    }

    s.prompt_ids = tokenize(kPromptText, vocab);
    for (const SynthPair& p : corpus.pairs) {
        std::vector<int> ids = tokenize(p.report, vocab);
        if (static_cast<int>(ids.size()) > cfg.max_len - 1) ids.resize(cfg.max_len - 1);
        ids.push_back(Vocab::kEos);
        s.targets.push_back(std::move(ids));
    }

    const bool graph_on = s.final_nodes > 0;
    const bool kv_on = cfg.use_dvg && s.memory.rows > 0;
    const int kv_len = kv_on ? (cfg.retrieval_query == "qformer" ? kNumLabels : s.n_patches) : 0;
    const int lens[4] = {s.n_patches, kv_len, graph_on ? s.n_patches : 0,
                         graph_on ? s.final_nodes : 0};
    int row = 0;
    for (int i = 0; i < 4; ++i) {
        s.spans.begin[i] = row;
        s.spans.len[i] = lens[i];
        row += lens[i];
    }
    s.n_f = row;
    s.max_ctx = s.n_f + static_cast<int>(s.prompt_ids.size()) + cfg.max_len;
    return s;
}

Model init_model(const PipelineConfig& cfg, const Vocab& vocab, const StaticInputs& s) {
    validate(cfg);
    if (vocab.size() <= Vocab::kUnk) fail(Err::BadParams, "init_model: vocabulary lacks specials");
    Model m;
    m.config = cfg;
    m.vocab = vocab;
    Rng rng(static_cast<uint64_t>(cfg.seed));
    m.patch.init(rng, kPatchSize, cfg.d);
    if (qform_active(cfg)) m.qform.init(rng, kNumLabels, cfg.d, cfg.heads);
    if (cfg.use_dvg) m.retr_attn.init(rng, cfg.d, cfg.heads);
    if (cfg.use_graph) {
        m.graph.config.variant = parse_graph_variant(cfg.use_rgcn_variant);
        m.graph.config.layers = 2;
        m.graph.config.seed = cfg.seed + 1;
        m.graph.init(cfg.d, cfg.d);
        if (cfg.use_multiscale)
            m.fusion.init(rng, static_cast<int>(cfg.scale_budgets.size()),
                          cfg.scale_budgets.back(), cfg.d, cfg.heads);
    }
    m.bridge.init(rng, cfg.d, cfg.d_dec, cfg.heads);
    m.decoder.init(rng, vocab.size(), cfg.d_dec, cfg.heads, kDecoderBlocks, s.max_ctx);
    for (double& x : m.decoder.E.data) x *= kEmbedInitScale;
    m.decoder.max_len = cfg.max_len;
    return m;
}

Model make_model(const PipelineConfig& cfg, const LoadedCorpus& corpus) {
    std::vector<std::string> docs;
    docs.reserve(corpus.pairs.size() + 1);
    for (const SynthPair& p : corpus.pairs) docs.push_back(p.report);
    docs.push_back(kPromptText);  // keep the prompt tokens in-vocabulary
    Vocab vocab = build_vocab(docs);
    StaticInputs s = prepare_static(cfg, vocab, corpus);
    return init_model(cfg, vocab, s);
}

namespace {

// Single walk order shared by the registry, the checkpoint, and the tape
// leaf collector. collect_param_ids below mirrors this structure exactly;
// the bind/registry alignment test enforces the correspondence.
void walk_mha(const std::string& prefix, MhaParams& p, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".W_Q", &p.W_Q});
    out.push_back({prefix + ".W_K", &p.W_K});
    out.push_back({prefix + ".W_V", &p.W_V});
    out.push_back({prefix + ".W_O", &p.W_O});
}

void collect_mha(const MhaBound& b, std::vector<ad::NodeId>& out) {
    out.push_back(b.W_Q);
    out.push_back(b.W_K);
    out.push_back(b.W_V);
    out.push_back(b.W_O);
}

} // namespace

std::vector<ParamRef> param_registry(Model& m) {
    const PipelineConfig& cfg = m.config;
    std::vector<ParamRef> out;
    out.push_back({"patch.W", &m.patch.W_patch});
    out.push_back({"patch.b", &m.patch.b});
    if (qform_active(cfg)) {
        out.push_back({"qformer.queries", &m.qform.queries});
        walk_mha("qformer.attn", m.qform.attn, out);
    }
    if (cfg.use_dvg) walk_mha("retrieve", m.retr_attn, out);
    if (cfg.use_graph) {
        for (size_t l = 0; l < m.graph.layers.size(); ++l) {
            GraphLayerParams& layer = m.graph.layers[l];
            const std::string base = "graph.layer" + std::to_string(l);
            for (size_t r = 0; r < layer.W_r.size(); ++r)
                out.push_back({base + ".W_r" + std::to_string(r), &layer.W_r[r]});
            if (!layer.W_0.empty()) out.push_back({base + ".W_0", &layer.W_0});
            if (!layer.a.empty()) out.push_back({base + ".a", &layer.a});
        }
        if (cfg.use_multiscale) {
            out.push_back({"fusion.E_scale", &m.fusion.E_scale});
            out.push_back({"fusion.E_pos", &m.fusion.E_pos});
            walk_mha("fusion.attn", m.fusion.attn, out);
        }
        walk_mha("bridge.kg2v", m.bridge.kg2v, out);
        walk_mha("bridge.v2kg", m.bridge.v2kg, out);
    }
    out.push_back({"bridge.proj_v", &m.bridge.proj_v});
    if (cfg.use_dvg) out.push_back({"bridge.proj_kv", &m.bridge.proj_kv});
    if (cfg.use_graph) {
        out.push_back({"bridge.proj_kg2v", &m.bridge.proj_kg2v});
        out.push_back({"bridge.proj_v2kg", &m.bridge.proj_v2kg});
    }
    out.push_back({"decoder.E", &m.decoder.E});
    out.push_back({"decoder.E_pos", &m.decoder.E_pos});
    for (size_t bl = 0; bl < m.decoder.blocks.size(); ++bl) {
        DecoderBlockParams& blk = m.decoder.blocks[bl];
        const std::string base = "decoder.block" + std::to_string(bl);
        out.push_back({base + ".ln1_g", &blk.ln1_g});
        out.push_back({base + ".ln1_b", &blk.ln1_b});
        walk_mha(base + ".attn", blk.attn, out);
        out.push_back({base + ".ln2_g", &blk.ln2_g});
        out.push_back({base + ".ln2_b", &blk.ln2_b});
        out.push_back({base + ".W1", &blk.W1});
        out.push_back({base + ".b1", &blk.b1});
        out.push_back({base + ".W2", &blk.W2});
        out.push_back({base + ".b2", &blk.b2});
    }
    out.push_back({"decoder.lnf_g", &m.decoder.lnf_g});
    out.push_back({"decoder.lnf_b", &m.decoder.lnf_b});
    return out;
}

namespace {

std::vector<ad::NodeId> collect_param_ids(const Model& m, const ModelBound& b) {
    const PipelineConfig& cfg = m.config;
    std::vector<ad::NodeId> out;
    out.push_back(b.patch_W);
    out.push_back(b.patch_b);
    if (qform_active(cfg)) {
        out.push_back(b.queries);
        collect_mha(b.qform_attn, out);
    }
    if (cfg.use_dvg) collect_mha(b.retr_attn, out);
    if (cfg.use_graph) {
        for (size_t l = 0; l < m.graph.layers.size(); ++l) {
            const GraphLayerBound& layer = b.graph.layers[l];
            for (ad::NodeId id : layer.W_r) out.push_back(id);
            if (!m.graph.layers[l].W_0.empty()) out.push_back(layer.W_0);
            if (!m.graph.layers[l].a.empty()) out.push_back(layer.a);
        }
        if (cfg.use_multiscale) {
            out.push_back(b.fusion.E_scale);
            out.push_back(b.fusion.E_pos);
            collect_mha(b.fusion.attn, out);
        }
        collect_mha(b.bridge.kg2v, out);
        collect_mha(b.bridge.v2kg, out);
    }
    out.push_back(b.bridge.proj_v);
    if (cfg.use_dvg) out.push_back(b.bridge.proj_kv);
    if (cfg.use_graph) {
        out.push_back(b.bridge.proj_kg2v);
        out.push_back(b.bridge.proj_v2kg);
    }
    out.push_back(b.decoder.E);
    out.push_back(b.decoder.E_pos);
    for (const DecoderBlockBound& blk : b.decoder.blocks) {
        out.push_back(blk.ln1_g);
        out.push_back(blk.ln1_b);
        collect_mha(blk.attn, out);
        out.push_back(blk.ln2_g);
        out.push_back(blk.ln2_b);
        out.push_back(blk.W1);
        out.push_back(blk.b1);
        out.push_back(blk.W2);
        out.push_back(blk.b2);
    }
    out.push_back(b.decoder.lnf_g);
    out.push_back(b.decoder.lnf_b);
    return out;
}

} // namespace

Checkpoint to_checkpoint(const Model& m) {
    Checkpoint c;
    for (const ParamRef& r : param_registry(const_cast<Model&>(m))) c.put(r.name, *r.mat);
    return c;
}

void load_into(Model& m, const Checkpoint& c) {
    std::vector<ParamRef> reg = param_registry(m);
    if (c.tensors.size() != reg.size())
        fail(Err::BadCheckpoint, "checkpoint holds " + std::to_string(c.tensors.size()) +
                                     " tensors, model expects " + std::to_string(reg.size()));
    for (ParamRef& r : reg) {
        Mat v = c.get(r.name);
        if (v.rows != r.mat->rows || v.cols != r.mat->cols)
            fail(Err::BadCheckpoint, "tensor " + r.name + ": expected " +
                                         std::to_string(r.mat->rows) + "x" +
                                         std::to_string(r.mat->cols) + ", found " +
                                         std::to_string(v.rows) + "x" + std::to_string(v.cols));
        *r.mat = std::move(v);
    }
}

void save_model(const std::string& path, const Model& m) {
    save_checkpoint(path, to_checkpoint(m));
    save_vocab(path + ".vocab", m.vocab);
}

Model load_model(const std::string& path, const PipelineConfig& cfg,
                 const LoadedCorpus& corpus) {
    Vocab vocab = load_vocab(path + ".vocab");
    StaticInputs s = prepare_static(cfg, vocab, corpus);
    Model m = init_model(cfg, vocab, s);
    load_into(m, load_checkpoint(path));
    return m;
}

ModelBound bind_model(ad::Tape& t, const Model& m, const StaticInputs& s) {
    const PipelineConfig& cfg = m.config;
    ModelBound b;
    b.patch_W = t.leaf(m.patch.W_patch);
    b.patch_b = t.leaf(m.patch.b);
    if (qform_active(cfg)) {
        b.queries = t.leaf(m.qform.queries);
        b.qform_attn = bind(t, m.qform.attn);
    }
    if (cfg.use_dvg) b.retr_attn = bind(t, m.retr_attn);
    if (cfg.use_graph) {
        b.graph = bind(t, m.graph);
        if (cfg.use_multiscale) b.fusion = bind(t, m.fusion);
        b.bridge.kg2v = bind(t, m.bridge.kg2v);
        b.bridge.v2kg = bind(t, m.bridge.v2kg);
    }
    b.bridge.proj_v = t.leaf(m.bridge.proj_v);
    if (cfg.use_dvg) b.bridge.proj_kv = t.leaf(m.bridge.proj_kv);
    if (cfg.use_graph) {
        b.bridge.proj_kg2v = t.leaf(m.bridge.proj_kg2v);
        b.bridge.proj_v2kg = t.leaf(m.bridge.proj_v2kg);
    }
    b.decoder = bind(t, m.decoder);
    if (cfg.use_dvg && s.memory.rows > 0) b.memory = t.leaf(s.memory);
    b.param_ids = collect_param_ids(m, b);
    return b;
}

ad::NodeId graph_branch(ad::Tape& t, const Model& m, const StaticInputs& s,
                        const ModelBound& b) {
    if (!m.config.use_graph || s.final_nodes == 0) return -1;
    if (m.config.use_multiscale) {
        std::vector<ad::NodeId> xs;
        for (size_t i = 0; i < s.scales.size(); ++i) {
            ad::NodeId V = t.leaf(s.feats[i].values);
            ad::NodeId h = graph_forward(t, V, s.edge_index[i], s.edge_type[i], b.graph,
                                         m.graph.config);
            xs.push_back(apply_encodings(t, h, static_cast<int>(i), b.fusion));
        }
        FusedScales fused = fuse(t, xs, b.fusion);
        return select_final(fused, s.final_scale);
    }
    ad::NodeId V = t.leaf(s.feats[0].values);
    return graph_forward(t, V, s.edge_index[0], s.edge_type[0], b.graph, m.graph.config);
}

Prefix pair_prefix(ad::Tape& t, const Mat& image, const Model& m,
                   const ModelBound& b, ad::NodeId X_final) {
    const PipelineConfig& cfg = m.config;
    ad::NodeId F_v = encode_image(t, image, b.patch_W, b.patch_b, kPatchSize);
    ad::NodeId F_kv = -1;
    if (b.memory >= 0) {
        ad::NodeId query =
            qform_active(cfg) ? qformer(t, F_v, b.queries, b.qform_attn) : F_v;
        F_kv = retrieve(t, query, b.memory, b.retr_attn);
    }
    ad::NodeId F_kg2v = -1, F_v2kg = -1;
    if (X_final >= 0) {
        F_kg2v = kg2v(t, F_v, X_final, b.bridge.kg2v);
        F_v2kg = v2kg(t, X_final, F_v, b.bridge.v2kg);
    }
    return assemble_prefix(t, F_v, F_kv, F_kg2v, F_v2kg, b.bridge);
}

TrainResult train(Model& m, const LoadedCorpus& corpus, const TrainOptions& opts) {
    const PipelineConfig& cfg = m.config;
    StaticInputs s = prepare_static(cfg, m.vocab, corpus);
    if (m.decoder.E_pos.rows < s.max_ctx)
        fail(Err::ShapeMismatch, "train: model position table has " +
                                     std::to_string(m.decoder.E_pos.rows) +
                                     " rows, corpus needs " + std::to_string(s.max_ctx));
    std::vector<ParamRef> reg = param_registry(m);
    std::vector<Mat*> params;
    params.reserve(reg.size());
    for (ParamRef& r : reg) params.push_back(r.mat);

    AdamW opt;
    opt.lr = cfg.lr;

    TrainResult res;
    res.spans = s.spans;
    res.n_f = s.n_f;
    res.final_nodes = s.final_nodes;
    if (opts.log) {
        *opts.log << "train: pairs=" << corpus.pairs.size() << " vocab=" << m.vocab.size()
                  << " params=" << reg.size() << " final_nodes=" << s.final_nodes
                  << " n_f=" << s.n_f << " spans v:" << s.spans.begin[0] << "+" << s.spans.len[0]
                  << " kv:" << s.spans.begin[1] << "+" << s.spans.len[1]
                  << " kg2v:" << s.spans.begin[2] << "+" << s.spans.len[2]
                  << " v2kg:" << s.spans.begin[3] << "+" << s.spans.len[3] << "\n";
    }

    const int n = static_cast<int>(corpus.pairs.size());
    for (int step = 0; step < cfg.steps; ++step) {
        ad::Tape t;
        ModelBound b = bind_model(t, m, s);
        ad::NodeId X_final = graph_branch(t, m, s, b);
        std::vector<ad::NodeId> losses;
        for (int k = 0; k < cfg.batch; ++k) {
            const int idx = (step * cfg.batch + k) % n;
            Prefix pf = pair_prefix(t, corpus.pairs[idx].image, m, b, X_final);
            ad::NodeId logits = decoder_forward(t, pf.F, s.prompt_ids, s.targets[idx], b.decoder);
            losses.push_back(generation_loss(t, logits, s.targets[idx]));
        }
        ad::NodeId loss = ad::scale(t, ad::sum(t, losses), 1.0 / cfg.batch);
        t.backward(loss);
        std::vector<const Mat*> grads;
        grads.reserve(b.param_ids.size());
        for (ad::NodeId id : b.param_ids) grads.push_back(&t.grad(id));
        opt.step(params, grads);

        res.last_loss = t.val(loss)(0, 0);
        res.steps_run = step + 1;
        if (opts.log && (step % std::max(1, opts.log_every) == 0 || step + 1 == cfg.steps))
            *opts.log << "step=" << step << " loss=" << res.last_loss << "\n";
        if (opts.should_stop && opts.check_every > 0 && (step + 1) % opts.check_every == 0 &&
            opts.should_stop(step + 1, m))
            break;
    }
    return res;
}

EvalResult evaluate(const Model& m, const LoadedCorpus& corpus) {
    const PipelineConfig& cfg = m.config;
    StaticInputs s = prepare_static(cfg, m.vocab, corpus);
    ad::Tape t;
    ModelBound b = bind_model(t, m, s);
    ad::NodeId X_final = graph_branch(t, m, s, b);

    EvalResult r;
    std::vector<std::string> refs;
    std::vector<LabelVector> hyp_labels, ref_labels;
    for (const SynthPair& p : corpus.pairs) {
        Prefix pf = pair_prefix(t, p.image, m, b, X_final);
        const Mat F = t.val(pf.F);
        std::vector<int> ids = generate(F, s.prompt_ids, m.decoder, GenMode::greedy, cfg.max_len);
        r.hyps.push_back(detokenize(ids, m.vocab));
        refs.push_back(p.report);
        hyp_labels.push_back(extract_labels(r.hyps.back()));
        ref_labels.push_back(p.gold_labels);
    }

    r.bleu1 = bleu(r.hyps, refs, 1);
    r.bleu2 = bleu(r.hyps, refs, 2);
    r.bleu3 = bleu(r.hyps, refs, 3);
    r.bleu4 = bleu(r.hyps, refs, 4);
    double rl = 0, mt = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        rl += rouge_l(r.hyps[i], refs[i]);
        mt += meteor(r.hyps[i], refs[i]);
    }
    r.rouge_l = rl / static_cast<double>(refs.size());
    r.meteor = mt / static_cast<double>(refs.size());
    std::vector<std::vector<std::string>> ref_sets;
    for (const std::string& ref : refs) ref_sets.push_back({ref});
    r.cider_d = cider_d(r.hyps, ref_sets);
    r.ce = ce_scores(hyp_labels, ref_labels);
    return r;
}

EvalResult score_files(const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs,
                       const std::vector<LabelVector>* hyp_labels,
                       const std::vector<LabelVector>* ref_labels) {
    if (hyps.size() != refs.size())
        fail(Err::LengthMismatch, "score_files: " + std::to_string(hyps.size()) +
                                      " hypotheses vs " + std::to_string(refs.size()) +
                                      " references");
    EvalResult r;
    r.hyps = hyps;
    r.bleu1 = bleu(hyps, refs, 1);
    r.bleu2 = bleu(hyps, refs, 2);
    r.bleu3 = bleu(hyps, refs, 3);
    r.bleu4 = bleu(hyps, refs, 4);
    double rl = 0, mt = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        rl += rouge_l(hyps[i], refs[i]);
        mt += meteor(hyps[i], refs[i]);
    }
    r.rouge_l = rl / static_cast<double>(refs.size());
    r.meteor = mt / static_cast<double>(refs.size());
    std::vector<std::vector<std::string>> ref_sets;
    for (const std::string& ref : refs) ref_sets.push_back({ref});
    r.cider_d = cider_d(hyps, ref_sets);

    std::vector<LabelVector> hl, rfl;
    if (hyp_labels && ref_labels) {
        hl = *hyp_labels;
        rfl = *ref_labels;
    } else {
        for (size_t i = 0; i < refs.size(); ++i) {
            hl.push_back(extract_labels(hyps[i]));
            rfl.push_back(extract_labels(refs[i]));
        }
    }
    r.ce = ce_scores(hl, rfl);
    return r;
}

std::string metrics_json(const EvalResult& r) {
    nlohmann::json j;
    j["bleu1"] = r.bleu1;
    j["bleu2"] = r.bleu2;
    j["bleu3"] = r.bleu3;
    j["bleu4"] = r.bleu4;
    j["rouge_l"] = r.rouge_l;
    j["meteor"] = r.meteor;
    j["cider_d"] = r.cider_d;
    j["ce_precision"] = r.ce.precision;
    j["ce_recall"] = r.ce.recall;
    j["ce_f1"] = r.ce.f1;
    return j.dump();
}

namespace {

// Code points approximate display columns for the ASCII + check-mark set.
size_t display_width(const std::string& s) {
    size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::string fixed3(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", x);
    return buf;
}

EvalResult run_cell(const PipelineConfig& cfg, const LoadedCorpus& corpus) {
    Model m = make_model(cfg, corpus);
    train(m, corpus);
    return evaluate(m, corpus);
}

} // namespace

std::string render_table(const AblationTable& t) {
    std::vector<size_t> width(t.columns.size(), 0);
    for (size_t c = 0; c < t.columns.size(); ++c) width[c] = display_width(t.columns[c]);
    for (const auto& row : t.rows) {
        if (row.size() != t.columns.size())
            fail(Err::ShapeMismatch, "render_table: row arity " + std::to_string(row.size()) +
                                         " vs " + std::to_string(t.columns.size()) + " columns");
        for (size_t c = 0; c < row.size(); ++c)
            width[c] = std::max(width[c], display_width(row[c]));
    }
    std::ostringstream out;
    out << t.title << "\n";
    auto emit = [&](const std::vector<std::string>& cells) {
        for (size_t c = 0; c < cells.size(); ++c) {
            out << cells[c];
            if (c + 1 < cells.size())
                out << std::string(width[c] - display_width(cells[c]) + 2, ' ');
        }
        out << "\n";
    };
    emit(t.columns);
    std::vector<std::string> dashes;
    for (size_t c = 0; c < t.columns.size(); ++c) dashes.push_back(std::string(width[c], '-'));
    emit(dashes);
    for (const auto& row : t.rows) emit(row);
    return out.str();
}

std::vector<AblationTable> ablate(const PipelineConfig& base, const LoadedCorpus& corpus,
                                  const std::string& sweep, std::ostream* log) {
    validate(base);
    auto metric_row = [](const EvalResult& r) {
        return std::vector<std::string>{fixed3(r.bleu4), fixed3(r.rouge_l), fixed3(r.meteor),
                                        fixed3(r.cider_d)};
    };
    auto log_cell = [&](const std::string& label, const EvalResult& r) {
        if (log) *log << sweep << " " << label << ": " << metrics_json(r) << "\n";
    };

    if (sweep == "entity") {
        AblationTable t;
        t.title = "Effect of the entity-node budget";
        t.columns = {"#Entity", "BLEU-4", "ROUGE-L", "METEOR", "CIDEr"};
        for (int budget : {100, 200, 300, 400, 500}) {
            PipelineConfig cfg = base;
            cfg.use_graph = true;
            cfg.use_multiscale = true;
            cfg.scale_budgets.clear();
            for (int i = 1; i <= 5; ++i) cfg.scale_budgets.push_back(budget * i / 5);
            cfg.final_scale_index = 4;
            EvalResult r = run_cell(cfg, corpus);
            log_cell(std::to_string(budget), r);
            std::vector<std::string> row{std::to_string(budget)};
            for (auto& cell : metric_row(r)) row.push_back(cell);
            t.rows.push_back(row);
        }
        return {t};
    }

    if (sweep == "visual") {
        AblationTable t;
        t.title = "Effect of the visual-feature count";
        t.columns = {"Number", "BLEU-4", "ROUGE-L", "METEOR", "CIDEr"};
        for (int n : {100, 300, 500, 700, 1000}) {
            PipelineConfig cfg = base;
            cfg.use_dvg = true;
            cfg.n_visual = n;
            EvalResult r = run_cell(cfg, corpus);
            log_cell(std::to_string(n), r);
            std::vector<std::string> row{std::to_string(n)};
            for (auto& cell : metric_row(r)) row.push_back(cell);
            t.rows.push_back(row);
        }
        return {t};
    }

    if (sweep == "encoder") {
        AblationTable t;
        t.title = "Graph encoder variants";
        t.columns = {"Encoder", "BLEU-4", "ROUGE-L", "METEOR", "CIDEr"};
        const std::pair<const char*, const char*> variants[] = {
            {"GCN", "gcn"}, {"RGCN", "rgcn"}, {"GAT", "gat"}};
        for (auto& [label, key] : variants) {
            PipelineConfig cfg = base;
            cfg.use_graph = true;
            cfg.use_rgcn_variant = key;
            EvalResult r = run_cell(cfg, corpus);
            log_cell(label, r);
            std::vector<std::string> row{label};
            for (auto& cell : metric_row(r)) row.push_back(cell);
            t.rows.push_back(row);
        }
        return {t};
    }

    if (sweep == "toggles") {
        struct Row {
            const char* setting;
            bool rg, mf, dvg;
        };
        const Row rows[] = {{"BASE", false, false, false},
                            {"(a)", false, false, true},
                            {"(b)", true, false, false},
                            {"(c)", true, true, false},
                            {"(d)", true, true, true}};
        AblationTable ce;
        ce.title = "Component ablation (CE metrics)";
        ce.columns = {"Dataset", "Setting", "RG", "MF", "DVG", "Precision", "Recall", "F1"};
        AblationTable nlg;
        nlg.title = "Component ablation (NLG metrics)";
        nlg.columns = {"Dataset", "Setting", "RG",     "MF",     "DVG",   "BLEU-1",
                       "BLEU-2",  "BLEU-3",  "BLEU-4", "RG-L",   "METEOR", "CIDEr"};
        auto mark = [](bool on) { return std::string(on ? "✓" : "-"); };
        for (const Row& row : rows) {
            PipelineConfig cfg = base;
            cfg.use_graph = row.rg;
            cfg.use_multiscale = row.mf;
            cfg.use_dvg = row.dvg;
            EvalResult r = run_cell(cfg, corpus);
            log_cell(row.setting, r);
            ce.rows.push_back({"synthetic", row.setting, mark(row.rg), mark(row.mf),
                               mark(row.dvg), fixed3(r.ce.precision), fixed3(r.ce.recall),
                               fixed3(r.ce.f1)});
            nlg.rows.push_back({"synthetic", row.setting, mark(row.rg), mark(row.mf),
                                mark(row.dvg), fixed3(r.bleu1), fixed3(r.bleu2), fixed3(r.bleu3),
                                fixed3(r.bleu4), fixed3(r.rouge_l), fixed3(r.meteor),
                                fixed3(r.cider_d)});
        }
        return {ce, nlg};
    }

    fail(Err::BadParams, "ablate: unknown sweep '" + sweep + "'");
}

} // namespace m3kg
