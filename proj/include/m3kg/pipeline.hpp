// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: model construction from a PipelineConfig,
// the stable parameter registry backing optimizer slots and checkpoints,
// the training loop, greedy evaluation with the full metric set, and the
// ablation harness.
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "m3kg/checkpoint.hpp"
#include "m3kg/config.hpp"
#include "m3kg/crossmodal_bridge.hpp"
#include "m3kg/eval_metrics.hpp"
#include "m3kg/graph_encoder.hpp"
#include "m3kg/kg_sampler.hpp"
#include "m3kg/node_encoder.hpp"
#include "m3kg/report_decoder.hpp"
#include "m3kg/scale_fusion.hpp"
#include "m3kg/synth.hpp"
#include "m3kg/vision_path.hpp"

namespace m3kg {

// Every learnable parameter of the pipeline. Branches switched off by the
// config toggles are left empty and never registered, bound, or saved.
struct Model {
    PipelineConfig config;
    Vocab vocab;
    PatchEncoderParams patch;
    QFormerParams qform;       // label-count query slots; dvg + qformer query only
    MhaParams retr_attn;       // memory readout; dvg only
    GraphEncoderParams graph;  // use_graph only
    FusionParams fusion;       // use_graph && use_multiscale only
    BridgeParams bridge;       // cross-modal attn + per-stream projections
    DecoderParams decoder;
};

// Parameter-independent per-corpus precomputation shared by every step:
// sampled scales, hashed node features, edge tensors, retrieval memory,
// token ids, and the realized prefix layout.
struct StaticInputs {
    int grid = 0;
    int n_patches = 0;
    std::vector<Subgraph> scales;  // one entry when use_multiscale = false
    std::vector<NodeFeatureMatrix> feats;
    std::vector<EdgeIndex> edge_index;
    std::vector<std::vector<int>> edge_type;
    int final_scale = 0;   // scale used for decoding
    int final_nodes = 0;   // rows of X_final; 0 = graph branch absent
    Mat memory;            // retrieval keys/values; 0 x 0 when unused
    std::vector<int> prompt_ids;
    std::vector<std::vector<int>> targets;  // report tokens + <eos>, <= max_len
    PrefixSpans spans;     // layout of F in stream order v, kv, kg2v, v2kg
    int n_f = 0;
    int max_ctx = 0;       // decoder position-table rows
};

StaticInputs prepare_static(const PipelineConfig& cfg, const Vocab& vocab,
                            const LoadedCorpus& corpus);

// Seeds every registered sub-module from config.seed in a fixed order.
Model init_model(const PipelineConfig& cfg, const Vocab& vocab, const StaticInputs& s);

// Vocabulary (reports + prompt) + static inputs + init in one call.
Model make_model(const PipelineConfig& cfg, const LoadedCorpus& corpus);

// Stable walk over every active parameter matrix; the same order backs
// the optimizer slots, the checkpoint, and the per-step tape leaves.
struct ParamRef {
    std::string name;
    Mat* mat;
};
std::vector<ParamRef> param_registry(Model& m);

Checkpoint to_checkpoint(const Model& m);
// Overwrites registry entries by name. Missing names, extra tensors, and
// shape disagreements throw BadCheckpoint.
void load_into(Model& m, const Checkpoint& c);

// Checkpoint at `path` plus a vocabulary sidecar at `path + ".vocab"`.
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path, const PipelineConfig& cfg,
                 const LoadedCorpus& corpus);

// All tape leaves for one step. param_ids parallels param_registry.
struct ModelBound {
    ad::NodeId patch_W = -1, patch_b = -1;
    ad::NodeId queries = -1;
    MhaBound qform_attn;
    MhaBound retr_attn;
    GraphEncoderBound graph;
    FusionBound fusion;
    BridgeBound bridge;
    DecoderBound decoder;
    ad::NodeId memory = -1;  // constant leaf, not a parameter
    std::vector<ad::NodeId> param_ids;
};
ModelBound bind_model(ad::Tape& t, const Model& m, const StaticInputs& s);

// Graph encoding shared by every pair in a step: per-scale forward, scale
// fusion when enabled, and selection of the decode scale. Returns -1 when
// the graph branch is toggled off or the sampled graph is empty.
ad::NodeId graph_branch(ad::Tape& t, const Model& m, const StaticInputs& s,
                        const ModelBound& b);

// Vision path, retrieval, bridges, and prefix assembly for one image.
Prefix pair_prefix(ad::Tape& t, const Mat& image, const Model& m,
                   const ModelBound& b, ad::NodeId X_final);

struct TrainOptions {
    std::ostream* log = nullptr;
    int log_every = 100;
    // Called every check_every steps when set; returning true stops early.
    std::function<bool(int steps_done, Model&)> should_stop;
    int check_every = 0;
};

struct TrainResult {
    int steps_run = 0;
    double last_loss = 0.0;
    PrefixSpans spans;  // realized prefix layout
    int n_f = 0;
    int final_nodes = 0;
};

// Seeded end-to-end optimization of the generation loss with AdamW.
// Pairs are visited round-robin in corpus order; the graph branch is
// computed once per step and shared across the batch.
TrainResult train(Model& m, const LoadedCorpus& corpus, const TrainOptions& opts = {});

struct EvalResult {
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge_l = 0, meteor = 0, cider_d = 0;
    CeScores ce;
    std::vector<std::string> hyps;  // greedy decodes, corpus order
};

// Greedy generation per pair, then corpus metrics against the reports and
// CE scores of the extracted labels against the gold labels.
EvalResult evaluate(const Model& m, const LoadedCorpus& corpus);

// Metric-only scoring of aligned hypothesis/reference lists. Labels are
// extracted from the texts unless both label lists are supplied.
EvalResult score_files(const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs,
                       const std::vector<LabelVector>* hyp_labels = nullptr,
                       const std::vector<LabelVector>* ref_labels = nullptr);

// One-line JSON object: bleu1..4, rouge_l, meteor, cider_d, ce_*.
std::string metrics_json(const EvalResult& r);

struct AblationTable {
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};
std::string render_table(const AblationTable& t);

// sweep selects the cells; every cell trains from scratch with the same
// seed and step budget and is evaluated on the training corpus.
//   entity  - decode-scale node budgets 100..500, one metric table
//   visual  - retrieval memory sizes 100..1000, one metric table
//   encoder - gcn/rgcn/gat, one metric table
//   toggles - BASE,(a)..(d) rows over the RG/MF/DVG axes; returns the CE
//             table and the NLG table
std::vector<AblationTable> ablate(const PipelineConfig& base, const LoadedCorpus& corpus,
                                  const std::string& sweep, std::ostream* log = nullptr);

} // namespace m3kg
