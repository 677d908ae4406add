// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: knowledge-graph utilities (build vision tokens
// from activation maps, multi-scale sampling, statistics, DOT export),
// synthetic corpus generation, and the train / evaluate / ablate loop.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "m3kg/config.hpp"
#include "m3kg/errors.hpp"
#include "m3kg/eval_metrics.hpp"
#include "m3kg/kg_sampler.hpp"
#include "m3kg/kg_store.hpp"
#include "m3kg/pipeline.hpp"
#include "m3kg/synth.hpp"
#include "m3kg/vision_path.hpp"

namespace {

constexpr int kPatch = 8;

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) m3kg::fail(m3kg::Err::IoError, "cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) m3kg::fail(m3kg::Err::IoError, "cannot open " + path + " for writing");
    out << text;
}

std::vector<int> parse_budget_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            m3kg::fail(m3kg::Err::BadBudgets, "bad budget entry '" + item + "'");
        }
    }
    return out;
}

// Rebuilds the vision-token bank of a corpus KG from its activation maps:
// per-patch activation scores select patches of the raw patch matrix, and
// the pooled feature becomes one disease-aware token.
m3kg::KnowledgeGraph build_tokens(const m3kg::LoadedCorpus& corpus, double tau) {
    m3kg::KnowledgeGraph out;
    out.entities = corpus.kg.entities;
    out.triples = corpus.kg.triples;
    out.d_vision = kPatch * kPatch;
    for (const m3kg::SynthPair& pair : corpus.pairs) {
        const m3kg::Mat grid = m3kg::patchify(pair.image, kPatch);
        for (const auto& [label, map] : pair.activation_maps) {
            const m3kg::Mat scores = m3kg::patch_activation(map, kPatch);
            m3kg::VisionToken tok =
                m3kg::extract_vision_token(scores, grid, tau, label, pair.id);
            m3kg::add_vision_token(out, tok.label_index, tok.feature, tok.source_id);
        }
    }
    return out;
}

std::string stats_json(const m3kg::GraphStats& s) {
    std::ostringstream out;
    out << "{\"n_entities\":" << s.n_entities << ",\"n_triples\":" << s.n_triples
        << ",\"n_triple_instances\":" << s.n_triple_instances
        << ",\"n_vision_tokens\":" << s.n_vision_tokens << ",\"per_relation_counts\":{";
    for (int r = 0; r < 3; ++r) {
        out << "\"" << m3kg::to_string(static_cast<m3kg::RelationType>(r))
            << "\":" << s.per_relation_counts[r];
        if (r < 2) out << ",";
    }
    out << "}}";
    return out.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-modal medical-KG report generation pipeline"};
    app.require_subcommand(1);

    // kg group
    CLI::App* kg = app.add_subcommand("kg", "knowledge-graph utilities");
    kg->require_subcommand(1);

    std::string kgb_corpus, kgb_out = "kg.jsonl";
    double kgb_tau = 0.5;
    CLI::App* kg_build =
        kg->add_subcommand("build", "rebuild vision tokens from corpus activation maps");
    kg_build->add_option("--corpus", kgb_corpus, "corpus directory")->required();
    kg_build->add_option("--out", kgb_out, "output KG file");
    kg_build->add_option("--tau", kgb_tau, "activation threshold in (0, 1]");

    std::string kgs_in, kgs_out = "scales.jsonl", kgs_budgets = "60,120,180,240,300";
    CLI::App* kg_sample = kg->add_subcommand("sample", "multi-scale subgraph sampling");
    kg_sample->add_option("--in", kgs_in, "KG file")->required();
    kg_sample->add_option("--out", kgs_out, "output scales file");
    kg_sample->add_option("--budgets", kgs_budgets, "comma-separated node budgets");

    std::string kgt_in;
    CLI::App* kg_stats = kg->add_subcommand("stats", "print graph statistics as JSON");
    kg_stats->add_option("--in", kgt_in, "KG file")->required();

    std::string kgd_in, kgd_out;
    int kgd_max_nodes = 50;
    CLI::App* kg_dot = kg->add_subcommand("export-dot", "export the KG in DOT format");
    kg_dot->add_option("--in", kgd_in, "KG file")->required();
    kg_dot->add_option("--out", kgd_out, "output file (default stdout)");
    kg_dot->add_option("--max-nodes", kgd_max_nodes, "node cap, most-connected first");

    // synth
    m3kg::SynthSpec spec;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus + ground-truth KG");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", spec.seed, "generator seed");
    synth->add_option("--pairs", spec.n_pairs, "number of image/report pairs");
    synth->add_option("--grid", spec.grid, "image side length (multiple of 8)");
    synth->add_option("--diseases", spec.n_diseases, "catalog prefix size (0..13)");
    synth->add_option("--d-vision", spec.d_vision, "vision token width");

    // train
    std::string tr_cfg, tr_corpus, tr_out = "model.ckpt";
    CLI::App* train_cmd = app.add_subcommand("train", "end-to-end training on a corpus");
    train_cmd->add_option("-c,--config", tr_cfg, "config file")->required();
    train_cmd->add_option("--corpus", tr_corpus, "corpus directory")->required();
    train_cmd->add_option("--out", tr_out, "checkpoint path");

    // evaluate
    std::string ev_cfg, ev_ckpt, ev_corpus, ev_hyp, ev_ref, ev_hyp_labels, ev_ref_labels;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "greedy decoding + metrics JSON");
    eval_cmd->add_option("-c,--config", ev_cfg, "config file");
    eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint path");
    eval_cmd->add_option("--corpus", ev_corpus, "corpus directory");
    eval_cmd->add_option("--hyp", ev_hyp, "hypothesis file, one report per line");
    eval_cmd->add_option("--ref", ev_ref, "reference file, aligned with --hyp");
    eval_cmd->add_option("--hyp-labels", ev_hyp_labels, "JSONL label vectors for --hyp");
    eval_cmd->add_option("--ref-labels", ev_ref_labels, "JSONL label vectors for --ref");

    // ablate
    std::string ab_cfg, ab_corpus, ab_sweep;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "ablation sweeps rendered as aligned tables");
    ablate_cmd->add_option("-c,--config", ab_cfg, "config file")->required();
    ablate_cmd->add_option("--corpus", ab_corpus, "corpus directory")->required();
    ablate_cmd->add_option("--sweep", ab_sweep, "entity|visual|encoder|toggles")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (kg_build->parsed()) {
            m3kg::LoadedCorpus corpus = m3kg::load_corpus(kgb_corpus);
            m3kg::KnowledgeGraph g = build_tokens(corpus, kgb_tau);
            m3kg::save(g, kgb_out);
            std::cout << stats_json(m3kg::stats(g)) << "\n";
        } else if (kg_sample->parsed()) {
            m3kg::KnowledgeGraph g = m3kg::load(kgs_in);
            m3kg::MultiScaleGraph ms = m3kg::build_multiscale(g, parse_budget_list(kgs_budgets));
            m3kg::save_scales(g, ms, kgs_out);
            for (const auto& [budget, sg] : ms.scales)
                std::cout << "budget=" << budget << " nodes=" << sg.node_ids.size()
                          << " triples=" << sg.triples.size() << "\n";
        } else if (kg_stats->parsed()) {
            std::cout << stats_json(m3kg::stats(m3kg::load(kgt_in))) << "\n";
        } else if (kg_dot->parsed()) {
            const std::string dot = m3kg::export_dot(m3kg::load(kgd_in), kgd_max_nodes);
            if (kgd_out.empty())
                std::cout << dot;
            else
                write_text(kgd_out, dot);
        } else if (synth->parsed()) {
            m3kg::SynthCorpus corpus = m3kg::synth_corpus(spec);
            m3kg::write_corpus(corpus, synth_out);
            std::cout << "pairs=" << corpus.pairs.size() << " entities="
                      << corpus.kg.entities.size() << " triples=" << corpus.kg.triples.size()
                      << " vision_tokens=" << corpus.kg.vision_tokens.size() << "\n";
        } else if (train_cmd->parsed()) {
            m3kg::PipelineConfig cfg = m3kg::load_config(tr_cfg);
            m3kg::LoadedCorpus corpus = m3kg::load_corpus(tr_corpus);
            m3kg::Model model = m3kg::make_model(cfg, corpus);
            m3kg::TrainOptions opts;
            opts.log = &std::cout;
            m3kg::train(model, corpus, opts);
            m3kg::save_model(tr_out, model);
            std::cout << "checkpoint=" << tr_out << "\n";
            std::cout << m3kg::metrics_json(m3kg::evaluate(model, corpus)) << "\n";
        } else if (eval_cmd->parsed()) {
            if (!ev_hyp.empty() || !ev_ref.empty()) {
                if (ev_hyp.empty() || ev_ref.empty())
                    m3kg::fail(m3kg::Err::BadParams, "--hyp and --ref must be given together");
                std::vector<m3kg::LabelVector> hl, rl;
                const bool with_labels = !ev_hyp_labels.empty() || !ev_ref_labels.empty();
                if (with_labels) {
                    if (ev_hyp_labels.empty() || ev_ref_labels.empty())
                        m3kg::fail(m3kg::Err::BadParams,
                                   "--hyp-labels and --ref-labels must be given together");
                    hl = m3kg::load_label_file(ev_hyp_labels);
                    rl = m3kg::load_label_file(ev_ref_labels);
                }
                m3kg::EvalResult r =
                    m3kg::score_files(read_lines(ev_hyp), read_lines(ev_ref),
                                      with_labels ? &hl : nullptr, with_labels ? &rl : nullptr);
                std::cout << m3kg::metrics_json(r) << "\n";
            } else {
                if (ev_cfg.empty() || ev_ckpt.empty() || ev_corpus.empty())
                    m3kg::fail(m3kg::Err::BadParams,
                               "model evaluation needs -c, --ckpt, and --corpus");
                m3kg::PipelineConfig cfg = m3kg::load_config(ev_cfg);
                m3kg::LoadedCorpus corpus = m3kg::load_corpus(ev_corpus);
                m3kg::Model model = m3kg::load_model(ev_ckpt, cfg, corpus);
                std::cout << m3kg::metrics_json(m3kg::evaluate(model, corpus)) << "\n";
            }
        } else if (ablate_cmd->parsed()) {
            m3kg::PipelineConfig cfg = m3kg::load_config(ab_cfg);
            m3kg::LoadedCorpus corpus = m3kg::load_corpus(ab_corpus);
            std::vector<m3kg::AblationTable> tables =
                m3kg::ablate(cfg, corpus, ab_sweep, &std::cerr);
            for (size_t i = 0; i < tables.size(); ++i) {
                if (i) std::cout << "\n";
                std::cout << m3kg::render_table(tables[i]);
            }
        }
    } catch (const m3kg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
