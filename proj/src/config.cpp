// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "m3kg/errors.hpp"

namespace m3kg {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& v, int lineno) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        fail(Err::BadConfig, "config: not an integer: \"" + v + "\"", lineno);
    return out;
}

double parse_double(const std::string& v, int lineno) {
    try {
        size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size())
            fail(Err::BadConfig, "config: not a number: \"" + v + "\"", lineno);
        return out;
    } catch (const std::invalid_argument&) {
        fail(Err::BadConfig, "config: not a number: \"" + v + "\"", lineno);
    } catch (const std::out_of_range&) {
        fail(Err::BadConfig, "config: number out of range: \"" + v + "\"", lineno);
    }
}

bool parse_bool(const std::string& v, int lineno) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(Err::BadConfig, "config: not a boolean: \"" + v + "\"", lineno);
}

std::vector<int> parse_int_list(const std::string& v, int lineno) {
    std::vector<int> out;
    std::string item;
    std::stringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            fail(Err::BadConfig, "config: empty item in list \"" + v + "\"", lineno);
        out.push_back(static_cast<int>(parse_int(item, lineno)));
    }
    if (out.empty()) fail(Err::BadConfig, "config: empty list", lineno);
    return out;
}

// Shortest decimal form that parses back to the same double.
std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig c;
    std::stringstream ss(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(ss, raw)) {
        ++lineno;
        const size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(Err::BadConfig, "config: expected `key = value`, got \"" + line + "\"",
                 lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) fail(Err::BadConfig, "config: empty key", lineno);
        if (val.empty())
            fail(Err::BadConfig, "config: empty value for key \"" + key + "\"", lineno);

        if (key == "seed") c.seed = static_cast<uint64_t>(parse_int(val, lineno));
        else if (key == "d") c.d = static_cast<int>(parse_int(val, lineno));
        else if (key == "d_dec") c.d_dec = static_cast<int>(parse_int(val, lineno));
        else if (key == "heads") c.heads = static_cast<int>(parse_int(val, lineno));
        else if (key == "scale_budgets") c.scale_budgets = parse_int_list(val, lineno);
        else if (key == "final_scale_index")
            c.final_scale_index = static_cast<int>(parse_int(val, lineno));
        else if (key == "n_visual") c.n_visual = static_cast<int>(parse_int(val, lineno));
        else if (key == "tau") c.tau = parse_double(val, lineno);
        else if (key == "retrieval_query") c.retrieval_query = val;
        else if (key == "use_rgcn_variant") c.use_rgcn_variant = val;
        else if (key == "use_graph") c.use_graph = parse_bool(val, lineno);
        else if (key == "use_multiscale") c.use_multiscale = parse_bool(val, lineno);
        else if (key == "use_dvg") c.use_dvg = parse_bool(val, lineno);
        else if (key == "lr") c.lr = parse_double(val, lineno);
        else if (key == "steps") c.steps = static_cast<int>(parse_int(val, lineno));
        else if (key == "batch") c.batch = static_cast<int>(parse_int(val, lineno));
        else if (key == "max_len") c.max_len = static_cast<int>(parse_int(val, lineno));
        else fail(Err::BadConfig, "config: unknown key \"" + key + "\"", lineno);
    }
    return c;
}

std::string render_config(const PipelineConfig& c) {
    std::ostringstream out;
    out << "seed = " << c.seed << "\n";
    out << "d = " << c.d << "\n";
    out << "d_dec = " << c.d_dec << "\n";
    out << "heads = " << c.heads << "\n";
    out << "scale_budgets = ";
    for (size_t i = 0; i < c.scale_budgets.size(); ++i) {
        if (i) out << ",";
        out << c.scale_budgets[i];
    }
    out << "\n";
    out << "final_scale_index = " << c.final_scale_index << "\n";
    out << "n_visual = " << c.n_visual << "\n";
    out << "tau = " << format_double(c.tau) << "\n";
    out << "retrieval_query = " << c.retrieval_query << "\n";
    out << "use_rgcn_variant = " << c.use_rgcn_variant << "\n";
    out << "use_graph = " << (c.use_graph ? "true" : "false") << "\n";
    out << "use_multiscale = " << (c.use_multiscale ? "true" : "false") << "\n";
    out << "use_dvg = " << (c.use_dvg ? "true" : "false") << "\n";
    out << "lr = " << format_double(c.lr) << "\n";
    out << "steps = " << c.steps << "\n";
    out << "batch = " << c.batch << "\n";
    out << "max_len = " << c.max_len << "\n";
    return out.str();
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::IoError, "config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate(const PipelineConfig& c) {
    const auto bad = [](const std::string& msg) { fail(Err::BadConfig, "config: " + msg); };
    if (c.d < 1) bad("d must be positive");
    if (c.d_dec < 1) bad("d_dec must be positive");
    if (c.heads < 1) bad("heads must be positive");
    if (c.d % c.heads != 0) bad("d must be divisible by heads");
    if (c.d_dec % c.heads != 0) bad("d_dec must be divisible by heads");
    if (c.scale_budgets.empty()) bad("scale_budgets must be non-empty");
    int prev = 0;
    for (int b : c.scale_budgets) {
        if (b <= prev) bad("scale_budgets must be positive and strictly increasing");
        prev = b;
    }
    if (c.final_scale_index < 0 ||
        c.final_scale_index >= static_cast<int>(c.scale_budgets.size()))
        bad("final_scale_index out of range");
    if (c.n_visual < 1) bad("n_visual must be positive");
    if (!(c.tau > 0.0 && c.tau <= 1.0)) bad("tau must be in (0, 1]");
    if (c.retrieval_query != "qformer" && c.retrieval_query != "patches")
        bad("retrieval_query must be qformer or patches");
    if (c.use_rgcn_variant != "rgcn" && c.use_rgcn_variant != "gcn" &&
        c.use_rgcn_variant != "gat")
        bad("use_rgcn_variant must be rgcn, gcn, or gat");
    if (!(c.lr > 0.0)) bad("lr must be positive");
    if (c.steps < 0) bad("steps must be non-negative");
    if (c.batch < 1) bad("batch must be positive");
    if (c.max_len < 1) bad("max_len must be positive");
}

} // namespace m3kg
