#include "kfan/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "kfan/error.hpp"

namespace kfan {

namespace {

struct Entry {
    std::string value;
    int line;
};

struct ParsedFile {
    std::map<std::string, Entry> entries;  // key: "section/key" ("" section = top)
    int line_count = 0;
    bool seen_data_section = false;
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

const std::map<std::string, std::vector<std::string>>& known_keys() {
    static const std::map<std::string, std::vector<std::string>> keys = {
        {"", {"task", "seed", "eta", "cd_steps", "epochs", "batch",
              "weight_init_stddev", "momentum", "weight_decay", "joint_epochs",
              "mf_sweeps", "mf_tolerance", "mf_damping", "lambda",
              "epsilon_clamp", "max_iterations", "shared", "lbfgs_memory",
              "wolfe_c1", "wolfe_c2", "grad_tolerance", "max_line_search_steps",
              "binarize_threshold", "copies_per_image", "train_count",
              "test_count"}},
        {"branch.x", {"hidden"}},
        {"branch.y", {"hidden"}},
        {"branch.z", {"hidden"}},
        {"data", {"source", "images", "labels", "file", "count", "ambiguity"}},
        {"noise", {"strokes", "thickness", "control_points", "coverage",
                   "max_retries"}},
    };
    return keys;
}

ParsedFile scan(const std::string& text) {
    ParsedFile file;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("unterminated section header", line_no);
            section = trim(line.substr(1, line.size() - 2));
            if (!known_keys().count(section))
                throw ParseError("unknown section [" + section + "]", line_no);
            if (section == "data") file.seen_data_section = true;
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected `key = value`", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", line_no);
        if (value.empty()) throw ParseError("empty value for " + key, line_no);

        const auto& allowed = known_keys().at(section);
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            const std::string where =
                section.empty() ? "at top level" : "in section [" + section + "]";
            throw ParseError("unknown key '" + key + "' " + where, line_no);
        }

        const std::string scoped = section + "/" + key;
        const auto [it, fresh] = file.entries.insert({scoped, {value, line_no}});
        if (!fresh)
            throw ParseError("duplicate key '" + key + "' (lines " +
                                 std::to_string(it->second.line) + " and " +
                                 std::to_string(line_no) + ")",
                             line_no);
    }
    file.line_count = line_no;
    return file;
}

class Assigner {
  public:
    explicit Assigner(const ParsedFile& file) : file_(file) {}

    bool has(const std::string& scoped) const { return file_.entries.count(scoped); }

    void real(const std::string& scoped, double& out) {
        const Entry* e = find(scoped);
        if (!e) return;
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(e->value.c_str(), &end);
        if (errno != 0 || end == e->value.c_str() || *end != '\0')
            throw ParseError("expected a real number for " + name(scoped), e->line);
        out = v;
    }

    void integer(const std::string& scoped, long long& out) {
        const Entry* e = find(scoped);
        if (!e) return;
        out = to_int(e->value, scoped, e->line);
    }

    template <typename T>
    void integer_as(const std::string& scoped, T& out) {
        long long v = static_cast<long long>(out);
        integer(scoped, v);
        out = static_cast<T>(v);
    }

    void unsigned64(const std::string& scoped, std::uint64_t& out) {
        const Entry* e = find(scoped);
        if (!e) return;
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
        if (errno != 0 || end == e->value.c_str() || *end != '\0' ||
            e->value.front() == '-')
            throw ParseError("expected an unsigned integer for " + name(scoped),
                             e->line);
        out = v;
    }

    void string(const std::string& scoped, std::string& out) {
        const Entry* e = find(scoped);
        if (!e) return;
        out = e->value;
    }

    void real_pair(const std::string& scoped, std::pair<double, double>& out) {
        const Entry* e = find(scoped);
        if (!e) return;
        const std::vector<double> vals = to_real_list(e->value, scoped, e->line);
        if (vals.size() != 2)
            throw ParseError("expected two comma-separated numbers for " +
                                 name(scoped),
                             e->line);
        out = {vals[0], vals[1]};
    }

    void index_list(const std::string& scoped, std::vector<Eigen::Index>& out) {
        const Entry* e = find(scoped);
        if (!e) return;
        out.clear();
        for (double v : to_real_list(e->value, scoped, e->line)) {
            const auto i = static_cast<long long>(v);
            if (static_cast<double>(i) != v || i <= 0)
                throw ParseError("expected positive integers for " + name(scoped),
                                 e->line);
            out.push_back(static_cast<Eigen::Index>(i));
        }
        if (out.empty())
            throw ParseError("expected at least one value for " + name(scoped),
                             e->line);
    }

    int line_of(const std::string& scoped) const {
        const Entry* e = find(scoped);
        return e ? e->line : 0;
    }

  private:
    static std::string name(const std::string& scoped) {
        return scoped.substr(scoped.find('/') + 1);
    }

    const Entry* find(const std::string& scoped) const {
        const auto it = file_.entries.find(scoped);
        return it == file_.entries.end() ? nullptr : &it->second;
    }

    long long to_int(const std::string& value, const std::string& scoped, int line) {
        char* end = nullptr;
        errno = 0;
        const long long v = std::strtoll(value.c_str(), &end, 10);
        if (errno != 0 || end == value.c_str() || *end != '\0')
            throw ParseError("expected an integer for " + name(scoped), line);
        return v;
    }

    std::vector<double> to_real_list(const std::string& value,
                                     const std::string& scoped, int line) {
        std::vector<double> out;
        std::size_t at = 0;
        while (at <= value.size()) {
            const auto comma = value.find(',', at);
            const std::string piece = trim(
                value.substr(at, comma == std::string::npos ? comma : comma - at));
            if (piece.empty())
                throw ParseError("empty element in list for " + name(scoped), line);
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(piece.c_str(), &end);
            if (errno != 0 || end == piece.c_str() || *end != '\0')
                throw ParseError("expected numbers for " + name(scoped), line);
            out.push_back(v);
            if (comma == std::string::npos) break;
            at = comma + 1;
        }
        return out;
    }

    const ParsedFile& file_;
};

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    const ParsedFile file = scan(text);
    if (!file.seen_data_section)
        throw ParseError("missing required section [data]",
                         file.line_count == 0 ? 1 : file.line_count);

    RunConfig cfg;
    Assigner a(file);

    std::string task = "restore-label";
    a.string("/task", task);
    if (task == "restore-label")
        cfg.task = Task::restore_label;
    else if (task == "multiview")
        cfg.task = Task::multiview;
    else
        throw ParseError("task must be restore-label or multiview",
                         a.line_of("/task"));

    a.unsigned64("/seed", cfg.seed);
    a.real("/eta", cfg.pretrain.learning_rate);
    a.integer_as("/cd_steps", cfg.pretrain.cd_steps);
    a.integer_as("/epochs", cfg.pretrain.epochs);
    a.integer_as("/batch", cfg.pretrain.batch_size);
    a.real("/weight_init_stddev", cfg.pretrain.weight_init_stddev);
    a.real("/momentum", cfg.pretrain.momentum);
    a.real("/weight_decay", cfg.pretrain.weight_decay);

    static_cast<TrainConfig&>(cfg.joint) = cfg.pretrain;
    a.integer_as("/joint_epochs", cfg.joint_epochs);
    a.integer_as("/mf_sweeps", cfg.joint.mf_sweeps);
    a.real("/mf_tolerance", cfg.joint.mf_tolerance);
    a.real("/mf_damping", cfg.joint.mf_damping);

    a.real("/lambda", cfg.finetune.lambda);
    a.real("/epsilon_clamp", cfg.finetune.epsilon_clamp);
    a.integer_as("/max_iterations", cfg.finetune.max_iterations);
    cfg.finetune.task = cfg.task;
    cfg.lbfgs.max_iterations = cfg.finetune.max_iterations;

    a.integer_as("/lbfgs_memory", cfg.lbfgs.memory);
    a.real("/wolfe_c1", cfg.lbfgs.wolfe_c1);
    a.real("/wolfe_c2", cfg.lbfgs.wolfe_c2);
    a.real("/grad_tolerance", cfg.lbfgs.grad_tolerance);
    a.integer_as("/max_line_search_steps", cfg.lbfgs.max_line_search_steps);

    a.integer_as("/shared", cfg.shared_dim);
    a.real("/binarize_threshold", cfg.binarize_threshold);
    a.integer_as("/copies_per_image", cfg.copies_per_image);
    a.integer_as("/train_count", cfg.train_count);
    a.integer_as("/test_count", cfg.test_count);

    a.index_list("branch.x/hidden", cfg.hidden_x);
    a.index_list("branch.y/hidden", cfg.hidden_y);
    a.index_list("branch.z/hidden", cfg.hidden_z);

    std::string source = "synth-digits";
    a.string("data/source", source);
    if (source == "synth-digits")
        cfg.data.source = DataConfig::Source::synth_digits;
    else if (source == "synth-multiview")
        cfg.data.source = DataConfig::Source::synth_multiview;
    else if (source == "idx")
        cfg.data.source = DataConfig::Source::idx;
    else if (source == "kmvd")
        cfg.data.source = DataConfig::Source::kmvd;
    else
        throw ParseError(
            "source must be synth-digits, synth-multiview, idx, or kmvd",
            a.line_of("data/source"));

    std::string path;
    a.string("data/images", path);
    if (!path.empty()) cfg.data.images = path;
    path.clear();
    a.string("data/labels", path);
    if (!path.empty()) cfg.data.labels = path;
    path.clear();
    a.string("data/file", path);
    if (!path.empty()) cfg.data.file = path;
    a.integer_as("data/count", cfg.data.count);
    a.real("data/ambiguity", cfg.data.ambiguity);

    a.integer_as("noise/strokes", cfg.noise.num_strokes);
    a.real_pair("noise/thickness", cfg.noise.thickness_range);
    a.integer_as("noise/control_points", cfg.noise.control_points);
    a.real_pair("noise/coverage", cfg.noise.coverage_range);
    a.integer_as("noise/max_retries", cfg.noise.max_retries);
    cfg.noise.rng_seed = cfg.seed;

    if (cfg.pretrain.learning_rate <= 0.0)
        throw ParseError("eta must be positive", a.line_of("/eta"));
    if (cfg.shared_dim <= 0)
        throw ParseError("shared must be positive", a.line_of("/shared"));
    if (cfg.train_count <= 0 || cfg.test_count <= 0)
        throw ParseError("train_count and test_count must be positive",
                         std::max(a.line_of("/train_count"),
                                  a.line_of("/test_count")));
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    auto line = [&](const std::string& key, const std::string& value) {
        out += key + " = " + value + "\n";
    };
    line("task", cfg.task == Task::restore_label ? "restore-label" : "multiview");
    line("seed", std::to_string(cfg.seed));
    line("eta", format_real(cfg.pretrain.learning_rate));
    line("cd_steps", std::to_string(cfg.pretrain.cd_steps));
    line("epochs", std::to_string(cfg.pretrain.epochs));
    line("batch", std::to_string(cfg.pretrain.batch_size));
    line("weight_init_stddev", format_real(cfg.pretrain.weight_init_stddev));
    line("momentum", format_real(cfg.pretrain.momentum));
    line("weight_decay", format_real(cfg.pretrain.weight_decay));
    line("joint_epochs", std::to_string(cfg.joint_epochs));
    line("mf_sweeps", std::to_string(cfg.joint.mf_sweeps));
    line("mf_tolerance", format_real(cfg.joint.mf_tolerance));
    line("mf_damping", format_real(cfg.joint.mf_damping));
    line("lambda", format_real(cfg.finetune.lambda));
    line("epsilon_clamp", format_real(cfg.finetune.epsilon_clamp));
    line("max_iterations", std::to_string(cfg.finetune.max_iterations));
    line("shared", std::to_string(cfg.shared_dim));
    line("lbfgs_memory", std::to_string(cfg.lbfgs.memory));
    line("wolfe_c1", format_real(cfg.lbfgs.wolfe_c1));
    line("wolfe_c2", format_real(cfg.lbfgs.wolfe_c2));
    line("grad_tolerance", format_real(cfg.lbfgs.grad_tolerance));
    line("max_line_search_steps", std::to_string(cfg.lbfgs.max_line_search_steps));
    line("binarize_threshold", format_real(cfg.binarize_threshold));
    line("copies_per_image", std::to_string(cfg.copies_per_image));
    line("train_count", std::to_string(cfg.train_count));
    line("test_count", std::to_string(cfg.test_count));

    auto hidden_line = [&](const char* section, const std::vector<Eigen::Index>& h) {
        out += std::string("\n[") + section + "]\n";
        std::string value;
        for (std::size_t i = 0; i < h.size(); ++i)
            value += (i == 0 ? "" : ", ") + std::to_string(h[i]);
        line("hidden", value);
    };
    hidden_line("branch.x", cfg.hidden_x);
    hidden_line("branch.y", cfg.hidden_y);
    hidden_line("branch.z", cfg.hidden_z);

    out += "\n[data]\n";
    switch (cfg.data.source) {
        case DataConfig::Source::synth_digits: line("source", "synth-digits"); break;
        case DataConfig::Source::synth_multiview:
            line("source", "synth-multiview");
            break;
        case DataConfig::Source::idx: line("source", "idx"); break;
        case DataConfig::Source::kmvd: line("source", "kmvd"); break;
    }
    if (!cfg.data.images.empty()) line("images", cfg.data.images.string());
    if (!cfg.data.labels.empty()) line("labels", cfg.data.labels.string());
    if (!cfg.data.file.empty()) line("file", cfg.data.file.string());
    line("count", std::to_string(cfg.data.count));
    line("ambiguity", format_real(cfg.data.ambiguity));

    out += "\n[noise]\n";
    line("strokes", std::to_string(cfg.noise.num_strokes));
    line("thickness", format_real(cfg.noise.thickness_range.first) + ", " +
                          format_real(cfg.noise.thickness_range.second));
    line("control_points", std::to_string(cfg.noise.control_points));
    line("coverage", format_real(cfg.noise.coverage_range.first) + ", " +
                         format_real(cfg.noise.coverage_range.second));
    line("max_retries", std::to_string(cfg.noise.max_retries));
    return out;
}

}  // namespace kfan
