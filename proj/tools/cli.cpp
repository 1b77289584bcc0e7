#include "cli.hpp"

#include "semlink/channel.hpp"
#include "semlink/codec.hpp"
#include "semlink/embedding_io.hpp"
#include "semlink/experiment.hpp"
#include "semlink/knowledge_base.hpp"
#include "semlink/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#ifndef SEMLINK_VERSION
#define SEMLINK_VERSION "0.0.0"
#endif
#ifndef SEMLINK_BUILD_HASH
#define SEMLINK_BUILD_HASH "unknown"
#endif

namespace semlink::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(DatasetErrc::io, "cannot read " + path.string() + " for digest");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

bool is_flag(const CLI::Option* opt) { return opt->get_expected_min() == 0; }

// Flat "key = value" config: one key per line, keys are long flag names
// without the dashes, '#' starts a comment line, lists are comma separated.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        entries.emplace_back(trim(std::string_view(text).substr(0, eq)),
                             trim(std::string_view(text).substr(eq + 1)));
    }
    return entries;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
    });
}

// Appends config-file settings for every option the command line left unset.
std::vector<std::string> apply_config(std::vector<std::string> args, CLI::App& app) {
    const auto sub_it = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return !a.empty() && a.front() != '-' && app.get_subcommand_no_throw(a) != nullptr;
    });
    if (sub_it == args.end()) return args;
    CLI::App* sub = app.get_subcommand(*sub_it);

    std::string config_path;
    for (auto it = sub_it; it != args.end(); ++it) {
        if (*it == "--config" && std::next(it) != args.end()) config_path = *std::next(it);
        else if (it->rfind("--config=", 0) == 0) config_path = it->substr(9);
    }
    if (config_path.empty()) return args;

    std::vector<std::string> extra;
    for (const auto& [key, value] : read_config(config_path)) {
        if (key == "config") continue;
        const std::string flag = "--" + key;
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (!opt) throw UsageError("unknown config key '" + key + "' for " + sub->get_name());
        if (given_on_command_line(args, flag)) continue;
        if (is_flag(opt)) {
            if (value == "true" || value == "1") extra.push_back(flag);
            else if (value != "false" && value != "0")
                throw UsageError("config key '" + key + "' expects true or false");
        } else {
            extra.push_back(flag + "=" + value);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

// Every option of the subcommand with its effective value, in the config-file format.
std::string resolved_config(const CLI::App& sub) {
    std::ostringstream os;
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        std::string value;
        if (is_flag(opt)) {
            value = opt->count() > 0 ? "true" : "false";
        } else if (opt->count() > 0) {
            const auto& results = opt->results();
            for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
        } else {
            value = opt->get_default_str();
            if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
            value.erase(std::remove(value.begin(), value.end(), ' '), value.end());
        }
        if (value.empty()) continue;
        os << name << " = " << value << '\n';
    }
    return os.str();
}

class Manifest {
public:
    Manifest(const CLI::App& sub, std::uint64_t seed) {
        doc_["tool"] = "semlink";
        doc_["version"] = version_string();
        doc_["subcommand"] = sub.get_name();
        doc_["seed"] = seed;
        doc_["config"] = resolved_config(sub);
        doc_["inputs"] = json::array();
        doc_["outputs"] = json::array();
    }

    void input(const fs::path& path) { doc_["inputs"].push_back({{"path", path.string()}, {"sha256", sha256_file(path)}}); }
    void output(const fs::path& path) { doc_["outputs"].push_back({{"path", path.string()}, {"sha256", sha256_file(path)}}); }

    void write_beside(const fs::path& primary_output) const {
        fs::path path = primary_output;
        path += ".manifest.json";
        std::ofstream out(path);
        out << doc_.dump(2) << '\n';
        if (!out) throw DatasetError(DatasetErrc::io, "cannot write manifest " + path.string());
    }

private:
    json doc_;
};

std::vector<double> parse_snr_list(const std::vector<std::string>& values) {
    std::vector<double> out;
    for (const auto& v : values) {
        try {
            out.push_back(parse_snr_db(trim(v)));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) throw UsageError("empty SNR list");
    return out;
}

ChannelKind parse_kind(const std::string& text) {
    try {
        return parse_channel_kind(text);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::string format_accuracy(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", a);
    return buf;
}

json to_json(const TrainReport& r, const TrainConfig& cfg) {
    json j;
    j["k"] = cfg.k;
    j["channel"] = std::string(to_string(cfg.channel_kind));
    j["validation_snr_db"] = r.validation_snr_db;
    j["train_loss"] = r.train_loss;
    j["val_accuracy"] = r.val_accuracy;
    j["epoch_seconds"] = r.epoch_seconds;
    j["selected_epoch"] = r.selected_epoch;
    j["steps"] = r.steps;
    return j;
}

json to_json(const LatencyReport& r) {
    const auto stage = [](const StageLatency& s) { return json{{"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}}; };
    json j;
    j["n_queries"] = r.n_queries;
    j["kb_size"] = r.kb_size;
    j["k"] = r.k;
    j["clip"] = r.clip_stage_present ? json("present") : json("absent");
    j["net"] = stage(r.net);
    j["kb"] = stage(r.kb);
    j["total"] = stage(r.total);
    j["total_wall_ms"] = r.total_wall_ms;
    j["reference_ms"] = {{"net", 1.0}, {"kb", 1.2}};
    return j;
}

struct GenOptions {
    SyntheticSpec spec;
    std::uint32_t height = 32, width = 32, channels = 3;
    std::string output;
};

struct SplitOptions {
    std::string input, mode, prefix;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

struct BuildKbOptions {
    std::string input, output;
};

struct TrainOptions {
    std::string train, val_transmit, val_kb, output, report, channel = "awgn";
    std::vector<std::string> snr_grid{"-7", "-4", "0", "4", "7"};
    TrainConfig cfg;
};

struct EvalOptions {
    std::string model, transmit, kb, output, channel = "awgn", snr_db = "10";
    bool baseline = false;
    std::size_t trials = 10;
    std::uint64_t seed = 0;
};

struct SweepOptions {
    std::vector<std::string> models;
    std::string transmit, kb, output;
    std::vector<std::string> snr_list{"-7", "-6", "-5", "-4", "-2", "0", "2", "4", "5", "6", "7", "10"};
    std::vector<std::string> channels{"awgn", "rayleigh"};
    std::size_t trials = 10, threads = 1;
    std::uint64_t seed = 0;
    bool no_baseline = false;
};

struct BenchOptions {
    std::string model, kb, output;
    std::size_t queries = 1000;
    std::uint64_t seed = 0;
};

void run_gen(const CLI::App& sub, const GenOptions& o, std::ostream& out) {
    auto ds = generate_synthetic(o.spec);
    ds.image_height = o.height;
    ds.image_width = o.width;
    ds.image_channels = o.channels;
    save_dataset(ds, fs::path(o.output));
    Manifest m(sub, o.spec.seed);
    m.output(o.output);
    m.write_beside(o.output);
    out << "wrote " << ds.size() << " records (" << ds.class_names.size() << " classes, dim " << ds.dim
        << ") to " << o.output << '\n';
}

void run_split(const CLI::App& sub, const SplitOptions& o, std::ostream& out) {
    const auto ds = load_dataset(fs::path(o.input));
    const bool train_val = o.mode == "train-val";
    auto [first, second] = train_val ? split_train_val(ds, SplitSpec{o.seed, o.train_fraction})
                                     : split_transmit_kb(ds, o.seed);
    const fs::path first_path = o.prefix + (train_val ? ".train.semb" : ".transmit.semb");
    const fs::path second_path = o.prefix + (train_val ? ".val.semb" : ".kb.semb");
    save_dataset(first, first_path);
    save_dataset(second, second_path);
    Manifest m(sub, o.seed);
    m.input(o.input);
    m.output(first_path);
    m.output(second_path);
    m.write_beside(first_path);
    out << first_path.string() << ": " << first.size() << " records\n"
        << second_path.string() << ": " << second.size() << " records\n";
}

void run_build_kb(const CLI::App& sub, const BuildKbOptions& o, std::ostream& out) {
    auto ds = load_dataset(fs::path(o.input));
    const auto kb = KnowledgeBase::build(ds);
    std::sort(ds.records.begin(), ds.records.end(),
              [](const EmbeddingRecord& a, const EmbeddingRecord& b) { return a.image_id < b.image_id; });
    save_dataset(ds, fs::path(o.output));
    Manifest m(sub, 0);
    m.input(o.input);
    m.output(o.output);
    m.write_beside(o.output);
    out << "knowledge base: M = " << kb.size() << ", dim " << kb.dim() << " -> " << o.output << '\n';
}

void run_train(const CLI::App& sub, TrainOptions o, std::ostream& out) {
    o.cfg.snr_grid_db = parse_snr_list(o.snr_grid);
    o.cfg.channel_kind = parse_kind(o.channel);
    const auto train_set = load_dataset(fs::path(o.train));
    const auto val_transmit = load_dataset(fs::path(o.val_transmit));
    const auto val_kb = KnowledgeBase::build(load_dataset(fs::path(o.val_kb)));

    const auto [params, report] = train(train_set, val_transmit, val_kb, o.cfg);
    save_params(params, fs::path(o.output));

    const auto report_json = to_json(report, o.cfg);
    Manifest m(sub, o.cfg.seed);
    m.input(o.train);
    m.input(o.val_transmit);
    m.input(o.val_kb);
    m.output(o.output);
    if (!o.report.empty()) {
        std::ofstream rep(o.report);
        rep << report_json.dump(2) << '\n';
        if (!rep) throw DatasetError(DatasetErrc::io, "cannot write report " + o.report);
        rep.close();
        m.output(o.report);
        out << "selected epoch " << report.selected_epoch << " (val accuracy "
            << format_accuracy(report.val_accuracy[report.selected_epoch - 1]) << ") -> " << o.output << '\n';
    } else {
        out << report_json.dump(2) << '\n';
    }
    m.write_beside(o.output);
}

void run_eval(const CLI::App& sub, const EvalOptions& o, std::ostream& out) {
    if (o.model.empty() == !o.baseline) throw UsageError("eval: give exactly one of --model or --baseline");
    const auto transmit_set = load_dataset(fs::path(o.transmit));
    const auto kb = KnowledgeBase::build(load_dataset(fs::path(o.kb)));
    const EvalConfig cfg{parse_kind(o.channel), parse_snr_list({o.snr_db}).front(), o.trials, o.seed};

    SweepRow row;
    row.channel = cfg.channel;
    row.snr_db = cfg.snr_db;
    row.trials = cfg.trials_per_item;
    row.seed = cfg.seed;
    EvalResult result;
    if (o.baseline) {
        result = evaluate_baseline(transmit_set, kb, cfg);
        row.k = transmit_set.dim;
        row.model_id = kBaselineModelId;
    } else {
        const auto model = load_params(fs::path(o.model));
        result = evaluate_codec(model, transmit_set, kb, cfg);
        row.k = model.k();
        row.model_id = fs::path(o.model).stem().string();
    }
    row.cbr = cbr(static_cast<std::int64_t>(row.k), transmit_set.image_height, transmit_set.image_width,
                  transmit_set.image_channels);
    row.accuracy = result.accuracy;
    row.n_items = result.n_items;

    out << "accuracy " << format_accuracy(result.accuracy) << " (" << result.successes << "/"
        << result.n_items * result.trials << ", channel " << to_string(cfg.channel) << ", snr "
        << format_snr_db(cfg.snr_db) << " dB, cbr " << row.cbr.str() << ")\n";

    if (!o.output.empty()) {
        std::ofstream csv(o.output);
        write_sweep_csv(SweepResult{{row}}, csv);
        if (!csv) throw DatasetError(DatasetErrc::io, "cannot write " + o.output);
        csv.close();
        Manifest m(sub, o.seed);
        if (!o.model.empty()) m.input(o.model);
        m.input(o.transmit);
        m.input(o.kb);
        m.output(o.output);
        m.write_beside(o.output);
    }
}

void run_sweep_cmd(const CLI::App& sub, const SweepOptions& o, std::ostream& out) {
    if (o.models.empty() && o.no_baseline) throw UsageError("sweep: nothing to evaluate");
    const auto transmit_set = load_dataset(fs::path(o.transmit));
    const auto kb = KnowledgeBase::build(load_dataset(fs::path(o.kb)));

    std::vector<SweepModel> models;
    std::set<std::string> ids;
    for (const auto& path : o.models) {
        const auto id = fs::path(path).stem().string();
        if (!ids.insert(id).second) throw UsageError("sweep: two models share the id '" + id + "'");
        models.push_back({id, load_params(fs::path(path))});
    }
    SweepConfig cfg;
    cfg.snr_list = parse_snr_list(o.snr_list);
    cfg.channels.clear();
    for (const auto& c : o.channels) cfg.channels.push_back(parse_kind(c));
    cfg.trials_per_item = o.trials;
    cfg.seed = o.seed;
    cfg.include_baseline = !o.no_baseline;
    cfg.threads = o.threads;

    const auto result = run_sweep(models, transmit_set, kb, cfg);
    {
        std::ofstream csv(o.output, std::ios::binary | std::ios::trunc);
        write_sweep_csv(result, csv);
        if (!csv) throw DatasetError(DatasetErrc::io, "cannot write " + o.output);
    }
    Manifest m(sub, o.seed);
    for (const auto& p : o.models) m.input(p);
    m.input(o.transmit);
    m.input(o.kb);
    m.output(o.output);
    m.write_beside(o.output);
    out << "wrote " << result.rows.size() << " sweep rows to " << o.output << '\n';
}

void run_bench(const CLI::App& sub, const BenchOptions& o, std::ostream& out) {
    const auto model = load_params(fs::path(o.model));
    const auto kb = KnowledgeBase::build(load_dataset(fs::path(o.kb)));
    const auto report = to_json(bench_latency(model, kb, o.queries, o.seed));
    out << report.dump(2) << '\n';
    if (!o.output.empty()) {
        std::ofstream f(o.output);
        f << report.dump(2) << '\n';
        if (!f) throw DatasetError(DatasetErrc::io, "cannot write " + o.output);
        f.close();
        Manifest m(sub, o.seed);
        m.input(o.model);
        m.input(o.kb);
        m.output(o.output);
        m.write_beside(o.output);
    }
}

}  // namespace

std::string version_string() { return std::string("semlink ") + SEMLINK_VERSION + " (build " + SEMLINK_BUILD_HASH + ")"; }

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-base assisted semantic embedding transmission simulator", "semlink"};
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    std::string config_path;
    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Flat key = value file with defaults for this command's flags");
    };

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate clustered synthetic embeddings");
    gen_cmd->add_option("--classes", gen.spec.num_classes, "Number of classes")->check(CLI::Range(2u, 1u << 20));
    gen_cmd->add_option("--per-class", gen.spec.per_class, "Records per class")->check(CLI::Range(2u, 1u << 24));
    gen_cmd->add_option("--dim", gen.spec.dim, "Embedding dimension")->check(CLI::Range(2u, 1u << 16));
    gen_cmd->add_option("--spread", gen.spec.intra_spread, "Per-component within-class noise std")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--seed", gen.spec.seed, "Root seed");
    gen_cmd->add_option("--image-height", gen.height, "Source image height")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--image-width", gen.width, "Source image width")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--image-channels", gen.channels, "Source image channels")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--output", gen.output, "Output embedding file")->required();
    add_config(gen_cmd);

    SplitOptions split;
    auto* split_cmd = app.add_subcommand("split", "Stratified train/val or transmit/KB split");
    split_cmd->add_option("--input", split.input, "Input embedding file")->required()->check(CLI::ExistingFile);
    split_cmd->add_option("--mode", split.mode, "train-val or transmit-kb")->required()->check(CLI::IsMember({"train-val", "transmit-kb"}));
    split_cmd->add_option("--seed", split.seed, "Split seed");
    split_cmd->add_option("--train-fraction", split.train_fraction, "Training share per class (train-val)")->check(CLI::Range(0.0, 1.0));
    split_cmd->add_option("--output-prefix", split.prefix, "Writes <prefix>.train/.val or <prefix>.transmit/.kb .semb")->required();
    add_config(split_cmd);

    BuildKbOptions bkb;
    auto* kb_cmd = app.add_subcommand("build-kb", "Build a knowledge base file from a dataset");
    kb_cmd->add_option("--input", bkb.input, "Input embedding file")->required()->check(CLI::ExistingFile);
    kb_cmd->add_option("--output", bkb.output, "Output knowledge base file")->required();
    add_config(kb_cmd);

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train an encoder/decoder with the channel in the loop");
    train_cmd->add_option("--train", tr.train, "Training embeddings")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--val-transmit", tr.val_transmit, "Validation transmit set")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--val-kb", tr.val_kb, "Validation knowledge base")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--k", tr.cfg.k, "Compressed dimension (even)")->check(CLI::Range(std::size_t{2}, std::size_t{4096}));
    train_cmd->add_option("--channel", tr.channel, "awgn or rayleigh");
    train_cmd->add_option("--snr-grid", tr.snr_grid, "Training SNRs in dB")->delimiter(',');
    train_cmd->add_option("--epochs", tr.cfg.epochs, "Epochs")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
    train_cmd->add_option("--lr", tr.cfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--beta1", tr.cfg.adam_beta1, "First-moment decay")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--beta2", tr.cfg.adam_beta2, "Second-moment decay")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--adam-epsilon", tr.cfg.adam_epsilon, "Optimizer epsilon")->check(CLI::PositiveNumber);
    train_cmd->add_option("--bn-momentum", tr.cfg.bn_momentum, "Running-statistics momentum")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--val-trials", tr.cfg.val_trials, "Channel draws per validation item")->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", tr.cfg.seed, "Root seed");
    train_cmd->add_option("--output", tr.output, "Output model file (.scdc)")->required();
    train_cmd->add_option("--report", tr.report, "Write the training report JSON here instead of stdout");
    add_config(train_cmd);

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Semantic accuracy of one model (or the baseline) at one SNR");
    eval_cmd->add_option("--model", ev.model, "Model file")->check(CLI::ExistingFile);
    eval_cmd->add_flag("--baseline", ev.baseline, "Evaluate uncompressed transmission instead of a model");
    eval_cmd->add_option("--transmit", ev.transmit, "Transmit set")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--kb", ev.kb, "Knowledge base")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--channel", ev.channel, "awgn or rayleigh");
    eval_cmd->add_option("--snr-db", ev.snr_db, "SNR in dB, or inf");
    eval_cmd->add_option("--trials", ev.trials, "Channel draws per item")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", ev.seed, "Evaluation seed");
    eval_cmd->add_option("--output", ev.output, "Also write the result as a one-row CSV");
    add_config(eval_cmd);

    SweepOptions sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy over models x channels x SNRs, as CSV");
    sweep_cmd->add_option("--model", sw.models, "Model file (repeatable); id is the file stem")->check(CLI::ExistingFile);
    sweep_cmd->add_option("--transmit", sw.transmit, "Transmit set")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--kb", sw.kb, "Knowledge base")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--snr-list", sw.snr_list, "SNRs in dB (inf allowed)")->delimiter(',');
    sweep_cmd->add_option("--channels", sw.channels, "Channel kinds")->delimiter(',');
    sweep_cmd->add_option("--trials", sw.trials, "Channel draws per item")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--seed", sw.seed, "Root seed");
    sweep_cmd->add_option("--threads", sw.threads, "Worker threads")->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
    sweep_cmd->add_flag("--no-baseline", sw.no_baseline, "Skip the uncompressed baseline rows");
    sweep_cmd->add_option("--output", sw.output, "Output CSV")->required();
    add_config(sweep_cmd);

    BenchOptions bn;
    auto* bench_cmd = app.add_subcommand("bench", "Per-stage latency of codec and retrieval");
    bench_cmd->add_option("--model", bn.model, "Model file")->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--kb", bn.kb, "Knowledge base")->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--queries", bn.queries, "Timed queries")->check(CLI::Range(std::size_t{100}, std::size_t{10000000}));
    bench_cmd->add_option("--seed", bn.seed, "Query seed");
    bench_cmd->add_option("--output", bn.output, "Also write the report JSON here");
    add_config(bench_cmd);

    try {
        auto args = apply_config(raw_args, app);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }

    try {
        if (*gen_cmd) run_gen(*gen_cmd, gen, out);
        else if (*split_cmd) run_split(*split_cmd, split, out);
        else if (*kb_cmd) run_build_kb(*kb_cmd, bkb, out);
        else if (*train_cmd) run_train(*train_cmd, tr, out);
        else if (*eval_cmd) run_eval(*eval_cmd, ev, out);
        else if (*sweep_cmd) run_sweep_cmd(*sweep_cmd, sw, out);
        else if (*bench_cmd) run_bench(*bench_cmd, bn, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kOk;
}

}  // namespace semlink::cli
