// Command-line front end: dist, fit, hint, eval, mds.
//
// Every option can come from a JSON config file (--config); flags given on
// the command line override it. Exit codes: 0 ok, 1 usage, 2 data,
// 3 numerical.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "chf/dataset.hpp"
#include "chf/eval.hpp"
#include "chf/model_io.hpp"
#include "chf/policies.hpp"

using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw chf::DataError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw chf::DataError("cannot write '" + path + "'");
    out << text;
}

std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Inline JSON, a path to a JSON file, or (for costs) a bare model name.
json json_arg(const std::string& text, bool allow_name) {
    if (!text.empty() && (text.front() == '{' || text.front() == '[')) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw UsageError(std::string("invalid inline JSON: ") + e.what());
        }
    }
    if (allow_name && text.find('/') == std::string::npos && text.find('.') == std::string::npos)
        return json{{"model", text}};
    try {
        return json::parse(read_file(text));
    } catch (const json::parse_error& e) {
        throw chf::DataError(text + ": " + e.what());
    }
}

// Options after merging the config file with the flags.
struct Run {
    json cfg = json::object();

    template <class T>
    T get(const std::string& key, T fallback) const {
        if (!cfg.contains(key) || cfg[key].is_null()) return fallback;
        try {
            return cfg[key].get<T>();
        } catch (const json::exception&) {
            throw UsageError("config field '" + key + "' has the wrong type");
        }
    }

    std::string need(const std::string& key) const {
        auto v = get<std::string>(key, "");
        if (v.empty()) throw UsageError("missing required option --" + key);
        return v;
    }

    json cost_spec() const {
        if (!cfg.contains("cost")) return json{{"model", "unit"}};
        const auto& c = cfg["cost"];
        return c.is_string() ? json_arg(c.get<std::string>(), true) : c;
    }

    chf::CanonConfig canon() const {
        if (!cfg.contains("canon") || cfg["canon"].is_null()) return {};
        const auto& c = cfg["canon"];
        return chf::canon_from_json(c.is_string() ? json_arg(c.get<std::string>(), false) : c);
    }

    chf::ModelOptions model_options() const {
        chf::ModelOptions o;
        o.kernel.length_scale = get<double>("length_scale", 1.0);
        o.kernel.noise_std = get<double>("noise_std", 0.0);
        try {
            o.correction = chf::correction_from_string(get<std::string>("correction", "clip"));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        o.final_self_pairs = get<bool>("final_self_pairs", true);
        o.m_max = get<int>("m_max", 11);
        if (!(o.kernel.length_scale > 0)) throw UsageError("length_scale must be positive");
        if (!(o.kernel.noise_std >= 0)) throw UsageError("noise_std must be non-negative");
        if (o.m_max < 1) throw UsageError("m_max must be at least 1");
        return o;
    }

    std::uint64_t seed() const { return get<std::uint64_t>("seed", 0); }
};

struct Loaded {
    chf::Dataset dataset;
    chf::CostModel costs;
    json cost_spec;
    chf::CanonConfig canon;
    std::vector<chf::Trace> training;
    std::string sha256;
};

Loaded load(const Run& run) {
    Loaded l;
    const auto path = run.need("data");
    l.sha256 = chf::sha256_hex(read_file(path));
    l.cost_spec = run.cost_spec();
    l.costs = chf::cost_model_from_json(l.cost_spec);
    l.canon = run.canon();
    l.dataset = chf::load_dataset(path, l.canon);
    l.training = chf::training_traces(l.dataset, l.costs);
    return l;
}

// Ids and positions of the retained states, in pair order.
struct StateRow {
    std::string id, trace;
    std::size_t step;
};

std::vector<StateRow> state_rows(const std::vector<chf::Trace>& traces) {
    std::vector<StateRow> rows;
    for (const auto& t : traces)
        for (std::size_t k = 0; k < t.states.size(); ++k)
            rows.push_back({t.id + "#" + std::to_string(k + 1), t.id, k + 1});
    return rows;
}

chf::State parse_query(const std::string& text, chf::StateKind kind) {
    if (kind == chf::StateKind::tree) return chf::parse_tree(text);
    if (!text.empty() && text.front() == '[') return chf::parse_sequence(text);
    return chf::sequence_of_chars(text);
}

int cmd_dist(const Run& run) {
    const auto l = load(run);
    std::vector<chf::State> states;
    for (const auto& t : l.training)
        for (const auto& s : t.states) states.push_back(s);
    const auto rows = state_rows(l.training);
    const auto d = chf::pairwise_distances(states, l.costs);
    std::string out;
    for (std::size_t i = 0; i < rows.size(); ++i) out += (i ? "," : "") + csv_field(rows[i].id);
    out += "\n";
    for (const auto& row : d) {
        for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + num(row[j]);
        out += "\n";
    }
    write_output(run.get<std::string>("out", ""), out);
    return 0;
}

std::pair<double, double> range_of(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2) throw UsageError(what + " range must be [low, high]");
    return {j[0].get<double>(), j[1].get<double>()};
}

int cmd_fit(const Run& run) {
    const auto l = load(run);
    if (l.training.empty()) throw chf::DataError("dataset has no successful traces");
    auto opts = run.model_options();
    json search_report;
    if (run.cfg.contains("search") && !run.cfg["search"].is_null()) {
        const auto& s = run.cfg["search"];
        const auto ctx = chf::EvalContext::build(l.training, l.costs, opts.correction);
        const auto r = chf::hyper_search(ctx, range_of(s.at("length_scale"), "length_scale"),
                                         range_of(s.at("noise_std"), "noise_std"), s.value("repeats", 10),
                                         run.seed());
        opts.kernel = r.best;
        search_report = chf::to_json(r);
    }
    const auto model =
        chf::GprModel::fit(l.training, l.dataset.kind, l.costs, opts, l.canon, l.cost_spec);
    chf::save_model(run.need("out"), model, l.sha256);
    if (!search_report.is_null()) std::cout << search_report.dump(2) << "\n";
    return 0;
}

int cmd_hint(const Run& run) {
    const auto model = chf::load_model(run.need("model"));
    const auto x = parse_query(run.need("state"), model.kind());
    const auto policy = run.get<std::string>("policy", "chf");
    std::optional<int> m_max;
    if (run.cfg.contains("m_max")) m_max = run.get<int>("m_max", 11);
    chf::HintResult h;
    try {
        h = chf::hint_by_name(model, policy, x, run.seed(), m_max);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    write_output(run.get<std::string>("out", ""), chf::to_json(h, model, chf::canonicalize(x, model.canon())).dump(2) + "\n");
    return 0;
}

int cmd_eval(const Run& run) {
    const auto l = load(run);
    const auto opts = run.model_options();
    const auto dir = run.need("out_dir");
    std::filesystem::create_directories(dir);

    std::vector<chf::Scheme> schemes;
    try {
        for (const auto& s : run.get<std::vector<std::string>>("schemes", {})) schemes.push_back(chf::scheme_from_string(s));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (schemes.empty()) schemes = chf::all_schemes();

    json report;
    report["dataset_sha256"] = l.sha256;
    const auto ctx = chf::EvalContext::build(l.training, l.costs, opts.correction);
    auto params = opts.kernel;
    if (run.cfg.contains("search") && !run.cfg["search"].is_null()) {
        const auto& s = run.cfg["search"];
        const auto r = chf::hyper_search(ctx, range_of(s.at("length_scale"), "length_scale"),
                                         range_of(s.at("noise_std"), "noise_std"), s.value("repeats", 10),
                                         run.seed());
        params = r.best;
        report["search"] = chf::to_json(r);
    }
    std::vector<chf::RmseReport> reports;
    report["rmse"] = json::array();
    for (auto s : schemes) {
        reports.push_back(chf::loo_rmse(ctx, s, params, opts.final_self_pairs));
        report["rmse"].push_back(chf::to_json(reports.back()));
    }
    write_output(dir + "/folds.csv", chf::folds_csv(reports));

    const auto policies = run.get<std::vector<std::string>>("policies", {});
    if (!policies.empty()) {
        if (l.dataset.tutor_hints.empty()) throw chf::DataError("quality evaluation needs tutor hints");
        auto mopts = opts;
        mopts.kernel = params;
        const auto model = chf::GprModel::fit(l.training, l.dataset.kind, l.costs, mopts, l.canon, l.cost_spec);
        report["quality"] = json::array();
        for (const auto& p : policies) {
            chf::QualityReport q;
            try {
                q = chf::hint_quality(l.dataset, model, p, run.seed());
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            report["quality"].push_back(chf::to_json(q));
            write_output(dir + "/quality_" + p + ".csv", chf::quality_csv(q));
        }
    }
    write_output(dir + "/report.json", report.dump(2) + "\n");
    return 0;
}

int cmd_mds(const Run& run) {
    const auto l = load(run);
    const auto opts = run.model_options();
    std::vector<chf::State> states;
    for (const auto& t : l.training)
        for (const auto& s : t.states) states.push_back(s);
    if (states.empty()) throw chf::DataError("dataset has no successful traces");
    const auto d = chf::pairwise_distances(states, l.costs);
    const auto n = static_cast<Eigen::Index>(states.size());
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = d[i][j] * d[i][j];
    const chf::Spaced space(d2, opts.correction);
    const Eigen::MatrixXd xy = space.coordinates(2);
    const auto rows = state_rows(l.training);
    std::string out = "state_id,trace_id,step,x,y\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        out += csv_field(r.id) + "," + csv_field(r.trace) + "," + std::to_string(r.step) + "," + num(xy(i, 0)) +
               "," + num(xy(i, 1)) + "\n";
    }
    write_output(run.get<std::string>("out", ""), out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous hint factory: edit distance embeddings and hint policies"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its fields");

    // Flag values land here and are merged over the config file.
    std::map<std::string, std::string> str;
    std::map<std::string, double> real;
    std::map<std::string, long long> integer;
    std::vector<std::string> schemes, policies;
    bool no_final_pairs = false;

    auto* dist = app.add_subcommand("dist", "pairwise edit distance matrix as CSV");
    auto* fit = app.add_subcommand("fit", "fit and store a hint model");
    auto* hint = app.add_subcommand("hint", "hint for one state as JSON");
    auto* eval = app.add_subcommand("eval", "leave-one-trace-out RMSE and tutor-hint quality");
    auto* mds = app.add_subcommand("mds", "two-dimensional embedding coordinates as CSV");
    for (auto* sub : {dist, fit, hint, eval, mds}) sub->add_option("--config", config_path, "JSON config file");

    for (auto* sub : {dist, fit, eval, mds}) {
        sub->add_option("--data", str["data"], "dataset JSON");
        sub->add_option("--cost", str["cost"], "cost model: unit, inline JSON, or JSON file");
        sub->add_option("--canon", str["canon"], "canonicalization config: inline JSON or JSON file");
    }
    for (auto* sub : {fit, eval, mds})
        sub->add_option("--correction", str["correction"], "eigenvalue correction: clip, flip, shift");
    for (auto* sub : {fit, eval}) {
        sub->add_option("--length-scale", real["length_scale"], "RBF length scale");
        sub->add_option("--noise", real["noise_std"], "regression noise standard deviation");
        sub->add_flag("--no-final-pairs", no_final_pairs, "leave (final, final) pairs out of the regression");
        sub->add_option("--search-length-scale", str["search_length_scale"], "random search range lo,hi");
        sub->add_option("--search-noise", str["search_noise"], "random search range lo,hi");
        sub->add_option("--repeats", integer["repeats"], "random search samples");
    }
    for (auto* sub : {fit, hint}) sub->add_option("--m-max", integer["m_max"], "sparse support size");
    for (auto* sub : {fit, hint, eval}) sub->add_option("--seed", integer["seed"], "random seed");
    for (auto* sub : {dist, fit, hint, mds}) sub->add_option("-o,--out", str["out"], "output file");
    hint->add_option("--model", str["model"], "stored model");
    hint->add_option("--state", str["state"], "query state");
    hint->add_option("--policy", str["policy"], "chf, nwr, nn, zimmerman, gross, random");
    eval->add_option("--out-dir", str["out_dir"], "report directory");
    eval->add_option("--schemes", schemes, "prediction schemes")->delimiter(',');
    eval->add_option("--policies", policies, "hint policies scored against tutor hints")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        Run run;
        if (!config_path.empty()) {
            try {
                run.cfg = json::parse(read_file(config_path));
            } catch (const json::parse_error& e) {
                throw UsageError(config_path + ": " + e.what());
            }
            if (!run.cfg.is_object()) throw UsageError("config must be a JSON object");
        }
        auto given = [&](const char* flag) {
            for (auto* sub : app.get_subcommands())
                if (const auto* opt = sub->get_option_no_throw(flag); opt && opt->count()) return true;
            return false;
        };
        const std::map<std::string, const char*> str_flags{
            {"data", "--data"},       {"cost", "--cost"},     {"canon", "--canon"},     {"correction", "--correction"},
            {"out", "--out"},         {"model", "--model"},   {"state", "--state"},     {"policy", "--policy"},
            {"out_dir", "--out-dir"}};
        for (const auto& [key, flag] : str_flags)
            if (given(flag)) run.cfg[key] = str[key];
        if (given("--length-scale")) run.cfg["length_scale"] = real["length_scale"];
        if (given("--noise")) run.cfg["noise_std"] = real["noise_std"];
        if (given("--m-max")) run.cfg["m_max"] = integer["m_max"];
        if (given("--seed")) {
            if (integer["seed"] < 0) throw UsageError("seed must be non-negative");
            run.cfg["seed"] = integer["seed"];
        }
        if (no_final_pairs) run.cfg["final_self_pairs"] = false;
        if (given("--schemes")) run.cfg["schemes"] = schemes;
        if (given("--policies")) run.cfg["policies"] = policies;
        auto parse_range = [](const std::string& s) {
            const auto comma = s.find(',');
            if (comma == std::string::npos) throw UsageError("range must be lo,hi");
            try {
                return json::array({std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))});
            } catch (const std::exception&) {
                throw UsageError("range must be lo,hi");
            }
        };
        if (given("--search-length-scale") || given("--search-noise") || given("--repeats")) {
            auto& s = run.cfg["search"];
            if (!s.is_object()) s = json::object();
            if (given("--search-length-scale")) s["length_scale"] = parse_range(str["search_length_scale"]);
            if (given("--search-noise")) s["noise_std"] = parse_range(str["search_noise"]);
            if (given("--repeats")) s["repeats"] = integer["repeats"];
            if (!s.contains("length_scale") || !s.contains("noise_std"))
                throw UsageError("random search needs --search-length-scale and --search-noise");
        }

        if (dist->parsed()) return cmd_dist(run);
        if (fit->parsed()) return cmd_fit(run);
        if (hint->parsed()) return cmd_hint(run);
        if (eval->parsed()) return cmd_eval(run);
        if (mds->parsed()) return cmd_mds(run);
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const chf::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const chf::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const chf::AddressError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}
