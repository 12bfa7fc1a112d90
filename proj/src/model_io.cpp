#include "chf/model_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "chf/dataset.hpp"

namespace chf {

namespace {

constexpr int format_version = 1;

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j.at(i).size()) != cols) throw DataError("ragged matrix in model file");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json space_to_json(const Spaced& s) {
    const auto& sp = s.spectrum();
    return {{"eigenvalues", vector_to_json(sp.eigenvalues)},
            {"eigenvectors", matrix_to_json(sp.eigenvectors)},
            {"corrected", vector_to_json(sp.corrected)},
            {"shift", sp.shift},
            {"column_means", vector_to_json(s.column_means())},
            {"grand_mean", s.grand_mean()}};
}

Spaced space_from_json(const json& j, Correction mode) {
    Spectrum<double> sp;
    sp.mode = mode;
    sp.eigenvalues = vector_from_json(j.at("eigenvalues"));
    sp.eigenvectors = matrix_from_json(j.at("eigenvectors"));
    sp.corrected = vector_from_json(j.at("corrected"));
    sp.shift = j.at("shift").get<double>();
    const auto n = sp.eigenvalues.size();
    if (sp.eigenvectors.rows() != n || sp.eigenvectors.cols() != n || sp.corrected.size() != n)
        throw DataError("inconsistent spectrum in model file");
    sp.gram = sp.eigenvectors * sp.corrected.asDiagonal() * sp.eigenvectors.transpose();
    sp.gram = 0.5 * (sp.gram + sp.gram.transpose());
    auto means = vector_from_json(j.at("column_means"));
    if (means.size() != n) throw DataError("inconsistent column means in model file");
    return Spaced::from_parts(std::move(sp), std::move(means), j.at("grand_mean").get<double>());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

json to_json(const CanonConfig& c) {
    return {{"variable_label_prefixes", c.variable_label_prefixes},
            {"commutative_labels", c.commutative_labels},
            {"dead_labels", c.dead_labels}};
}

CanonConfig canon_from_json(const json& j) {
    CanonConfig c;
    try {
        c.variable_label_prefixes = j.value("variable_label_prefixes", std::vector<Label>{});
        c.commutative_labels = j.value("commutative_labels", std::vector<Label>{});
        c.dead_labels = j.value("dead_labels", std::vector<Label>{});
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed canonicalization config: ") + e.what());
    }
    validate(c);
    return c;
}

std::string model_to_string(const GprModel& m, const std::string& dataset_sha256) {
    const auto& pairs = m.pairs();
    const auto& o = m.options();
    json j;
    j["format"] = "chf-model";
    j["version"] = format_version;
    j["dataset_sha256"] = dataset_sha256;
    j["kind"] = m.kind() == StateKind::tree ? "tree" : "sequence";
    j["cost"] = m.cost_spec();
    j["canon"] = to_json(m.canon());
    j["options"] = {{"length_scale", o.kernel.length_scale},
                    {"noise_std", o.kernel.noise_std},
                    {"correction", to_string(o.correction)},
                    {"final_self_pairs", o.final_self_pairs},
                    {"m_max", o.m_max}};
    j["traces"] = json::array();
    for (std::size_t t = 0; t < pairs.trace_ids.size(); ++t) {
        json states = json::array();
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (pairs.trace_of[i] == t) states.push_back(state_text(pairs.states[i]));
        j["traces"].push_back({{"id", pairs.trace_ids[t]}, {"states", std::move(states)}});
    }
    j["raw_distance"] = matrix_to_json(m.raw_distance());
    j["state_space"] = space_to_json(m.state_space());
    j["source_space"] = m.separate_source_space() ? space_to_json(*m.separate_source_space()) : json(nullptr);
    j["kernel"] = matrix_to_json(m.kernel());
    j["checksum"] = sha256_hex(j.dump());
    return j.dump() + "\n";
}

GprModel model_from_string(const std::string& text, std::string* dataset_sha256) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ChecksumError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || !j.contains("checksum")) throw ChecksumError("model file has no checksum");
        const auto stored = j.at("checksum").get<std::string>();
        j.erase("checksum");
        if (sha256_hex(j.dump()) != stored) throw ChecksumError("model checksum mismatch: file is corrupted");
        if (j.at("format") != "chf-model" || j.at("version") != format_version)
            throw DataError("unsupported model format");
        if (dataset_sha256) *dataset_sha256 = j.at("dataset_sha256").get<std::string>();

        const auto kind = j.at("kind").get<std::string>() == "tree" ? StateKind::tree : StateKind::sequence;
        ModelOptions o;
        const auto& jo = j.at("options");
        o.kernel.length_scale = jo.at("length_scale").get<double>();
        o.kernel.noise_std = jo.at("noise_std").get<double>();
        o.correction = correction_from_string(jo.at("correction").get<std::string>());
        o.final_self_pairs = jo.at("final_self_pairs").get<bool>();
        o.m_max = jo.at("m_max").get<int>();

        std::vector<Trace> traces;
        for (const auto& jt : j.at("traces")) {
            Trace t{jt.at("id").get<std::string>(), {}, true};
            for (const auto& s : jt.at("states")) t.states.push_back(parse_state(s.get<std::string>(), kind));
            traces.push_back(std::move(t));
        }
        std::optional<Spaced> source;
        if (!j.at("source_space").is_null()) source = space_from_json(j.at("source_space"), o.correction);
        return GprModel::from_parts(build_pairs(traces), kind, cost_model_from_json(j.at("cost")), j.at("cost"),
                                    canon_from_json(j.at("canon")), o, matrix_from_json(j.at("raw_distance")),
                                    space_from_json(j.at("state_space"), o.correction), std::move(source),
                                    matrix_from_json(j.at("kernel")));
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::string& path, const GprModel& m, const std::string& dataset_sha256) {
    const auto text = model_to_string(m, dataset_sha256);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

GprModel load_model(const std::string& path, std::string* dataset_sha256) {
    return model_from_string(read_file(path), dataset_sha256);
}

}  // namespace chf
