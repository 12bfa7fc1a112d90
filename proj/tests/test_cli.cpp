#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string bin = CHF_BIN;
const std::string data = CHF_DATA_DIR;

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("chf_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out;
};

Run chf(const std::string& args) {
    const auto out = scratch() / "stdout.txt";
    const std::string cmd = bin + " " + args + " > " + out.string() + " 2> " + (scratch() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

std::vector<std::vector<std::string>> csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

std::string fit(const std::string& dataset, const std::string& name, const std::string& extra = "") {
    const auto path = (scratch() / name).string();
    const auto r = chf("fit --data " + data + "/" + dataset + " --length-scale 1 --noise 0 -o " + path + " " + extra);
    REQUIRE(r.code == 0);
    return path;
}

}  // namespace

TEST_CASE("dist prints the matrix of retained states") {
    const auto r = chf("dist --data " + data + "/fig2.json");
    REQUIRE(r.code == 0);
    const auto rows = csv(r.out);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == std::vector<std::string>{"1#1", "1#2", "2#1", "2#2"});
    CHECK(rows[1] == std::vector<std::string>{"0", "2", "1", "3"});
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(rows[i][j] == rows[j + 1][i - 1]);

    const auto one = csv(chf("dist --data " + data + "/single.json").out);
    REQUIRE(one.size() == 2);
    CHECK(one[1] == std::vector<std::string>{"0"});
}

TEST_CASE("fit and hint on the two-trace example") {
    const auto model = fit("fig2.json", "fig2.model", "--no-final-pairs");
    const auto j = nlohmann::json::parse(slurp(model));
    CHECK(j["kernel"][0][1].get<double>() == doctest::Approx(std::exp(-0.5)));
    CHECK(slurp(fit("fig2.json", "fig2b.model", "--no-final-pairs")) == slurp(model));

    const auto h = chf("hint --model " + model + " --state ab");
    REQUIRE(h.code == 0);
    const auto hint = nlohmann::json::parse(h.out);
    CHECK(hint["edit"] == nlohmann::json{{"kind", "insert"}, {"position", 3}, {"label", "c"}});
    CHECK(hint["result"] == R"(["a","b","c"])");

    const auto goal = nlohmann::json::parse(chf("hint --model " + model + " --state aac").out);
    CHECK(goal["edit"].is_null());
    const auto far = nlohmann::json::parse(chf("hint --model " + model + " --state cccccccccccccccc").out);
    CHECK(far["edit"].is_null());
    CHECK(far["reason"] == "kernel-decay");

    const auto z = nlohmann::json::parse(chf("hint --model " + model + " --state ab --policy zimmerman").out);
    CHECK(z["policy"] == "zimmerman");
    CHECK_FALSE(z["edit"].is_null());
}

TEST_CASE("corrupted models and bad input set the exit code") {
    const auto model = fit("fig2.json", "corrupt.model");
    auto text = slurp(model);
    const auto at = text.find("\"m_max\":11");
    REQUIRE(at != std::string::npos);
    text.replace(at, 10, "\"m_max\":12");
    std::ofstream(model, std::ios::binary) << text;
    CHECK(chf("hint --model " + model + " --state ab").code == 2);

    CHECK(chf("dist --data " + data + "/malformed.json").code == 2);
    CHECK(chf("dist --data " + data + "/missing.json").code == 2);
    CHECK(chf("dist").code == 1);
    CHECK(chf("frobnicate").code == 1);
    CHECK(chf("hint --model " + fit("fig2.json", "ok.model") + " --state ab --policy oracle").code == 1);
    CHECK(chf("fit --data " + data + "/fig2.json --length-scale -1 -o " + (scratch() / "x").string()).code == 1);
}

TEST_CASE("eval writes parseable reports") {
    const auto dir = scratch() / "eval";
    const auto r = chf("eval --data " + data + "/tutor.json --length-scale 1 --noise 0.1 --out-dir " + dir.string() +
                       " --policies chf,gross,random --seed 3");
    REQUIRE(r.code == 0);
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report["rmse"].size() == 6);
    const auto folds = csv(slurp(dir / "folds.csv"));
    CHECK(folds.size() == 1 + 6 * 3);  // three successful traces
    for (const char* p : {"chf", "gross", "random"}) {
        const auto q = csv(slurp(dir / (std::string("quality_") + p + ".csv")));
        CHECK(q.size() == 4);  // header and three annotated states
    }
    CHECK(report["quality"].size() == 3);

    CHECK(chf("eval --data " + data + "/fig2.json --out-dir " + dir.string() + " --policies chf").code == 2);
}

TEST_CASE("mds places three equidistant states on a triangle") {
    const auto rows = csv(chf("mds --data " + data + "/triangle.json").out);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == std::vector<std::string>{"state_id", "trace_id", "step", "x", "y"});
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            const double dx = std::stod(rows[i][3]) - std::stod(rows[j][3]);
            const double dy = std::stod(rows[i][4]) - std::stod(rows[j][4]);
            CHECK(std::hypot(dx, dy) == doctest::Approx(1.0));
        }
}

TEST_CASE("commands are deterministic") {
    const auto config = scratch() / "search.json";
    std::ofstream(config) << R"({"search": {"length_scale": [0.3, 5], "noise_std": [0.01, 1], "repeats": 4}})";
    const std::string base = "--data " + data + "/tutor.json --config " + config.string() + " --seed 5";
    const auto a = chf("fit " + base + " -o " + (scratch() / "a.model").string());
    const auto b = chf("fit " + base + " -o " + (scratch() / "b.model").string());
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(slurp(scratch() / "a.model") == slurp(scratch() / "b.model"));
    const auto m = (scratch() / "a.model").string();
    CHECK(chf("hint --model " + m + " --state ac --policy random --seed 9").out ==
          chf("hint --model " + m + " --state ac --policy random --seed 9").out);
}
