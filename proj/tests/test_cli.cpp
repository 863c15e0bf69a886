#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "ntt/archive.hpp"
#include "ntt/errors.hpp"
#include "ntt/store.hpp"
#include "support.hpp"

using namespace ntt;
using namespace ntt::cli;
using ntt::testing::TempDir;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run ntt_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Value of a "key: value" line in command output.
std::string field(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
    ADD_FAILURE() << "no " << key << " in:\n" << text;
    return "nan";
}

double number(const std::string& text, const std::string& key) { return std::stod(field(text, key)); }

std::vector<std::string> lines_of(const std::filesystem::path& file) {
    std::ifstream in(file);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(line);
    return out;
}

std::string bytes_of(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void expect_same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a))
        if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), a));
    ASSERT_FALSE(files.empty());
    std::size_t count_b = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(b)) count_b += e.is_regular_file();
    EXPECT_EQ(files.size(), count_b);
    for (const auto& f : files) EXPECT_EQ(bytes_of(a / f), bytes_of(b / f)) << f;
}

}  // namespace

TEST(CliHelpers, DefaultGrid) {
    EXPECT_EQ(default_grid(1, {8, 8, 8}), (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(default_grid(4, {8, 8, 8}), (std::vector<int>{2, 2, 1}));
    EXPECT_EQ(default_grid(8, {8, 8, 8}), (std::vector<int>{2, 2, 2}));
    EXPECT_EQ(default_grid(3, {4, 6}), (std::vector<int>{1, 3}));
    EXPECT_THROW(default_grid(5, {8, 8}), DimensionError);
}

TEST(CliHelpers, ParseGrid) {
    EXPECT_EQ(parse_grid("2x1x2", {4, 4, 4}), (std::vector<int>{2, 1, 2}));
    EXPECT_EQ(parse_grid("4", {4, 4}), (std::vector<int>{2, 2}));
    EXPECT_THROW(parse_grid("2x2", {4, 4, 4}), DimensionError);
    EXPECT_THROW(parse_grid("2xa", {4, 4}), std::runtime_error);
}

TEST(CliHelpers, ExpandRanks) {
    EXPECT_EQ(expand_ranks({3}, 4), (std::vector<Index>{1, 3, 3, 3, 1}));
    EXPECT_EQ(expand_ranks({2, 3, 2}, 4), (std::vector<Index>{1, 2, 3, 2, 1}));
    EXPECT_EQ(expand_ranks({1, 2, 3, 2, 1}, 4), (std::vector<Index>{1, 2, 3, 2, 1}));
    EXPECT_THROW(expand_ranks({2, 2}, 4), RankError);
}

TEST(Cli, GenerateDecomposeReconstructAtTrueRanks) {
    TempDir dir("cli-roundtrip");
    const auto in = (dir / "x").string(), arch = (dir / "tt").string(), rec = (dir / "rec").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "8,8,8,8", "--ranks", "1,2,3,2,1", "--seed", "4", "--out", in}).code,
              kExitOk);
    const auto d = ntt_run({"decompose", "-i", in, "--ranks", "1,2,3,2,1", "--method", "svd-tt", "--grid", "2x2x1x1",
                            "--out", arch});
    ASSERT_EQ(d.code, kExitOk) << d.err;
    EXPECT_EQ(field(d.out, "ranks"), "1,2,3,2,1");
    EXPECT_LE(number(d.out, "relative_error"), 1e-8);

    ASSERT_EQ(ntt_run({"reconstruct", "--archive", arch, "--out", rec}).code, kExitOk);
    const auto m = ntt_run({"metrics", "--a", in, "--b", rec, "--ssim"});
    ASSERT_EQ(m.code, kExitOk) << m.err;
    EXPECT_LE(number(m.out, "relative_error"), 1e-8);
    EXPECT_NEAR(number(m.out, "ssim"), 1.0, 1e-6);

    const auto csv = lines_of(dir / "tt" / "metrics.csv");
    ASSERT_EQ(csv.size(), 5u);
    EXPECT_EQ(csv[0], "stage,eps,rank,compression,rel_error,GR,MM,MAD,Norm,INIT,AG,AR,RSC,total_s");
    EXPECT_EQ(csv[4].rfind("all,", 0), 0u);
}

TEST(Cli, RankOneStoreAtRankOne) {
    TempDir dir("cli-rank1");
    const auto in = (dir / "x").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "6,4,5", "--ranks", "1", "--seed", "2", "--out", in}).code, kExitOk);
    const auto d =
        ntt_run({"decompose", "-i", in, "--ranks", "1", "--method", "svd-tt", "--out", (dir / "tt").string()});
    ASSERT_EQ(d.code, kExitOk) << d.err;
    EXPECT_LE(number(d.out, "relative_error"), 1e-8);
    EXPECT_EQ(load_archive(dir / "tt").train.ranks(), (std::vector<Index>{1, 1, 1, 1}));
}

TEST(Cli, SmallerEpsDoesNotCompressMore) {
    TempDir dir("cli-eps");
    const auto in = (dir / "x").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "8,8,8", "--ranks", "1,3,3,1", "--seed", "5", "--noise-var", "1e-4",
                       "--out", in})
                  .code,
              kExitOk);
    const auto loose = ntt_run({"decompose", "-i", in, "--eps", "0.5", "--method", "svd-tt", "--out",
                                (dir / "a").string()});
    const auto tight = ntt_run({"decompose", "-i", in, "--eps", "0.001", "--method", "svd-tt", "--out",
                                (dir / "b").string()});
    ASSERT_EQ(loose.code, kExitOk) << loose.err;
    ASSERT_EQ(tight.code, kExitOk) << tight.err;
    EXPECT_LE(number(tight.out, "compression_ratio"), number(loose.out, "compression_ratio"));
    EXPECT_LE(number(tight.out, "relative_error"), number(loose.out, "relative_error"));
}

TEST(Cli, MissingInputIsUsageErrorNamingPath) {
    TempDir dir("cli-missing");
    const auto path = (dir / "nope").string();
    const auto r = ntt_run({"decompose", "-i", path, "--eps", "0.1", "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find(path), std::string::npos) << r.err;
}

TEST(Cli, BadFlagsAndDimensionErrors) {
    TempDir dir("cli-bad");
    EXPECT_EQ(ntt_run({"decompose", "--bogus"}).code, kExitUsage);
    EXPECT_EQ(ntt_run({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(ntt_run({}).code, kExitUsage);
    const auto in = (dir / "x").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "6,4", "--ranks", "2", "--out", in}).code, kExitOk);
    EXPECT_EQ(ntt_run({"decompose", "-i", in, "--eps", "0.1", "--ranks", "2", "--out", (dir / "o").string()}).code,
              kExitUsage);
    EXPECT_EQ(ntt_run({"decompose", "-i", in, "--eps", "0.1", "--grid", "4x1", "--out", (dir / "o").string()}).code,
              kExitDimension);
    EXPECT_EQ(ntt_run({"generate", "--shape", "6,4", "--ranks", "2", "--grid", "4x1", "--out",
                       (dir / "y").string()})
                  .code,
              kExitDimension);
}

TEST(Cli, OverwritesOnlyItsOwnOutput) {
    TempDir dir("cli-overwrite");
    const auto in = (dir / "x").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "4,4", "--ranks", "1", "--out", in}).code, kExitOk);
    // A previous store is replaced; a foreign non-empty directory is not.
    EXPECT_EQ(ntt_run({"generate", "--shape", "4,6", "--ranks", "1", "--out", in}).code, kExitOk);
    EXPECT_EQ(ChunkedTensorStore::open(in).shape(), (Shape{4, 6}));
    std::filesystem::create_directories(dir / "other");
    std::ofstream(dir / "other" / "keep.txt") << "x";
    EXPECT_EQ(ntt_run({"generate", "--shape", "4,4", "--ranks", "1", "--out", (dir / "other").string()}).code,
              kExitUsage);
    EXPECT_TRUE(std::filesystem::exists(dir / "other" / "keep.txt"));
}

TEST(Cli, MetricsOfIdenticalStores) {
    TempDir dir("cli-metrics");
    const auto in = (dir / "x").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "8,8,2", "--ranks", "1,2,2,1", "--seed", "7", "--out", in}).code,
              kExitOk);
    const auto m = ntt_run({"metrics", "--a", in, "--b", in, "--ssim", "--slice", "1"});
    ASSERT_EQ(m.code, kExitOk) << m.err;
    EXPECT_EQ(number(m.out, "relative_error"), 0.0);
    EXPECT_NEAR(number(m.out, "ssim"), 1.0, 1e-12);
    EXPECT_EQ(ntt_run({"metrics", "--a", in, "--b", in, "--ssim", "--slice", "1,1"}).code, kExitDimension);
}

TEST(Cli, IdenticalFlagsGiveIdenticalArchives) {
    TempDir dir("cli-det");
    const auto in = (dir / "x").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "8,8,8", "--ranks", "1,2,3,1", "--seed", "8", "--out", in}).code,
              kExitOk);
    for (const char* sub : {"a", "b"}) {
        const auto r = ntt_run({"decompose", "-i", in, "--eps", "0.05", "--grid", "2x2x1", "--iters", "30", "--seed",
                                "3", "--out", (dir / sub).string()});
        ASSERT_EQ(r.code, kExitOk) << r.err;
    }
    EXPECT_EQ(bytes_of(dir / "a" / "tt_meta.json"), bytes_of(dir / "b" / "tt_meta.json"));
    for (const auto& e : std::filesystem::directory_iterator(dir / "a"))
        if (e.is_directory()) expect_same_tree(e.path(), dir / "b" / e.path().filename());
}

TEST(Cli, BenchEmitsOneRowPerGrid) {
    TempDir dir("cli-bench");
    const auto csv = (dir / "bench.csv").string();
    const auto r = ntt_run({"bench", "--shape", "8,8,8", "--ranks", "2", "--grid-list", "1,2,4", "--repeat", "1",
                            "--iters", "10", "--csv", csv});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto rows = lines_of(csv);
    ASSERT_EQ(rows.size(), 4u);
    const auto header = rows[0];
    std::vector<std::string> cols;
    std::stringstream hs(header);
    for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
    const auto nmf_col = std::find(cols.begin(), cols.end(), "nmf_s") - cols.begin();
    ASSERT_LT(nmf_col, static_cast<long>(cols.size()));
    for (std::size_t k = 1; k < rows.size(); ++k) {
        std::stringstream rs(rows[k]);
        std::vector<std::string> vals;
        for (std::string v; std::getline(rs, v, ',');) vals.push_back(v);
        ASSERT_EQ(vals.size(), cols.size());
        EXPECT_GT(std::stod(vals[nmf_col]), 0.0);
    }
}

TEST(Cli, SweepWritesMonotoneRows) {
    TempDir dir("cli-sweep");
    const auto in = (dir / "x").string(), csv = (dir / "s.csv").string();
    ASSERT_EQ(ntt_run({"generate", "--shape", "8,8,8", "--ranks", "1,3,3,1", "--seed", "9", "--out", in}).code,
              kExitOk);
    const auto r = ntt_run({"sweep", "-i", in, "--eps-list", "0.5,0.1,0.001", "--method", "svd-tt", "--csv", csv});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(lines_of(csv).size(), 4u);
}
