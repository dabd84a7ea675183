// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fastocr/cli.hpp"

namespace fastocr::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "fastocr");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    Outcome o;
    o.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        m_dir = fs::temp_directory_path() /
                ("fastocr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(m_dir);
    }
    void TearDown() override { fs::remove_all(m_dir); }

    std::string write(const std::string& name, const std::string& content) const {
        const fs::path p = m_dir / name;
        std::ofstream(p) << content;
        return p.string();
    }

    fs::path m_dir;
};

TEST_F(CliTest, FlopsVanillaGolden) {
    const Outcome o = invoke({"flops", "--batch", "12", "--layers", "36", "--hidden", "2048", "--seqlen", "4096"});
    EXPECT_EQ(o.code, kSuccess);
    EXPECT_NE(o.out.find("28.99 G"), std::string::npos) << o.out;
    const Outcome zero = invoke({"flops", "--batch", "0", "--layers", "36", "--hidden", "2048", "--seqlen", "4096"});
    EXPECT_NE(zero.out.find(" 0 FLOPs  0.00 G"), std::string::npos) << zero.out;
}

TEST_F(CliTest, FlopsFastOcrVariant) {
    const Outcome o = invoke({"flops", "--batch", "8", "--layers", "36", "--hidden", "2048", "--seqlen", "4096",
                              "--policy", "fastocr", "--n-focal", "3", "--s-pruned", "326"});
    EXPECT_EQ(o.code, kSuccess);
    EXPECT_NE(o.out.find("11.17 G"), std::string::npos) << o.out;
    const Outcome all = invoke({"flops", "--batch", "8", "--layers", "36", "--hidden", "2048", "--seqlen", "4096",
                                "--policy", "fastocr", "--n-focal", "36", "--s-pruned", "1"});
    EXPECT_NE(all.out.find("fastocr  n_focal=36 s_pruned=1  19327352832 FLOPs"), std::string::npos) << all.out;
}

TEST_F(CliTest, UserErrorsExitOne) {
    EXPECT_EQ(invoke({"flops", "--batch", "1"}).code, kUserError);
    EXPECT_EQ(invoke({"flops", "--batch", "1", "--layers", "1", "--hidden", "1", "--seqlen", "1", "--policy", "x"}).code,
              kUserError);
    EXPECT_EQ(invoke({"flops", "--batch", "1", "--layers", "1", "--hidden", "1", "--seqlen", "1", "--policy",
                      "fastocr"})
                  .code,
              kUserError);
    EXPECT_EQ(invoke({}).code, kUserError);
    EXPECT_EQ(invoke({"nonsense"}).code, kUserError);
    EXPECT_EQ(invoke({"run", (m_dir / "missing.cfg").string()}).code, kUserError);
}

TEST_F(CliTest, BadPolicyNameExitsOne) {
    const std::string cfg = write("bad.cfg", "policy = nonsense\nsteps = 2\n");
    const Outcome o = invoke({"run", cfg});
    EXPECT_EQ(o.code, kUserError);
    EXPECT_NE(o.err.find("nonsense"), std::string::npos) << o.err;
}

TEST_F(CliTest, ConfigErrorsNameTheLine) {
    const std::string cfg = write("dup.cfg", "steps = 2\n# comment\nsteps = 3\n");
    const Outcome o = invoke({"run", cfg});
    EXPECT_EQ(o.code, kUserError);
    EXPECT_NE(o.err.find("line 3"), std::string::npos) << o.err;
    const std::string unknown = write("unknown.cfg", "stepz = 2\n");
    EXPECT_EQ(invoke({"run", unknown}).code, kUserError);
    const std::string ok = write("ok.cfg", "steps = 2\n");
    EXPECT_EQ(invoke({"run", ok, "--set", "bogus"}).code, kUserError);
}

TEST_F(CliTest, IdentityCompareReportsFullAgreement) {
    const std::string cfg = write("identity.cfg",
                                  "steps = 20\nseeds = 0, 1\npolicy.kappa = 1\npolicy.focal_layers = all\n"
                                  "compare.policies = fastocr\n");
    const Outcome o = invoke({"compare", cfg});
    ASSERT_EQ(o.code, kSuccess) << o.err;
    const auto doc = nlohmann::ordered_json::parse(o.out);
    bool found = false;
    for (const auto& s : doc.at("sequence_metrics")) {
        if (s.at("label").get<std::string>().rfind("fastocr", 0) == 0) {
            EXPECT_DOUBLE_EQ(s.at("token_match_rate").get<double>(), 1.0);
            EXPECT_DOUBLE_EQ(s.at("prefix_agreement").get<double>(), 1.0);
            found = true;
        }
    }
    EXPECT_TRUE(found);
    for (const auto& f : doc.at("flops")) {
        EXPECT_DOUBLE_EQ(f.at("speedup").get<double>(), 1.0);
    }
}

TEST_F(CliTest, RunWritesReportCsvAndTrace) {
    const std::string report = (m_dir / "r.json").string();
    const std::string csv = (m_dir / "r.csv").string();
    const std::string trace = (m_dir / "r.trace").string();
    const std::string cfg = write("run.cfg", "steps = 12\npolicy.rho = 0.25\noutput.report = " + report +
                                                 "\noutput.csv = " + csv + "\noutput.trace = " + trace + "\n");
    const Outcome o = invoke({"profile", cfg});
    ASSERT_EQ(o.code, kSuccess) << o.err;
    EXPECT_TRUE(o.out.empty());
    EXPECT_TRUE(fs::exists(report));
    EXPECT_TRUE(fs::exists(csv));
    ASSERT_TRUE(fs::exists(trace));

    const Outcome replayed = invoke({"replay", "--trace", trace, "--set", "policy.rho=0.25"});
    ASSERT_EQ(replayed.code, kSuccess) << replayed.err;
    const auto doc = nlohmann::ordered_json::parse(replayed.out);
    EXPECT_EQ(doc.at("meta").at("workload"), "trace");
    EXPECT_EQ(doc.at("meta").at("steps"), 12);
}

TEST_F(CliTest, ReplayErrorsExitOne) {
    EXPECT_EQ(invoke({"replay", "--trace", (m_dir / "missing.trace").string()}).code, kUserError);
    const std::string bad = write("bad.trace", "#trace v1 L=2 Nimg=2 Ntext=1 source=x\nt=1 l=0 w=0.5,0.25,0.25,0\n");
    const Outcome o = invoke({"replay", "--trace", bad});
    EXPECT_EQ(o.code, kUserError);
    EXPECT_NE(o.err.find("line 2"), std::string::npos) << o.err;

    std::string body = "#trace v1 L=1 Nimg=2 Ntext=1 source=x\n";
    for (int t = 1; t <= 3; ++t) {
        body += "t=" + std::to_string(t) + " l=0 w=0.25,0.25";
        for (int i = 0; i < t + 1; ++i) {
            body += "," + std::to_string(0.5 / (t + 1));
        }
        body += "\n";
    }
    const std::string short_trace = write("short.trace", body);
    const Outcome s = invoke({"replay", "--trace", short_trace, "--set", "policy.rho=1"});
    EXPECT_EQ(s.code, kUserError);
    EXPECT_NE(s.err.find("insufficient warmup data"), std::string::npos) << s.err;
}

TEST_F(CliTest, BinaryExitCodes) {
    const std::string bin = FASTOCR_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int raw = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    EXPECT_EQ(status("flops --batch 4 --layers 36 --hidden 2048 --seqlen 8192"), 0);
    EXPECT_EQ(status("flops --batch 4"), 1);
    EXPECT_EQ(status("--help"), 0);
}

}  // namespace
}  // namespace fastocr::cli
