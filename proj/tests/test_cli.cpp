// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end CLI tests against the built binary.

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "llard/common.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(LLARD_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
    output.append(buf, n);
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), output};
}

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "llard_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 12 users x 12 items in two clusters, with categories for mock rules.
void write_raw_files(const fs::path& dir) {
  std::ofstream inter(dir / "interactions.tsv");
  std::ofstream cat(dir / "catalog.tsv");
  const char* kw[2] = {"fantasy", "cooking"};
  for (int i = 0; i < 12; ++i) {
    cat << "i\ti" << i << "\ttitle\tThe " << kw[i % 2] << " volume " << i
        << '\n';
    cat << "i\ti" << i << "\tcategory\t" << kw[i % 2] << '\n';
    cat << "i\ti" << i << "\tdescription\tAll about " << kw[i % 2] << ".\n";
  }
  for (int u = 0; u < 12; ++u) {
    for (int k = 0; k < 6; ++k) {
      const int item = (u % 2) + 2 * ((u / 2 + k) % 6);
      inter << 'u' << u << "\ti" << item << "\t5\t" << 1000 + k << '\n';
      cat << "u\tu" << u << "\tcomment:i" << item << "\tnice "
          << kw[u % 2] << '\n';
    }
  }
}

}  // namespace

TEST_CASE("cli: usage errors exit with code 2") {
  CHECK(run_cli("definitely-not-a-subcommand").code == 2);
  CHECK(run_cli("ingest").code == 2);  // missing required options
  CHECK(run_cli("--help").code == 0);
}

TEST_CASE("cli: ingest prints the statistics table and is deterministic") {
  const auto dir = work_dir("ingest");
  {
    std::ofstream f(dir / "tiny.tsv");
    f << "u1\ti1\t5\t1\n"
      << "u1\ti2\t4\t2\n"
      << "u2\ti1\t5\t3\n"
      << "u2\ti2\t5\t4\n"
      << "u3\ti1\t3\t5\n";
  }
  const auto out1 = (dir / "a.ds").string();
  const auto r = run_cli("ingest --interactions " +
                         (dir / "tiny.tsv").string() + " --k 1 --seed 7 --out " +
                         out1);
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("# Users\t3") != std::string::npos);
  CHECK(r.output.find("# Items\t2") != std::string::npos);
  CHECK(r.output.find("# Interactions\t5") != std::string::npos);
  CHECK(r.output.find("# Density") != std::string::npos);

  const auto out2 = (dir / "b.ds").string();
  REQUIRE(run_cli("ingest --interactions " + (dir / "tiny.tsv").string() +
                  " --k 1 --seed 7 --out " + out2)
              .code == 0);
  CHECK(llard::hash_file(out1).hex() == llard::hash_file(out2).hex());
}

TEST_CASE("cli: malformed input names the line and exits 3") {
  const auto dir = work_dir("malformed");
  {
    std::ofstream f(dir / "bad.tsv");
    f << "u1\ti1\n"
      << "u2\ti1\n"
      << "broken-line-without-item\n";
  }
  const auto r = run_cli("ingest --interactions " + (dir / "bad.tsv").string() +
                         " --k 1 --out " + (dir / "x.ds").string());
  CHECK(r.code == 3);
  CHECK(r.output.find("line 3") != std::string::npos);
}

TEST_CASE("cli: empty post-filter result is a data error") {
  const auto dir = work_dir("empty");
  {
    std::ofstream f(dir / "sparse.tsv");
    f << "u1\ti1\n"
      << "u2\ti2\n";
  }
  const auto r = run_cli("ingest --interactions " +
                         (dir / "sparse.tsv").string() + " --k 3 --out " +
                         (dir / "x.ds").string());
  CHECK(r.code == 3);
  CHECK(r.output.find("k-core") != std::string::npos);
}

TEST_CASE("cli: full offline pipeline") {
  const auto dir = work_dir("pipeline");
  write_raw_files(dir);
  const auto ds = (dir / "data.ds").string();
  const auto kp = (dir / "kp.bin").string();
  const auto kr = (dir / "kr.bin").string();
  const auto cache = (dir / "cache.bin").string();
  const auto run_dir = (dir / "run").string();

  REQUIRE(run_cli("ingest --interactions " + (dir / "interactions.tsv").string() +
                  " --catalog " + (dir / "catalog.tsv").string() +
                  " --k 2 --seed 3 --out " + ds)
              .code == 0);

  auto r = run_cli("knowledge --kind prefs --dataset " + ds +
                   " --out " + kp + " --mock --mock-embedding-dim 16 " +
                   "--model-dim 8 --cache " + cache + " --seed 3");
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("cache:") != std::string::npos);

  r = run_cli("knowledge --kind relations --dataset " + ds + " --kp " + kp +
              " --out " + kr + " --mock --mock-embedding-dim 16 --cache " +
              cache);
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("edges:") != std::string::npos);

  r = run_cli("train --dataset " + ds + " --kp " + kp + " --kr " + kr +
              " --out-dir " + run_dir +
              " --d 8 --layers 1 --batch-size 32 --max-epochs 2 --seed 3");
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(run_dir + "/model.ckpt"));
  CHECK(fs::exists(run_dir + "/metrics.tsv"));
  CHECK(fs::exists(run_dir + "/manifest.json"));

  // eval twice: identical reports.
  const auto rep1 = (dir / "rep1.tsv").string();
  const auto rep2 = (dir / "rep2.tsv").string();
  REQUIRE(run_cli("eval --checkpoint " + run_dir + "/model.ckpt --dataset " +
                  ds + " --split test --d 8 --layers 1 --out " + rep1)
              .code == 0);
  REQUIRE(run_cli("eval --checkpoint " + run_dir + "/model.ckpt --dataset " +
                  ds + " --split test --d 8 --layers 1 --out " + rep2)
              .code == 0);
  CHECK(llard::hash_file(rep1).hex() == llard::hash_file(rep2).hex());

  // coldstart grouping and graph export.
  r = run_cli("coldstart --checkpoint " + run_dir + "/model.ckpt --dataset " +
              ds + " --d 8 --layers 1 --out " + (dir / "cold.tsv").string());
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("group 4") != std::string::npos);

  r = run_cli("export-graph --checkpoint " + run_dir +
              "/model.ckpt --dataset " + ds + " --d 8 --layers 1 --out " +
              (dir / "edges.tsv").string());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "edges.tsv"));

  // The ablation composition that mirrors a plain backbone run.
  r = run_cli("train --dataset " + ds +
              " --out-dir " + (dir / "plain").string() +
              " --no-pk --no-rk --no-mi-min --freeze-mask --backbone gmf " +
              "--layers 0 --d 8 --batch-size 32 --max-epochs 2 --seed 3");
  CAPTURE(r.output);
  CHECK(r.code == 0);
}

TEST_CASE("cli: train without knowledge artifacts is a usage error") {
  const auto dir = work_dir("missing");
  write_raw_files(dir);
  const auto ds = (dir / "data.ds").string();
  REQUIRE(run_cli("ingest --interactions " + (dir / "interactions.tsv").string() +
                  " --catalog " + (dir / "catalog.tsv").string() +
                  " --k 2 --seed 3 --out " + ds)
              .code == 0);
  const auto r = run_cli("train --dataset " + ds + " --out-dir " +
                         (dir / "run").string() + " --max-epochs 1");
  CHECK(r.code == 2);
  CHECK(r.output.find("K_p") != std::string::npos);
}

TEST_CASE("cli: manifest mismatch refuses tampered artifacts") {
  const auto dir = work_dir("tamper");
  write_raw_files(dir);
  const auto ds = (dir / "data.ds").string();
  REQUIRE(run_cli("ingest --interactions " + (dir / "interactions.tsv").string() +
                  " --catalog " + (dir / "catalog.tsv").string() +
                  " --k 2 --seed 3 --out " + ds)
              .code == 0);
  REQUIRE(fs::exists(dir / "manifest.json"));
  {
    std::ofstream f(ds, std::ios::app);
    f << "tampered\n";
  }
  const auto r = run_cli("train --dataset " + ds + " --out-dir " +
                         (dir / "run").string() +
                         " --no-pk --no-rk --no-mi-min --max-epochs 1");
  CHECK(r.code == 3);
  CAPTURE(r.output);
  CHECK(r.output.find("manifest") != std::string::npos);
}

TEST_CASE("cli: command-line flags override config-file values") {
  const auto dir = work_dir("precedence");
  write_raw_files(dir);
  const auto ds = (dir / "data.ds").string();
  REQUIRE(run_cli("ingest --interactions " + (dir / "interactions.tsv").string() +
                  " --catalog " + (dir / "catalog.tsv").string() +
                  " --k 2 --seed 3 --out " + ds)
              .code == 0);
  {
    std::ofstream f(dir / "bad.conf");
    f << "lr = 0\n"          // invalid on its own
      << "max_epochs = 1\n"
      << "no_pk = 1\nno_rk = 1\nno_mi_min = 1\nfreeze_mask = 1\n"
      << "backbone = gmf\nlayers = 0\nd = 8\nbatch_size = 32\n";
  }
  // Config alone: rejected.
  auto r = run_cli("train --dataset " + ds + " --out-dir " +
                   (dir / "r1").string() + " --config " +
                   (dir / "bad.conf").string());
  CHECK(r.code == 2);
  // CLI override beats the file value.
  r = run_cli("train --dataset " + ds + " --out-dir " + (dir / "r2").string() +
              " --config " + (dir / "bad.conf").string() + " --lr 0.01");
  CAPTURE(r.output);
  CHECK(r.code == 0);
}
