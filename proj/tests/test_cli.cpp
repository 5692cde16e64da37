#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dkaft/checkpoint.hpp"
#include "dkaft/data.hpp"
#include "dkaft/train.hpp"

using namespace dkaft;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("dkaft_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DKAFT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

Dataset tiny_dataset(std::size_t n, std::uint64_t seed) {
  SynthSpec spec;
  spec.n = n;
  spec.n_static = 4;
  spec.n_sequential = 3;
  spec.t_min = 1;
  spec.t_max = 4;
  spec.seed = seed;
  return synth_generate(spec);
}

}  // namespace

TEST_CASE("synth command is seed-deterministic") {
  TempDir dir;
  const std::string base = " synth --n 30 --n-sta 3 --n-seq 2 --t-max 4 --seed 11 --out ";
  CHECK(run_cli(base + dir.file("a.jsonl")) == 0);
  CHECK(run_cli(base + dir.file("b.jsonl")) == 0);
  const std::string a = slurp(dir.file("a.jsonl"));
  CHECK(!a.empty());
  CHECK(a == slurp(dir.file("b.jsonl")));
}

TEST_CASE("train command: loss decreases and checkpoints are reproducible") {
  TempDir dir;
  save_jsonl(tiny_dataset(60, 21), dir.file("train.jsonl"));
  save_jsonl(tiny_dataset(20, 22), dir.file("val.jsonl"));
  const std::string common = " train --head linear --epochs 10 --batch-size 16 --lr 0.05"
                             " --n-sta-repr 2 --n-seq-emb 3 --n-seq-repr 3 --seed 5"
                             " --train " + dir.file("train.jsonl") +
                             " --val " + dir.file("val.jsonl") + " --out ";
  REQUIRE(run_cli(common + dir.file("run1")) == 0);
  REQUIRE(run_cli(common + dir.file("run2")) == 0);

  SUBCASE("training loss decreases over the first 10 epochs") {
    std::ifstream log(dir.file("run1") + ".log.csv");
    std::string header, first_line, last_line, line;
    std::getline(log, header);
    CHECK(header == "epoch,train_loss,val_loglik,wall_ms");
    std::size_t rows = 0;
    while (std::getline(log, line)) {
      if (rows == 0) first_line = line;
      last_line = line;
      ++rows;
    }
    CHECK(rows == 10);
    auto loss_of = [](const std::string& l) {
      const auto a = l.find(',');
      const auto b = l.find(',', a + 1);
      return std::stod(l.substr(a + 1, b - a - 1));
    };
    CHECK(loss_of(last_line) < loss_of(first_line));
  }
  SUBCASE("same seed, config and data give identical checkpoints") {
    const std::string a = slurp(dir.file("run1") + ".checkpoint.json");
    CHECK(!a.empty());
    CHECK(a == slurp(dir.file("run2") + ".checkpoint.json"));
  }
}

TEST_CASE("exact head size guard") {
  TempDir dir;
  save_jsonl(tiny_dataset(60, 31), dir.file("train.jsonl"));
  save_jsonl(tiny_dataset(20, 32), dir.file("val.jsonl"));
  const int code = run_cli(" train --head exact --epochs 1 --max-exact-n 50"
                           " --n-sta-repr 2 --n-seq-emb 3 --n-seq-repr 3"
                           " --train " + dir.file("train.jsonl") +
                           " --val " + dir.file("val.jsonl") + " --out " + dir.file("guard"));
  CHECK(code == 1);

  // the guard message names the cubic cost
  const std::string cmd = std::string(DKAFT_CLI_PATH) +
                          " train --head exact --epochs 1 --max-exact-n 50"
                          " --train " + dir.file("train.jsonl") +
                          " --val " + dir.file("val.jsonl") + " --out " + dir.file("guard") +
                          " 2> " + dir.file("stderr.txt");
  const int guard_status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(guard_status) == 1);
  const std::string message = slurp(dir.file("stderr.txt"));
  CHECK(message.find("O(n^3)") != std::string::npos);
}

TEST_CASE("predict and evaluate round trip") {
  TempDir dir;
  save_jsonl(tiny_dataset(50, 41), dir.file("train.jsonl"));
  save_jsonl(tiny_dataset(20, 42), dir.file("val.jsonl"));
  save_jsonl(tiny_dataset(25, 43), dir.file("test.jsonl"));
  REQUIRE(run_cli(" train --head linear --epochs 3 --batch-size 16 --seed 5"
                  " --n-sta-repr 2 --n-seq-emb 3 --n-seq-repr 3"
                  " --train " + dir.file("train.jsonl") + " --val " + dir.file("val.jsonl") +
                  " --out " + dir.file("m")) == 0);
  REQUIRE(run_cli(" predict --checkpoint " + dir.file("m") + ".checkpoint.json --data " +
                  dir.file("test.jsonl") + " --out " + dir.file("pred.jsonl")) == 0);

  SUBCASE("linear head emits zero function variance and z_hat = exp(mu)") {
    std::ifstream in(dir.file("pred.jsonl"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      json j = json::parse(line);
      CHECK(j.at("sigma_f2").get<double>() == 0.0);
      CHECK(j.at("z_hat").get<double>() ==
            doctest::Approx(std::exp(j.at("mu").get<double>())).epsilon(1e-15));
      ++rows;
    }
    CHECK(rows == 25);
  }
  SUBCASE("mc-dropout predictions carry positive function variance") {
    REQUIRE(run_cli(" predict --mc-dropout --passes 20 --checkpoint " + dir.file("m") +
                    ".checkpoint.json --data " + dir.file("test.jsonl") + " --out " +
                    dir.file("mc.jsonl")) == 0);
    std::ifstream in(dir.file("mc.jsonl"));
    std::string line;
    std::size_t positive = 0, rows = 0;
    while (std::getline(in, line)) {
      json j = json::parse(line);
      if (j.at("sigma_f2").get<double>() > 0.0) ++positive;
      ++rows;
    }
    CHECK(rows == 25);
    CHECK(positive == rows);
  }
  SUBCASE("evaluate writes the report and curves") {
    REQUIRE(run_cli(" evaluate --pred " + dir.file("pred.jsonl") + " --data " +
                    dir.file("test.jsonl") + " --quantiles 5 --out " + dir.file("ev")) == 0);
    json report = json::parse(slurp(dir.file("ev") + ".report.json"));
    for (const char* key : {"mad", "rmse_log", "c_index", "crps", "ks"}) CHECK(report.contains(key));
    const std::string qp = slurp(dir.file("ev") + ".qp.csv");
    CHECK(line_count(qp) == 6);  // header + Q rows
    const std::string ecdf = slurp(dir.file("ev") + ".ecdf.csv");
    CHECK(line_count(ecdf) == 26);  // header + one row per record
  }
  SUBCASE("perfect predictions score perfectly") {
    Dataset test = load_jsonl(dir.file("test.jsonl"));
    std::vector<PredictionRow> rows;
    for (const auto& r : test.records)
      rows.push_back(PredictionRow{r.id, std::log(r.time), 0.0, 1e-6, r.time});
    save_predictions(rows, dir.file("perfect.jsonl"));
    REQUIRE(run_cli(" evaluate --pred " + dir.file("perfect.jsonl") + " --data " +
                    dir.file("test.jsonl") + " --out " + dir.file("pf")) == 0);
    json report = json::parse(slurp(dir.file("pf") + ".report.json"));
    CHECK(report["mad"].get<double>() == 0.0);
    CHECK(report["rmse_log"].get<double>() == 0.0);
    CHECK(report["c_index"].get<double>() == 1.0);
  }
  SUBCASE("prediction ids missing from the data are an error") {
    Dataset test = load_jsonl(dir.file("test.jsonl"));
    std::vector<PredictionRow> rows;
    rows.push_back(PredictionRow{"no-such-id", 0.0, 0.0, 1.0, 1.0});
    save_predictions(rows, dir.file("orphan.jsonl"));
    CHECK(run_cli(" evaluate --pred " + dir.file("orphan.jsonl") + " --data " +
                  dir.file("test.jsonl") + " --out " + dir.file("orph")) == 2);
  }
}

TEST_CASE("pretrain command emits history and honors patience") {
  TempDir dir;
  save_jsonl(tiny_dataset(60, 51), dir.file("train.jsonl"));
  save_jsonl(tiny_dataset(30, 52), dir.file("val.jsonl"));
  REQUIRE(run_cli(" pretrain --dml-bins 3 --dml-patience 3 --dml-max-epochs 12 --batch-size 16"
                  " --n-sta-repr 2 --n-seq-emb 3 --n-seq-repr 3 --lr 0.01 --seed 5"
                  " --train " + dir.file("train.jsonl") + " --val " + dir.file("val.jsonl") +
                  " --out " + dir.file("pre")) == 0);
  std::ifstream csv(dir.file("pre") + ".map_at_r.csv");
  std::string header, line;
  std::getline(csv, header);
  CHECK(header == "epoch,train_loss,val_map_at_r");
  std::size_t rows = 0, best_row = 0;
  double best = -1.0;
  while (std::getline(csv, line)) {
    ++rows;
    const auto a = line.rfind(',');
    const double v = std::stod(line.substr(a + 1));
    if (v > best) {
      best = v;
      best_row = rows;
    }
  }
  CHECK(rows <= 12);
  CHECK(rows <= best_row + 3 + 1);
  CHECK(fs::exists(dir.file("pre") + ".checkpoint.json"));
}

TEST_CASE("exit codes") {
  TempDir dir;
  CHECK(run_cli(" no-such-command") == 1);
  CHECK(run_cli(" synth") == 1);  // missing required --out
  CHECK(run_cli(" predict --checkpoint missing.json --data missing.jsonl --out x.jsonl") == 2);
  std::ofstream bad(dir.file("bad.conf"));
  bad << "unknown_key=1\n";
  bad.close();
  save_jsonl(tiny_dataset(20, 61), dir.file("d.jsonl"));
  CHECK(run_cli(" train --config " + dir.file("bad.conf") + " --train " + dir.file("d.jsonl") +
                " --val " + dir.file("d.jsonl") + " --out " + dir.file("x")) == 1);
  // an absurd learning rate drives training into a numerical breakdown
  save_jsonl(tiny_dataset(60, 62), dir.file("t.jsonl"));
  CHECK(run_cli(" train --head linear --lr 1e300 --epochs 3 --batch-size 16"
                " --n-sta-repr 2 --n-seq-emb 3 --n-seq-repr 3 --seed 5 --train " +
                dir.file("t.jsonl") + " --val " + dir.file("d.jsonl") + " --out " +
                dir.file("nan")) == 3);
}

TEST_CASE("config file keys with flag overrides") {
  TempDir dir;
  std::ofstream conf(dir.file("run.conf"));
  conf << "# comment line\n"
       << "head=linear\n"
       << "epochs=2\n"
       << "batch_size=16\n"
       << "n_sta_repr=2\n"
       << "n_seq_emb=3\n"
       << "n_seq_repr=3\n"
       << "lr=0.02\n"
       << "seed=9\n";
  conf.close();
  save_jsonl(tiny_dataset(40, 71), dir.file("train.jsonl"));
  save_jsonl(tiny_dataset(15, 72), dir.file("val.jsonl"));
  REQUIRE(run_cli(" train --config " + dir.file("run.conf") + " --epochs 4 --train " +
                  dir.file("train.jsonl") + " --val " + dir.file("val.jsonl") + " --out " +
                  dir.file("c")) == 0);
  Checkpoint cp = load_checkpoint(dir.file("c") + ".checkpoint.json");
  CHECK(cp.config.head == "linear");
  CHECK(cp.config.epochs == 4);  // flag wins over file
  CHECK(cp.config.lr == 0.02);
  CHECK(cp.config.seed == 9);
}

TEST_CASE("every head trains and predicts through the checkpoint") {
  Dataset train = tiny_dataset(40, 91);
  Dataset val = tiny_dataset(15, 92);
  Dataset test = tiny_dataset(10, 93);
  for (const char* head : {"exact", "svgp", "ppgp", "linear"}) {
    CAPTURE(head);
    RunConfig cfg;
    cfg.head = head;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.m_inducing = 8;
    cfg.n_sta_repr = 2;
    cfg.n_seq_emb = 3;
    cfg.n_seq_repr = 3;
    cfg.lr = 0.02;
    cfg.seed = 17;
    TrainResult res = train_model(cfg, train, val);
    CHECK(res.log.size() == 3);
    std::vector<PredictionRow> rows = predict_dataset(res.checkpoint, test);
    REQUIRE(rows.size() == test.size());
    for (const auto& r : rows) {
      CHECK(std::isfinite(r.mu));
      CHECK(r.sigma_obs2 > 0.0);
      CHECK(r.sigma_f2 >= 0.0);
      if (std::string(head) == "linear") CHECK(r.sigma_f2 == 0.0);
      CHECK(r.z_hat == doctest::Approx(std::exp(r.mu)).epsilon(1e-15));
    }
    if (std::string(head) == "exact") {
      CHECK(res.checkpoint.exact_train_latents.has_value());
      CHECK(res.checkpoint.exact_train_y.has_value());
    }
  }
}

TEST_CASE("censored records flow through training") {
  SynthSpec spec;
  spec.n = 60;
  spec.n_static = 4;
  spec.n_sequential = 3;
  spec.t_min = 1;
  spec.t_max = 4;
  spec.censor_frac = 0.3;
  spec.seed = 95;
  Dataset train = synth_generate(spec);
  spec.n = 20;
  spec.seed = 96;
  Dataset val = synth_generate(spec);
  for (const char* head : {"exact", "ppgp", "linear"}) {
    CAPTURE(head);
    RunConfig cfg;
    cfg.head = head;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.m_inducing = 8;
    cfg.n_sta_repr = 2;
    cfg.n_seq_emb = 3;
    cfg.n_seq_repr = 3;
    cfg.seed = 3;
    TrainResult res = train_model(cfg, train, val);
    for (const auto& e : res.log) CHECK(std::isfinite(e.train_loss));
  }
}

TEST_CASE("checkpoint save/load keeps predictions bitwise") {
  TempDir dir;
  Dataset train = tiny_dataset(40, 81);
  Dataset val = tiny_dataset(15, 82);
  Dataset test = tiny_dataset(10, 83);
  RunConfig cfg;
  cfg.head = "ppgp";
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.m_inducing = 8;
  cfg.n_sta_repr = 2;
  cfg.n_seq_emb = 3;
  cfg.n_seq_repr = 3;
  cfg.seed = 13;
  TrainResult res = train_model(cfg, train, val);
  std::vector<PredictionRow> before = predict_dataset(res.checkpoint, test);
  save_checkpoint(res.checkpoint, dir.file("cp.json"));
  Checkpoint loaded = load_checkpoint(dir.file("cp.json"));
  std::vector<PredictionRow> after = predict_dataset(loaded, test);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].mu == after[i].mu);
    CHECK(before[i].sigma_f2 == after[i].sigma_f2);
    CHECK(before[i].sigma_obs2 == after[i].sigma_obs2);
  }
}
