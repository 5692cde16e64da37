#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dkaft/data.hpp"
#include "dkaft/errors.hpp"
#include "test_support.hpp"

using namespace dkaft;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dkaft_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load_jsonl validation") {
  TempDir dir;
  SUBCASE("empty file rejected") {
    write_file(dir.file("empty.jsonl"), "");
    CHECK_THROWS_WITH_AS(load_jsonl(dir.file("empty.jsonl")), doctest::Contains("empty"),
                         DataError);
  }
  SUBCASE("missing file rejected") {
    CHECK_THROWS_AS(load_jsonl(dir.file("nope.jsonl")), DataError);
  }
  SUBCASE("single valid record loads") {
    write_file(dir.file("one.jsonl"),
               R"({"id":"a","static":[1.0,2.0],"sequence":[[0.1,0.2,0.3]],"time":5.0,"event":1})"
               "\n");
    Dataset ds = load_jsonl(dir.file("one.jsonl"));
    CHECK(ds.size() == 1);
    CHECK(ds.n_static == 2);
    CHECK(ds.n_sequential == 3);
    CHECK(ds.records[0].id == "a");
  }
  SUBCASE("malformed line reported with its line number") {
    write_file(dir.file("bad.jsonl"),
               R"({"id":"a","static":[1.0],"sequence":[[0.1]],"time":5.0,"event":1})"
               "\nnot-json\n");
    CHECK_THROWS_WITH_AS(load_jsonl(dir.file("bad.jsonl")), doctest::Contains(":2"), DataError);
  }
  SUBCASE("negative time names the record") {
    write_file(dir.file("neg.jsonl"),
               R"({"id":"bad-time","static":[1.0],"sequence":[[0.1]],"time":-1.0,"event":1})"
               "\n");
    CHECK_THROWS_WITH_AS(load_jsonl(dir.file("neg.jsonl")), doctest::Contains("bad-time"),
                         DataError);
  }
  SUBCASE("inconsistent dimensions name the record") {
    write_file(dir.file("dims.jsonl"),
               R"({"id":"a","static":[1.0],"sequence":[[0.1]],"time":5.0,"event":1})"
               "\n"
               R"({"id":"b","static":[1.0,2.0],"sequence":[[0.1]],"time":5.0,"event":1})"
               "\n");
    CHECK_THROWS_WITH_AS(load_jsonl(dir.file("dims.jsonl")), doctest::Contains("'b'"), DataError);
  }
  SUBCASE("empty sequence rejected") {
    write_file(dir.file("seq.jsonl"),
               R"({"id":"a","static":[1.0],"sequence":[],"time":5.0,"event":1})"
               "\n");
    CHECK_THROWS_AS(load_jsonl(dir.file("seq.jsonl")), DataError);
  }
}

TEST_CASE("jsonl round trip is exact") {
  TempDir dir;
  Rng rng(1);
  Dataset ds;
  ds.n_static = 3;
  ds.n_sequential = 2;
  for (int i = 0; i < 30; ++i) {
    PatientRecord r = testsup::random_record(3, 2, 1 + rng.below(6), rng, "rt-" + std::to_string(i));
    // exercise gnarly doubles
    r.static_features[0] = 1.0 / 3.0;
    r.static_features[1] = 1e-17 * (1.0 + rng.uniform01());
    r.time = std::exp(3.0 * rng.normal());
    r.truth_mean = rng.normal();
    r.truth_sigma = 0.1 + rng.uniform01();
    if (i % 4 == 0) r.event = 0;
    ds.records.push_back(std::move(r));
  }
  save_jsonl(ds, dir.file("rt.jsonl"));
  Dataset back = load_jsonl(dir.file("rt.jsonl"));
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds.records[i];
    const auto& b = back.records[i];
    CHECK(a.id == b.id);
    CHECK(a.event == b.event);
    CHECK(a.time == b.time);  // bitwise
    for (std::size_t k = 0; k < a.static_features.size(); ++k)
      CHECK(a.static_features[k] == b.static_features[k]);
    REQUIRE(a.sequence.size() == b.sequence.size());
    for (std::size_t t = 0; t < a.sequence.size(); ++t)
      for (std::size_t k = 0; k < a.sequence[t].size(); ++k)
        CHECK(a.sequence[t][k] == b.sequence[t][k]);
    CHECK(*a.truth_mean == *b.truth_mean);
    CHECK(*a.truth_sigma == *b.truth_sigma);
  }
}

TEST_CASE("split") {
  Rng rng(2);
  Dataset ds;
  ds.n_static = 2;
  ds.n_sequential = 2;
  for (int i = 0; i < 100; ++i)
    ds.records.push_back(testsup::random_record(2, 2, 2, rng, "s" + std::to_string(i)));

  SUBCASE("ninety-ten split with five folds") {
    SplitResult s = split(ds, 0.1, 5, 42);
    CHECK(s.test_indices.size() == 10);
    std::size_t fold_total = 0;
    for (const auto& f : s.folds) fold_total += f.size();
    CHECK(fold_total == 90);
    CHECK(s.folds.size() == 5);
  }
  SUBCASE("deterministic under the seed") {
    SplitResult a = split(ds, 0.2, 4, 7);
    SplitResult b = split(ds, 0.2, 4, 7);
    CHECK(a.test_indices == b.test_indices);
    for (std::size_t k = 0; k < a.folds.size(); ++k) CHECK(a.folds[k] == b.folds[k]);
  }
  SUBCASE("partition: disjoint and exhaustive") {
    SplitResult s = split(ds, 0.15, 3, 9);
    std::vector<int> seen(ds.size(), 0);
    for (auto i : s.test_indices) ++seen[i];
    for (const auto& f : s.folds)
      for (auto i : f) ++seen[i];
    for (int c : seen) CHECK(c == 1);
  }
  SUBCASE("bad parameters rejected") {
    CHECK_THROWS_AS(split(ds, 0.0, 3, 1), ConfigError);
    CHECK_THROWS_AS(split(ds, 0.5, 1, 1), ConfigError);
    Dataset tiny;
    tiny.n_static = 2;
    tiny.n_sequential = 2;
    tiny.records.push_back(ds.records[0]);
    CHECK_THROWS_AS(split(tiny, 0.5, 5, 1), DataError);
  }
}

TEST_CASE("synth_generate") {
  SUBCASE("no censoring by default") {
    SynthSpec spec;
    spec.n = 50;
    spec.seed = 3;
    Dataset ds = synth_generate(spec);
    CHECK(ds.size() == 50);
    for (const auto& r : ds.records) {
      CHECK(r.event == 1);
      CHECK(r.time > 0.0);
      CHECK(r.sequence.size() >= spec.t_min);
      CHECK(r.sequence.size() <= spec.t_max);
      CHECK(r.truth_mean.has_value());
      CHECK(r.truth_sigma.has_value());
    }
  }
  SUBCASE("censoring flags and shortened times") {
    SynthSpec spec;
    spec.n = 400;
    spec.censor_frac = 0.3;
    spec.seed = 4;
    Dataset ds = synth_generate(spec);
    std::size_t censored = 0;
    for (const auto& r : ds.records)
      if (r.event == 0) ++censored;
    CHECK(censored > 60);
    CHECK(censored < 180);
  }
  SUBCASE("fixed seed reproduces the dataset bitwise") {
    SynthSpec spec;
    spec.n = 20;
    spec.seed = 5;
    Dataset a = synth_generate(spec);
    Dataset b = synth_generate(spec);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.records[i].time == b.records[i].time);
      for (std::size_t k = 0; k < a.records[i].static_features.size(); ++k)
        CHECK(a.records[i].static_features[k] == b.records[i].static_features[k]);
    }
  }
  SUBCASE("heteroscedastic noise correlates with the designated feature") {
    SynthSpec spec;
    spec.n = 2000;
    spec.noise = NoiseMode::Heteroscedastic;
    spec.seed = 6;
    Dataset ds = synth_generate(spec);
    double mx = 0.0, me = 0.0;
    std::vector<double> x, e2;
    for (const auto& r : ds.records) {
      const double eps = std::log(r.time) - *r.truth_mean;
      x.push_back(r.static_features[spec.hetero_feature]);
      e2.push_back(eps * eps);
      mx += x.back();
      me += e2.back();
    }
    mx /= x.size();
    me /= x.size();
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (e2[i] - me);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (e2[i] - me) * (e2[i] - me);
    }
    CHECK(sxy / std::sqrt(sxx * syy) > 0.2);
  }
  SUBCASE("true mean recovers the injected noise level") {
    SynthSpec spec;
    spec.n = 5000;
    spec.sigma = 0.3;
    spec.seed = 7;
    Dataset ds = synth_generate(spec);
    double ss = 0.0;
    for (const auto& r : ds.records) {
      const double eps = std::log(r.time) - *r.truth_mean;
      ss += eps * eps;
    }
    const double rmse = std::sqrt(ss / ds.size());
    CHECK(rmse == doctest::Approx(spec.sigma).epsilon(0.05));
  }
  SUBCASE("invalid specs rejected") {
    SynthSpec spec;
    spec.censor_frac = 1.0;
    CHECK_THROWS_AS(synth_generate(spec), ConfigError);
    SynthSpec spec2;
    spec2.t_min = 5;
    spec2.t_max = 2;
    CHECK_THROWS_AS(synth_generate(spec2), ConfigError);
  }
}

TEST_CASE("standardize") {
  Rng rng(8);
  Dataset train;
  train.n_static = 3;
  train.n_sequential = 2;
  for (int i = 0; i < 200; ++i) {
    PatientRecord r = testsup::random_record(3, 2, 1 + rng.below(4), rng, "t" + std::to_string(i));
    for (auto& v : r.static_features) v = 2.0 * v + 5.0;
    r.static_features[2] = 7.0;  // constant feature
    train.records.push_back(std::move(r));
  }
  StandardStats stats = compute_stats(train);
  Dataset std_train = standardize(train, stats);

  SUBCASE("training data maps to zero mean unit variance") {
    for (std::size_t k = 0; k < 2; ++k) {
      double mean = 0.0, var = 0.0;
      for (const auto& r : std_train.records) mean += r.static_features[k];
      mean /= std_train.size();
      for (const auto& r : std_train.records)
        var += (r.static_features[k] - mean) * (r.static_features[k] - mean);
      var /= std_train.size();
      CHECK(std::fabs(mean) < 1e-10);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
  SUBCASE("constant feature maps to zero via the std floor") {
    for (const auto& r : std_train.records) CHECK(r.static_features[2] == 0.0);
  }
  SUBCASE("test data keeps a nonzero mean under train stats") {
    Dataset test;
    test.n_static = 3;
    test.n_sequential = 2;
    for (int i = 0; i < 100; ++i) {
      PatientRecord r = testsup::random_record(3, 2, 2, rng, "v" + std::to_string(i));
      for (auto& v : r.static_features) v = 2.0 * v + 9.0;  // shifted distribution
      test.records.push_back(std::move(r));
    }
    Dataset std_test = standardize(test, stats);
    double mean = 0.0;
    for (const auto& r : std_test.records) mean += r.static_features[0];
    mean /= std_test.size();
    CHECK(std::fabs(mean) > 0.5);
  }
  SUBCASE("mismatched stats rejected") {
    StandardStats bad = stats;
    bad.static_mean.pop_back();
    CHECK_THROWS_AS(standardize(train, bad), DataError);
  }
}
