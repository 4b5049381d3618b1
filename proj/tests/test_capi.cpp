// Exercises the shared library through streamcl.h only.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "streamcl/streamcl.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("streamcl_capi_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const char* name) const { return (dir / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(streamcl_version()) == "0.1.0");
  CHECK(std::string(streamcl_status_name(STREAMCL_OK)) == "ok");
  CHECK(std::string(streamcl_status_name(STREAMCL_E_CONFIG)) == "config error");
  CHECK(std::string(streamcl_status_name(static_cast<streamcl_status>(99))) == "unknown status");
}

TEST_CASE("write, read back and check an embedding file") {
  Scratch s;
  const std::string path = s / "e.ocle";
  std::vector<int32_t> labels{0, 1, 2, 1};
  std::vector<float> vecs{1, 2, 3, 4, 5, 6, 7, 8};
  REQUIRE(streamcl_write_embeddings(path.c_str(), 2, labels.data(), vecs.data(), 4) == STREAMCL_OK);

  streamcl_reader* r = nullptr;
  REQUIRE(streamcl_reader_open(path.c_str(), &r) == STREAMCL_OK);
  CHECK(streamcl_reader_dim(r) == 2);
  CHECK(streamcl_reader_count(r) == 4);
  int32_t label;
  float v[2];
  int has = 0;
  for (int i = 0; i < 4; ++i) {
    REQUIRE(streamcl_reader_next(r, &label, v, 2, &has) == STREAMCL_OK);
    CHECK(has == 1);
    CHECK(label == labels[i]);
    CHECK(v[1] == vecs[2 * i + 1]);
  }
  CHECK(streamcl_reader_next(r, &label, v, 2, &has) == STREAMCL_OK);
  CHECK(has == 0);
  CHECK(streamcl_reader_next(r, &label, v, 1, &has) == STREAMCL_E_INVALID_ARGUMENT);
  streamcl_reader_close(r);
  streamcl_reader_close(nullptr);

  streamcl_file_report rep{};
  CHECK(streamcl_check_embedding_file(path.c_str(), nullptr, &rep) == STREAMCL_OK);
  CHECK(rep.num_records == 4);
  CHECK(rep.max_label == 2);

  CHECK(streamcl_write_embeddings(path.c_str(), 2, labels.data(), vecs.data(), 0) ==
        STREAMCL_E_INVALID_ARGUMENT);
  CHECK(std::string(streamcl_last_error()).find("empty dataset") != std::string::npos);
}

TEST_CASE("corrupt files map to FORMAT") {
  Scratch s;
  write_text(s / "bad.ocle", "NOPE0000000000000000");
  streamcl_reader* r = nullptr;
  CHECK(streamcl_reader_open((s / "bad.ocle").c_str(), &r) == STREAMCL_E_FORMAT);
  CHECK(r == nullptr);
  CHECK(std::string(streamcl_last_error()).find("bad magic") != std::string::npos);
  CHECK(streamcl_reader_open((s / "missing.ocle").c_str(), &r) == STREAMCL_E_IO);
  CHECK(streamcl_reader_open(nullptr, &r) == STREAMCL_E_INVALID_ARGUMENT);
}

TEST_CASE("mean table") {
  Scratch s;
  streamcl_mean_table* t = nullptr;
  REQUIRE(streamcl_mean_table_create(2, &t) == STREAMCL_OK);
  float a[2] = {2, 4}, b[2] = {4, 8};
  CHECK(streamcl_mean_table_update(t, 3, a, 2) == STREAMCL_OK);
  CHECK(streamcl_mean_table_update(t, 3, b, 2) == STREAMCL_OK);
  CHECK(streamcl_mean_table_count(t, 3) == 2);
  CHECK(streamcl_mean_table_count(t, 9) == 0);
  double m[2];
  CHECK(streamcl_mean_table_mean(t, 3, m, 2) == STREAMCL_OK);
  CHECK(m[0] == 3.0);
  CHECK(m[1] == 6.0);
  float q[2] = {6, 10};
  double d = -1;
  CHECK(streamcl_mean_table_distance(t, 3, q, 2, &d) == STREAMCL_OK);
  CHECK(d == 5.0);
  CHECK(streamcl_mean_table_distance(t, 4, q, 2, &d) == STREAMCL_E_INVALID_ARGUMENT);
  float nan[2] = {NAN, 0};
  CHECK(streamcl_mean_table_update(t, 3, nan, 2) == STREAMCL_E_INVALID_ARGUMENT);
  CHECK(streamcl_mean_table_update(t, 3, a, 1) == STREAMCL_E_INVALID_ARGUMENT);

  const auto path = s / "means.json";
  CHECK(streamcl_mean_table_save(t, path.c_str()) == STREAMCL_OK);
  streamcl_mean_table* back = nullptr;
  REQUIRE(streamcl_mean_table_load(path.c_str(), &back) == STREAMCL_OK);
  double m2[2];
  CHECK(streamcl_mean_table_mean(back, 3, m2, 2) == STREAMCL_OK);
  CHECK(std::memcmp(m, m2, sizeof m) == 0);
  streamcl_mean_table_destroy(back);
  streamcl_mean_table_destroy(t);
  streamcl_mean_table_destroy(nullptr);
}

TEST_CASE("learner lifecycle") {
  streamcl_learner_options o;
  streamcl_learner_options_init(&o);
  CHECK(o.method == STREAMCL_METHOD_CANDIDATE_NCM);
  CHECK(o.learning_rate == doctest::Approx(0.1));
  CHECK(o.use_bias == 1);

  streamcl_learner* l = nullptr;
  REQUIRE(streamcl_learner_create(2, 2, &o, &l) == STREAMCL_OK);
  float x[4] = {1, 0, 0, 1};
  int32_t y[2] = {10, 11};
  int32_t pred = -1;
  CHECK(streamcl_learner_train_batch(l, x, y, 2, nullptr) == STREAMCL_E_STATE);
  CHECK(streamcl_learner_predict(l, x, 2, &pred) == STREAMCL_E_STATE);
  REQUIRE(streamcl_learner_begin_task(l, y, 2) == STREAMCL_OK);
  float loss = -1;
  CHECK(streamcl_learner_train_batch(l, x, y, 2, &loss) == STREAMCL_OK);
  CHECK(loss > 0);
  CHECK(streamcl_learner_predict(l, x + 2, 2, &pred) == STREAMCL_OK);
  CHECK((pred == 10 || pred == 11));  // one task: the head's candidate wins
  int32_t foreign[2] = {10, 99};
  CHECK(streamcl_learner_train_batch(l, x, foreign, 2, nullptr) == STREAMCL_E_INVALID_ARGUMENT);
  streamcl_learner_destroy(l);

  o.method = STREAMCL_METHOD_FULL_NCM;
  REQUIRE(streamcl_learner_create(2, 2, &o, &l) == STREAMCL_OK);
  REQUIRE(streamcl_learner_begin_task(l, y, 2) == STREAMCL_OK);
  CHECK(streamcl_learner_train_batch(l, x, y, 2, nullptr) == STREAMCL_OK);
  CHECK(streamcl_learner_predict(l, x + 2, 2, &pred) == STREAMCL_OK);
  CHECK(pred == 11);
  streamcl_learner_destroy(l);

  o.exemplar_budget = 5;
  CHECK(streamcl_learner_create(2, 2, &o, &l) == STREAMCL_E_CONFIG);
  CHECK(std::string(streamcl_last_error()).find("exemplar-free method cannot take a buffer") !=
        std::string::npos);
}

TEST_CASE("generate, run and sweep") {
  Scratch s;
  streamcl_synthetic_params p{10, 8, 20, 5, 0.05, 1.0, 7};
  char manifest[1024];
  REQUIRE(streamcl_generate_synthetic(&p, s.dir.string().c_str(), "syn", manifest,
                                      sizeof manifest) == STREAMCL_OK);
  CHECK(fs::exists(manifest));
  char tiny[4];
  CHECK(streamcl_generate_synthetic(&p, s.dir.string().c_str(), "syn", tiny, sizeof tiny) ==
        STREAMCL_E_INVALID_ARGUMENT);

  streamcl_file_report rep{};
  CHECK(streamcl_check_embedding_file(nullptr, manifest, &rep) == STREAMCL_OK);
  CHECK(rep.num_train == 200);
  CHECK(rep.num_test == 50);

  write_text(s / "run.json", R"({"dataset": "syn.json", "method": "candidate_ncm"})");
  streamcl_run_summary sum{};
  REQUIRE(streamcl_run_config_file((s / "run.json").c_str(), (s / "out").c_str(), &sum) ==
          STREAMCL_OK);
  CHECK(sum.num_steps == 2);
  CHECK(sum.single_pass_ok == 1);
  CHECK(fs::exists(s.dir / "out" / "metrics.json"));
  CHECK(fs::exists(s.dir / "out" / "metrics.csv"));
  CHECK(fs::exists(s.dir / "out" / "run_manifest.json"));

  write_text(s / "bad.json", R"({"dataset": "syn.json", "method": "candidate_ncm", "exemplar_budget": 3})");
  CHECK(streamcl_run_config_file((s / "bad.json").c_str(), (s / "out2").c_str(), nullptr) ==
        STREAMCL_E_CONFIG);
  write_text(s / "broken.json", R"({"dataset": )");
  CHECK(streamcl_run_config_file((s / "broken.json").c_str(), nullptr, nullptr) == STREAMCL_E_CONFIG);

  write_text(s / "sweep.json", R"({"base": "run.json", "axis": "step_size", "values": [5, 10],
                                   "output_dir": "sweep"})");
  size_t n = 0;
  CHECK(streamcl_run_sweep_file((s / "sweep.json").c_str(), 1, &n) == STREAMCL_OK);
  CHECK(n == 2);
  CHECK(fs::exists(s.dir / "sweep" / "summary.csv"));
}
