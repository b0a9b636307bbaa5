#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "crowdpref/config.hpp"
#include "crowdpref/pipeline.hpp"

using namespace crowdpref;
namespace fs = std::filesystem;

namespace {

const char* kConfigTemplate = R"(# small end-to-end experiment
[env]
width = 5
height = 5
goals = 4,4
hazards = 1,2
seed = 0

[data]
n_trajectories = 40
horizon = 60
t_c = 10
n_clips = 200
n_queries = 60

[crowd]
n_annotators = 100
labels_per_query = 3
max_queries_per_annotator = 20
max_annotators_per_query = 10
tie_epsilon = auto
seed = 5

[train]
variant = dcbt
t_total = 60
t_init = 12
t_alt = 10
beta = 0.5
batch_size = 16
hidden = 8
embed_dim = 4

[eval]
episodes = 30
horizon = 40
q_sweeps = 80

[run]
seeds = 1
variants = bt dcbt
output_dir = {OUT}
)";

ExperimentConfig test_config(const std::string& out_dir) {
  std::string text = kConfigTemplate;
  text.replace(text.find("{OUT}"), 5, out_dir);
  return parse_config_string(text);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fresh_dir(const char* name) {
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parsing covers every section") {
  const ExperimentConfig cfg = test_config("somewhere");
  CHECK(cfg.env.width == 5);
  REQUIRE(cfg.env.goals.size() == 1);
  CHECK(cfg.env.goals[0] == Cell{4, 4});
  CHECK(cfg.data.n_clips == 200);
  CHECK(cfg.crowd.n_annotators == 100);
  CHECK(cfg.labels_per_query == 3);
  CHECK(cfg.crowd.tie_epsilon_auto);
  CHECK(cfg.train.t_total == 60);
  CHECK(cfg.train_variant == "dcbt");
  CHECK(cfg.eval.episodes == 30);
  CHECK(cfg.run.seeds == std::vector<uint64_t>{1});
  CHECK(cfg.run.variants == std::vector<std::string>{"bt", "dcbt"});
  CHECK(cfg.run.output_dir == "somewhere");
}

TEST_CASE("config parsing rejects malformed input") {
  CHECK_THROWS_AS(parse_config_string("[env]\nwidht = 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("[nope]\nx = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("width = 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("[env]\nwidth == 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("[run]\nseeds =\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("[train]\nvariant = dcbtx\n"), std::invalid_argument);
}

TEST_CASE("generate writes the configured clips deterministically") {
  const std::string out = fresh_dir("crowdpref_gen");
  const ExperimentConfig cfg = test_config(out);
  cmd_generate(cfg, 1);

  const Paths paths(out);
  const ClipStore store = load_clips(paths.clips_file(1));
  CHECK(store.size() == 200);
  CHECK(store.t_c() == 10);
  const std::vector<double> scores = load_clip_scores(paths.scores_file(1));
  CHECK(scores.size() == 200);

  const std::string first = slurp(paths.clips_file(1));
  cmd_generate(cfg, 1);  // rerun: byte-identical
  CHECK(slurp(paths.clips_file(1)) == first);
}

TEST_CASE("annotate writes the dataset and the hidden truth") {
  const std::string out = fresh_dir("crowdpref_ann");
  const ExperimentConfig cfg = test_config(out);
  cmd_generate(cfg, 1);
  cmd_annotate(cfg, 1);

  const Paths paths(out);
  const PreferenceDataset ds = load_dataset(paths, 1);
  CHECK(ds.size() == 60 * 3);
  CHECK(ds.query_index.size() == 60);
  for (const auto& [key, bucket] : ds.query_index) {
    CHECK(bucket.size() == 3);
    std::set<uint32_t> annotators;
    for (int i : bucket) annotators.insert(ds.records[i].annotator);
    CHECK(annotators.size() == 3);
  }

  const auto rows = load_truth(paths.truth_file(1));
  REQUIRE(rows.size() == ds.records.size());
  const DatasetTruth truth = truth_from_rows(rows);
  const double err = label_error_rate(ds, truth);
  CHECK(err > 0.1);
  CHECK(err < 0.5);
}

TEST_CASE("train writes checkpoints and a phase-tagged log") {
  const std::string out = fresh_dir("crowdpref_train");
  const ExperimentConfig cfg = test_config(out);
  cmd_generate(cfg, 1);
  cmd_annotate(cfg, 1);
  const Paths paths(out);

  for (const std::string variant : {"bt", "mv", "dcbt"}) {
    cmd_train(cfg, 1, variant);
    const Checkpoint ck = load_checkpoint(paths.checkpoint_file(1, variant));
    CHECK(ck.reward.n_states == 25);
    CHECK(ck.has_reliability == (variant == "dcbt"));

    const std::string log = slurp(paths.trainlog_file(1, variant));
    std::istringstream lines(log);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "step,phase,loss_dcbt,loss_reg,loss_l1l2,loss_total");
    int n_rows = 0, n_init = 0;
    std::string line;
    while (std::getline(lines, line)) {
      ++n_rows;
      if (line.find(",init,") != std::string::npos) ++n_init;
    }
    CHECK(n_rows == 60);
    CHECK(n_init == 12);
  }
}

TEST_CASE("evaluate appends one report row per variant") {
  const std::string out = fresh_dir("crowdpref_eval");
  const ExperimentConfig cfg = test_config(out);
  cmd_generate(cfg, 1);
  cmd_annotate(cfg, 1);
  cmd_train(cfg, 1, "bt");

  const EvalRow truth_row = cmd_evaluate(cfg, 1, "true", /*use_true_reward=*/true);
  CHECK(truth_row.variant == "true");
  CHECK(truth_row.avg_return >= 0.0);
  REQUIRE(truth_row.pearson.has_value());
  CHECK(*truth_row.pearson == Catch::Approx(1.0).margin(1e-9));

  const EvalRow bt_row = cmd_evaluate(cfg, 1, "bt");
  CHECK(bt_row.label_error_raw == truth_row.label_error_raw);

  const Paths paths(out);
  const std::string report = slurp(paths.report_file());
  std::istringstream lines(report);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "variant,seed,avg_return,pearson,spearman,label_error_raw,label_error_mv");
  int rows = 0;
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("run_all is reproducible byte for byte") {
  const std::string out = fresh_dir("crowdpref_runall");
  const ExperimentConfig cfg = test_config(out);
  run_all(cfg);
  const Paths paths(out);
  const std::string first = slurp(paths.report_file());

  run_all(cfg);
  CHECK(slurp(paths.report_file()) == first);

  // One row per (variant, seed) plus the true baseline.
  std::istringstream lines(first);
  std::string line;
  int rows = -1;  // skip header
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);  // true, bt, dcbt for the single seed
}
