#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "emoprobe/checkpoint.hpp"
#include "emoprobe/errors.hpp"
#include "emoprobe/experiment.hpp"
#include "emoprobe/synthetic.hpp"
#include "test_support.hpp"

using namespace emoprobe;
using emoprobe::testing::slurp;
using emoprobe::testing::TempDir;

namespace {

// One store per layer; only `signal_layer` carries the cluster signal.
std::vector<std::filesystem::path> layered_stores(const TempDir& dir, const std::vector<std::uint16_t>& layers,
                                                  std::uint16_t signal_layer, std::uint32_t per_class = 120) {
  ClusterSpec spec;
  spec.dim = 12;
  spec.train_per_class = per_class;
  spec.test_per_class = 0;
  spec.seed = 31;
  const auto set = make_layered_clusters(spec, layers, signal_layer);
  std::vector<std::filesystem::path> paths;
  for (auto layer : layers) {
    std::vector<ActivationRecord> recs;
    for (const auto& r : set.records)
      if (r.layer_id == layer) recs.push_back(r);
    StoreHeader h;
    h.dim = spec.dim;
    h.layer_ids = {layer};
    const auto path = dir / ("layer" + std::to_string(layer) + ".store");
    write_store(path, h, recs);
    paths.push_back(path);
  }
  return paths;
}

std::string config_text(const std::vector<std::filesystem::path>& stores, const std::filesystem::path& out,
                        const std::string& extra = "") {
  std::string s = "{\n  \"num_layers\": 36,\n  \"stores\": [";
  for (std::size_t i = 0; i < stores.size(); ++i) s += (i ? ", \"" : "\"") + stores[i].string() + "\"";
  s += "],\n  \"train\": {\"hidden_width\": 32, \"learning_rate\": 0.003, \"seed\": 4},\n  \"split_seed\": 9,\n  \"balance_seed\": 10,\n";
  s += "  \"geometry\": {\"grid\": 40},\n";
  s += extra;
  s += "  \"output_dir\": \"" + out.string() + "\"\n}\n";
  return s;
}

}  // namespace

TEST_CASE("depth mapping") {
  const std::vector<double> f = {0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<std::uint16_t> qwen = {0, 9, 18, 27, 36}, llama = {0, 7, 14, 21, 28};
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(map_depth_to_layer(f[i], 36) == qwen[i]);
    CHECK(map_depth_to_layer(f[i], 28) == llama[i]);
  }
  for (std::uint32_t n = 1; n < 100; ++n) CHECK(map_depth_to_layer(0.0, n) == 0);
  CHECK(map_depth_to_layer(0.5, 3) == 2);  // 1.5 rounds away from zero
  CHECK(map_depth_to_layer(0.25, 2) == 1);
  CHECK_THROWS_AS(map_depth_to_layer(1.01, 36), ContractError);
  CHECK_THROWS_AS(map_depth_to_layer(-0.1, 36), ContractError);
  CHECK_THROWS_AS(map_depth_to_layer(0.5, 0), ContractError);
}

TEST_CASE("experiment config parsing") {
  const std::string text = R"({"num_layers": 28, "stores": ["a.store"], "variant": "sft-raw",
    "train": {"batch_size": 8}, "persistence": {"window": 11}, "output_dir": "out"})";
  const auto c = parse_experiment_config(text, "/base");
  CHECK(c.num_layers == 28);
  CHECK(c.variant == CheckpointTag::kSftRaw);
  CHECK(c.stores == std::vector<std::filesystem::path>{"/base/a.store"});
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.learning_rate == 1e-4);
  CHECK(c.smoothing_window == 11);
  CHECK(c.output_dir == "/base/out");
  CHECK(c.source_text == text);

  const auto o = parse_experiment_config(text, "/base", {{"train.batch_size", "2"}, {"split_seed", "77"},
                                                         {"variant", "pre-trained"}});
  CHECK(o.train.batch_size == 2);
  CHECK(o.split_seed == 77);
  CHECK(o.variant == CheckpointTag::kPretrained);
  CHECK(o.source_text == text);
  CHECK(o.overrides.size() == 3);

  CHECK_THROWS_AS(parse_experiment_config(R"({"num_layers": 28, "stores": ["a"], "colour": 1})"), FormatError);
  CHECK_THROWS_AS(parse_experiment_config("not json"), FormatError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"num_layers": 28, "stores": ["a"], "depth_fractions": [1.5]})"),
                  ContractError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"num_layers": 0, "stores": ["a"]})"), ContractError);
}

TEST_CASE("missing layer stores are all listed up front") {
  TempDir dir;
  const auto stores = layered_stores(dir, {0, 18}, 18, 5);
  auto cfg = parse_experiment_config(config_text({stores[0], stores[1], dir / "gone.store"}, dir / "run"));
  try {
    resolve_layer_stores(cfg);
    FAIL("missing layers not reported");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gone.store") != std::string::npos);
    CHECK(msg.find("layer 9") != std::string::npos);
    CHECK(msg.find("layer 27") != std::string::npos);
    CHECK(msg.find("layer 36") != std::string::npos);
  }
  CHECK_THROWS_AS(run_full_pipeline(cfg), DataError);
  CHECK_FALSE(std::filesystem::exists(dir / "run"));
}

TEST_CASE("depth sweep peaks at the planted layer") {
  TempDir dir;
  const std::vector<std::uint16_t> layers = {0, 9, 18, 27, 36};
  const auto stores = layered_stores(dir, layers, 18);
  const auto cfg = parse_experiment_config(config_text(stores, dir / "run"));
  const auto sweep = run_depth_sweep(cfg);
  REQUIRE(sweep.runs.size() == 5);
  std::size_t best = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(sweep.runs[i].layer == layers[i]);
    if (sweep.runs[i].eval.accuracy > sweep.runs[best].eval.accuracy) best = i;
  }
  CHECK(sweep.runs[best].layer == 18);
  CHECK(sweep.runs[2].eval.accuracy > 0.9);
  CHECK(sweep.runs[0].eval.accuracy < 0.4);
  const auto table = render_depth_table(sweep);
  CHECK(table.find("50%") != std::string::npos);
  const auto json = depth_sweep_to_json(sweep, cfg);
  CHECK(json.find("config_echo") != std::string::npos);
}

TEST_CASE("identical stores at every depth give matching accuracies") {
  TempDir dir;
  ClusterSpec spec;
  spec.dim = 12;
  spec.train_per_class = 120;
  spec.test_per_class = 0;
  spec.separation = 2.0;
  const auto set = make_clusters(spec);
  std::vector<std::filesystem::path> stores;
  for (std::uint16_t layer : {0, 9, 18, 27, 36}) {
    auto recs = set.records;
    for (auto& r : recs) r.layer_id = layer;
    StoreHeader h;
    h.dim = spec.dim;
    h.layer_ids = {layer};
    stores.push_back(dir / ("s" + std::to_string(layer)));
    write_store(stores.back(), h, recs);
  }
  const auto sweep = run_depth_sweep(parse_experiment_config(config_text(stores, dir / "run")));
  for (const auto& run : sweep.runs) CHECK(std::abs(run.eval.accuracy - sweep.runs[0].eval.accuracy) < 0.02);
}

TEST_CASE("full pipeline writes every artifact and reruns identically") {
  TempDir dir;
  const auto stores = layered_stores(dir, {0, 9, 18, 27, 36}, 36, 60);
  DecaySpec ds;
  ds.dim = 12;
  ds.replies_per_class = 10;
  ds.reply_length = 30;
  ds.signal_until = 15;
  ds.layer = 36;
  {
    StoreHeader h;
    h.dim = ds.dim;
    h.layer_ids = {36};
    write_store(dir / "tokens.store", h, make_decay_replies(ds));
  }
  const std::string extra = "  \"per_token_store\": \"" + (dir / "tokens.store").string() +
                            "\",\n  \"offset_train\": {\"hidden_width\": 16, \"k_max\": 64, \"seed\": 2},\n"
                            "  \"persistence\": {\"window\": 5, \"max_offset\": 40},\n";
  const auto text_a = config_text(stores, dir / "a", extra);
  const auto text_b = config_text(stores, dir / "b", extra);
  run_full_pipeline(parse_experiment_config(text_a));
  run_full_pipeline(parse_experiment_config(text_b));

  CHECK(slurp(dir / "a" / "STATUS") == "COMPLETE\n");
  CHECK(slurp(dir / "a" / "config.json") == text_a);
  for (const auto* name : {"split.json", "depth_sweep.json", "depth_sweep.txt", "geometry.json",
                           "geometry_points.tsv", "layer_0.ckpt", "layer_18.ckpt", "layer_36.run.json",
                           "layer_9.eval.json", "layer_27.eval.txt", "offset_probe.ckpt", "offset_probe.run.json",
                           "persistence.tsv", "timings.json"})
    CHECK(std::filesystem::exists(dir / "a" / name));

  // reports differ only by the echoed output directory
  const auto strip = [&](std::string s, const std::filesystem::path& out) {
    for (auto pos = s.find(out.string()); pos != std::string::npos; pos = s.find(out.string()))
      s.replace(pos, out.string().size(), "OUT");
    return s;
  };
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename().string();
    if (name == "timings.json") continue;
    INFO(name);
    CHECK(strip(slurp(entry.path()), dir / "a") == strip(slurp(dir / "b" / name), dir / "b"));
  }
  // JSON reports carry the exact config text
  const auto echo_check = slurp(dir / "a" / "layer_0.eval.json");
  CHECK(echo_check.find("config_echo") != std::string::npos);
  const auto ck = load_checkpoint(dir / "a" / "offset_probe.ckpt");
  CHECK(ck.params.shape.offset_dim == 32);
  CHECK(ck.params.shape.k_max == 64);
}

TEST_CASE("a failure partway marks the run incomplete") {
  TempDir dir;
  const auto stores = layered_stores(dir, {0, 9, 18, 27, 36}, 18, 10);
  // a per-token store with nothing at offset 0 fails in the persistence stage
  {
    StoreHeader h;
    h.dim = 12;
    h.layer_ids = {36};
    std::vector<ActivationRecord> recs;
    for (std::uint64_t r = 0; r < 70; ++r)
      recs.push_back({r, 36, 5, label_from_code(static_cast<int>(r % 7)), std::vector<float>(12, 0.f)});
    write_store(dir / "late.store", h, recs);
  }
  const std::string extra = "  \"per_token_store\": \"" + (dir / "late.store").string() +
                            "\",\n  \"offset_train\": {\"hidden_width\": 8, \"k_max\": 16},\n"
                            "  \"persistence\": {\"max_offset\": 10},\n";
  const auto cfg = parse_experiment_config(config_text(stores, dir / "run", extra));
  CHECK_THROWS_AS(run_full_pipeline(cfg), IncompleteRunError);
  CHECK(slurp(dir / "run" / "STATUS") == "INCOMPLETE\n");
  CHECK(std::filesystem::exists(dir / "run" / "depth_sweep.json"));
}
