#include <doctest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "emoprobe/checkpoint.hpp"
#include "emoprobe/evaluation.hpp"
#include "test_support.hpp"

using emoprobe::testing::slurp;
using emoprobe::testing::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the tool with `args`, capturing stdout (stderr is discarded).
Result cli(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string(EMOPROBE_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("cli: synthetic store through train, eval, geometry and diff") {
  TempDir dir;
  const auto store = dir / "c.store";
  REQUIRE(cli(dir, "synth clusters --out " + q(store) + " --dim 16 --train 80 --test 20 --layers 5").code == 0);

  auto r = cli(dir, "store inspect " + q(store) + " --records 2");
  CHECK(r.code == 0);
  CHECK(r.out.find("dim           16") != std::string::npos);
  CHECK(r.out.find("#1 ") != std::string::npos);

  r = cli(dir, "store stats " + q(store));
  CHECK(r.code == 0);
  CHECK(r.out.find("\"joy\": 100") != std::string::npos);
  CHECK(r.out.find("\"5\": 700") != std::string::npos);

  const auto cfg = dir / "train.json";
  std::ofstream(cfg) << R"({"hidden_width": 32, "learning_rate": 0.003})";
  const auto ckpt = dir / "p.ckpt";
  r = cli(dir, "probe train --store " + q(store) + " --layer 5 --config " + q(cfg) + " --seed 3 --out " + q(ckpt) +
                   " --ids " + q(store.string() + ".train_ids.json"));
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(ckpt.string() + ".run.json"));
  CHECK(emoprobe::load_checkpoint(ckpt).seed == 3);

  const auto rep_a = dir / "a.json", rep_b = dir / "b.json";
  r = cli(dir, "probe eval --ckpt " + q(ckpt) + " --store " + q(store) + " --layer 5 --ids " +
                   q(store.string() + ".test_ids.json") + " --out " + q(rep_a));
  CHECK(r.code == 0);
  CHECK(r.out.find("accuracy") != std::string::npos);
  CHECK(emoprobe::report_from_json(slurp(rep_a)).accuracy > 0.9);

  r = cli(dir, "probe eval --ckpt " + q(ckpt) + " --store " + q(store) + " --layer 5 --balanced-test --out " +
                   q(rep_b));
  CHECK(r.code == 0);
  CHECK(emoprobe::report_from_json(slurp(rep_b)).total == 70);  // 10 held out per class

  r = cli(dir, "report diff " + q(rep_a) + " " + q(rep_a) + " --json");
  CHECK(r.code == 0);
  CHECK(r.out.find("\"accuracy\": 0.0") != std::string::npos);

  const auto points = dir / "pts.tsv";
  r = cli(dir, "geometry kde --ckpt " + q(ckpt) + " --store " + q(store) + " --layer 5 --levels 0.25,0.50 --grid 50" +
                   " --points " + q(points));
  CHECK(r.code == 0);
  CHECK(r.out.find("\"pca\"") != std::string::npos);
  CHECK(slurp(points).rfind("utterance_id\t", 0) == 0);
}

TEST_CASE("cli: corpus commands") {
  TempDir dir;
  const auto corpus = dir / "c.jsonl";
  {
    std::ofstream out(corpus);
    const char* labels[] = {"anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise"};
    int id = 1;
    for (const char* l : labels)
      for (int i = 0; i < 10 + id % 3; ++i, ++id)
        out << "{\"id\":" << id << ",\"text\":\"utterance number " << id << "\",\"label\":\"" << l
            << "\",\"source\":\"natural\"}\n";
    out << "{\"id\":999,\"text\":\"too short\",\"label\":\"joy\",\"source\":\"synthetic\"}\n";
  }
  auto r = cli(dir, "corpus stats " + q(corpus));
  CHECK(r.code == 0);
  CHECK(r.out.find("\"synthetic\"") != std::string::npos);

  r = cli(dir, "corpus filter " + q(corpus));
  CHECK(r.code == 0);
  CHECK(r.out.find("too short") == std::string::npos);

  const auto plan = dir / "plan.json";
  CHECK(cli(dir, "corpus split " + q(corpus) + " --seed 4 --out " + q(plan)).code == 0);
  CHECK(slurp(plan).find("\"test_ids\"") != std::string::npos);
  r = cli(dir, "corpus balance " + q(corpus) + " --plan " + q(plan) + " --role test --seed 1");
  CHECK(r.code == 0);
  CHECK(r.out.front() == '[');
  CHECK(cli(dir, "corpus balance " + q(corpus) + " --plan " + q(plan) + " --role dev --seed 1").code == 2);
}

TEST_CASE("cli: exit codes") {
  TempDir dir;
  CHECK(cli(dir, "").code == 2);
  CHECK(cli(dir, "frobnicate").code == 2);
  CHECK(cli(dir, "store stats " + q(dir / "missing.store")).code == 3);
  std::ofstream(dir / "junk.store") << "definitely not a store";
  CHECK(cli(dir, "store inspect " + q(dir / "junk.store")).code == 3);
  CHECK(slurp(dir / "stderr.txt").find("not an activation store") != std::string::npos);

  const auto store = dir / "s.store";
  REQUIRE(cli(dir, "synth clusters --out " + q(store) + " --dim 8 --train 10 --test 2").code == 0);
  std::ofstream(dir / "bad.json") << R"({"warmup_fraction": 1.5})";
  CHECK(cli(dir, "probe train --store " + q(store) + " --layer 0 --config " + q(dir / "bad.json") + " --out " +
                     q(dir / "x.ckpt"))
            .code == 2);
  CHECK(cli(dir, "geometry kde --ckpt " + q(dir / "none.ckpt") + " --store " + q(store) + " --layer 0").code == 3);
}

TEST_CASE("cli: pipeline run, overrides and incomplete runs") {
  TempDir dir;
  std::string stores;
  for (int layer : {0, 7, 14, 21, 28}) {
    const auto s = dir / ("l" + std::to_string(layer) + ".store");
    REQUIRE(cli(dir, "synth clusters --out " + q(s) + " --dim 8 --train 30 --test 0 --layers " +
                         std::to_string(layer))
                .code == 0);
    stores += std::string(stores.empty() ? "" : ", ") + "\"" + s.string() + "\"";
  }
  REQUIRE(cli(dir, "synth decay --out " + q(dir / "tok.store") + " --dim 8 --replies 6 --length 12 --signal-until 6")
              .code == 0);
  const auto cfg = dir / "exp.json";
  std::ofstream(cfg) << "{\"num_layers\": 28, \"stores\": [" << stores
                     << "], \"train\": {\"hidden_width\": 16}, \"geometry\": {\"grid\": 30},"
                        " \"per_token_store\": \"tok.store\", \"offset_train\": {\"hidden_width\": 8, \"k_max\": 16},"
                        " \"persistence\": {\"window\": 3, \"max_offset\": 12}, \"output_dir\": \"run\"}";
  auto r = cli(dir, "pipeline run --config " + q(cfg));
  CHECK(r.code == 0);
  CHECK(slurp(dir / "run" / "STATUS") == "COMPLETE\n");
  CHECK(slurp(dir / "run" / "config.json") == slurp(cfg));

  r = cli(dir, "depth sweep --config " + q(cfg) + " --set train.seed=9 --out " + q(dir / "d.json"));
  CHECK(r.code == 0);
  CHECK(r.out.find("100%") != std::string::npos);
  CHECK(slurp(dir / "d.json").find("\"train.seed\"") != std::string::npos);

  CHECK(cli(dir, "persistence sweep --ckpt " + q(dir / "run" / "offset_probe.ckpt") + " --store " +
                     q(dir / "tok.store") + " --window 3 --max-offset 12")
            .code == 0);
  CHECK(cli(dir, "persistence sweep --ckpt " + q(dir / "run" / "offset_probe.ckpt") + " --store " +
                     q(dir / "tok.store") + " --window 4")
            .code == 2);

  r = cli(dir, "pipeline run --config " + q(cfg) + " --set output_dir=run2 --set persistence.max_offset=20");
  CHECK(r.code == 2);  // max_offset above k_max is rejected before the run starts
  CHECK_FALSE(std::filesystem::exists(dir / "run2"));

  // no per-token records at the requested layer: fails after the depth sweep
  r = cli(dir, "pipeline run --config " + q(cfg) + " --set output_dir=run3 --set per_token_layer=99");
  CHECK(r.code == 4);
  CHECK(slurp(dir / "run3" / "STATUS") == "INCOMPLETE\n");
}
