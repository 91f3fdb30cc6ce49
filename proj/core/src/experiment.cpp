#include "emoprobe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "emoprobe/checkpoint.hpp"
#include "emoprobe/errors.hpp"
#include "emoprobe/random.hpp"
#include "emoprobe/slice.hpp"

namespace emoprobe {
namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

// Adds the config echo to a JSON report.
std::string with_echo(const std::string& report_json, const ExperimentConfig& config) {
  json j = json::parse(report_json);
  j["config_echo"] = config.source_text;
  if (!config.overrides.empty()) j["config_overrides"] = config.overrides;
  return j.dump(2) + "\n";
}

std::string depth_label(double fraction) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%g%%", fraction * 100.0);
  return buf;
}

}  // namespace

std::uint16_t map_depth_to_layer(double fraction, std::uint32_t num_layers) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ContractError("depth fraction must be in [0, 1]");
  if (num_layers < 1) throw ContractError("num_layers must be >= 1");
  return static_cast<std::uint16_t>(std::round(fraction * static_cast<double>(num_layers)));
}

void ExperimentConfig::validate() const {
  if (num_layers < 1) throw ContractError("config: num_layers must be >= 1");
  if (depth_fractions.empty()) throw ContractError("config: depth_fractions is empty");
  for (double f : depth_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ContractError("config: depth fraction outside [0, 1]");
  }
  if (stores.empty()) throw ContractError("config: no stores listed");
  if (geometry_grid < 2) throw ContractError("config: geometry grid must be >= 2");
  for (double level : geometry_levels) {
    if (!(level > 0.0)) throw ContractError("config: contour levels must be > 0");
  }
  if (smoothing_window == 0 || smoothing_window % 2 == 0) throw ContractError("config: smoothing window must be odd");
  train.validate();
  if (offset_train) offset_train->validate();
  if (per_token_store && max_offset > (offset_train ? *offset_train : train).k_max) {
    throw ContractError("config: max_offset exceeds k_max");
  }
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir,
                                         const std::map<std::string, std::string>& overrides) {
  ExperimentConfig c;
  c.source_text = std::string(text);
  c.overrides = overrides;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("experiment config must be a JSON object");
  for (const auto& [path, raw] : overrides) {
    // "train.seed=3" style: dotted key, value parsed as JSON when it is valid JSON, else taken as a string.
    json* node = &j;
    std::string_view rest = path;
    for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
      json& child = (*node)[std::string(rest.substr(0, dot))];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) throw ContractError("override '" + path + "' descends into a non-object");
      node = &child;
      rest.remove_prefix(dot + 1);
    }
    json value = json::parse(raw, nullptr, false);
    (*node)[std::string(rest)] = value.is_discarded() ? json(raw) : value;
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "variant") c.variant = parse_checkpoint_tag(value.get<std::string>());
      else if (key == "num_layers") c.num_layers = value.get<std::uint32_t>();
      else if (key == "depth_fractions") c.depth_fractions = value.get<std::vector<double>>();
      else if (key == "stores") {
        c.stores.clear();
        for (const auto& p : value) c.stores.push_back(resolve(base_dir, p.get<std::string>()));
      } else if (key == "per_token_store") c.per_token_store = resolve(base_dir, value.get<std::string>());
      else if (key == "per_token_layer") c.per_token_layer = value.get<std::uint16_t>();
      else if (key == "train") c.train = train_config_from_json(value.dump());
      else if (key == "offset_train") c.offset_train = train_config_from_json(value.dump());
      else if (key == "split_seed") c.split_seed = value.get<std::uint64_t>();
      else if (key == "balance_seed") c.balance_seed = value.get<std::uint64_t>();
      else if (key == "geometry") {
        if (value.contains("grid")) c.geometry_grid = value.at("grid").get<std::size_t>();
        if (value.contains("levels")) c.geometry_levels = value.at("levels").get<std::vector<double>>();
      } else if (key == "persistence") {
        if (value.contains("window")) c.smoothing_window = value.at("window").get<std::uint32_t>();
        if (value.contains("max_offset")) c.max_offset = value.at("max_offset").get<std::uint32_t>();
      } else if (key == "output_dir") c.output_dir = resolve(base_dir, value.get<std::string>());
      else throw FormatError("unknown experiment config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::map<std::string, std::string>& overrides) {
  return parse_experiment_config(read_text(path), path.parent_path(), overrides);
}

std::map<std::uint16_t, std::filesystem::path> resolve_layer_stores(const ExperimentConfig& config) {
  std::map<std::uint16_t, std::filesystem::path> available;
  std::vector<std::string> problems;
  for (const auto& path : config.stores) {
    if (!std::filesystem::exists(path)) {
      problems.push_back("store not found: " + path.string());
      continue;
    }
    StoreReader reader(path);
    for (std::uint16_t layer : reader.header().layer_ids) available.emplace(layer, path);
  }
  for (double f : config.depth_fractions) {
    const auto layer = map_depth_to_layer(f, config.num_layers);
    if (!available.contains(layer)) {
      problems.push_back("no store provides layer " + std::to_string(layer) + " (depth " + depth_label(f) + ")");
    }
  }
  if (config.per_token_store && !std::filesystem::exists(*config.per_token_store)) {
    problems.push_back("per-token store not found: " + config.per_token_store->string());
  }
  if (!problems.empty()) {
    std::string msg = "missing inputs:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  std::map<std::uint16_t, std::filesystem::path> needed;
  for (double f : config.depth_fractions) {
    const auto layer = map_depth_to_layer(f, config.num_layers);
    needed.emplace(layer, available.at(layer));
  }
  return needed;
}

DepthSweep run_depth_sweep(const ExperimentConfig& config) {
  config.validate();
  const auto stores = resolve_layer_stores(config);

  DepthSweep sweep;
  {
    const std::uint16_t first_layer = map_depth_to_layer(config.depth_fractions.front(), config.num_layers);
    StoreReader reader(stores.at(first_layer));
    const LayerIndex index = index_layer(reader, first_layer);
    const auto corpus = label_corpus(index);
    if (corpus.empty()) throw DataError("layer " + std::to_string(first_layer) + " has no records");
    sweep.split.plan = split(corpus, config.split_seed);
    sweep.split.train_ids = balance_train(class_ids(index, sweep.split.plan.train_ids), config.balance_seed);
    sweep.split.test_ids = balance_test(class_ids(index, sweep.split.plan.test_ids), derive_seed(config.balance_seed, 1));
  }

  for (double fraction : config.depth_fractions) {
    DepthRun run;
    run.fraction = fraction;
    run.layer = map_depth_to_layer(fraction, config.num_layers);
    run.store = stores.at(run.layer);
    StoreReader reader(run.store);
    auto [probe, record] = train_probe(reader, run.layer, sweep.split.train_ids, config.train);
    run.probe = std::move(probe);
    run.run = std::move(record);
    run.predictions = predict_slice(run.probe, reader, run.layer, sweep.split.test_ids);
    run.eval = evaluate_predictions(run.predictions);
    sweep.runs.push_back(std::move(run));
  }
  return sweep;
}

std::string render_depth_table(const DepthSweep& sweep) {
  std::ostringstream out;
  out << "depth    layer  accuracy\n";
  for (const auto& run : sweep.runs) {
    std::string depth = depth_label(run.fraction);
    std::string layer = std::to_string(run.layer);
    depth.resize(std::max<std::size_t>(depth.size(), 9), ' ');
    layer.resize(std::max<std::size_t>(layer.size(), 7), ' ');
    out << depth << layer << format_metric(run.eval.accuracy) << "\n";
  }
  return out.str();
}

std::string depth_sweep_to_json(const DepthSweep& sweep, const ExperimentConfig& config) {
  json j;
  j["variant"] = std::string(checkpoint_tag_name(config.variant));
  j["num_layers"] = config.num_layers;
  json rows = json::array();
  for (const auto& run : sweep.runs) {
    rows.push_back({{"depth_fraction", run.fraction},
                    {"layer", run.layer},
                    {"accuracy", run.eval.accuracy},
                    {"test_examples", run.eval.valid}});
  }
  j["rows"] = rows;
  j["train_examples"] = sweep.split.train_ids.size();
  j["test_examples"] = sweep.split.test_ids.size();
  return with_echo(j.dump(), config);
}

PipelineResult run_full_pipeline(const ExperimentConfig& config) {
  config.validate();
  resolve_layer_stores(config);  // fail before writing anything

  PipelineResult result;
  result.run_dir = config.output_dir;
  std::filesystem::create_directories(result.run_dir);
  const auto status_path = result.run_dir / "STATUS";
  write_text(status_path, "INCOMPLETE\n");
  write_text(result.run_dir / "config.json", config.source_text);

  json timings = json::object();
  try {
    result.sweep = run_depth_sweep(config);
    const auto& sweep = result.sweep;

    json split_json;
    split_json["seed"] = sweep.split.plan.seed;
    split_json["train_ids"] = sweep.split.plan.train_ids;
    split_json["test_ids"] = sweep.split.plan.test_ids;
    split_json["warnings"] = sweep.split.plan.warnings;
    split_json["balanced_train_ids"] = sweep.split.train_ids;
    split_json["balanced_test_ids"] = sweep.split.test_ids;
    split_json["stratified_by"] = "label";
    write_text(result.run_dir / "split.json", with_echo(split_json.dump(), config));

    for (const auto& run : sweep.runs) {
      const std::string stem = "layer_" + std::to_string(run.layer);
      save_checkpoint(result.run_dir / (stem + ".ckpt"),
                      Checkpoint{run.probe, config.train.seed, train_config_to_json(config.train)});
      write_text(result.run_dir / (stem + ".run.json"), with_echo(run_record_to_json(run.run, false), config));
      write_text(result.run_dir / (stem + ".eval.json"), with_echo(report_to_json(run.eval), config));
      write_text(result.run_dir / (stem + ".eval.txt"), render_report_table(run.eval));
      timings[stem] = run.run.wall_time_s;
    }
    write_text(result.run_dir / "depth_sweep.json", depth_sweep_to_json(sweep, config));
    write_text(result.run_dir / "depth_sweep.txt", render_depth_table(sweep));

    // Geometry on the deepest mapped layer.
    const DepthRun* deepest = &sweep.runs.front();
    for (const auto& run : sweep.runs) {
      if (run.layer > deepest->layer) deepest = &run;
    }
    result.geometry = build_geometry(deepest->predictions, config.geometry_levels, config.geometry_grid);
    json geometry = json::parse(geometry_to_json(*result.geometry));
    geometry["layer"] = deepest->layer;
    write_text(result.run_dir / "geometry.json", with_echo(geometry.dump(), config));
    write_text(result.run_dir / "geometry_points.tsv", projected_points_table(*result.geometry));

    if (config.per_token_store) {
      const TrainConfig offset_config = config.offset_train.value_or(config.train);
      StoreReader reader(*config.per_token_store);
      const std::uint16_t layer = config.per_token_layer.value_or(reader.header().layer_ids.empty()
                                                                      ? std::uint16_t{0}
                                                                      : reader.header().layer_ids.back());
      // Reply-level split, stratified by the original user emotion.
      std::map<std::uint64_t, EmotionLabel> reply_labels;
      for (std::uint64_t i = 0; i < reader.size(); ++i) {
        const RecordKey key = reader.read_key_at(i);
        if (key.layer_id == layer) reply_labels.emplace(key.utterance_id, key.label);
      }
      std::vector<Utterance> replies;
      for (const auto& [id, label] : reply_labels) replies.push_back(Utterance{id, {}, label, Source::kNatural});
      if (replies.empty()) throw DataError("per-token store has no records at layer " + std::to_string(layer));
      const SplitPlan reply_split = split(replies, config.split_seed);

      auto [probe, record] = train_offset_probe(reader, layer, offset_config, reply_split.train_ids);
      save_checkpoint(result.run_dir / "offset_probe.ckpt",
                      Checkpoint{probe, offset_config.seed, train_config_to_json(offset_config)});
      write_text(result.run_dir / "offset_probe.run.json", with_echo(run_record_to_json(record, false), config));
      timings["offset_probe"] = record.wall_time_s;
      result.persistence =
          decay_sweep(probe, reader, layer, config.smoothing_window, config.max_offset, reply_split.test_ids);
      write_text(result.run_dir / "persistence.tsv", decay_table(*result.persistence));
    }
  } catch (const Error& e) {
    write_text(result.run_dir / "timings.json", timings.dump(2) + "\n");
    throw IncompleteRunError(std::string("run incomplete (") + result.run_dir.string() + "): " + e.what());
  }

  write_text(result.run_dir / "timings.json", timings.dump(2) + "\n");
  write_text(status_path, "COMPLETE\n");
  return result;
}

}  // namespace emoprobe
