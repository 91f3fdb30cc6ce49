// emoprobe command-line tool.
//
// Exit codes: 0 success, 2 bad arguments or contract error, 3 data/format/io
// error, 4 incomplete run, 1 anything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emoprobe/checkpoint.hpp"
#include "emoprobe/corpus.hpp"
#include "emoprobe/errors.hpp"
#include "emoprobe/evaluation.hpp"
#include "emoprobe/experiment.hpp"
#include "emoprobe/geometry.hpp"
#include "emoprobe/manifest.hpp"
#include "emoprobe/persistence.hpp"
#include "emoprobe/random.hpp"
#include "emoprobe/slice.hpp"
#include "emoprobe/store.hpp"
#include "emoprobe/synthetic.hpp"
#include "emoprobe/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace emoprobe;

namespace {

constexpr int kExitContract = 2;
constexpr int kExitData = 3;
constexpr int kExitIncomplete = 4;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else write_file(path, text);
}

// A JSON array of ids, or whitespace-separated ids.
std::vector<std::uint64_t> read_ids(const fs::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      return json::parse(text).get<std::vector<std::uint64_t>>();
    } catch (const json::exception& e) {
      throw FormatError("bad id list in " + path.string() + ": " + e.what());
    }
  }
  std::vector<std::uint64_t> ids;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      ids.push_back(std::stoull(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError("bad id '" + token + "' in " + path.string());
    }
  }
  return ids;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      levels.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ContractError("bad contour level '" + item + "'");
    }
  }
  if (levels.empty()) throw ContractError("no contour levels given");
  return levels;
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ContractError("override must look like key=value: " + item);
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

// How a command picks the records it trains or evaluates on.
struct Selection {
  std::string ids_file;
  std::uint64_t split_seed = 1;
  std::uint64_t balance_seed = 2;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--ids", ids_file, "File of utterance ids (JSON array or whitespace separated)");
    cmd->add_option("--split-seed", split_seed, "Seed of the 90/10 split")->capture_default_str();
    cmd->add_option("--balance-seed", balance_seed, "Seed of the balancing draws")->capture_default_str();
  }

  BalancedSplit balanced(StoreReader& store, std::uint16_t layer) const {
    const LayerIndex index = index_layer(store, layer);
    const auto corpus = label_corpus(index);
    if (corpus.empty()) throw DataError("store has no records at layer " + std::to_string(layer));
    BalancedSplit out;
    out.plan = split(corpus, split_seed);
    out.train_ids = balance_train(class_ids(index, out.plan.train_ids), balance_seed);
    out.test_ids = balance_test(class_ids(index, out.plan.test_ids), derive_seed(balance_seed, 1));
    return out;
  }
};

std::string store_summary(const fs::path& path, std::uint64_t show) {
  StoreReader reader(path);
  const auto& h = reader.header();
  std::ostringstream out;
  out << "path          " << path.string() << "\n"
      << "version       " << h.format_version << "\n"
      << "dim           " << h.dim << "\n"
      << "records       " << h.record_count << "\n"
      << "layers        ";
  for (std::size_t i = 0; i < h.layer_ids.size(); ++i) out << (i ? " " : "") << h.layer_ids[i];
  out << "\nrecord bytes  " << h.record_stride() << "\n";
  for (std::uint64_t i = 0; i < std::min(show, h.record_count); ++i) {
    const auto r = reader.read_at(i);
    out << "  #" << i << " utterance=" << r.utterance_id << " layer=" << r.layer_id << " k=" << r.token_offset
        << " label=" << label_name(r.label) << " v[0]=" << (r.vector.empty() ? 0.f : r.vector[0]) << "\n";
  }
  const auto manifest = manifest_path_for(path);
  if (fs::exists(manifest)) {
    const auto m = read_manifest(manifest);
    out << "manifest      " << manifest.string() << "\n"
        << "  checkpoint  " << checkpoint_tag_name(m.checkpoint_tag) << "\n"
        << "  utterances  " << m.total_utterances << "\n";
  }
  return out.str();
}

std::string stats_json(const StoreStats& s) {
  json j;
  j["records"] = s.record_count;
  for (auto label : kAllLabels) j["per_label"][std::string(label_name(label))] = s.per_label[code(label)];
  j["per_layer"] = json::object();
  for (const auto& [layer, n] : s.per_layer) j["per_layer"][std::to_string(layer)] = n;
  return j.dump(2) + "\n";
}

std::string corpus_stats_json(const std::vector<Utterance>& corpus) {
  std::map<std::string, LabelCounts> counts;
  for (const auto& u : corpus) counts[std::string(source_name(u.source))][code(u.label)]++;
  json j;
  j["total"] = corpus.size();
  json by_source = json::object();
  LabelCounts totals{};
  for (const auto& [source, row] : counts) {
    for (auto label : kAllLabels) {
      by_source[source][std::string(label_name(label))] = row[code(label)];
      totals[code(label)] += row[code(label)];
    }
  }
  j["by_source"] = by_source;
  for (auto label : kAllLabels) j["per_label"][std::string(label_name(label))] = totals[code(label)];
  return j.dump(2) + "\n";
}

std::string ids_json(const std::vector<std::uint64_t>& ids) { return json(ids).dump() + "\n"; }

int run(int argc, char** argv) {
  CLI::App app{"Probe emotion representations in stored hidden-state activations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "emoprobe 0.1.0");

  // store
  auto* store_cmd = app.add_subcommand("store", "Inspect activation stores")->require_subcommand(1);
  std::string store_path;
  std::uint64_t show_records = 0;
  auto* inspect = store_cmd->add_subcommand("inspect", "Print a store header and its manifest");
  inspect->add_option("store", store_path)->required();
  inspect->add_option("--records", show_records, "Also print the first N records");
  auto* stats = store_cmd->add_subcommand("stats", "Per-label and per-layer record counts");
  stats->add_option("store", store_path)->required();

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus statistics, filtering, splitting and balancing")
                         ->require_subcommand(1);
  std::string corpus_path, out_path, plan_path, role = "train";
  std::uint64_t seed = 0;
  auto* cstats = corpus_cmd->add_subcommand("stats", "Counts per source and label");
  cstats->add_option("corpus", corpus_path)->required();
  auto* cfilter = corpus_cmd->add_subcommand("filter", "Drop short texts and exact duplicates");
  cfilter->add_option("corpus", corpus_path)->required();
  cfilter->add_option("--out", out_path, "Output corpus (stdout by default)");
  auto* csplit = corpus_cmd->add_subcommand("split", "Stratified 90/10 split");
  csplit->add_option("corpus", corpus_path)->required();
  csplit->add_option("--seed", seed)->required();
  csplit->add_option("--out", out_path, "Split plan JSON (stdout by default)");
  auto* cbalance = corpus_cmd->add_subcommand("balance", "Balanced id multiset for one side of a split");
  cbalance->add_option("corpus", corpus_path)->required();
  cbalance->add_option("--plan", plan_path, "Split plan from 'corpus split'")->required();
  cbalance->add_option("--role", role)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  cbalance->add_option("--seed", seed)->required();
  cbalance->add_option("--out", out_path, "Output id list (stdout by default)");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Train and evaluate probes")->require_subcommand(1);
  std::string config_path, ckpt_path;
  std::uint16_t layer = 0;
  Selection selection;
  std::optional<std::uint64_t> seed_override;
  auto* train = probe_cmd->add_subcommand("train", "Train a pooled probe on one layer");
  train->add_option("--store", store_path)->required();
  train->add_option("--layer", layer)->required();
  train->add_option("--config", config_path, "Train config JSON");
  train->add_option("--seed", seed_override, "Overrides the config seed");
  train->add_option("--out", ckpt_path, "Checkpoint path; the run record goes to <out>.run.json")->required();
  selection.add_options(train);
  bool balanced_test = false, whole_layer_json = false;
  auto* peval = probe_cmd->add_subcommand("eval", "Evaluate a pooled probe");
  peval->add_option("--ckpt", ckpt_path)->required();
  peval->add_option("--store", store_path)->required();
  peval->add_option("--layer", layer)->required();
  peval->add_flag("--balanced-test", balanced_test, "Use the balanced held-out slice of the split");
  peval->add_flag("--json", whole_layer_json, "Print the JSON report instead of the table");
  peval->add_option("--out", out_path, "Also write the JSON report here");
  selection.add_options(peval);

  // geometry
  auto* geo_cmd = app.add_subcommand("geometry", "PCA and KDE maps of probe outputs")->require_subcommand(1);
  std::string levels_text = "0.25,0.50", points_path;
  std::size_t grid = kDefaultGridSize;
  bool include_grids = false;
  auto* kde = geo_cmd->add_subcommand("kde", "Per-class density contours in the top-2 PCA plane");
  kde->add_option("--ckpt", ckpt_path)->required();
  kde->add_option("--store", store_path)->required();
  kde->add_option("--layer", layer)->required();
  kde->add_option("--levels", levels_text, "Contour levels as fractions of each class peak")->capture_default_str();
  kde->add_option("--grid", grid)->capture_default_str();
  kde->add_flag("--balanced-test", balanced_test, "Map only the balanced held-out slice");
  kde->add_flag("--grids", include_grids, "Include raw density grids in the report");
  kde->add_option("--out", out_path, "Geometry report JSON (stdout by default)");
  kde->add_option("--points", points_path, "Write projected points as TSV");
  selection.add_options(kde);

  // depth / pipeline
  std::vector<std::string> overrides;
  auto* depth_cmd = app.add_subcommand("depth", "Layer-wise probe accuracy")->require_subcommand(1);
  auto* sweep = depth_cmd->add_subcommand("sweep", "Train and evaluate one probe per mapped depth");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--set", overrides, "Override a config key (key=value, dotted for nested keys)");
  sweep->add_option("--out", out_path, "Depth report JSON");
  auto* pipe_cmd = app.add_subcommand("pipeline", "Config-driven end-to-end runs")->require_subcommand(1);
  auto* prun = pipe_cmd->add_subcommand("run", "Depth sweep, geometry and persistence into one run directory");
  prun->add_option("--config", config_path)->required();
  prun->add_option("--set", overrides, "Override a config key (key=value, dotted for nested keys)");

  // persistence
  auto* pers_cmd = app.add_subcommand("persistence", "Emotion decay along generated replies")->require_subcommand(1);
  std::uint32_t window = kDefaultSmoothingWindow, max_offset = kDefaultMaxOffset;
  std::optional<std::uint16_t> token_layer;
  std::string offset_config;
  auto* psweep = pers_cmd->add_subcommand("sweep", "Per-offset accuracy of an offset-aware probe");
  psweep->add_option("--ckpt", ckpt_path)->required();
  psweep->add_option("--store", store_path)->required();
  psweep->add_option("--layer", token_layer, "Layer to read (default: the store's last layer)");
  psweep->add_option("--window", window)->capture_default_str();
  psweep->add_option("--max-offset", max_offset)->capture_default_str();
  psweep->add_option("--ids", selection.ids_file, "Restrict to these reply ids");
  psweep->add_option("--out", out_path, "Decay table TSV (stdout by default)");
  auto* ptrain = pers_cmd->add_subcommand("train", "Train an offset-aware probe on a per-token store");
  ptrain->add_option("--store", store_path)->required();
  ptrain->add_option("--layer", token_layer, "Layer to read (default: the store's last layer)");
  ptrain->add_option("--config", offset_config, "Train config JSON");
  ptrain->add_option("--seed", seed_override, "Overrides the config seed");
  ptrain->add_option("--ids", selection.ids_file, "Train only on these reply ids");
  ptrain->add_option("--out", ckpt_path)->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Compare evaluation reports")->require_subcommand(1);
  std::string report_a, report_b;
  bool diff_json = false;
  auto* diff = report_cmd->add_subcommand("diff", "Per-class deltas B - A");
  diff->add_option("a", report_a)->required();
  diff->add_option("b", report_b)->required();
  diff->add_flag("--json", diff_json);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic fixture stores")->require_subcommand(1);
  ClusterSpec cspec;
  std::vector<std::uint16_t> synth_layers;
  std::optional<std::uint16_t> signal_layer;
  std::optional<std::uint64_t> permute_seed;
  auto* clusters = synth_cmd->add_subcommand("clusters", "Seven labelled Gaussian clusters");
  clusters->add_option("--out", out_path)->required();
  clusters->add_option("--dim", cspec.dim)->capture_default_str();
  clusters->add_option("--train", cspec.train_per_class, "Training utterances per class")->capture_default_str();
  clusters->add_option("--test", cspec.test_per_class, "Held-out utterances per class")->capture_default_str();
  clusters->add_option("--separation", cspec.separation)->capture_default_str();
  clusters->add_option("--seed", cspec.seed)->capture_default_str();
  clusters->add_option("--layers", synth_layers, "Layers to write (default: 0)")->delimiter(',');
  clusters->add_option("--signal-layer", signal_layer, "Only this layer carries the signal");
  clusters->add_option("--permute-seed", permute_seed, "Shuffle labels to destroy the signal");
  DecaySpec dspec;
  auto* decay = synth_cmd->add_subcommand("decay", "Per-token replies whose signal stops at an offset");
  decay->add_option("--out", out_path)->required();
  decay->add_option("--dim", dspec.dim)->capture_default_str();
  decay->add_option("--replies", dspec.replies_per_class, "Replies per class")->capture_default_str();
  decay->add_option("--length", dspec.reply_length)->capture_default_str();
  decay->add_option("--signal-until", dspec.signal_until)->capture_default_str();
  decay->add_option("--layer", dspec.layer)->capture_default_str();
  decay->add_option("--seed", dspec.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitContract;
  }

  if (*inspect) {
    std::cout << store_summary(store_path, show_records);
  } else if (*stats) {
    std::cout << stats_json(store_stats(store_path));
  } else if (*cstats) {
    std::cout << corpus_stats_json(read_corpus(fs::path(corpus_path)));
  } else if (*cfilter) {
    const auto kept = filter_corpus(read_corpus(fs::path(corpus_path)));
    std::ostringstream s;
    write_corpus(s, kept);
    emit(out_path, s.str());
  } else if (*csplit) {
    const auto plan = split(read_corpus(fs::path(corpus_path)), seed);
    json j;
    j["seed"] = plan.seed;
    j["stratified_by"] = "label";
    j["train_ids"] = plan.train_ids;
    j["test_ids"] = plan.test_ids;
    j["warnings"] = plan.warnings;
    for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";
    emit(out_path, j.dump(2) + "\n");
  } else if (*cbalance) {
    const auto corpus = read_corpus(fs::path(corpus_path));
    std::vector<std::uint64_t> side;
    try {
      side = json::parse(read_file(plan_path)).at(role + "_ids").get<std::vector<std::uint64_t>>();
    } catch (const json::exception& e) {
      throw FormatError("bad split plan " + plan_path + ": " + e.what());
    }
    const auto grouped = group_by_label(corpus, side);
    emit(out_path, ids_json(role == "train" ? balance_train(grouped, seed) : balance_test(grouped, seed)));
  } else if (*train) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = train_config_from_json(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;
    StoreReader store(store_path);
    const auto ids = selection.ids_file.empty() ? selection.balanced(store, layer).train_ids
                                                : read_ids(selection.ids_file);
    auto [probe, record] = train_probe(store, layer, ids, cfg);
    save_checkpoint(ckpt_path, {probe, cfg.seed, train_config_to_json(cfg)});
    write_file(ckpt_path + ".run.json", run_record_to_json(record));
    std::cout << "trained " << record.steps << " steps, final loss " << format_metric(record.final_train_loss)
              << " -> " << ckpt_path << "\n";
  } else if (*peval) {
    const auto ck = load_checkpoint(ckpt_path);
    StoreReader store(store_path);
    std::vector<std::uint64_t> ids;
    if (!selection.ids_file.empty()) ids = read_ids(selection.ids_file);
    else if (balanced_test) ids = selection.balanced(store, layer).test_ids;
    const auto report = evaluate(ck.params, store, layer, ids);
    if (!out_path.empty()) write_file(out_path, report_to_json(report));
    std::cout << (whole_layer_json ? report_to_json(report) : render_report_table(report));
  } else if (*kde) {
    const auto ck = load_checkpoint(ckpt_path);
    StoreReader store(store_path);
    std::vector<std::uint64_t> ids;
    if (!selection.ids_file.empty()) ids = read_ids(selection.ids_file);
    else if (balanced_test) ids = selection.balanced(store, layer).test_ids;
    const auto preds = predict_slice(ck.params, store, layer, ids);
    const auto report = build_geometry(preds, parse_levels(levels_text), grid);
    emit(out_path, geometry_to_json(report, include_grids));
    if (!points_path.empty()) write_file(points_path, projected_points_table(report));
  } else if (*sweep) {
    const auto cfg = load_experiment_config(config_path, parse_overrides(overrides));
    const auto result = run_depth_sweep(cfg);
    std::cout << render_depth_table(result);
    if (!out_path.empty()) write_file(out_path, depth_sweep_to_json(result, cfg));
  } else if (*prun) {
    const auto cfg = load_experiment_config(config_path, parse_overrides(overrides));
    const auto result = run_full_pipeline(cfg);
    std::cout << render_depth_table(result.sweep) << "run directory: " << result.run_dir.string() << "\n";
  } else if (*psweep) {
    const auto ck = load_checkpoint(ckpt_path);
    StoreReader store(store_path);
    const auto& layers = store.header().layer_ids;
    if (!token_layer && layers.empty()) throw DataError("store declares no layers");
    std::vector<std::uint64_t> ids;
    if (!selection.ids_file.empty()) ids = read_ids(selection.ids_file);
    const auto result = decay_sweep(ck.params, store, token_layer.value_or(layers.back()), window, max_offset, ids);
    emit(out_path, decay_table(result));
  } else if (*ptrain) {
    TrainConfig cfg;
    if (!offset_config.empty()) cfg = train_config_from_json(read_file(offset_config));
    if (seed_override) cfg.seed = *seed_override;
    StoreReader store(store_path);
    const auto& layers = store.header().layer_ids;
    if (!token_layer && layers.empty()) throw DataError("store declares no layers");
    std::vector<std::uint64_t> ids;
    if (!selection.ids_file.empty()) ids = read_ids(selection.ids_file);
    auto [probe, record] = train_offset_probe(store, token_layer.value_or(layers.back()), cfg, ids);
    save_checkpoint(ckpt_path, {probe, cfg.seed, train_config_to_json(cfg)});
    write_file(ckpt_path + ".run.json", run_record_to_json(record));
    std::cout << "trained " << record.steps << " steps -> " << ckpt_path << "\n";
  } else if (*diff) {
    const auto delta = compare_reports(report_from_json(read_file(report_a)), report_from_json(read_file(report_b)));
    std::cout << (diff_json ? delta_to_json(delta) : render_delta_table(delta));
  } else if (*clusters) {
    if (synth_layers.empty()) synth_layers = {0};
    cspec.layer = synth_layers.front();
    auto set = make_layered_clusters(cspec, synth_layers, signal_layer.value_or(synth_layers.front()));
    if (permute_seed) permute_labels(set.records, *permute_seed);
    StoreHeader h;
    h.dim = cspec.dim;
    h.layer_ids = synth_layers;
    const auto bytes = write_store(out_path, h, set.records);
    write_file(out_path + ".train_ids.json", ids_json(set.train_ids));
    write_file(out_path + ".test_ids.json", ids_json(set.test_ids));
    std::cout << "wrote " << set.records.size() << " records (" << bytes << " bytes) to " << out_path << "\n";
  } else if (*decay) {
    const auto recs = make_decay_replies(dspec);
    StoreHeader h;
    h.dim = dspec.dim;
    h.layer_ids = {dspec.layer};
    const auto bytes = write_store(out_path, h, recs);
    std::cout << "wrote " << recs.size() << " records (" << bytes << " bytes) to " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IncompleteRunError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIncomplete;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
