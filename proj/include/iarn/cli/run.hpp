#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iarn/iarn.hpp"
#include "iarn/io/bundle.hpp"

namespace iarn::cli {

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Every knob of one invocation, with defaults expanded.
struct RunConfig {
  std::string command;

  // data
  std::string interactions, features, hierarchy, bundle;
  std::optional<std::int64_t> cutoff;
  std::size_t min_ratings = 3;

  // model
  std::string backbone = "iarn";
  std::string encoder = "auto";
  std::size_t embed_dim = 25;
  std::size_t hidden_dim = 64;
  std::size_t att_dim = 64;

  // training
  std::size_t epochs = 30;
  std::size_t batch_size = 50;
  double lr = 1e-3;
  double dropout = 0.0;
  double clip = 10.0;
  std::uint64_t seed = 7;
  double rho = 0.9;
  double epsilon = 1e-8;
  std::size_t max_len = 0;
  bool prefix_mode = false;

  // evaluation
  double pos_threshold = 4.0;
  std::size_t n_negatives = 100;
  std::vector<std::size_t> min_len_grid = default_min_length_grid();

  // artifacts
  std::string checkpoint, pairs, out = ".";
  std::string checkpoint_digest;  // hex digest of the checkpoint written or read
};

inline nlohmann::ordered_json model_json(const RunConfig& c) {
  return {{"backbone", c.backbone}, {"encoder", c.encoder},   {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim}, {"att_dim", c.att_dim}};
}

inline nlohmann::ordered_json training_json(const RunConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.lr},
          {"dropout", c.dropout},       {"clip", c.clip},             {"seed", c.seed},
          {"rho", c.rho},               {"epsilon", c.epsilon},       {"max_len", c.max_len},
          {"prefix_mode", c.prefix_mode}};
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
  j["data"] = {{"interactions", c.interactions}, {"features", c.features},       {"hierarchy", c.hierarchy},
               {"bundle", c.bundle},             {"cutoff", nullptr},            {"min_ratings", c.min_ratings}};
  if (c.cutoff) j["data"]["cutoff"] = *c.cutoff;
  j["model"] = model_json(c);
  j["training"] = training_json(c);
  j["evaluation"] = {{"pos_threshold", c.pos_threshold}, {"n_negatives", c.n_negatives},
                     {"min_len_grid", c.min_len_grid}};
  j["artifacts"] = {{"checkpoint", c.checkpoint},
                    {"checkpoint_digest", c.checkpoint_digest},
                    {"pairs", c.pairs},
                    {"out", c.out}};
  return j;
}

namespace detail {
template <typename T>
void read_field(const nlohmann::json& section, const char* key, T& into) {
  if (section.contains(key) && !section[key].is_null()) into = section[key].get<T>();
}
}  // namespace detail

/// Fields missing from `j` keep their defaults.
inline RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  using detail::read_field;
  if (j.contains("command") && j["command"].is_string()) c.command = j["command"].get<std::string>();
  const auto section = [&](const char* name) { return j.contains(name) ? j[name] : nlohmann::json::object(); };
  const auto data = section("data"), model = section("model"), training = section("training"),
             evaluation = section("evaluation"), artifacts = section("artifacts");
  read_field(data, "interactions", c.interactions);
  read_field(data, "features", c.features);
  read_field(data, "hierarchy", c.hierarchy);
  read_field(data, "bundle", c.bundle);
  if (data.contains("cutoff") && !data["cutoff"].is_null()) c.cutoff = data["cutoff"].get<std::int64_t>();
  read_field(data, "min_ratings", c.min_ratings);
  read_field(model, "backbone", c.backbone);
  read_field(model, "encoder", c.encoder);
  read_field(model, "embed_dim", c.embed_dim);
  read_field(model, "hidden_dim", c.hidden_dim);
  read_field(model, "att_dim", c.att_dim);
  read_field(training, "epochs", c.epochs);
  read_field(training, "batch_size", c.batch_size);
  read_field(training, "lr", c.lr);
  read_field(training, "dropout", c.dropout);
  read_field(training, "clip", c.clip);
  read_field(training, "seed", c.seed);
  read_field(training, "rho", c.rho);
  read_field(training, "epsilon", c.epsilon);
  read_field(training, "max_len", c.max_len);
  read_field(training, "prefix_mode", c.prefix_mode);
  read_field(evaluation, "pos_threshold", c.pos_threshold);
  read_field(evaluation, "n_negatives", c.n_negatives);
  read_field(evaluation, "min_len_grid", c.min_len_grid);
  read_field(artifacts, "checkpoint", c.checkpoint);
  read_field(artifacts, "pairs", c.pairs);
  read_field(artifacts, "out", c.out);
  read_field(artifacts, "checkpoint_digest", c.checkpoint_digest);
  return c;
}

namespace detail {

inline std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ValidationError(std::string("cannot open ") + what + " file '" + path + "'");
  return in;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

inline std::filesystem::path prepare_out(const RunConfig& c) {
  std::filesystem::path dir(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

inline Dataset load_dataset(const RunConfig& c) {
  if (!c.bundle.empty()) {
    if (!c.interactions.empty()) throw UsageError("--bundle and --interactions are mutually exclusive");
    return load_bundle(c.bundle);
  }
  if (c.interactions.empty()) throw UsageError("an --interactions file or a --bundle is required");
  if (!c.cutoff) throw UsageError("--cutoff is required with --interactions");
  if (!c.hierarchy.empty() && c.features.empty()) throw UsageError("--hierarchy needs --features");

  auto in = open_input(c.interactions, "interactions");
  InteractionLog log;
  try {
    log = parse_interactions(in);
  } catch (const ParseError& e) {
    throw ValidationError("'" + c.interactions + "' " + e.what());
  }
  log = filter_min_ratings(log, c.min_ratings);
  Dataset ds;
  std::tie(ds.train, ds.test) = temporal_split(log, *c.cutoff);
  if (ds.train.empty()) throw ValidationError("no interactions before the cutoff in '" + c.interactions + "'");
  if (!c.features.empty()) {
    auto f = open_input(c.features, "item-feature");
    try {
      if (c.hierarchy.empty()) {
        ds.taxonomy = load_taxonomy(f, nullptr, ds.train.items);
      } else {
        auto h = open_input(c.hierarchy, "hierarchy");
        ds.taxonomy = load_taxonomy(f, &h, ds.train.items);
      }
    } catch (const ParseError& e) {
      throw ValidationError("feature files '" + c.features + "'/'" + c.hierarchy + "' " + e.what());
    }
  }
  return ds;
}

/// Fills in the concrete encoder and checks the backbone/encoder pairing.
inline void resolve_encoder(RunConfig& c, const Dataset& ds) {
  const auto bb = parse_backbone(c.backbone);
  if (!bb) throw UsageError("unknown backbone '" + c.backbone + "'");
  if (c.encoder == "auto") {
    if (*bb == Backbone::iarn && ds.taxonomy) {
      c.encoder = ds.taxonomy->is_flat() ? "flat" : "hier";
    } else {
      c.encoder = "none";
    }
    return;
  }
  const auto enc = parse_encoder(c.encoder);
  if (!enc) throw UsageError("unknown encoder '" + c.encoder + "'");
  if (*enc != EncoderMode::none) {
    if (*bb != Backbone::iarn) throw UsageError("--encoder " + c.encoder + " requires --backbone iarn");
    if (!ds.taxonomy) throw UsageError("--encoder " + c.encoder + " requires --features");
  }
}

inline ModelShape model_shape(const RunConfig& c, const Dataset& ds) {
  ModelShape s;
  s.backbone = *parse_backbone(c.backbone);
  s.encoder = *parse_encoder(c.encoder);
  s.num_users = ds.train.users.size();
  s.num_items = ds.train.items.size();
  s.num_features = s.encoder != EncoderMode::none ? ds.taxonomy->feature_count() : 0;
  s.embed_dim = c.embed_dim;
  s.hidden_dim = c.hidden_dim;
  s.attention_dim = c.att_dim;
  return s;
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.learning_rate = c.lr;
  t.dropout = c.dropout;
  t.clip = c.clip;
  t.seed = c.seed;
  t.rho = c.rho;
  t.epsilon = c.epsilon;
  t.policy.max_length = c.max_len;
  t.policy.prefix_only = c.prefix_mode;
  return t;
}

/// Identifies the dataset contents plus every setting that shapes the trained parameters.
inline std::uint64_t config_digest(const RunConfig& c, const Dataset& ds) {
  nlohmann::ordered_json j;
  j["model"] = model_json(c);
  j["training"] = training_json(c);
  return fnv1a64(j.dump(), fnv1a64(encode_bundle(ds)));
}

inline const FeatureTaxonomy* taxonomy_of(const Dataset& ds) { return ds.taxonomy ? &*ds.taxonomy : nullptr; }

struct Run {
  RunConfig config;
  bool from_config_file = false;
  std::string source_command;  // command recorded in the --config file
  bool backbone_given = false;
  std::ostream* out = &std::cout;
};

/// The trained model and its training sequences, owned together so a Predictor can outlive setup.
struct Fitted {
  Model model;
  SequenceSet sequences;
  std::uint64_t digest = 0;
};

inline Fitted load_model(const Run& run, const Dataset& ds) {
  const RunConfig& c = run.config;
  if (c.checkpoint.empty()) throw UsageError("--checkpoint is required");
  Checkpoint ck;
  try {
    ck = read_checkpoint(c.checkpoint);
  } catch (const CheckpointError& e) {
    throw CheckpointError(std::string(e.what()) + " ('" + c.checkpoint + "')");
  }
  if (run.backbone_given && to_string(ck.shape.backbone) != c.backbone) {
    throw CheckpointError("checkpoint '" + c.checkpoint + "' holds backbone '" +
                          std::string(to_string(ck.shape.backbone)) + "', expected '" + c.backbone + "'");
  }
  if (run.from_config_file) {
    // A training config pins the digest through its settings; later stages record the digest they read.
    const std::string expected =
        run.source_command == "train" || c.checkpoint_digest.empty() ? hex64(config_digest(c, ds)) : c.checkpoint_digest;
    if (hex64(ck.config_digest) != expected) {
      throw CheckpointError("checkpoint '" + c.checkpoint + "' was trained with a different configuration or dataset");
    }
  }
  const std::size_t features = ck.shape.encoder != EncoderMode::none && ds.taxonomy ? ds.taxonomy->feature_count() : 0;
  if (ck.shape.num_users != ds.train.users.size() || ck.shape.num_items != ds.train.items.size() ||
      ck.shape.num_features != features) {
    throw CheckpointError("checkpoint '" + c.checkpoint + "' does not match the dataset's users, items or features");
  }
  const ModelShape shape = ck.shape;
  auto params = ModelParameters::bind(shape, std::move(ck.store));
  return {Model(std::move(params), Model::plan_for(shape, taxonomy_of(ds))), build_sequences(ds.train),
          ck.config_digest};
}

/// The emitted config of a checkpoint consumer describes the model it actually loaded.
inline void adopt_checkpoint(RunConfig& c, const Fitted& fit) {
  const ModelShape& s = fit.model.shape();
  c.backbone = std::string(to_string(s.backbone));
  c.encoder = std::string(to_string(s.encoder));
  c.embed_dim = s.embed_dim;
  c.hidden_dim = s.hidden_dim;
  c.att_dim = s.attention_dim;
  c.checkpoint_digest = hex64(fit.digest);
}

inline SequencePolicy policy_of(const RunConfig& c) { return train_config(c).policy; }

inline void emit_config(const RunConfig& c, const std::filesystem::path& dir) {
  write_text(dir / "config.json", to_json(c).dump(2) + "\n");
}

inline std::string number(double v) { return nlohmann::json(v).dump(); }

// ---------------------------------------------------------------------------
// Commands

inline void cmd_prepare(Run& run) {
  RunConfig& c = run.config;
  if (!c.bundle.empty()) throw UsageError("prepare reads raw files; --bundle is its output");
  const Dataset ds = load_dataset(c);
  const auto dir = prepare_out(c);
  save_bundle(dir / "dataset.bin", ds);
  emit_config(c, dir);
  *run.out << "users " << ds.train.users.size() << ", items " << ds.train.items.size() << ", train "
           << ds.train.size() << ", test " << ds.test.size() << ", features "
           << (ds.taxonomy ? ds.taxonomy->feature_count() : 0) << "\n";
}

inline void cmd_train(Run& run) {
  RunConfig& c = run.config;
  const Dataset ds = load_dataset(c);
  resolve_encoder(c, ds);
  const auto shape = model_shape(c, ds);
  const auto tc = train_config(c);
  tc.validate();
  const auto dir = prepare_out(c);
  if (c.checkpoint.empty()) c.checkpoint = (dir / "model.ckpt").string();

  const auto seqs = build_sequences(ds.train);
  Model model = Model::create(shape, taxonomy_of(ds), c.seed);
  const TrainResult result = train(model, ds.train, seqs, tc);

  const std::uint64_t digest = config_digest(c, ds);
  save_checkpoint(c.checkpoint, model.parameters(), digest);
  c.checkpoint_digest = hex64(digest);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) csv << e + 1 << ',' << number(result.loss_history[e]) << '\n';
  write_text(dir / "loss_history.csv", csv.str());
  emit_config(c, dir);
  *run.out << "trained " << c.backbone << " (encoder " << c.encoder << ") on " << result.instances
           << " instances, " << result.skipped_cold_start << " skipped as cold-start, " << result.optimizer_steps
           << " steps; final loss "
           << (result.loss_history.empty() ? std::string("n/a") : number(result.loss_history.back())) << "\n";
}

inline void cmd_evaluate(Run& run) {
  RunConfig& c = run.config;
  const Dataset ds = load_dataset(c);
  const Fitted fit = load_model(run, ds);
  adopt_checkpoint(c, fit);
  const auto dir = prepare_out(c);

  Predictor predictor(fit.model, fit.sequences, policy_of(c));
  EvalReport report = evaluate_rmse(predictor, ds.test);
  nlohmann::ordered_json j;
  j["backbone"] = c.backbone;
  j["encoder"] = c.encoder;
  j["n_pairs"] = report.n_pairs;
  j["n_skipped_cold_start"] = report.n_skipped_cold_start;
  j["rmse"] = report.n_pairs ? nlohmann::json(report.rmse) : nlohmann::json(nullptr);
  AucProtocol protocol{c.pos_threshold, c.n_negatives, c.seed};
  std::string auc_note;
  try {
    report.auc = auc([&](std::uint32_t u, std::uint32_t i) { return predictor.predict(u, i); }, ds.test,
                     fit.sequences, protocol);
    j["auc"] = *report.auc;
  } catch (const ProtocolError& e) {
    j["auc"] = nullptr;
    auc_note = e.what();
    j["auc_note"] = auc_note;
  }
  j["auc_protocol"] = {{"pos_threshold", c.pos_threshold}, {"n_negatives", c.n_negatives}, {"seed", c.seed}};
  write_text(dir / "report.json", j.dump(2) + "\n");
  emit_config(c, dir);

  *run.out << "test pairs " << report.n_pairs << " (" << report.n_skipped_cold_start << " cold-start skipped)\n";
  *run.out << "rmse " << (report.n_pairs ? number(report.rmse) : std::string("n/a")) << "\n";
  *run.out << "auc " << (report.auc ? number(*report.auc) : "n/a (" + auc_note + ")") << "\n";
}

inline void cmd_sweep(Run& run) {
  RunConfig& c = run.config;
  const Dataset ds = load_dataset(c);
  resolve_encoder(c, ds);
  const auto shape = model_shape(c, ds);
  const auto tc = train_config(c);
  tc.validate();
  const auto dir = prepare_out(c);
  const auto full = build_sequences(ds.train);

  const ScorerFactory factory = [&](std::size_t, const InteractionLog& restricted) -> PairScorer {
    auto fit = std::make_shared<Fitted>(Fitted{Model::create(shape, taxonomy_of(ds), c.seed), build_sequences(restricted)});
    train(fit->model, restricted, fit->sequences, tc);
    auto predictor = std::make_shared<Predictor>(fit->model, fit->sequences, tc.policy);
    return [fit, predictor](std::uint32_t u, std::uint32_t i) -> std::optional<double> {
      if (!predictor->scorable(u, i)) return std::nullopt;
      return predictor->predict(u, i);
    };
  };
  const EvalReport report = sweep_min_length(factory, ds.train, ds.test, full, c.min_len_grid);

  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << "min_length,rmse,n_pairs,n_skipped\n";
  for (const auto& e : report.sweep) {
    j.push_back({{"min_length", e.min_length},
                 {"rmse", e.rmse ? nlohmann::json(*e.rmse) : nlohmann::json(nullptr)},
                 {"n_pairs", e.n_pairs},
                 {"n_skipped", e.n_skipped}});
    csv << e.min_length << ',' << (e.rmse ? number(*e.rmse) : "") << ',' << e.n_pairs << ',' << e.n_skipped << '\n';
    *run.out << "min length " << e.min_length << ": "
             << (e.rmse ? "rmse " + number(*e.rmse) + " over " + std::to_string(e.n_pairs) + " pairs"
                        : std::string("absent (no qualifying test pairs)"))
             << "\n";
  }
  write_text(dir / "sweep.json", nlohmann::ordered_json{{"backbone", c.backbone}, {"sweep", j}}.dump(2) + "\n");
  write_text(dir / "sweep.csv", csv.str());
  emit_config(c, dir);
}

inline std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path) {
  auto in = open_input(path, "pairs");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = iarn::detail::trim(line);
    if (text.empty()) continue;
    const auto fields = iarn::detail::split_commas(text);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ValidationError("'" + path + "' line " + std::to_string(line_no) + ": expected 'user_id,item_id'");
    }
    pairs.emplace_back(fields[0], fields[1]);
  }
  return pairs;
}

inline void cmd_explain(Run& run) {
  RunConfig& c = run.config;
  if (c.pairs.empty()) throw UsageError("--pairs is required");
  const Dataset ds = load_dataset(c);
  const Fitted fit = load_model(run, ds);
  adopt_checkpoint(c, fit);
  if (!uses_attention(fit.model.backbone())) throw UsageError("backbone '" + c.backbone + "' has no attention scores");
  const auto pairs = read_pairs(c.pairs);
  const auto dir = prepare_out(c);

  Predictor predictor(fit.model, fit.sequences, policy_of(c));
  const AttentionExport ex = collect_attention(predictor, ds.train.users, ds.train.items, pairs);
  std::ostringstream nd, csv;
  write_attention_ndjson(ex, nd);
  write_attention_csv(ex, csv);
  write_text(dir / "attention.ndjson", nd.str());
  write_text(dir / "attention.csv", csv.str());
  emit_config(c, dir);
  *run.out << ex.records.size() << " attention records for " << pairs.size() << " pairs, " << ex.skipped.size()
           << " skipped\n";
}

inline void add_common_options(CLI::App& sub, Run& run, std::string& config_path) {
  RunConfig& c = run.config;
  sub.add_option("--config", config_path, "Resolved config.json from an earlier run");
  sub.add_option("--interactions", c.interactions, "user_id,item_id,rating,timestamp file");
  sub.add_option("--features", c.features, "item_id,feature_id file");
  sub.add_option("--hierarchy", c.hierarchy, "feature_id,parent_feature_id file");
  sub.add_option("--bundle", c.bundle, "Dataset bundle written by prepare");
  sub.add_option("--cutoff", c.cutoff, "Epoch seconds; earlier records are training data");
  sub.add_option("--min-ratings", c.min_ratings, "Keep entities with more than this many ratings");
  sub.add_option("--out", c.out, "Output directory");
}

inline void add_model_options(CLI::App& sub, Run& run) {
  RunConfig& c = run.config;
  sub.add_option("--backbone", c.backbone)->check(CLI::IsMember({"rnn", "lstm", "tagm", "iarn-plain", "iarn"}));
  sub.add_option("--encoder", c.encoder)->check(CLI::IsMember({"auto", "none", "flat", "hier"}));
  sub.add_option("--embed-dim", c.embed_dim)->check(CLI::PositiveNumber);
  sub.add_option("--hidden-dim", c.hidden_dim)->check(CLI::PositiveNumber);
  sub.add_option("--att-dim", c.att_dim)->check(CLI::PositiveNumber);
  sub.add_option("--epochs", c.epochs);
  sub.add_option("--batch-size", c.batch_size)->check(CLI::PositiveNumber);
  sub.add_option("--lr", c.lr)->check(CLI::NonNegativeNumber);
  sub.add_option("--dropout", c.dropout)->check(CLI::Range(0.0, 0.999999));
  sub.add_option("--clip", c.clip)->check(CLI::PositiveNumber);
  sub.add_option("--seed", c.seed);
  sub.add_option("--rho", c.rho)->check(CLI::Range(0.0, 0.999999));
  sub.add_option("--epsilon", c.epsilon)->check(CLI::NonNegativeNumber);
  sub.add_option("--max-len", c.max_len, "Most recent steps kept per sequence; 0 keeps all");
  sub.add_flag("--prefix-mode", c.prefix_mode, "Train on steps strictly before each target");
}

inline void add_eval_options(CLI::App& sub, Run& run) {
  RunConfig& c = run.config;
  sub.add_option("--pos-threshold", c.pos_threshold);
  sub.add_option("--n-negatives", c.n_negatives)->check(CLI::PositiveNumber);
}

/// Looks for `--config PATH` (or `--config=PATH`) ahead of the real parse.
inline std::optional<std::string> find_config_flag(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

}  // namespace detail

/// Entry point of the command-line tool. Returns the process exit status: 0 on success, 2 on a
/// usage error, 1 on any other failure.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::Run run;
  run.out = &out;
  std::string config_path;

  try {
    if (const auto path = detail::find_config_flag(args)) {
      std::ifstream in(*path);
      if (!in) {
        err << "error: cannot open config file '" << *path << "'\n";
        return 1;
      }
      try {
        run.config = from_json(nlohmann::json::parse(in));
      } catch (const nlohmann::json::exception& e) {
        err << "error: config file '" << *path << "': " << e.what() << "\n";
        return 1;
      }
      run.from_config_file = true;
      run.source_command = run.config.command;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app("Interacting attention-gated recurrent networks for rating prediction", "iarn");
  app.require_subcommand(1, 1);
  CLI::App* prepare = app.add_subcommand("prepare", "Filter, split and bundle a dataset");
  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  CLI::App* evaluate = app.add_subcommand("evaluate", "RMSE and AUC of a checkpoint on the test split");
  CLI::App* sweep = app.add_subcommand("sweep", "Test RMSE across minimum sequence lengths");
  CLI::App* explain = app.add_subcommand("explain", "Export attention scores for listed pairs");
  for (CLI::App* sub : {prepare, train, evaluate, sweep, explain}) detail::add_common_options(*sub, run, config_path);
  for (CLI::App* sub : {train, sweep}) detail::add_model_options(*sub, run);
  for (CLI::App* sub : {evaluate, explain}) {
    sub->add_option("--checkpoint", run.config.checkpoint, "Checkpoint written by train")->required(!run.from_config_file);
    sub->add_option("--backbone", run.config.backbone, "Expected backbone of the checkpoint")
        ->check(CLI::IsMember({"rnn", "lstm", "tagm", "iarn-plain", "iarn"}));
    sub->add_option("--max-len", run.config.max_len);
    sub->add_flag("--prefix-mode", run.config.prefix_mode);
    sub->add_option("--seed", run.config.seed, "Seed of the AUC negative sampler");
  }
  train->add_option("--checkpoint", run.config.checkpoint, "Checkpoint path (default OUT/model.ckpt)");
  detail::add_eval_options(*evaluate, run);
  sweep->add_option("--min-len-grid", run.config.min_len_grid, "Comma-separated ascending lengths")->delimiter(',');
  explain->add_option("--pairs", run.config.pairs, "user_id,item_id file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    for (CLI::App* sub : {evaluate, explain}) {
      if (sub->parsed()) run.backbone_given = sub->count("--backbone") > 0 || run.from_config_file;
    }
    if (prepare->parsed()) {
      run.config.command = "prepare";
      detail::cmd_prepare(run);
    } else if (train->parsed()) {
      run.config.command = "train";
      detail::cmd_train(run);
    } else if (evaluate->parsed()) {
      run.config.command = "evaluate";
      detail::cmd_evaluate(run);
    } else if (sweep->parsed()) {
      run.config.command = "sweep";
      detail::cmd_sweep(run);
    } else {
      run.config.command = "explain";
      detail::cmd_explain(run);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace iarn::cli
