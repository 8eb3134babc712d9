// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "iarn/cli/run.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace iarn;
using namespace iarn::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void randomize(Model& model, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  auto& store = model.parameters().store();
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (auto& v : store.at(i).data()) v = dist(rng);
  }
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  // Users u0..u2 and items i0..i3; every sequence has 3 to 6 steps after target exclusion.
  std::ostringstream text;
  int t = 0;
  std::uniform_int_distribution<int> r(1, 5);
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < 4; ++i) text << "u" << u << ",i" << i << "," << r(rng) << "," << t++ << "\n";
  }
  for (const char* extra : {"u0,i1,", "u0,i2,", "u1,i1,", "u2,i3,"}) text << extra << r(rng) << "," << t++ << "\n";
  const auto log = parse_log(text.str());
  const auto seqs = build_sequences(log);
  const std::string hierarchy = "leafA,mid\nmid,root\nroot,\nleafB,root\n";
  const auto tax = parse_taxonomy("i0,leafA\ni0,leafB\ni1,leafA\ni2,leafB\ni3,mid\n", &hierarchy, log.items);

  struct Case {
    Backbone bb;
    EncoderMode enc;
  };
  double worst = 0.0;
  std::string worst_case;
  for (const Case c : {Case{Backbone::rnn, EncoderMode::none}, Case{Backbone::lstm, EncoderMode::none},
                       Case{Backbone::tagm, EncoderMode::none}, Case{Backbone::iarn_plain, EncoderMode::none},
                       Case{Backbone::iarn, EncoderMode::flat}, Case{Backbone::iarn, EncoderMode::hierarchical}}) {
    auto shape = small_shape(c.bb, 3, 4, 4, 5, 4);
    shape.encoder = c.enc;
    shape.num_features = c.enc == EncoderMode::none ? 0 : tax.feature_count();
    auto model = Model::create(shape, &tax, 99);
    randomize(model, rng, 0.6);
    for (const Interaction& target : {log.records[1], log.records[6], log.records[13]}) {
      auto loss_of = [&](const ParameterStore& store) {
        Model probe(ModelParameters::bind(shape, store), Model::plan_for(shape, &tax));
        Predictor p(probe, seqs, {}, false);
        Tape tape(probe.parameters().store());
        const auto pg = p.build(tape, target, true, {});
        return tape.scalar(tape.squared_error(pg.prediction, target.rating));
      };
      Predictor p(model, seqs, {}, false);
      Tape tape(model.parameters().store());
      const auto pg = p.build(tape, target, true, {});
      const Gradients analytic = tape.backward(tape.squared_error(pg.prediction, target.rating));
      const Gradients numeric = finite_difference(loss_of, model.parameters().store(), 1e-5);
      const auto cmp = compare_gradients(analytic, numeric);
      if (cmp.max_relative_error >= worst) {
        worst = cmp.max_relative_error;
        worst_case = std::string(to_string(c.bb)) + "/" + std::string(to_string(c.enc));
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 60.0,
          "worst relative error " + fmt(worst * 1e6, 3) + "e-6 (" + worst_case + "), " + fmt(elapsed, 1) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Overfit memorization

Verdict overfit_memorization() {
  const auto t0 = Clock::now();
  const auto log = memorization_log(1);
  const auto seqs = build_sequences(log);
  ModelShape shape;  // defaults: iarn, d=25, h=64, p=64
  shape.num_users = log.users.size();
  shape.num_items = log.items.size();
  Model model = Model::create(shape, nullptr, 7);
  TrainConfig config;  // defaults: batch 50, RMSprop lr 1e-3, clip 10
  config.epochs = 500;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  train(model, log, seqs, config, [&](std::size_t epoch, double) {
    const double r = training_rmse(Predictor(model, seqs, config.policy, false), log);
    if (r < best) {
      best = r;
      best_epoch = epoch;
    }
  });
  const double final_rmse = training_rmse(Predictor(model, seqs, config.policy, false), log);
  const double elapsed = seconds_since(t0);
  return {best < 0.05 && elapsed < 120.0, "best training RMSE " + fmt(best) + " at epoch " +
                                              std::to_string(best_epoch) + ", final " + fmt(final_rmse) +
                                              " (target < 0.05), " + fmt(elapsed, 1) + " s"};
}

// ---------------------------------------------------------------------------
// 3 and 4. Synthetic two-style experiments

// One protocol for every backbone on the two-style data.
constexpr std::size_t kSeeds = 5;
constexpr std::size_t kEmbed = 16, kHidden = 16, kAttention = 16;
constexpr std::size_t kEpochs = 40;
constexpr double kLearningRate = 1e-2;
constexpr std::size_t kMaxLength = 20;

double two_style_rmse(const TwoStyleData& data, Backbone bb, EncoderMode enc, std::uint64_t seed) {
  const auto seqs = build_sequences(data.train);
  ModelShape shape;
  shape.backbone = bb;
  shape.encoder = enc;
  shape.num_users = data.train.users.size();
  shape.num_items = data.train.items.size();
  shape.num_features = enc == EncoderMode::none ? 0 : data.taxonomy.feature_count();
  shape.embed_dim = kEmbed;
  shape.hidden_dim = kHidden;
  shape.attention_dim = kAttention;
  Model model = Model::create(shape, &data.taxonomy, seed);
  TrainConfig config;
  config.epochs = kEpochs;
  config.learning_rate = kLearningRate;
  config.seed = seed;
  config.policy.max_length = kMaxLength;
  train(model, data.train, seqs, config);
  return evaluate_rmse(Predictor(model, seqs, config.policy), data.test).rmse;
}

std::vector<double> iarn_plain_runs;  // shared by criteria 3 and 4

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x, 3);
  return s;
}

Verdict interaction_ordering() {
  const auto t0 = Clock::now();
  std::vector<double> rnn, lstm;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto data = two_style_data(seed);
    iarn_plain_runs.push_back(two_style_rmse(data, Backbone::iarn_plain, EncoderMode::none, seed));
    lstm.push_back(two_style_rmse(data, Backbone::lstm, EncoderMode::none, seed));
    rnn.push_back(two_style_rmse(data, Backbone::rnn, EncoderMode::none, seed));
  }
  const double elapsed = seconds_since(t0);
  const double p = mean(iarn_plain_runs), l = mean(lstm), r = mean(rnn);
  return {p <= l && l <= r + 0.02 && elapsed < 900.0,
          "mean test RMSE iarn-plain " + fmt(p) + " [" + list(iarn_plain_runs) + "], lstm " + fmt(l) + " [" +
              list(lstm) + "], rnn " + fmt(r) + " [" + list(rnn) + "], " + fmt(elapsed, 0) + " s"};
}

Verdict encoder_benefit() {
  const auto t0 = Clock::now();
  std::vector<double> hier;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    hier.push_back(two_style_rmse(two_style_data(seed), Backbone::iarn, EncoderMode::hierarchical, seed));
  }
  const double h = mean(hier), p = mean(iarn_plain_runs);
  return {h <= p, "mean test RMSE iarn/hier " + fmt(h) + " [" + list(hier) + "] vs iarn-plain " + fmt(p) + ", " +
                      fmt(seconds_since(t0), 0) + " s"};
}

// ---------------------------------------------------------------------------
// 5. Invariant suites

Verdict invariant_suites() {
  std::vector<std::string> broken;
  std::mt19937_64 rng(55);
  const auto log = dense_random_log(rng, 6, 8, 40);
  const auto seqs = build_sequences(log);

  // Attention scores in (0,1) and the gate convexity bound at every step.
  std::size_t checked = 0;
  for (Backbone bb : {Backbone::tagm, Backbone::iarn_plain, Backbone::iarn}) {
    auto model = Model::create(small_shape(bb, 6, 8, 4, 5, 4), nullptr, 3);
    randomize(model, rng, 1.5);
    for (std::uint32_t u = 0; u < 6; ++u) {
      for (std::uint32_t i = 0; i < 8; ++i) {
        const auto [ut, it] = attention_trace(model, seqs, u, i);
        for (const AttentionTrace* tr : {&ut, &it}) {
          for (double a : tr->scores) {
            if (!(a > 0.0 && a < 1.0)) broken.push_back("attention score " + std::to_string(a) + " outside (0,1)");
          }
          const auto& seq = tr->side == Side::user ? seqs.users[tr->owner] : seqs.items[tr->owner];
          const auto rec = gated_recurrence(model, tr->side, seq, tr->scores);
          Tensor prev = Tensor::vector(5);
          for (std::size_t t = 0; t < rec.states.size(); ++t) {
            for (std::size_t k = 0; k < 5; ++k) {
              const double lo = std::min(prev[k], rec.candidates[t][k]), hi = std::max(prev[k], rec.candidates[t][k]);
              if (rec.states[t][k] < lo - 1e-15 || rec.states[t][k] > hi + 1e-15) broken.push_back("convexity bound");
            }
            prev = rec.states[t];
            ++checked;
          }
        }
      }
    }
  }

  // Cached and uncached predictors agree bitwise.
  for (Backbone bb : {Backbone::rnn, Backbone::lstm, Backbone::tagm, Backbone::iarn_plain, Backbone::iarn}) {
    auto model = Model::create(small_shape(bb, 6, 8), nullptr, 4);
    randomize(model, rng, 0.8);
    Predictor cached(model, seqs, {}, true), fresh(model, seqs, {}, false);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::uint32_t u = 0; u < 6; ++u) {
        for (std::uint32_t i = 0; i < 8; ++i) {
          if (cached.predict(u, i) != fresh.predict(u, i)) broken.push_back("cache mismatch " + std::string(to_string(bb)));
        }
      }
    }
  }

  // Hierarchical encoder against the precomputed product of each root-to-leaf chain.
  {
    const std::string hierarchy = "leafA,mid\nmid,root\nroot,\nleafB,root\n";
    const auto tax = parse_taxonomy("i0,leafA\ni0,leafB\ni1,leafA\n", &hierarchy, log.items);
    auto shape = small_shape(Backbone::iarn, 6, 8, 4);
    shape.encoder = EncoderMode::hierarchical;
    shape.num_features = tax.feature_count();
    auto model = Model::create(shape, &tax, 5);
    randomize(model, rng, 1.0);
    const auto M = [&](const char* token) {
      return get_param(model, "feature." + std::to_string(*tax.features.find(token)));
    };
    const Tensor product = add(matmul(M("leafA"), matmul(M("mid"), M("root"))), matmul(M("leafB"), M("root")));
    std::uniform_real_distribution<double> d(-2, 2);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = Tensor::vector(4);
      for (auto& v : x.data()) v = d(rng);
      if (max_abs_difference(encode_item_input(model, 0, x), matvec(product, x)) > 1e-10) broken.push_back("encoder oracle");
    }
  }

  // tagm's user trace ignores the paired item; iarn's does not.
  {
    const auto small = parse_log("u,a,5,1\nu,b,1,2\nv,a,4,3\nw,b,2,4\nw,a,3,5\nv,b,1,6\nu,c,2,7\n");
    const auto s = build_sequences(small);
    std::mt19937_64 r2(21);
    for (Backbone bb : {Backbone::tagm, Backbone::iarn}) {
      auto model = Model::create(small_shape(bb, 3, 3), nullptr, 4);
      randomize(model, r2, 1.0);
      const auto a = attention_trace(model, s, 0, 0).first.scores;
      const auto c = attention_trace(model, s, 0, 2).first.scores;
      if (bb == Backbone::tagm && a != c) broken.push_back("tagm trace depends on the paired item");
      if (bb == Backbone::iarn && a == c) broken.push_back("iarn trace ignores the paired item");
    }
  }

  // rmse^2 = mse and constant-predictor AUC.
  {
    std::normal_distribution<double> n(3.0, 1.5);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> p(1 + rep % 17), t(1 + rep % 17);
      for (auto& v : p) v = n(rng);
      for (auto& v : t) v = n(rng);
      const double e = rmse(p, t);
      if (std::abs(e * e - mse_loss(p, t)) > 1e-12) broken.push_back("rmse^2 != mse");
    }
    const auto [train_log, test_log] = temporal_split(log, 30);
    const auto ts = build_sequences(train_log);
    const double a = auc([](std::uint32_t, std::uint32_t) { return 2.5; }, test_log, ts, AucProtocol{3.0, 100, 7});
    if (a != 0.5) broken.push_back("constant-predictor AUC " + std::to_string(a));
  }

  return {broken.empty(), broken.empty() ? std::to_string(checked) + " gated steps checked, all invariants hold"
                                         : broken.front() + " (" + std::to_string(broken.size()) + " violations)"};
}

// ---------------------------------------------------------------------------
// 6. Determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "iarn_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  TwoStyleConfig cfg;
  cfg.users = 40;
  cfg.items = 30;
  cfg.train_per_user = 10;
  cfg.test_per_user = 3;
  const auto data = two_style_data(3, cfg);
  {
    std::ofstream inter(root / "ratings.csv"), feats(root / "features.csv"), hier(root / "hierarchy.csv"),
        pairs(root / "pairs.csv");
    for (const auto* part : {&data.train, &data.test}) {
      for (const auto& r : part->records) {
        inter << part->users.token(r.user) << ',' << part->items.token(r.item) << ',' << nlohmann::json(r.rating).dump()
              << ',' << r.timestamp << '\n';
      }
    }
    for (std::uint32_t i = 0; i < data.taxonomy.item_features.size(); ++i) {
      for (auto f : data.taxonomy.item_features[i]) {
        feats << data.train.items.token(i) << ',' << data.taxonomy.features.token(f) << '\n';
      }
    }
    for (std::uint32_t f = 0; f < data.taxonomy.feature_count(); ++f) {
      const auto& p = data.taxonomy.parent[f];
      hier << data.taxonomy.features.token(f) << ',' << (p ? data.taxonomy.features.token(*p) : "") << '\n';
    }
    pairs << "u0,i0\nu1,i3\nu7,i12\n";
  }
  const std::vector<std::string> data_flags{"--interactions", (root / "ratings.csv").string(), "--features",
                                            (root / "features.csv").string(), "--hierarchy",
                                            (root / "hierarchy.csv").string(), "--cutoff", std::to_string(cfg.cutoff)};
  const auto with = [&](std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), data_flags.begin(), data_flags.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    const std::string dir = (root / run).string();
    const int rc = cli::run(with({"train"}, {"--embed-dim", "6", "--hidden-dim", "6", "--att-dim", "6", "--epochs", "3",
                                             "--lr", "0.01", "--dropout", "0.25", "--seed", "11", "--out", dir + "/train"}),
                            sink, sink) |
                   cli::run(with({"evaluate"}, {"--checkpoint", dir + "/train/model.ckpt", "--seed", "11", "--out",
                                                dir + "/eval"}),
                            sink, sink) |
                   cli::run(with({"explain"}, {"--checkpoint", dir + "/train/model.ckpt", "--pairs",
                                               (root / "pairs.csv").string(), "--out", dir + "/explain"}),
                            sink, sink);
    if (rc != 0) return {false, "command failed: " + sink.str()};
  }
  std::vector<std::string> differing;
  for (const char* leaf :
       {"train/model.ckpt", "train/loss_history.csv", "eval/report.json", "explain/attention.ndjson", "explain/attention.csv"}) {
    const auto a = slurp(root / "a" / leaf);
    if (a.empty() || a != slurp(root / "b" / leaf)) differing.push_back(leaf);
  }
  fs::remove_all(root);
  return {differing.empty(), differing.empty() ? "checkpoint, loss history, report and attention exports identical"
                                               : "differs: " + differing.front()};
}

// ---------------------------------------------------------------------------
// 7. Protocol fidelity

Verdict protocol_fidelity() {
  std::vector<std::string> failed;
  const auto check = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };

  // Temporal split: strictly-before goes to train, the cutoff instant to test.
  {
    const auto log = parse_log("u,a,1,99\nu,b,1,100\nu,c,1,101\n");
    const auto [train_log, test_log] = temporal_split(log, 100);
    check(train_log.size() == 1 && train_log.records[0].timestamp == 99, "split: train is strictly before cutoff");
    check(test_log.size() == 2 && test_log.records[0].timestamp == 100, "split: cutoff instant goes to test");
    check(cutoffs::netflix == 1117584000, "split: 2005-06-01 cutoff");
  }

  // Entity filtering keeps users and items with more than 3 ratings, in one pass.
  {
    std::ostringstream text;
    int t = 0;
    for (int k = 0; k < 4; ++k) text << "keep,i" << k << ",3," << t++ << "\n";  // 4 ratings
    for (int k = 0; k < 3; ++k) text << "drop,i" << k << ",3," << t++ << "\n";  // exactly 3
    for (int k = 0; k < 3; ++k) text << "x" << k << ",i0,3," << t++ << "\n";
    const auto filtered = filter_min_ratings(parse_log(text.str()), 3);
    check(!filtered.users.find("drop") && filtered.users.find("keep"), "filter: exactly 3 ratings is dropped");
    // i0 was counted with `drop` present, so it survives even though `drop` is removed.
    check(filtered.items.find("i0").has_value(), "filter: single pass");
    check(cli::RunConfig{}.min_ratings == 3, "filter: default threshold 3");
  }

  // Mini-batches of 50 pairs with the short tail kept.
  {
    check(TrainConfig{}.batch_size == 50 && cli::RunConfig{}.batch_size == 50, "batch: default 50");
    std::mt19937_64 rng(3);
    const auto log = dense_random_log(rng, 12, 12, 108);  // 120 interactions
    const auto seqs = build_sequences(log);
    Model model = Model::create(small_shape(Backbone::rnn, 12, 12, 3, 3), nullptr, 1);
    TrainConfig config;
    config.epochs = 2;
    const auto result = train(model, log, seqs, config);
    const std::size_t per_epoch = (result.instances + 49) / 50;
    check(result.optimizer_steps == 2 * per_epoch && result.instances > 100, "batch: ceil(n/50) steps per epoch");
  }

  // Element-wise clipping to [-10, 10].
  {
    check(TrainConfig{}.clip == 10.0 && cli::RunConfig{}.clip == 10.0, "clip: default 10");
    ParameterStore store;
    store.add("w", Tensor::from({0.0, 0.0, 0.0, 0.0}));
    Gradients g(store);
    g.slot(0) = Tensor::from({25.0, -13.0, 9.5, -10.0});
    clip_gradients(g, TrainConfig{}.clip);
    check(g.dense(0) == Tensor::from({10.0, -10.0, 9.5, -10.0}), "clip: element-wise bound");
  }

  // Minimum-length grid.
  {
    const std::vector<std::size_t> grid{3, 10, 20, 30, 50, 100};
    check(default_min_length_grid() == grid && cli::RunConfig{}.min_len_grid == grid, "grid: {3,10,20,30,50,100}");
    std::mt19937_64 rng(9);
    const auto log = dense_random_log(rng, 5, 5, 200);
    const auto [train_log, test_log] = temporal_split(log, 150);
    const auto seqs = build_sequences(train_log);
    const ScorerFactory constant = [](std::size_t, const InteractionLog&) -> PairScorer {
      return [](std::uint32_t, std::uint32_t) { return 3.0; };
    };
    const auto report = sweep_min_length(constant, train_log, test_log, seqs, grid);
    bool nested = report.sweep.size() == grid.size();
    for (std::size_t k = 1; nested && k < report.sweep.size(); ++k) {
      nested = report.sweep[k].n_pairs <= report.sweep[k - 1].n_pairs;
    }
    check(nested && !report.sweep.back().rmse, "grid: one entry per length, shrinking, absent when empty");
  }

  return {failed.empty(), failed.empty() ? "split strictness, >3 filtering, batch 50, clip 10 and the length grid hold"
                                         : failed.front() + " (" + std::to_string(failed.size()) + " failed)"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient correctness", gradient_correctness}, {"overfit memorization", overfit_memorization},
      {"interaction-dependency ordering", interaction_ordering}, {"encoder benefit", encoder_benefit},
      {"invariant suites", invariant_suites},         {"determinism", determinism},
      {"protocol fidelity", protocol_fidelity}};
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    try {
      v = criteria[k].run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].name, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
