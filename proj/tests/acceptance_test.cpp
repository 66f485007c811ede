// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cli.hpp"
#include "msegnn/evalkit.hpp"
#include "msegnn/metatrain.hpp"
#include "msegnn/objective.hpp"
#include "msegnn/synthetic.hpp"
#include "run_config.hpp"
#include "test_util.hpp"

namespace msegnn {
namespace {

namespace fs = std::filesystem;

// Pinned tolerances.
constexpr double kGradRelTol = 1e-3;
// Central-difference steps, tried in order until one agrees; a smaller step
// only matters when a ReLU boundary lies inside the larger stencil.
const std::vector<double> kFdSteps{1e-5, 1e-6, 1e-7};
constexpr double kChanceCenter = 0.5;
constexpr double kChanceTol = 0.05;
constexpr double kMinTestAccuracy = 0.80;
constexpr double kMinExplanationAuc = 0.60;
constexpr double kContrastiveTol = 1e-9;
constexpr std::size_t kEndToEndTestEpisodes = 200;
constexpr std::size_t kChanceEpisodes = 200;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + fmt(x);
  return s;
}

cli::RunConfig default_setup() { return cli::preset("synthetic-2way5shot"); }

Dataset default_dataset(const cli::RunConfig& cfg) {
  return generate_synthetic(cfg.data.classes, cfg.data.per_class, cfg.data.seed,
                            cfg.data.generator);
}

DatasetSplit default_split(const cli::RunConfig& cfg) {
  return split_classes(cfg.data.classes, cfg.data.split, cfg.data.split_seed);
}

// Opens the logit scale and randomizes the mask output layer so no
// gradient is trivially zero.
void perturb_initial_state(MseGnn& model, Rng& rng) {
  model.params().get(MseGnn::kLogitScale).mutable_values()[0] = 1.0;
  for (const auto* n : {&model.mask_mlp().weights.back(), &model.mask_mlp().biases.back()})
    for (double& v : model.params().get(*n).mutable_values()) v = rng.uniform(-1, 1);
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Rng rng(101);
  std::vector<Graph> graphs;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t n = 3 + rng.below(8);
    graphs.push_back(testing::random_graph(n, 4, rng, 0.35, static_cast<int>(i / 10), true,
                                           static_cast<std::int64_t>(i)));
  }
  Episode ep;
  ep.n_way = 2;
  ep.k_shot = 5;
  ep.query_per_class = 5;
  ep.classes = {0, 1};
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < 5; ++k)
      ep.support.push_back({&graphs[c * 10 + k], static_cast<int>(c)});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 5; k < 10; ++k)
      ep.query.push_back({&graphs[c * 10 + k], static_cast<int>(c)});

  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t refined = 0;
  for (auto encoder : {EncoderKind::kGin, EncoderKind::kGraphSage}) {
    ModelConfig mc;
    mc.encoder = encoder;
    mc.input_dim = 4;
    mc.hidden_dim = 6;
    mc.layers = 2;
    MseGnn model(mc, 102);
    perturb_initial_state(model, rng);
    LossWeights w;
    std::vector<Tensor> leaves;
    for (auto& e : model.params().entries()) leaves.push_back(e.tensor);
    for (auto target : {LossTarget::kSupport, LossTarget::kQuery}) {
      auto loss = [&] {
        const auto fwd = model.forward_episode(model.params(), ep, Phase::kTrain);
        return episode_loss(fwd, ep, target, w).total;
      };
      for (auto& t : leaves) t.zero_grad();
      backward(loss());
      NoGradGuard no_grad;
      for (auto& t : leaves) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto values = t.mutable_values();
        for (std::size_t k = 0; k < values.size(); ++k) {
          double err = 0.0;
          for (std::size_t s = 0; s < kFdSteps.size(); ++s) {
            const double saved = values[k];
            values[k] = saved + kFdSteps[s];
            const double up = loss().item();
            values[k] = saved - kFdSteps[s];
            const double down = loss().item();
            values[k] = saved;
            err = testing::relative_error(analytic[k], (up - down) / (2.0 * kFdSteps[s]));
            if (err < kGradRelTol) {
              refined += s > 0;
              break;
            }
          }
          worst = std::max(worst, err);
          ++checked;
        }
      }
    }
  }
  return {worst < kGradRelTol,
          "max relative error " + std::to_string(worst) + " over " + std::to_string(checked) +
              " gradient entries (tol " + std::to_string(kGradRelTol) + "), " +
              std::to_string(refined) + " entries needed a smaller step near a ReLU kink"};
}

Outcome fast_slow_contract() {
  cli::RunConfig cfg = cli::preset("toy");
  const Dataset ds = generate_synthetic(cfg.data.classes, cfg.data.per_class, cfg.data.seed,
                                        cfg.data.generator);
  const DatasetSplit split = split_classes(cfg.data.classes, cfg.data.split, cfg.data.split_seed);
  MseGnn model(cfg.model, 3);
  const std::uint64_t slow_start = model.params().hash(ParamTag::kSlow);
  std::size_t steps = 0;
  std::size_t violations = 0;
  MetaTrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m) {
    ++steps;
    violations += m.slow_hash_before_adapt != m.slow_hash_after_adapt;
  };
  const MetaTrainResult r = meta_train(model, ds, split, cfg.meta, hooks);
  const bool slow_moved = model.params().hash(ParamTag::kSlow) != slow_start;
  return {violations == 0 && r.slow_hash_violations == 0 && steps > 0 && slow_moved,
          std::to_string(steps) + " meta steps, " + std::to_string(r.local_adapt_calls) +
              " local_adapt calls, violations " + std::to_string(violations) +
              ", slow parameters updated between steps: " + (slow_moved ? "yes" : "no")};
}

Outcome augmentation_count() {
  cli::RunConfig cfg = default_setup();
  cfg.data.classes = 2;
  cfg.data.per_class = 20;
  const Dataset ds = generate_synthetic(2, 20, 5, cfg.data.generator);
  const std::vector<int> classes{0, 1};
  Rng rng(5);
  const Episode ep = sample_episode(ds, classes, 2, 5, 3, rng);
  MseGnn model(cfg.model, 5);
  NoGradGuard no_grad;
  const auto fwd = model.forward_episode(model.params(), ep, Phase::kTrain);
  const std::size_t n = fwd.augmented.size();
  return {n == 100 && fwd.augmented_logits.rows() == 100,
          "2-way 5-shot support produced " + std::to_string(n) + " augmented embeddings"};
}

Outcome label_leakage() {
  cli::RunConfig cfg = default_setup();
  const Dataset ds = generate_synthetic(4, 30, 9, cfg.data.generator);
  const std::vector<int> classes{0, 1, 2, 3};
  MseGnn model(cfg.model, 9);
  Rng init(10);
  perturb_initial_state(model, init);
  Rng rng(11);
  std::size_t compared = 0;
  bool identical = true;
  for (int trial = 0; trial < 5; ++trial) {
    const Episode ep = sample_episode(ds, classes, 2, 5, 5, rng);
    Episode mutated = ep;
    for (auto& q : mutated.query) q.label = 1 - q.label;
    for (const bool adapt : {false, true}) {
      auto forward = [&](const Episode& e) {
        if (!adapt) return model.forward_episode(model.params(), e, Phase::kTrain);
        const AdaptResult a = local_adapt(model, model.params(), e, cfg.meta);
        return model.forward_episode(a.params, e, Phase::kEval);
      };
      const auto x = forward(ep);
      const auto y = forward(mutated);
      auto same = [&](const Tensor& a, const Tensor& b) {
        ++compared;
        identical = identical && a.to_vector() == b.to_vector();
      };
      same(x.task_info.concat, y.task_info.concat);
      for (std::size_t c = 0; c < x.task_info.prototypes.size(); ++c)
        same(x.task_info.prototypes[c], y.task_info.prototypes[c]);
      for (std::size_t i = 0; i < x.query.size(); ++i) same(x.query[i].mask, y.query[i].mask);
      for (std::size_t i = 0; i < x.support.size(); ++i) same(x.support[i].mask, y.support[i].mask);
      same(x.query_logits, y.query_logits);
    }
  }
  return {identical, std::to_string(compared) +
                         " tensors compared bit-exactly, with and without local adaptation"};
}

Outcome chance_baseline() {
  const cli::RunConfig cfg = default_setup();
  const Dataset ds = default_dataset(cfg);
  const DatasetSplit split = default_split(cfg);
  MseGnn model(cfg.model, 1);
  const TestSummary s = test_protocol(model, model.params(), ds, split.test_classes, cfg.meta,
                                      kChanceEpisodes, cfg.eval.seed);
  const double acc = s.accuracy->mean;
  const double expl = s.explanation_auc->mean;
  const bool ok = std::abs(acc - kChanceCenter) <= kChanceTol &&
                  std::abs(expl - kChanceCenter) <= kChanceTol;
  return {ok, "untrained accuracy " + fmt(acc) + ", explanation AUC " + fmt(expl) + " over " +
                  std::to_string(s.episodes) + " episodes (target 0.50 +- 0.05)"};
}

struct TrainedRun {
  double accuracy = 0.0;
  double explanation_auc = 0.0;
  double seconds = 0.0;
};

// Meta-train on the default preset and score the best checkpoint.
TrainedRun train_and_test(double gamma, std::uint64_t seed, const Dataset& ds) {
  cli::RunConfig cfg = default_setup();
  cfg.apply({{"loss.local.gamma", std::to_string(gamma)},
             {"loss.global.gamma", std::to_string(gamma)},
             {"meta.seed", std::to_string(seed)}});
  const DatasetSplit split = default_split(cfg);
  const auto start = std::chrono::steady_clock::now();
  MseGnn model(cfg.model, seed);
  const MetaTrainResult r = meta_train(model, ds, split, cfg.meta);
  const TestSummary s = test_protocol(model, r.best, ds, split.test_classes, cfg.meta,
                                      kEndToEndTestEpisodes, cfg.eval.seed);
  TrainedRun out;
  out.accuracy = s.accuracy->mean;
  out.explanation_auc = s.explanation_auc->mean;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "  gamma " << gamma << " seed " << seed << ": test accuracy " << fmt(out.accuracy)
            << ", explanation AUC " << fmt(out.explanation_auc) << ", best episode "
            << r.best_episode << ", " << fmt(out.seconds, 0) << " s" << std::endl;
  return out;
}

std::map<double, std::vector<TrainedRun>>& trained_runs() {
  static std::map<double, std::vector<TrainedRun>> runs;
  return runs;
}

const std::vector<TrainedRun>& runs_for(double gamma) {
  auto& runs = trained_runs();
  if (!runs.count(gamma)) {
    const cli::RunConfig cfg = default_setup();
    const Dataset ds = default_dataset(cfg);
    for (std::uint64_t seed : kSeeds) runs[gamma].push_back(train_and_test(gamma, seed, ds));
  }
  return runs[gamma];
}

Outcome end_to_end() {
  const auto& runs = runs_for(0.1);
  std::vector<double> acc;
  std::vector<double> expl;
  double seconds = 0.0;
  for (const auto& r : runs) {
    acc.push_back(r.accuracy);
    expl.push_back(r.explanation_auc);
    seconds += r.seconds;
  }
  const double ma = median(acc);
  const double me = median(expl);
  return {ma >= kMinTestAccuracy && me >= kMinExplanationAuc,
          "median test accuracy " + fmt(ma) + " [" + join(acc) + "], median explanation AUC " +
              fmt(me) + " [" + join(expl) + "], " + fmt(seconds / 60.0, 1) +
              " min for 3 seeds"};
}

Outcome gamma_direction() {
  std::vector<double> low;
  std::vector<double> high;
  for (const auto& r : runs_for(0.1)) low.push_back(r.explanation_auc);
  for (const auto& r : runs_for(0.5)) high.push_back(r.explanation_auc);
  const double a = median(low);
  const double b = median(high);
  return {a > b, "median explanation AUC gamma=0.1: " + fmt(a, 6) + " [" + join(low) +
                     "], gamma=0.5: " + fmt(b, 6) + " [" + join(high) + "]"};
}

Outcome metric_oracles() {
  Rng rng(808);
  std::size_t auc_cases = 0;
  std::size_t auc_mismatch = 0;
  while (auc_cases < 1000) {
    const std::size_t n = 2 + rng.below(11);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(6)) / 5.0;  // frequent ties
      y[i] = static_cast<int>(rng.below(2));
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(n)) continue;
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] != 1 || y[j] != 0) continue;
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    auc_mismatch += roc_auc(s, y) != wins / pairs;
    ++auc_cases;
  }
  std::size_t acc_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<int> p(n);
    std::vector<int> l(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(3));
      l[i] = static_cast<int>(rng.below(3));
      hits += p[i] == l[i];
    }
    acc_mismatch += accuracy(p, l) != static_cast<double>(hits) / static_cast<double>(n);
  }
  return {auc_mismatch == 0 && acc_mismatch == 0,
          std::to_string(auc_cases) + " AUC cases with " + std::to_string(auc_mismatch) +
              " mismatches, 1000 accuracy cases with " + std::to_string(acc_mismatch) +
              " mismatches (exact equality)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome pipeline_determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("msegnn_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::string> files{"dataset.jsonl",          "checkpoint_best.json",
                                       "checkpoint_last.json",   "report_val_accuracy.json",
                                       "report_accuracy.json",   "report_auc.json",
                                       "report_explanation_auc.json"};
  std::ostringstream sink;
  int failures = 0;
  for (const char* run : {"a", "b"}) {
    const std::string dir = (root / run).string();
    const std::string data = dir + "/dataset.jsonl";
    failures += cli::run_cli({"--out-dir", dir, "gen-data", "--seed", "7"}, sink, sink) != 0;
    failures += cli::run_cli({"--out-dir", dir, "meta-train", "--data", data, "--iterations",
                              "100", "--seed", "3"},
                             sink, sink) != 0;
    failures += cli::run_cli({"--out-dir", dir, "eval", "--data", data, "--seed", "4"}, sink,
                             sink) != 0;
  }
  std::size_t identical = 0;
  for (const auto& f : files) {
    const auto a = root / "a" / f;
    const auto b = root / "b" / f;
    if (fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b)) ++identical;
  }
  fs::remove_all(root);
  return {failures == 0 && identical == files.size(),
          std::to_string(identical) + "/" + std::to_string(files.size()) +
              " artifacts byte-identical across two runs, " + std::to_string(failures) +
              " failed commands"};
}

Outcome regularizer_checks() {
  const double at_gamma = size_regularizer(Tensor::vector({0.0, 0.2, 0.1, 0.1}), 0.1).item();
  const double arithmetic = size_regularizer(Tensor::vector({0.3, 0.3, 0.3}), 0.1).item();
  Rng rng(1010);
  double worst = 0.0;
  std::size_t batches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + rng.below(5);
    const std::size_t n = 2 + rng.below(3);
    const double tau = rng.uniform(0.1, 2.0);
    std::vector<std::vector<double>> p(m, std::vector<double>(n));
    std::vector<int> y(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (double& v : p[i]) v = rng.uniform(-2, 2);
      y[i] = static_cast<int>(rng.below(n));
    }
    bool has_pair = false;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) has_pair = has_pair || y[i] == y[j];
    if (!has_pair) continue;
    // Brute force of the closed form, one anchor at a time.
    double total = 0.0;
    int anchors = 0;
    for (std::size_t i = 0; i < m; ++i) {
      auto sim = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += p[a][c] * p[b][c];
        return s / tau;
      };
      double denom = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        if (k != i) denom += std::exp(sim(i, k));
      double acc = 0.0;
      int positives = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i || y[j] != y[i]) continue;
        acc -= std::log(std::exp(sim(i, j)) / denom);
        ++positives;
      }
      if (positives == 0) continue;
      total += acc / positives;
      ++anchors;
    }
    const double want = total / anchors;
    std::vector<double> flat;
    for (const auto& r : p) flat.insert(flat.end(), r.begin(), r.end());
    const double got = contrastive_loss(Tensor::from({m, n}, flat), y, tau).item();
    worst = std::max(worst, std::abs(got - want));
    ++batches;
  }
  const bool ok = at_gamma == 0.0 && std::abs(arithmetic - 0.2) < 1e-15 && worst <= kContrastiveTol;
  return {ok, "size_regularizer at gamma " + std::to_string(at_gamma) + ", |0.3-0.1| -> " +
                  fmt(arithmetic, 17) + ", contrastive max abs diff " + std::to_string(worst) +
                  " over " + std::to_string(batches) + " batches"};
}

}  // namespace
}  // namespace msegnn

int main(int argc, char** argv) {
  using msegnn::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", msegnn::gradient_correctness},
      {"fast/slow contract", msegnn::fast_slow_contract},
      {"augmentation count", msegnn::augmentation_count},
      {"label leakage", msegnn::label_leakage},
      {"chance-level baseline", msegnn::chance_baseline},
      {"end-to-end synthetic training", msegnn::end_to_end},
      {"gamma sensitivity direction", msegnn::gamma_direction},
      {"metric oracles", msegnn::metric_oracles},
      {"pipeline determinism", msegnn::pipeline_determinism},
      {"regularizer analytic checks", msegnn::regularizer_checks},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << "): " << o.detail << " [" << msegnn::fmt(secs, 1) << " s]" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
