// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "streamcl/classifiers.hpp"
#include "streamcl/harness.hpp"
#include "streamcl/linear_head.hpp"
#include "streamcl/mean_tracker.hpp"
#include "test_util.hpp"

using namespace streamcl;
using streamcl::test::fixture_config;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criteria

Outcome streaming_mean() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  const std::size_t F = 512;
  double worst = 0;
  for (int s = 0; s < 100; ++s) {
    const std::size_t n = 1 + rng.below(10000);
    const std::size_t K = 1 + rng.below(50);
    std::vector<std::vector<float>> centers(K, std::vector<float>(F));
    for (auto& c : centers)
      for (auto& x : c) x = static_cast<float>(rng.uniform(-5.0, 5.0));
    std::vector<EmbeddingRecord> recs(n);
    for (auto& r : recs) {
      r.label = static_cast<ClassId>(rng.below(K));
      r.vector.resize(F);
      const auto& c = centers[static_cast<std::size_t>(r.label)];
      for (std::size_t k = 0; k < F; ++k) r.vector[k] = c[k] + static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    ClassMeanTable t;
    for (const auto& r : recs) t.update(std::span<const float>(r.vector), r.label);
    for (const auto& [c, want] : oracle::batch_mean_oracle(recs)) {
      const auto got = t.mean(c);
      double num = 0, den = 0;
      for (std::size_t k = 0; k < F; ++k) {
        num = std::max(num, std::abs(got[k] - want[k]));
        den = std::max(den, std::abs(want[k]));
      }
      worst = std::max(worst, num / den);
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && secs < 10.0,
          "100 streams, max rel err " + fmt("%.3g", worst) + " (< 1e-8), " + fmt("%.2f", secs) +
              " s (< 10 s)"};
}

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2002);
  double worst = 0;
  bool frozen_zero = true;
  std::size_t frozen_rows = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t F = 1 + rng.below(16);
    const std::size_t M = 1 + rng.below(5);
    const std::size_t tasks = 1 + rng.below(20 / M);
    const std::size_t B = 1 + rng.below(8);
    const bool bias = rng.below(4) != 0;
    const auto scope = rng.below(2) ? SoftmaxScope::task : SoftmaxScope::all;

    LinearHead<double> head(F, bias);
    ClassId next = 0;
    std::vector<ClassId> last;
    for (std::size_t t = 0; t < tasks; ++t) {
      last.clear();
      for (std::size_t m = 0; m < M; ++m) last.push_back(next++);
      head.expand(t, last, rng.next_u64());
    }
    const double scale = rng.uniform(0.5, 3.0);
    for (auto& w : head.mutable_weights()) w *= scale;
    if (bias)
      for (auto& b : head.mutable_biases()) b = rng.uniform(-1.0, 1.0);

    TrainBatch<double> batch;
    batch.dim = F;
    std::vector<double> x(F);
    for (std::size_t i = 0; i < B; ++i) {
      for (auto& v : x) v = rng.normal();
      batch.push_back(x, last[rng.below(M)]);
    }

    const auto lg = ce_loss_and_grad(head, batch, scope);
    const auto fd = oracle::finite_diff_grad_oracle(head, batch, 1e-5, scope);
    for (std::size_t r = 0; r < head.rows(); ++r) {
      if (!head.trainable(r)) {
        ++frozen_rows;
        for (std::size_t k = 0; k < F; ++k) frozen_zero &= lg.grad.weights[r * F + k] == 0.0;
        frozen_zero &= lg.grad.biases[r] == 0.0;
        continue;
      }
      auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
      };
      for (std::size_t k = 0; k < F; ++k)
        worst = std::max(worst, rel(lg.grad.weights[r * F + k], fd.weights[r * F + k]));
      if (bias) worst = std::max(worst, rel(lg.grad.biases[r], fd.biases[r]));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && frozen_zero && secs < 30.0,
          "200 instances, max rel err " + fmt("%.3g", worst) + " (< 1e-4), " +
              std::to_string(frozen_rows) + " frozen rows " +
              (frozen_zero ? "exactly zero" : "NOT zero") + ", " + fmt("%.2f", secs) + " s (< 30 s)"};
}

Outcome ncm_brute_force() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(3003);
  int mismatches = 0, ties = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t F = 1 + rng.below(16);
    const std::size_t K = 2 + rng.below(30);
    std::map<ClassId, std::vector<double>> means;
    std::vector<double> q(F);
    const bool tie_case = inst % 4 == 0;
    if (tie_case) {
      // integer geometry: several classes mirrored through q sit at exactly
      // the same distance
      for (auto& v : q) v = static_cast<double>(rng.below(11)) - 5;
      std::vector<double> a(F);
      for (std::size_t k = 0; k < F; ++k) a[k] = q[k] + static_cast<double>(rng.below(5)) - 2;
      if (a == q) a[0] += 1;
      std::vector<double> b(F);
      for (std::size_t k = 0; k < F; ++k) b[k] = 2 * q[k] - a[k];
      std::vector<ClassId> ids(K);
      for (std::size_t i = 0; i < K; ++i) ids[i] = static_cast<ClassId>(i * 3 + rng.below(3));
      rng.shuffle(ids);
      for (std::size_t i = 0; i < K; ++i) {
        if (i < 2) {
          means[ids[i]] = i == 0 ? a : b;
        } else {
          std::vector<double> far(F);
          for (std::size_t k = 0; k < F; ++k) far[k] = q[k] + 20 + static_cast<double>(rng.below(10));
          means[ids[i]] = far;
        }
      }
      ++ties;
    } else {
      for (ClassId c = 0; c < static_cast<ClassId>(K); ++c) {
        std::vector<double> m(F);
        for (auto& v : m) v = rng.normal();
        means[c] = m;
      }
      for (auto& v : q) v = rng.normal();
    }
    ClassMeanTable table;
    std::vector<ClassId> ids;
    for (const auto& [c, m] : means) {
      table.update(std::span<const double>(m), c);
      ids.push_back(c);
    }
    auto cands = ids;
    rng.shuffle(cands);
    if (!tie_case) cands.resize(1 + rng.below(cands.size()));
    const std::span<const double> qs(q);
    mismatches += ncm_predict(table, std::span<const ClassId>(cands), qs) !=
                  oracle::brute_force_nearest(means, cands, q);
    mismatches += full_ncm_predict(table, qs) != oracle::brute_force_nearest(means, ids, q);
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0,
          "1000 instances (" + std::to_string(ties) + " with exact ties), " +
              std::to_string(mismatches) + " mismatches, " + fmt("%.2f", secs) + " s (< 5 s)"};
}

Outcome uniform_loss() {
  LinearHead<double> head(8);
  std::vector<ClassId> cls(10);
  for (ClassId c = 0; c < 10; ++c) cls[static_cast<std::size_t>(c)] = c;
  head.expand(0, cls, 1);
  std::fill(head.mutable_weights().begin(), head.mutable_weights().end(), 0.0);
  Rng rng(4004);
  TrainBatch<double> batch;
  batch.dim = 8;
  std::vector<double> x(8);
  for (int i = 0; i < 16; ++i) {
    for (auto& v : x) v = rng.normal();
    batch.push_back(x, cls[rng.below(10)]);
  }
  const double err = std::abs(ce_loss_and_grad(head, batch).loss - std::log(10.0));
  return {err <= 1e-9, "loss - ln 10 = " + fmt("%.3g", err) + " (<= 1e-9)"};
}

struct Fixtures {
  test::TempDir dir{"acceptance"};
  SyntheticDataset standard = generate_synthetic_tasks(test::standard_fixture(), dir.path(), "standard");
  SyntheticDataset overlap = generate_synthetic_tasks(test::overlap_fixture(), dir.path(), "overlap");
};

Outcome forgetting(const Fixtures& fx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cand = run_experiment(fixture_config(fx.standard.manifest_path, Method::candidate_ncm));
  const auto ft = run_experiment(fixture_config(fx.standard.manifest_path, Method::finetune));
  const auto ocand = run_experiment(fixture_config(fx.overlap.manifest_path, Method::candidate_ncm));
  const auto ofull = run_experiment(fixture_config(fx.overlap.manifest_path, Method::full_ncm));
  const double secs = seconds_since(t0);

  namespace ref = test::reference;
  const bool ft_ok = ft.metrics.last < 0.10;
  const bool cand_ok = cand.metrics.last > 0.90;
  const bool order_ok = ocand.metrics.avg >= ofull.metrics.avg;
  const bool frozen_ok = cand.metrics.last == ref::kStandardCandidateLast &&
                         cand.metrics.avg == ref::kStandardCandidateAvg &&
                         ft.metrics.last == ref::kStandardFinetuneLast &&
                         ocand.metrics.avg == ref::kOverlapCandidateAvg &&
                         ofull.metrics.avg == ref::kOverlapFullAvg;
  const bool time_ok = secs < 60.0;
  auto mark = [](bool ok) { return ok ? "ok" : "MISS"; };
  return {ft_ok && cand_ok && order_ok && frozen_ok && time_ok,
          "finetune Last " + fmt("%.4f", ft.metrics.last) + " < 0.10 " + mark(ft_ok) +
              "; candidate-NCM Last " + fmt("%.4f", cand.metrics.last) + " > 0.90 " + mark(cand_ok) +
              "; overlap candidate Avg " + fmt("%.4f", ocand.metrics.avg) + " >= full Avg " +
              fmt("%.4f", ofull.metrics.avg) + " " + mark(order_ok) + "; regression constants " +
              mark(frozen_ok) + "; " + fmt("%.1f", secs) + " s (< 60 s) " + mark(time_ok)};
}

// Small fixture used for the cross-method checks below.
struct SmallFixture {
  test::TempDir dir{"acceptance_small"};
  SyntheticDataset data;
  SmallFixture() {
    SyntheticParams p;
    p.num_classes = 20;
    p.dim = 16;
    p.per_class_train = 60;
    p.per_class_test = 20;
    p.cluster_spread = 0.3;
    p.seed = 11;
    data = generate_synthetic_tasks(p, dir.path());
  }
};

std::vector<RunConfig> all_method_configs(const std::filesystem::path& manifest) {
  std::vector<RunConfig> out;
  for (auto m : {Method::candidate_ncm, Method::full_ncm, Method::finetune, Method::er,
                 Method::nme_buffer, Method::upper_bound}) {
    const std::size_t q = (m == Method::er || m == Method::nme_buffer) ? 100 : 0;
    out.push_back(fixture_config(manifest, m, 5, q));
  }
  return out;
}

Outcome determinism(const Fixtures& fx, const SmallFixture& small) {
  auto configs = all_method_configs(small.data.manifest_path);
  configs.push_back(fixture_config(fx.standard.manifest_path, Method::candidate_ncm));
  auto sc = fixture_config(small.data.manifest_path, Method::er, 10, 50);
  sc.softmax_scope = SoftmaxScope::task;
  sc.use_bias = false;
  configs.push_back(sc);
  int differing = 0;
  for (const auto& c : configs) {
    differing += run_experiment(c).metrics.to_json().dump() != run_experiment(c).metrics.to_json().dump();
  }
  return {differing == 0, std::to_string(configs.size()) + " configs run twice, " +
                              std::to_string(differing) + " with differing metrics JSON"};
}

Outcome single_pass(const SmallFixture& small) {
  int runs = 0, bad = 0;
  for (const auto& c : all_method_configs(small.data.manifest_path)) {
    if (c.method == Method::upper_bound) continue;  // offline reference, not online
    Experiment exp(c);
    for (std::size_t t = 0; t < exp.schedule().num_tasks(); ++t) exp.run_task(t);
    const auto& split = exp.manifest().split;
    for (std::size_t i = 0; i < split.size(); ++i) {
      const std::uint32_t want = split[i] == Split::train ? 1 : 0;
      if (exp.train_reads()[i] != want) {
        ++bad;
        break;
      }
    }
    bad += run_experiment(c).manifest["single_pass"]["ok"] != true;
    ++runs;
  }
  return {bad == 0, std::to_string(runs) + " online runs, every training record read exactly once" +
                        (bad ? " VIOLATED in " + std::to_string(bad) + " checks" : "")};
}

Outcome metric_identities(const SmallFixture& small) {
  double worst = 0;
  bool last_ok = true;
  for (const auto& c : all_method_configs(small.data.manifest_path)) {
    const auto m = run_experiment(c).metrics;
    long double sum = 0;
    for (double a : m.per_step) sum += a;
    worst = std::max(worst, static_cast<double>(std::abs(sum / m.per_step.size() - m.avg)));
    last_ok &= m.last == m.per_step.back();
  }
  auto one = fixture_config(small.data.manifest_path, Method::candidate_ncm, 20);
  const auto single = run_experiment(one).metrics;
  const bool n1 = single.per_step.size() == 1 && single.avg == single.last;
  return {worst <= 1e-12 && last_ok && n1,
          "|Avg - mean(per step)| max " + fmt("%.3g", worst) + " (<= 1e-12); Last == final step " +
              (last_ok ? "exactly" : "NOT exactly") + "; N=1 Avg == Last " + (n1 ? "yes" : "no")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };

  report("streaming-mean oracle", streaming_mean);
  report("gradient oracle", gradient_oracle);
  report("NCM brute-force equivalence", ncm_brute_force);
  report("uniform-loss anchor", uniform_loss);

  const Fixtures fx;
  const SmallFixture small;
  report("forgetting reproduction", [&] { return forgetting(fx); });
  report("determinism", [&] { return determinism(fx, small); });
  report("single-pass audit", [&] { return single_pass(small); });
  report("metric identities", [&] { return metric_identities(small); });

  std::printf("%d of 8 criteria failed\n", failures);
  return failures ? 1 : 0;
}
