// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [criterion ...] [--strict]
//
// Without arguments every criterion runs. The exit status is non-zero when a
// criterion fails that is not listed in kKnownRed, or with --strict when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "oracles.hpp"
#include "sgce/container.hpp"
#include "sgce/data.hpp"
#include "sgce/error.hpp"
#include "sgce/gradsuite.hpp"
#include "sgce/metrics.hpp"
#include "sgce/optim.hpp"
#include "sgce/skeleton.hpp"
#include "sgce/trainer.hpp"
#include "test_util.hpp"

using namespace sgce;
namespace fs = std::filesystem;

namespace {

// Criteria whose failure is analysed in the README rather than fixed.
const std::set<int> kKnownRed{6, 9};

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Shared synthetic dataset: 100 glyphs per font at 32 px.
const fs::path& synth_root() {
  static const testutil::TempDir dir("acceptance_data");
  static const bool made = (synth_fonts(dir.path(), 100, 32, 1), true);
  (void)made;
  return dir.path();
}

const GlyphDataset& synth_dataset() {
  static const GlyphDataset ds =
      load_dataset(Manifest::load(synth_root() / kManifestName), synth_root(), kSynthFontA, kSynthFontB, 32);
  return ds;
}

Outcome thinning_predicate() {
  std::size_t mismatches = 0;
  for (int pattern = 0; pattern < 512; ++pattern) {
    // bit 8 is the centre, bits 0..7 are p2..p9
    const auto neighbours = oracle::unpack(pattern & 0xff);
    const bool centre = (pattern >> 8) & 1;
    for (Subpass sp : {Subpass::A, Subpass::B}) {
      const bool first = sp == Subpass::A;
      if (centre && deletable(PatchStats::from_neighbors(neighbours), sp) != oracle::oracle_deletable(neighbours, first))
        ++mismatches;
      // the same decision through the grid path
      BinaryGrid g(3, 3);
      const int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
      const int dy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
      for (int i = 0; i < 8; ++i) g.at(1 + dx[i], 1 + dy[i]) = neighbours[static_cast<std::size_t>(i)];
      g.at(1, 1) = centre;
      const bool expect = centre && !oracle::oracle_deletable(neighbours, first);
      thin_subpass(g, sp);
      if ((g.at(1, 1) == 1) != expect) ++mismatches;
    }
  }
  return {mismatches == 0, "512 neighbourhoods x 2 subpasses, " + std::to_string(mismatches) + " mismatches"};
}

Outcome thinning_invariants() {
  std::mt19937_64 rng(2024);
  std::size_t bad_subset = 0, bad_fixpoint = 0, bad_components = 0, grids = 0;
  for (double density : {0.2, 0.4, 0.6})
    for (int i = 0; i < 500; ++i) {
      const BinaryGrid g = testutil::random_grid(rng, 16, 16, density);
      const BinaryGrid t = thin(g);
      bad_subset += !oracle::subset(t, g);
      bad_fixpoint += !(thin(t) == t);
      bad_components += oracle::bfs_components(t) > oracle::bfs_components(g);
      ++grids;
    }
  const bool ok = bad_subset + bad_fixpoint + bad_components == 0;
  return {ok, std::to_string(grids) + " grids; violations subset " + std::to_string(bad_subset) + ", fixpoint " +
                  std::to_string(bad_fixpoint) + ", components " + std::to_string(bad_components)};
}

Outcome gradient_suite() {
  const auto results = run_gradient_suite(7, 50);
  double worst = 0.0;
  std::string worst_op, failed;
  std::size_t min_configs = SIZE_MAX;
  for (const auto& r : results) {
    min_configs = std::min(min_configs, r.configs);
    if (r.max_error > worst) {
      worst = r.max_error;
      worst_op = r.op;
    }
    if (!(r.max_error < kGradTolerance)) failed += " " + r.op;
  }
  const bool ok = failed.empty() && min_configs >= 50 && !results.empty();
  return {ok, std::to_string(results.size()) + " checks x " + std::to_string(min_configs) + " configs, worst " +
                  fmt(worst) + " (" + worst_op + ")" + (failed.empty() ? "" : ", failing:" + failed)};
}

Outcome adam_oracle() {
  const double lr = 2e-4, b1 = 0.5, b2 = 0.999, eps = 1e-8;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double p0 = u(rng), g1 = u(rng), g2 = u(rng);
    Tensor p = Tensor::scalar(p0, true);
    std::vector<Tensor> params{p};
    AdamState st({lr, b1, b2, eps}, params);

    p.grad()[0] = g1;
    adam_step(params, st);
    // step 1: bias-corrected moments reduce to g and g^2
    const double m1 = (1 - b1) * g1, v1 = (1 - b2) * g1 * g1;
    const double p1 = p0 - lr * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
    worst = std::max(worst, std::abs(p.item() - p1));

    p.zero_grad();
    p.grad()[0] = g2;
    adam_step(params, st);
    const double m2 = b1 * m1 + (1 - b1) * g2, v2 = b2 * v1 + (1 - b2) * g2 * g2;
    const double p2 = p1 - lr * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);
    worst = std::max(worst, std::abs(p.item() - p2));
  }
  return {worst < 1e-12, "100 one- and two-step cases, max abs error " + fmt(worst)};
}

Outcome metric_oracles() {
  std::vector<std::string> failures;
  const auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  std::mt19937_64 rng(5);
  const RasterImage a = testutil::random_image(rng, 24, 24, 1), b = testutil::random_image(rng, 24, 24, 1);
  expect(mse(a, a) == 0.0, "mse identity");
  expect(mse(RasterImage(8, 8, 1, 0.0), RasterImage(8, 8, 1, 1.0)) == 1.0, "mse extremes");
  expect(std::isinf(psnr(a, a)), "psnr identity");
  expect(std::abs(psnr_from_mse(0.25) - 6.0206) < 1e-4, "psnr at 0.25");
  expect(std::abs(ssim(a, a) - 1.0) < 1e-9, "ssim identity");
  expect(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12, "ssim symmetry");
  expect(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-10, "ssim brute force");
  const double c1 = 1e-4;
  expect(std::abs(ssim(RasterImage(12, 12, 1, 0.5), RasterImage(12, 12, 1, 0.7)) -
                  (2 * 0.5 * 0.7 + c1) / (0.25 + 0.49 + c1)) < 1e-12,
         "ssim constant images");

  std::uniform_real_distribution<double> mu(-3.0, 3.0), var(0.01, 5.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = trial == 0 ? 1 : 1 + static_cast<int>(rng() % 8);
    FeatureStats s1, s2;
    s1.mean.resize(d);
    s2.mean.resize(d);
    Eigen::VectorXd d1(d), d2(d);
    double closed = 0.0;
    for (int j = 0; j < d; ++j) {
      s1.mean(j) = mu(rng);
      s2.mean(j) = mu(rng);
      d1(j) = var(rng);
      d2(j) = var(rng);
      closed += std::pow(s1.mean(j) - s2.mean(j), 2) + std::pow(std::sqrt(d1(j)) - std::sqrt(d2(j)), 2);
    }
    s1.cov = d1.asDiagonal();
    s2.cov = d2.asDiagonal();
    worst = std::max(worst, std::abs(fid(s1, s2) - closed) / std::max(closed, 1e-300));
  }
  expect(worst < 1e-6, "fid closed forms (rel " + fmt(worst) + ")");
  std::string detail = "mse/psnr/ssim cases and 100 fid closed forms, worst fid rel error " + fmt(worst);
  for (const auto& f : failures) detail += "; failed " + f;
  return {failures.empty(), detail};
}

Outcome psnr_convention() {
  // method, average MSE and reported average PSNR over fourteen tasks
  struct Row {
    const char* method;
    double mse;
  };
  const Row rows[] = {{"CycleGAN", 0.166}, {"SQ-GAN", 0.175}, {"StrokeGAN", 0.145}, {"SkeGAN", 0.134}, {"SGCE-Font", 0.129}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double db = psnr_from_mse(r.mse);
    const bool in_band = db >= 7.7 && db <= 9.4;
    ok = ok && in_band;
    detail += std::string(detail.empty() ? "" : ", ") + r.method + " " + fmt(r.mse) + " -> " + fmt(db) + " dB" + (in_band ? "" : " (outside 7.7-9.4)");
  }
  return {ok, detail};
}

Outcome ablation_exactness() {
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.sgce_enabled = false;
  TrainingState ours(cfg), ref(cfg);
  const auto& ds = synth_dataset();
  std::size_t first_diff = 0;
  for (std::size_t step = 0; step < 10; ++step) {
    const auto bx = std::span(ds.x_train).subspan(step * 4, 4);
    const auto by = std::span(ds.y_train).subspan(79 - step * 4 - 3, 4);
    train_step(ours, bx, by);
    oracle::cyclegan_step(ref, bx, by);
    if (first_diff == 0 && serialize(to_checkpoint(ours)) != serialize(to_checkpoint(ref))) first_diff = step + 1;
  }
  return {first_diff == 0, first_diff == 0 ? "10 steps bit-identical to the reference CycleGAN step"
                                           : "diverged at step " + std::to_string(first_diff)};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome checkpoint_resume() {
  testutil::TempDir dir("acceptance_resume");
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 3;
  cfg.max_steps = 50;
  const auto& ds = synth_dataset();

  TrainingState full(cfg);
  train(full, ds, {dir.path() / "full.csv", dir.path() / "full.ckpt", {}});

  TrainConfig half = cfg;
  half.max_steps = 25;
  TrainingState first(half);
  train(first, ds, {dir.path() / "part.csv", dir.path() / "part.ckpt", {}});
  TrainingState resumed = from_checkpoint(load_container(dir.path() / "part.ckpt"));
  resumed.config.max_steps = 50;
  train(resumed, ds, {dir.path() / "part.csv", dir.path() / "resumed.ckpt", {}});

  save_container(dir.path() / "again.ckpt", to_checkpoint(from_checkpoint(load_container(dir.path() / "full.ckpt"))));
  const bool roundtrip = file_bytes(dir.path() / "full.ckpt") == file_bytes(dir.path() / "again.ckpt");
  const bool resume = file_bytes(dir.path() / "full.ckpt") == file_bytes(dir.path() / "resumed.ckpt");
  const bool logs = file_bytes(dir.path() / "full.csv") == file_bytes(dir.path() / "part.csv");
  return {roundtrip && resume && logs, std::string("save/load/save ") + (roundtrip ? "identical" : "differs") +
                                           ", 25+25 vs 50 steps " + (resume ? "identical" : "differs") + ", logs " +
                                           (logs ? "identical" : "differ")};
}

Outcome synthetic_task() {
  const auto& ds = synth_dataset();
  std::vector<double> div_on, div_off;
  double worst_ratio = 0.0;
  std::size_t non_finite = 0, too_slow = 0;
  std::string per_run;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (bool enabled : {true, false}) {
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.sgce_enabled = enabled;
      cfg.epochs = 100;
      cfg.max_steps = 500;
      TrainingState st(cfg);
      std::vector<double> cyc;
      try {
        train(st, ds, {{}, {}, [&](std::uint64_t, const LossBreakdown& b) { cyc.push_back(b.cyc); }});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFiniteLoss) throw;
        ++non_finite;
        continue;
      }
      const std::size_t tenth = cyc.size() / 10;
      double head = 0.0, tail = 0.0;
      for (std::size_t i = 0; i < tenth; ++i) {
        head += cyc[i];
        tail += cyc[cyc.size() - tenth + i];
      }
      const double ratio = tail / head;
      worst_ratio = std::max(worst_ratio, ratio);
      too_slow += ratio > 0.7;
      const double div = diversity_diagnostic(generate(st, ds.x_test, Direction::XtoY), ds.y_test).score;
      (enabled ? div_on : div_off).push_back(div);
      per_run += " s" + std::to_string(seed) + (enabled ? "+" : "-") + ":" + fmt(ratio) + "/" + fmt(div);
    }
  const auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double med_on = median(div_on), med_off = median(div_off);
  const bool ok = non_finite == 0 && too_slow == 0 && med_on >= med_off;
  return {ok, "non-finite runs " + std::to_string(non_finite) + "; runs with cycle ratio > 0.7: " + std::to_string(too_slow) +
                  " (worst " + fmt(worst_ratio) + "); median diversity SGCE " + fmt(med_on) + " vs plain " + fmt(med_off) +
                  "; per run ratio/diversity:" + per_run};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string("\"") + SGCE_CLI_PATH + "\" " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
  testutil::TempDir dir("acceptance_cli");
  const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  const fs::path data = dir.path() / "data";
  if (run_cli("synth --out " + q(data) + " --n 20 --size 32 --seed 5") != 0) return {false, "synth failed"};
  std::vector<std::string> csv;
  for (const char* tag : {"a", "b"}) {
    const fs::path ckpt = dir.path() / (std::string(tag) + ".ckpt"), out = dir.path() / (std::string(tag) + ".csv");
    if (run_cli("train --data " + q(data) + " --seed 9 --max-steps 8 --out " + q(ckpt)) != 0) return {false, "train failed"};
    if (run_cli("eval --checkpoint " + q(ckpt) + " --data " + q(data) + " --out " + q(out)) != 0) return {false, "eval failed"};
    csv.push_back(file_bytes(out));
  }
  const bool ok = csv[0] == csv[1] && !csv[0].empty();
  return {ok, ok ? "two train+eval runs gave identical CSV bytes" : "CSV differs between runs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{
      thinning_predicate, thinning_invariants, gradient_suite, adam_oracle,    metric_oracles,
      psnr_convention,    ablation_exactness,  checkpoint_resume, synthetic_task, cli_determinism};

  bool strict = false;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--strict") {
      strict = true;
    } else {
      const int n = std::atoi(arg.c_str());
      if (n < 1 || n > static_cast<int>(criteria.size())) {
        std::cerr << "usage: acceptance [1-10 ...] [--strict]\n";
        return 1;
      }
      selected.insert(n);
    }
  }

  int passed = 0, ran = 0;
  bool unexpected = false;
  for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++ran;
    passed += o.pass;
    if (!o.pass && (strict || !kKnownRed.count(n))) unexpected = true;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " [" << fmt(secs) << " s] " << o.detail
              << (!o.pass && kKnownRed.count(n) ? " (known, see README)" : "") << std::endl;
  }
  std::cout << passed << "/" << ran << " criteria passed" << std::endl;
  return unexpected ? 1 : 0;
}
