// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "common/fixtures.hpp"
#include "common/oracles.hpp"
#include "spg/spg.hpp"

using namespace spg;
using namespace spg::fixture;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// 1. Target construction equals the slow reference pipeline.
Outcome targets_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::size_t voxels = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto spec = oracle::random_spec(rng, 32);
    const auto scene = oracle::random_scene(rng, spec, 2000, 8);
    const int radius = static_cast<int>(rng.integer(0, 3));
    const bool expansion = rng.bernoulli(0.7), bev = rng.bernoulli(0.3);
    const std::uint64_t seed = rng.next_u64();
    const TargetOptions opt{radius, bev ? AreaMode::kBev2d : AreaMode::kVoxel3d, expansion, HideConfig{25.0, seed}};
    const auto t = build_targets(scene, spec, opt);
    const auto msg = oracle::compare_targets(t, oracle::ref_targets(scene, spec, radius, expansion, 25.0, seed, bev));
    if (!msg.empty()) return {false, "scene " + std::to_string(trial) + ": " + msg};
    voxels += t.voxels.size();
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "200 scenes, " << voxels << " voxels identical, " << secs << " s (limit 60 s)";
  return {secs < 60.0, d.str()};
}

// 2. point_in_box against fine rasterization.
Outcome geometry_oracle() {
  Rng rng(202);
  std::size_t disagreements = 0, skipped = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto b = oracle::random_box(rng, {-5, -5, -2}, {5, 5, 2});
    const Vec3 p{b.cx + rng.uniform(-4, 4), b.cy + rng.uniform(-3, 3), b.cz + rng.uniform(-2, 2)};
    if (oracle::boundary_distance(p, b) < 1e-3) {
      ++skipped;
      continue;
    }
    disagreements += point_in_box(p, b) != oracle::raster_in_box(p, b);
  }
  return {disagreements == 0, std::to_string(disagreements) + " disagreements in 1e5 pairs (" + std::to_string(skipped) +
                                  " inside the 1 mm band)"};
}

// 3. Finite-difference checks of every primitive and the end-to-end loss.
Outcome gradient_suite() {
  Rng rng(303);
  double worst = 0;
  std::string worst_name;
  auto check = [&](const std::string& name, const std::function<DTensor(Tape<double>&)>& f, const Probes& probes) {
    const double e = oracle::gradient_error(f, probes);
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  auto x = random_tensor(rng, {4, 5});
  for (auto& v : x.data()) {
    if (std::abs(v) < 0.05) v = 0.3;  // away from the relu kink
  }
  auto y = random_tensor(rng, {4, 5});
  auto pos = random_tensor(rng, {4, 5}, 0.2, 2.0);
  auto m = random_tensor(rng, {5, 3});
  check("matmul", [&](Tape<double>& t) { return project(t, ops::matmul(t, x, m), 1); }, all_of({x, m}));
  check("relu", [&](Tape<double>& t) { return project(t, ops::relu(t, x), 2); }, all_of({x}));
  check("sigmoid", [&](Tape<double>& t) { return project(t, ops::sigmoid(t, x), 3); }, all_of({x}));
  check("log", [&](Tape<double>& t) { return project(t, ops::log(t, pos), 4); }, all_of({pos}));
  check("scale", [&](Tape<double>& t) { return project(t, ops::scale(t, x, -1.5), 5); }, all_of({x}));
  check("add", [&](Tape<double>& t) { return project(t, ops::add(t, x, y), 6); }, all_of({x, y}));
  check("mul", [&](Tape<double>& t) { return project(t, ops::mul(t, x, y), 7); }, all_of({x, y}));
  std::vector<double> mulc(20), addc(20);
  for (std::size_t i = 0; i < 20; ++i) {
    mulc[i] = rng.uniform(-2, 2);
    addc[i] = rng.uniform(-1, 1);
  }
  check("affine_const", [&](Tape<double>& t) { return project(t, ops::affine_const(t, x, mulc, addc), 8); }, all_of({x}));
  check("sum", [&](Tape<double>& t) { return ops::sum(t, ops::mul(t, x, x)); }, all_of({x}));
  auto rb = random_tensor(rng, {5});
  check("add_row_bias", [&](Tape<double>& t) { return project(t, ops::add_row_bias(t, x, rb), 9); }, all_of({x, rb}));
  auto img = random_tensor(rng, {3, 6, 5});
  auto cb = random_tensor(rng, {3});
  check("add_channel_bias", [&](Tape<double>& t) { return project(t, ops::add_channel_bias(t, img, cb), 10); },
        all_of({img, cb}));
  auto w = random_tensor(rng, {2, 3, 3, 3});
  for (std::size_t stride : {1u, 2u}) {
    check("conv2d", [&](Tape<double>& t) { return project(t, ops::conv2d(t, img, w, stride, 1), 11); }, all_of({img, w}));
  }
  check("upsample_nearest", [&](Tape<double>& t) { return project(t, ops::upsample_nearest(t, img), 12); }, all_of({img}));
  auto rows = random_tensor(rng, {12, 4});
  check("segment_max", [&](Tape<double>& t) { return project(t, ops::segment_max(t, rows, {0, 3, 4, 12}), 13); },
        all_of({rows}));
  check("setmax", [&](Tape<double>& t) { return project(t, ops::setmax(t, rows).first, 14); }, all_of({rows}));
  auto a2 = random_tensor(rng, {2, 4});
  check("concat0", [&](Tape<double>& t) { return project(t, ops::concat0(t, rows, a2), 15); }, all_of({rows, a2}));
  auto flat = random_tensor(rng, {6});
  const std::vector<std::size_t> positions{7, 0, 19, 3, 11, 2};
  check("index_scatter", [&](Tape<double>& t) { return project(t, ops::index_scatter(t, flat, {4, 5}, positions), 16); },
        all_of({flat}));
  check("index_gather", [&](Tape<double>& t) { return project(t, ops::index_gather(t, x, {6}, positions), 17); },
        all_of({x}));
  check("reshape", [&](Tape<double>& t) { return project(t, ops::reshape(t, x, {2, 10}), 18); }, all_of({x}));
  auto probs = random_tensor(rng, {8}, 0.05, 0.95);
  std::vector<bool> labels{true, false, true, true, false, false, true, false};
  std::vector<double> coef{0.5, 1, 2, 0.1, 0.3, 1, 0, 4};
  check("weighted_focal", [&](Tape<double>& t) { return ops::weighted_focal(t, probs, labels, coef, LossWeights{}); },
        all_of({probs}));
  auto pred = random_tensor(rng, {5, 4}, -3, 3);
  std::vector<double> target(20), scl{1.25, 1.25, 2.5, 1};
  for (auto& v : target) v = rng.uniform(-3, 3);
  check("weighted_smooth_l1",
        [&](Tape<double>& t) { return ops::weighted_smooth_l1(t, pred, target, scl, {1, 0.5, 2, 0, 1}); }, all_of({pred}));
  const double primitive_worst = worst;

  // end to end on a synthetic scene; biases off zero so empty cells avoid the relu kink
  RunConfig cfg;
  cfg.network.channel_width = 4;
  cfg.network.level1_convs = 2;
  cfg.network.level2_convs = 1;
  cfg.area_radius = 2;
  const auto scene = make_scene(SceneRecipe{}, 0);
  const auto targets = build_targets(scene, cfg.grid, cfg.target_options(11));
  SpgModel<double> model(cfg.network, static_cast<std::size_t>(cfg.grid.nz()), 1, 3);
  auto& params = model.parameters();
  for (auto& [name, t] : params) {
    if (name.ends_with(".b")) {
      for (auto& v : t.data()) v = rng.uniform(-0.2, 0.2);
    }
  }
  Probes probes;
  for (int k = 0; k < 20; ++k) {
    auto& t = params[static_cast<std::size_t>(rng.below(params.size()))].second;
    probes.emplace_back(t, static_cast<std::size_t>(rng.below(t.numel())));
  }
  const double e2e = oracle::gradient_error(
      [&](Tape<double>& tape) { return spg_loss(tape, model, targets, cfg.loss).total; }, probes, 1e-6);
  std::ostringstream d;
  d << "primitives max rel err " << primitive_worst << " (" << worst_name << ", limit 1e-5); end-to-end " << e2e
    << " over 20 parameters (limit 1e-4)";
  return {primitive_worst < 1e-5 && e2e < 1e-4, d.str()};
}

// 4. Loss formulas and shipped constants.
Outcome loss_fidelity() {
  std::vector<std::string> failures;
  LossWeights ce;
  ce.focal_gamma = 0;
  ce.focal_balance = 0.5;
  Rng rng(404);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.uniform(1e-4, 1 - 1e-4);
    const bool y = rng.bernoulli(0.5);
    worst = std::max(worst, std::abs(focal_loss(p, y, ce) - 0.5 * -(y ? std::log(p) : std::log(1 - p))));
  }
  if (worst > 1e-12) failures.push_back("focal vs 0.5*CE");
  const auto six = six_voxels();
  if (classification_loss(six.preds, six.targets, LossWeights{}) != six_voxels_expected_loss()) {
    failures.push_back("six-voxel case");
  }
  if (smooth_l1(0.5) != 0.125 || smooth_l1(2.0) != 1.5 || smooth_l1(-2.0) != 1.5) failures.push_back("smooth-L1");
  const RunConfig c = config_from_json(nlohmann::json::object());
  if (c.gamma_percent != 25.0 || c.loss.alpha != 0.5 || c.loss.beta != 2.0 || c.generation.p_thresh != 0.5 ||
      c.area_radius != 6 || c.generation.k_max != kMaxSemanticPointsWaymo || kMaxSemanticPointsWaymo != 8000 ||
      kMaxSemanticPointsKitti != 6000 ||
      config_from_json({{"generation", {{"profile", "kitti"}}}}).generation.k_max != 6000) {
    failures.push_back("shipped defaults");
  }
  std::ostringstream d;
  d << "focal/CE max diff " << worst << "; six-voxel, smooth-L1 and defaults "
    << (failures.empty() ? "exact" : "FAILED:");
  for (const auto& f : failures) d << " " << f;
  return {failures.empty(), d.str()};
}

// 5. Hide-and-Predict contract.
Outcome hide_contract() {
  Rng rng(505);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = oracle::random_spec(rng, 24);
    const auto scene = oracle::random_scene(rng, spec, 2000, 6);
    const auto grid = voxelize(scene.cloud, spec);
    const auto seed = rng.next_u64();
    const auto h = hide_and_predict(scene, grid, HideConfig{25.0, seed});
    const std::size_t expect = static_cast<std::size_t>(std::floor(0.25 * static_cast<double>(grid.occupied().size()) + 0.5));
    if (h.hidden.size() != expect) return {false, "scene " + std::to_string(trial) + ": hidden count"};
    for (std::size_t i = 0; i < h.cloud.size(); ++i) {
      const auto c = spec.locate(h.cloud.xyz(i));
      if (c && std::binary_search(h.hidden.begin(), h.hidden.end(), spec.linear(*c))) {
        return {false, "scene " + std::to_string(trial) + ": hidden-voxel point survived"};
      }
    }
    const auto with = build_targets(scene, spec, TargetOptions{2, AreaMode::kVoxel3d, true, HideConfig{25.0, seed}});
    const auto without = build_targets(scene, spec, TargetOptions{2, AreaMode::kVoxel3d, true, HideConfig{0.0, seed}});
    if (with.voxels.size() != without.voxels.size()) return {false, "area changed by hiding"};
    for (std::size_t i = 0; i < with.voxels.size(); ++i) {
      if (with.voxels[i].y_f != without.voxels[i].y_f) return {false, "label changed by hiding"};
    }
  }
  return {true, "50 scenes: counts round(0.25|occupied|), no hidden points remain, labels unchanged"};
}

// 6. Expansion increases foreground voxels in the generation area.
Outcome expansion_property() {
  const RunConfig cfg;
  std::size_t applicable = 0, violations = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto scene = make_scene(cfg.recipe, 5000 + i);
    const auto grid = voxelize(scene.cloud, cfg.grid);
    const auto area = generation_area(grid, 6, AreaMode::kVoxel3d);
    const auto labels = label_voxels(scene, grid, area);
    std::size_t with = 0, without = 0;
    bool empty_in_box = false;
    for (const auto& l : labels) {
      with += l.y_f;
      const bool occupied = grid.slot_of(l.voxel).has_value();
      without += l.y_f && occupied;
      empty_in_box = empty_in_box || (!occupied && voxel_in_boxes(cfg.grid, l.voxel, scene.boxes));
    }
    if (empty_in_box) {
      ++applicable;
      violations += !(with > without);
    }
  }
  std::ostringstream d;
  d << applicable << "/50 scenes have an in-area empty voxel inside a box; " << violations << " violations";
  return {violations == 0 && applicable >= 45, d.str()};
}

// 7. Domain-shift ordering of the four variants.
struct ExperimentSetup {
  std::size_t steps = 1500;
  std::size_t batch = 1;
  std::size_t width = 8;
  double learning_rate = OptimizerConfig{}.learning_rate;
};

Outcome domain_shift(const ExperimentSetup& setup) {
  const auto t0 = Clock::now();
  RunConfig base;
  base.network.channel_width = setup.width;
  base.optimizer.steps = setup.steps;
  base.optimizer.batch_size = setup.batch;
  base.optimizer.learning_rate = setup.learning_rate;
  std::vector<Scene> dry, rainy;
  for (std::uint64_t i = 0; i < 100; ++i) dry.push_back(make_scene(base.recipe, i));
  SceneRecipe target_recipe = base.recipe;
  target_recipe.seed = 999;
  for (std::uint64_t i = 0; i < 50; ++i) rainy.push_back(degrade(make_scene(target_recipe, i), base.rainy.for_scene(i)));

  const char* names[4] = {"no strategy", "+hide", "+expansion", "full"};
  double ap[4] = {0, 0, 0, 0}, untrained = 0;
  const int seeds = 3;
  for (int seed = 0; seed < seeds; ++seed) {
    std::vector<double> run_ap(4);
    parallel_for(4, worker_count(), [&](std::size_t v) {
      RunConfig c = base;
      c.optimizer.seed = static_cast<std::uint64_t>(seed);
      c.hide_enabled = v & 1;
      c.expansion_enabled = v & 2;
      Trainer<float> tr(c, dry);
      tr.run(c.optimizer.steps);
      run_ap[v] = classifier_metrics(score_voxels(tr.model(), rainy, c.grid, 6)).ap;
    });
    for (int v = 0; v < 4; ++v) ap[v] += run_ap[static_cast<std::size_t>(v)] / seeds;
    RunConfig c = base;
    c.optimizer.seed = static_cast<std::uint64_t>(seed);
    const SpgModel<float> fresh(c.network, static_cast<std::size_t>(c.grid.nz()), 1, c.optimizer.seed);
    untrained += classifier_metrics(score_voxels(fresh, rainy, c.grid, 6)).ap / seeds;
    std::printf("    seed %d:", seed);
    for (int v = 0; v < 4; ++v) std::printf(" %s %.4f;", names[v], run_ap[static_cast<std::size_t>(v)]);
    std::printf("\n");
  }
  const bool pass = ap[3] >= ap[1] && ap[3] >= ap[2] && ap[1] >= untrained && ap[2] >= untrained && ap[3] - ap[0] >= 0.02;
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "mean AP untrained " << untrained;
  for (int v = 0; v < 4; ++v) d << ", " << names[v] << " " << ap[v];
  d << "; full - none = " << ap[3] - ap[0] << " (need >= 0.02); " << std::setprecision(0) << seconds_since(t0) << " s";
  return {pass, d.str()};
}

// 8. Average precision against the exhaustive oracle.
Outcome metrics_oracle() {
  Rng rng(808);
  double worst = 0;
  bool invariant = true;
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 400));
    const double rate = rng.uniform(0.02, 0.7);
    const bool coarse = rng.bernoulli(0.4);
    std::vector<ScoredLabel> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pos = rng.bernoulli(rate);
      double s = std::clamp(rng.uniform() * 0.8 + (pos ? 0.2 : 0.0), 0.0, 1.0);
      if (coarse) s = std::round(s * 20) / 20;
      pairs.push_back({s, pos});
    }
    const double ap = average_precision(pairs, 40);
    worst = std::max(worst, std::abs(ap - oracle::ref_average_precision(pairs, 40)));
    auto transformed = pairs;
    for (auto& p : transformed) p.score = std::exp(4 * p.score) * 3 - 1;
    invariant = invariant && average_precision(transformed, 40) == ap;
  }
  std::ostringstream d;
  d << "1000 sets, max |AP - oracle| " << worst << " (limit 1e-9); monotone transform " << (invariant ? "exact" : "CHANGED AP");
  return {worst <= 1e-9 && invariant, d.str()};
}

// 9. Generation contract.
Outcome generation_contract() {
  Rng rng(909);
  std::vector<VoxelPrediction> preds;
  for (int i = 0; i < 10000; ++i) {
    const double p = i % 3 == 0 ? static_cast<double>(rng.integer(0, 10)) / 10.0 : rng.uniform();  // many ties
    preds.push_back({static_cast<VoxelIndex>(rng.below(1u << 22)), p, {rng.uniform(), rng.uniform(), rng.uniform()},
                     {rng.uniform()}});
  }
  GenerationConfig cfg;
  cfg.k_max = 3000;
  const auto sel = select_points(preds, cfg);
  std::vector<VoxelIndex> got;
  for (const auto& s : sel) got.push_back(s.voxel);
  const bool order_ok = got == oracle::ref_select(preds, cfg.p_thresh, cfg.k_max);

  PointCloud cloud(1);
  for (int i = 0; i < 500; ++i) {
    const float f[1] = {static_cast<float>(rng.uniform())};
    cloud.push_back(static_cast<float>(rng.uniform(0, 20)), static_cast<float>(rng.uniform(-10, 10)),
                    static_cast<float>(rng.uniform(-2, 1)), f);
  }
  const auto aug = augment(cloud, sel, cfg);
  std::ostringstream a(std::ios::binary), b(std::ios::binary);
  io::write_cloud(a, io::CloudFile::augmented(aug));
  std::istringstream in(a.str());
  io::write_cloud(b, io::read_cloud(in));
  const bool bytes_ok = a.str() == b.str();

  std::vector<std::size_t> counts;
  for (double t : {0.3, 0.4, 0.5, 0.6, 0.7}) {
    GenerationConfig c;
    c.p_thresh = t;
    counts.push_back(select_points(preds, c).size());
  }
  const bool monotone = std::is_sorted(counts.rbegin(), counts.rend());
  std::ostringstream d;
  d << "select vs full sort " << (order_ok ? "identical" : "DIFFERENT") << " (" << sel.size()
    << " selected of 1e4); augmented round trip " << (bytes_ok ? "byte-exact" : "DIFFERENT") << "; sweep counts";
  for (auto c : counts) d << " " << c;
  return {order_ok && bytes_ok && monotone, d.str()};
}

// 10. RndDrop binomial bound.
Outcome rnd_drop_bound() {
  PointCloud c(0);
  for (int i = 0; i < 10000; ++i) c.push_back(static_cast<float>(i), 0, 0);
  const double mean = 10000 * 0.83, sd = std::sqrt(10000 * 0.83 * 0.17);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    worst = std::max(worst, std::abs(static_cast<double>(rnd_drop(c, 0.17, seed).size()) - mean) / sd);
  }
  std::ostringstream d;
  d << "100 seeds, largest deviation " << worst << " sigma (limit 3)";
  return {worst <= 3.0, d.str()};
}

}  // namespace

// Optional arguments pick criteria by number; default runs all.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"targets match reference pipeline", targets_oracle},
      {"point-in-box matches rasterization", geometry_oracle},
      {"gradient suite", gradient_suite},
      {"loss formulas and defaults", loss_fidelity},
      {"hide-and-predict contract", hide_contract},
      {"expansion adds foreground voxels", expansion_property},
      {"domain-shift ordering", [] { return domain_shift(ExperimentSetup{}); }},
      {"average precision oracle", metrics_oracle},
      {"generation contract", generation_contract},
      {"rnd-drop binomial bound", rnd_drop_bound},
  };
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const auto k = static_cast<std::size_t>(std::atoi(argv[a]));
    if (k < 1 || k > criteria.size()) {
      std::fprintf(stderr, "unknown criterion %s\n", argv[a]);
      return 2;
    }
    selected[k - 1] = true;
  }
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
