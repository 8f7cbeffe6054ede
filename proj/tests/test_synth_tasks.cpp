#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixture.hpp"

using namespace metafit;

TEST(MixSeed, MatchesReferenceSplitMix) {
  EXPECT_EQ(mix_seed(0, 0), 16294208416658607535ULL);
  EXPECT_EQ(mix_seed(42, 7), 14769051326987775908ULL);
  EXPECT_EQ(mix_seed(18446744073709551615ULL, 3), 7862637804313477842ULL);
}

TEST(Profiles, BuiltinValues) {
  const auto c = builtin_profile("clean");
  EXPECT_EQ(c.keypoint_noise_std, 0.005);
  EXPECT_EQ(c.occlusion_prob, 0.0);
  const auto h = builtin_profile("hard");
  EXPECT_EQ(h.keypoint_noise_std, 0.03);
  EXPECT_EQ(h.occlusion_prob, 0.3);
  EXPECT_THROW(builtin_profile("nope"), Error);
  DomainProfile bad = c;
  bad.camera_scale_low = 2.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(SampleTask, NoiselessDataTermVanishes) {
  const auto t = default_tree();
  for (const auto& task : generate_dataset(t, noiseless_profile(), 20, 1)) {
    const auto terms = energy_terms(t, task.gt, task.obs, EnergyConfig{});
    EXPECT_LT(terms.data, 1e-28);
    EXPECT_NEAR(terms.total(), terms.pose_prior + terms.shape_prior, 1e-15);
  }
}

TEST(SampleTask, FixedSeedIsReproducible) {
  const auto t = default_tree();
  std::mt19937_64 a(99), b(99);
  const auto x = sample_task(t, hard_profile(), a, 3);
  const auto y = sample_task(t, hard_profile(), b, 3);
  EXPECT_EQ(to_json(x).dump(), to_json(y).dump());
}

TEST(SampleTask, SampledRangesHold) {
  const auto t = default_tree();
  for (const auto& task : generate_dataset(t, hard_profile(), 200, 5)) {
    EXPECT_LE(task.gt.beta.cwiseAbs().maxCoeff(), 3.0);
    EXPECT_GE(task.gt.camera[0], 0.6);
    EXPECT_LE(task.gt.camera[0], 1.4);
    EXPECT_GT(task.obs.weights.maxCoeff(), 0.0);
    EXPECT_EQ(task.domain, "hard");
  }
}

TEST(SampleTask, ResidualStdMatchesNoise) {
  const auto t = default_tree();
  DomainProfile p = clean_profile();
  p.keypoint_noise_std = 0.02;
  double sq = 0.0;
  int n = 0;
  for (const auto& task : generate_dataset(t, p, 420, 6)) {
    const auto proj = project_all(task.gt.camera, forward_kinematics(t, task.gt));
    for (int j = 0; j < 24; ++j) {
      const Vec2 r = task.obs.keypoints[static_cast<std::size_t>(j)] - proj[static_cast<std::size_t>(j)];
      sq += r.squaredNorm();
      n += 2;
    }
  }
  EXPECT_GE(n, 20000);
  EXPECT_NEAR(std::sqrt(sq / n), 0.02, 0.03 * 0.02);
}

TEST(SampleTask, OcclusionRate) {
  const auto t = default_tree();
  int low = 0, total = 0;
  for (const auto& task : generate_dataset(t, hard_profile(), 100, 7)) {
    for (int j = 0; j < 24; ++j) low += task.obs.weights[j] < 1.0 ? 1 : 0;
    total += 24;
  }
  EXPECT_NEAR(static_cast<double>(low) / total, 0.3, 0.03);
}

TEST(Dataset, SingletonAndIds) {
  const auto t = default_tree();
  EXPECT_EQ(generate_dataset(t, clean_profile(), 1, 3).size(), 1u);
  const auto ds = generate_dataset(t, clean_profile(), 25, 3);
  for (int i = 0; i < 25; ++i) EXPECT_EQ(ds[static_cast<std::size_t>(i)].id, i);
  EXPECT_THROW(generate_dataset(t, clean_profile(), 0, 3), Error);
}

TEST(Dataset, DifferentSeedsDiffer) {
  const auto t = default_tree();
  const auto a = generate_dataset(t, clean_profile(), 5, 1);
  const auto b = generate_dataset(t, clean_profile(), 5, 2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NE(a[i].obs.keypoints[3], b[i].obs.keypoints[3]);
}

TEST(DomainPair, ProvenanceAndSameDomain) {
  const auto t = default_tree();
  const auto [train, test] = domain_pair(t, clean_profile(), hard_profile(), {10, 4}, 8);
  EXPECT_EQ(train.size(), 10u);
  EXPECT_EQ(test.size(), 4u);
  for (const auto& task : train) EXPECT_EQ(task.domain, "clean");
  for (const auto& task : test) EXPECT_EQ(task.domain, "hard");
  const auto [a, b] = domain_pair(t, clean_profile(), clean_profile(), {3, 3}, 8);
  for (const auto& task : b) EXPECT_EQ(task.domain, "clean");
  EXPECT_EQ(to_json(a[0]).dump(), to_json(train[0]).dump());
}

TEST(TaskFile, RoundTripIsExactAndByteStable) {
  const auto t = default_tree();
  const auto tasks = generate_dataset(t, hard_profile(), 12, 4);
  const auto dir = std::filesystem::temp_directory_path() / "metafit_task_file_test";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "a.jsonl").string(), p2 = (dir / "b.jsonl").string();
  write_tasks(p1, tasks);
  const auto back = read_tasks(p1);
  ASSERT_EQ(back.size(), tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    EXPECT_EQ(back[i].gt.flat(), tasks[i].gt.flat());
    EXPECT_EQ(back[i].gt.beta, tasks[i].gt.beta);
    EXPECT_EQ(back[i].obs.weights, tasks[i].obs.weights);
    EXPECT_EQ(back[i].obs.keypoints, tasks[i].obs.keypoints);
  }
  write_tasks(p2, generate_dataset(t, hard_profile(), 12, 4));
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(slurp(p1), slurp(p2));
  const auto j = nlohmann::json::parse(slurp(p1).substr(0, slurp(p1).find('\n')));
  EXPECT_EQ(j.size(), 4u);
  EXPECT_TRUE(j.contains("id") && j.contains("domain") && j.contains("gt") && j.contains("obs"));
  std::filesystem::remove_all(dir);
}

TEST(TaskFile, MissingFileIsIoError) {
  try {
    read_tasks("/nonexistent/tasks.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}
