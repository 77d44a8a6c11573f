// Copyright 2026 The wmdagger Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference kernels against their OpenMP versions. Resolutions are the
// benchmark argument (square images).

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include "wmdagger/harness.h"
#include "wmdagger/kernels.h"
#include "wmdagger/synthesis.h"

namespace wmdagger {
namespace {

CameraIntrinsics square(int n) {
  const double f = n / 2.0;
  return CameraIntrinsics{f, f, f, f, n, n};
}

CameraPose looking_down() {
  CameraPose p;
  p.rotation = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
  p.origin = Vec3(0.0, 0.0, 0.3);
  return p;
}

RenderScene bench_scene() {
  RenderScene s;
  s.texture_seed = 7;
  s.has_target = true;
  s.target_lo = Eigen::Vector2d(0.05, 0.05);
  s.target_hi = Eigen::Vector2d(0.15, 0.15);
  RenderPrimitive obj;
  obj.center = Vec3(0.0, 0.0, 0.03);
  obj.half_extent = Vec3(0.04, 0.04, 0.03);
  s.object = obj;
  return s;
}

template <bool kParallel>
void BM_RayGrid(benchmark::State& state) {
  const CameraIntrinsics k = square(static_cast<int>(state.range(0)));
  const CameraPose pose = looking_down();
  RayGrid out(k.height, k.width, 3);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::omp::ray_grid(pose, k, out);
    } else {
      kernels::serial::ray_grid(pose, k, out);
    }
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * k.width * k.height);
}

template <bool kParallel>
void BM_DenseGeo(benchmark::State& state) {
  const CameraIntrinsics k = square(static_cast<int>(state.range(0)));
  const CameraPose a = looking_down();
  CameraPose b = a;
  b.origin += Vec3(0.01, 0.0, 0.0);
  b.rotation = Eigen::AngleAxisd(0.1, Vec3::UnitZ()).toRotationMatrix() * a.rotation;
  DenseTensor out(k.height, k.width, DenseGeoCondition::kChannels);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::omp::dense_geo_condition(a, b, k, 1.0, out);
    } else {
      kernels::serial::dense_geo_condition(a, b, k, 1.0, out);
    }
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * k.width * k.height);
}

template <bool kParallel>
void BM_Render(benchmark::State& state) {
  const CameraIntrinsics k = square(static_cast<int>(state.range(0)));
  const CameraPose pose = looking_down();
  const RenderScene scene = bench_scene();
  std::vector<float> out(static_cast<size_t>(k.width) * k.height);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::omp::render(scene, pose, k, out);
    } else {
      kernels::serial::render(scene, pose, k, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * k.width * k.height);
}

template <bool kParallel>
void BM_SynthesizeBatch(benchmark::State& state) {
  spdlog::set_level(spdlog::level::warn);
  const EnvConfig env = EnvConfig::for_task(TaskId::kPush);
  const auto demos = collect_demos(env, 5, 1);
  const OracleWM wm(env);
  SynthesisConfig cfg;
  cfg.episodes = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto batch = kParallel ? synthesize_batch(demos, wm, cfg, env)
                           : synthesize_batch_serial(demos, wm, cfg, env);
    benchmark::DoNotOptimize(batch.data());
  }
  state.SetItemsProcessed(state.iterations() * cfg.episodes);
}

BENCHMARK(BM_RayGrid<false>)->Name("ray_grid/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_RayGrid<true>)->Name("ray_grid/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_DenseGeo<false>)->Name("dense_geo/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_DenseGeo<true>)->Name("dense_geo/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_Render<false>)->Name("render/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Render<true>)->Name("render/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_SynthesizeBatch<false>)->Name("synthesize_batch/serial")->Arg(200)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SynthesizeBatch<true>)->Name("synthesize_batch/omp")->Arg(200)
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace wmdagger

BENCHMARK_MAIN();
