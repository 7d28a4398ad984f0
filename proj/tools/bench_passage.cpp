// Throughput probe: point-to-point passage times on uniform weights.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "fpp/passage.hpp"

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 200;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 20;
  fpp::WeightField<2> base(7, fpp::Uniform{0, 1.0 / 16});
  std::uint64_t nodes = 0;
  double sum = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) {
    auto f = base.reseed(r);
    auto res = fpp::passage_time(f, fpp::point_query<2>({0, 0}, {n, 0}));
    nodes += res.nodes_expanded;
    sum += res.time.value();
  }
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double sum2 = 0;
  auto t1 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) {
    auto f = base.reseed(r);
    sum2 += fpp::point_time(f, {0, 0}, {n, 0}).value();
  }
  double s2 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  std::printf("bidirectional: mean T=%.5f %.3f ms/query\n", sum2 / reps, 1e3 * s2 / reps);
  std::printf("N=%d reps=%d mean T=%.5f nodes/query=%.0f  %.3f ms/query  %.1f ns/node\n", n, reps, sum / reps,
              double(nodes) / reps, 1e3 * s / reps, 1e9 * s / double(nodes));
}
