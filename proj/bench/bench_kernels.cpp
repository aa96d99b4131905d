// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels, plus one MTR forward/backward step.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "molbench/kernels.hpp"
#include "molbench/model.hpp"

using namespace molbench;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

template <auto Kernel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Kernel>
void BM_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto x = random_vec(n * n, 3);
  for (auto _ : state) {
    Kernel(x, n, n);
    benchmark::DoNotOptimize(x.data());
  }
}

void BM_mtr_step(benchmark::State& state) {
  const auto vocab = build_vocab({"CC(=O)Oc1ccccc1C(=O)O", "c1ccc2ccccc2c1N", "ClCCBr"});
  ModelConfig c;
  c.family = static_cast<ModelFamily>(state.range(0));
  c.hidden_size = 32;
  c.intermediate_size = 64;
  c.num_layers = 2;
  c.num_heads = 2;
  c.vocab_size = vocab.size();
  MtrModel m(c, 1);
  std::vector<EncodedSequence> seqs;
  for (int i = 0; i < 16; ++i) seqs.push_back(encode("CC(=O)Oc1ccccc1C(=O)O", c.family, 64, vocab));
  std::vector<const EncodedSequence*> batch;
  for (const auto& s : seqs) batch.push_back(&s);
  const ad::Tensor target({16, c.num_properties}, 0.5);
  const std::vector<std::uint8_t> mask(16 * c.num_properties, 1);
  for (auto _ : state) {
    m.zero_grad();
    ad::Tape t;
    t.backward(ad::l1_loss(m.forward(t, batch), target, mask));
  }
  state.SetLabel(std::string(family_name(c.family)));
}

}  // namespace

BENCHMARK(BM_matmul<kernels::serial::matmul_acc>)->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<kernels::parallel::matmul_acc>)->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<kernels::serial::matmul_a_bt_acc>)->Arg(256);
BENCHMARK(BM_matmul<kernels::parallel::matmul_a_bt_acc>)->Arg(256);
BENCHMARK(BM_softmax<kernels::serial::softmax_rows>)->Arg(512);
BENCHMARK(BM_softmax<kernels::parallel::softmax_rows>)->Arg(512);
BENCHMARK(BM_mtr_step)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
