#include <chrono>
#include <iostream>
#include <random>

#include "daformer/network/model.hpp"

using namespace daformer;

int main() {
  std::mt19937_64 rng(0);
  ModelConfig cfg;
  auto m = build_model<float>(cfg, rng);
  std::cout << "params " << count_parameters(m.params) << " rates";
  for (int r : m.rates) std::cout << ' ' << r;
  std::cout << "\n";
  MatF img = MatF::Random(64 * 64, 3).cwiseAbs();
  for (int rep = 0; rep < 3; ++rep) {
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 10; ++i) {
      Tape<float> tape(false);
      auto r = model_forward(m, tape, img, 64, 64);
    }
    auto t1 = std::chrono::steady_clock::now();
    for (int i = 0; i < 10; ++i) {
      Tape<float> tape(true);
      auto r = model_forward(m, tape, img, 64, 64);
      auto loss = mean_rows(r.logits.v);
      Var<float> s = mean_rows(tape.push(loss.value().rowwise().sum(), true, [id = loss.id](Tape<float>& t, int self) {
        t.grad(id).array() += t.grad(self)(0, 0);
      }));
      tape.backward(s);
    }
    auto t2 = std::chrono::steady_clock::now();
    std::cout << "fwd ms " << std::chrono::duration<double, std::milli>(t1 - t0).count() / 10
              << " fwd+bwd ms " << std::chrono::duration<double, std::milli>(t2 - t1).count() / 10 << "\n";
  }
}
