// Measures how similar two random feature batches are before and after one
// is rotated, and prints the alignment loss gradient norm.
#include <cmath>
#include <cstdio>

#include "fiona/cka.hpp"
#include "fiona/rng.hpp"

int main() {
  using namespace fiona;
  Rng rng(7);
  Tensor x({16, 4}), y({16, 6});
  for (double& v : x.data()) v = rng.normal();
  for (double& v : y.data()) v = rng.normal();

  // Rotate x by 90 degrees in its first two coordinates.
  Tensor xr = x;
  for (std::size_t i = 0; i < 16; ++i) {
    xr(i, 0) = -x(i, 1);
    xr(i, 1) = x(i, 0);
  }

  std::printf("cka(x, y)        = %.6f\n", cka(FeatureMatrix(x), FeatureMatrix(y)));
  std::printf("cka(x, rotate x) = %.6f\n", cka(FeatureMatrix(x), FeatureMatrix(xr)));

  Graph g;
  const Var vx = g.leaf(x, true);
  const Var vy = g.leaf(y, true);
  const Var loss = cka_loss(vx, vy);
  g.backward(loss);
  double norm = 0.0;
  const Tensor dx = g.grad(vx);
  for (double v : dx.data()) norm += v * v;
  std::printf("1 - cka = %.6f, |dL/dx| = %.6f\n", loss.value().item(), std::sqrt(norm));
}
