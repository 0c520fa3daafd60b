#include "support.hpp"

#include "dsb/bridge.hpp"

namespace dsb::test {

double one_step_error(std::size_t n, std::optional<std::size_t> z) {
  const auto schedule = NoiseSchedule::sample(1.0, n, smooth_alpha_bar);
  Vector m(3);
  m << 0.2, 0.3, 0.5;
  const auto ref = ReferenceProcess::categorical(schedule, Prior(m));
  const std::size_t k = n / 2;
  const Matrix a = z ? pinned_rate(ref, k, *z).entries : ref.rate(k);
  const Matrix p = z ? pinned_kernel(ref, k, k + 1, *z).entries : ref.step_kernel(k);
  const Matrix approx = Matrix::Identity(3, 3) + a * ref.dt(k);
  return max_abs(approx - p);
}

}  // namespace dsb::test
