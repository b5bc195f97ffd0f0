#include "layergs/image.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lgs {

double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a.raw()[i] - b.raw()[i]));
  }
  return m;
}

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.raw()[i] - b.raw()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

}  // namespace lgs
