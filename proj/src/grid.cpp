#include "probsafe/grid.hpp"

#include <stdexcept>
#include <string>

namespace probsafe {

namespace {

void check_axis(const Axis& a, const char* name) {
  if (a.nodes < 3) throw std::invalid_argument(std::string("grid axis ") + name + " needs >= 3 nodes");
  if (!(a.max > a.min)) throw std::invalid_argument(std::string("grid axis ") + name + " needs max > min");
}

}  // namespace

void GridSpec::validate() const {
  check_axis(T, "T");
  if (T.min != 0.0) throw std::invalid_argument("grid axis T must start at 0");
  if (x.empty()) throw std::invalid_argument("grid needs at least one x axis");
  for (const Axis& a : x) check_axis(a, "x");
  if (L) check_axis(*L, "L");
}

const Axis& GridSpec::axis(std::size_t d) const {
  if (d == 0) return T;
  if (d <= x.size()) return x[d - 1];
  if (L && d == x.size() + 1) return *L;
  throw std::out_of_range("grid axis index out of range");
}

std::vector<std::size_t> GridSpec::shape() const {
  std::vector<std::size_t> s;
  s.reserve(dims());
  for (std::size_t d = 0; d < dims(); ++d) s.push_back(axis(d).nodes);
  return s;
}

std::vector<std::size_t> GridSpec::strides() const {
  const auto s = shape();
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
  return st;
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (std::size_t d = 0; d < dims(); ++d) n *= axis(d).nodes;
  return n;
}

}  // namespace probsafe
