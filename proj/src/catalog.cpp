#include "dualfilter/catalog.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dualfilter {

HmmModel counter_example() {
  Mat a(4, 4);
  a << -1, 1, 0, 0,
       0, -1, 1, 0,
       0, 0, -1, 1,
       1, 0, 0, -1;
  Mat h(4, 1);
  h << 1, 0, 1, 0;
  return HmmModel{a, h, Vec::Constant(4, 0.25)};
}

HmmModel two_state(double a1, double a2) {
  Mat a(2, 2);
  a << -a1, a1,
       a2, -a2;
  Mat h(2, 1);
  h << 0, 1;
  HmmModel m{a, h, Vec::Constant(2, 0.5)};
  require_valid(m);
  return m;
}

HmmModel doeblin_demo() {
  Mat a(3, 3);
  a << -3, 1, 2,
       1, -2, 1,
       2, 1, -3;
  Mat h(3, 1);
  h << 0, 0.5, 1;
  return HmmModel{a, h, Vec::Constant(3, 1.0 / 3.0)};
}

HmmModel two_class_demo() {
  Mat a = Mat::Zero(4, 4);
  a.block(0, 0, 2, 2) << -1, 1, 1, -1;
  a.block(2, 2, 2, 2) << -1, 1, 1, -1;
  Mat h(4, 1);
  h << 0, 0, 1, 1;
  return HmmModel{a, h, Vec::Constant(4, 0.25)};
}

LinearGaussianModel scalar_lg() {
  return LinearGaussianModel{Mat::Zero(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1), Vec::Zero(1), Mat::Ones(1, 1)};
}

const std::vector<CatalogEntry>& catalog_entries() {
  static const std::vector<CatalogEntry> entries{
      {"counter_example", "hmm", "cyclic 4-state chain, parity observation; unobservable, filter not stable"},
      {"two_state", "hmm", "2-state chain with rates a1, a2 (flags --a1, --a2); h = (0, 1)"},
      {"doeblin_demo", "hmm", "fully connected 3-state chain, Doeblin constant 3"},
      {"two_class_demo", "hmm", "two closed 2-state classes, h = class indicator"},
      {"scalar_lg", "linear_gaussian", "scalar Brownian state observed in white noise"},
  };
  return entries;
}

bool catalog_contains(const std::string& name) {
  for (const auto& e : catalog_entries()) {
    if (e.name == name) return true;
  }
  return false;
}

AnyModel catalog_model(const std::string& name, const CatalogParams& params) {
  if (name == "counter_example") return counter_example();
  if (name == "two_state") return two_state(params.a1, params.a2);
  if (name == "doeblin_demo") return doeblin_demo();
  if (name == "two_class_demo") return two_class_demo();
  if (name == "scalar_lg") return scalar_lg();
  throw std::invalid_argument("unknown catalog model '" + name + "'");
}

std::string list_catalog() {
  std::ostringstream os;
  os << std::left << std::setw(18) << "name" << std::setw(18) << "kind" << "description\n";
  for (const auto& e : catalog_entries()) {
    os << std::setw(18) << e.name << std::setw(18) << e.kind << e.description << '\n';
  }
  return os.str();
}

}  // namespace dualfilter
