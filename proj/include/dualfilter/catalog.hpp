#pragma once

#include <string>
#include <vector>

#include "dualfilter/io.hpp"
#include "dualfilter/models.hpp"

namespace dualfilter {

/// Cyclic 4-state chain 1 -> 2 -> 3 -> 4 -> 1 (unit rates) observed through
/// the parity indicator 1_{1,3}.
HmmModel counter_example();

/// A = [[-a1, a1], [a2, -a2]], h = (0, 1), uniform prior.
HmmModel two_state(double a1, double a2);

/// Fully connected 3-state chain with Doeblin constant 3.
HmmModel doeblin_demo();

/// Two closed 2-state classes {1,2} and {3,4}; h is the indicator of the second class.
HmmModel two_class_demo();

/// dX = dB, dZ = X dt + dW, X_0 ~ N(0, 1).
LinearGaussianModel scalar_lg();

struct CatalogEntry {
  std::string name;
  std::string kind;
  std::string description;
};

/// Entries in a fixed order.
const std::vector<CatalogEntry>& catalog_entries();

struct CatalogParams {
  double a1 = 1.0;
  double a2 = 1.0;
};

/// Throws std::invalid_argument for unknown names.
AnyModel catalog_model(const std::string& name, const CatalogParams& params = {});

bool catalog_contains(const std::string& name);

/// Plain-text table of the catalog.
std::string list_catalog();

}  // namespace dualfilter
