#pragma once

#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace cleve {

using Rational = boost::multiprecision::cpp_rational;

struct BCubed {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_items = 0;
};

struct BCubedExact {
  Rational precision, recall, f1;
};

/// Item-weighted B-Cubed of `pred[i]` (cluster) against `gold[i]` (class).
/// Throws DataError if the vectors differ in length or are empty.
BCubedExact b_cubed_exact(const std::vector<int>& pred, const std::vector<std::string>& gold);
BCubed b_cubed(const std::vector<int>& pred, const std::vector<std::string>& gold);

/// Keyed form: both maps must cover the same item ids (DataError otherwise).
BCubed b_cubed(const std::map<std::string, int>& pred, const std::map<std::string, std::string>& gold);

/// {"b3_precision", "b3_recall", "b3_f1", "n_items"} as a JSON object string.
std::string metrics_json(const BCubed& m);

}  // namespace cleve
