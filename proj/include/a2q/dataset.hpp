#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "a2q/quantcore.hpp"
#include "a2q/tensor.hpp"

namespace a2q {

enum class Split { Train, Test };

std::string_view to_string(Split split);

// Integer-coded samples, one per row, with the range every code lies in.
struct Dataset {
  IntMatrix inputs;
  quant::IntRange range{8, false};
  std::vector<int> labels;
  int num_classes = 2;
  Split split = Split::Train;

  std::size_t size() const { return inputs.rows(); }
  std::size_t features() const { return inputs.cols(); }

  // Throws std::invalid_argument when a code leaves `range`, a label leaves
  // [0, num_classes) or the label count differs from the row count.
  void validate() const;

  // Rows [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const;
};

}  // namespace a2q
