#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace usl {

// Malformed input: bad files, inconsistent dimensions, invalid labels.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: degenerate graphs, solver failures, non-finite values.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A node whose similarities all vanished, so its volume is zero.
class degenerate_row_error : public numerical_error {
 public:
  explicit degenerate_row_error(std::ptrdiff_t row)
      : numerical_error("similarity row " + std::to_string(row) +
                        " has zero volume (all similarities underflowed)"),
        row_(row) {}

  std::ptrdiff_t row() const noexcept { return row_; }

 private:
  std::ptrdiff_t row_;
};

}  // namespace usl
