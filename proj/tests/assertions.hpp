#pragma once

#include <gtest/gtest.h>

#include <cmath>

#include "mcnn/image.hpp"

namespace testing_support {

inline ::testing::AssertionResult is_constant(const mcnn::Image& img, double value, double tol = 1e-15) {
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!(std::abs(img.pixels()[i] - value) <= tol)) {
      return ::testing::AssertionFailure() << "pixel " << i << " is " << img.pixels()[i] << ", expected " << value;
    }
  }
  return ::testing::AssertionSuccess();
}

}  // namespace testing_support
